//! Greedy local search over vtrees.
//!
//! Each candidate move (left rotation, right rotation, child swap) is
//! scored by translating the live SDD into a manager over the moved vtree.
//! Moves that shrink the SDD are kept.

use std::time::{Duration, Instant};

use crate::manager::{NodeId, SddManager};
use crate::vtree::{Move, VtreeId};

#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions {
    pub time_budget: Duration,
    /// Full sweeps over the internal vtree nodes.
    pub max_passes: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            time_budget: Duration::from_secs(10),
            max_passes: 4,
        }
    }
}

/// Returns a fresh manager holding `roots`, over the best vtree found.
pub fn minimize(
    mgr: &SddManager,
    roots: &[NodeId],
    opts: &MinimizeOptions,
) -> (SddManager, Vec<NodeId>) {
    let start = Instant::now();
    let (mut best, mut best_roots) = mgr.compact(roots);
    let mut best_size = best.size(&best_roots).elements;
    for _ in 0..opts.max_passes {
        let mut improved = false;
        let mut v: VtreeId = 0;
        while (v as usize) < best.vtree().num_nodes() {
            if start.elapsed() > opts.time_budget {
                return (best, best_roots);
            }
            for mv in [Move::RotateLeft, Move::RotateRight, Move::Swap] {
                let Some(vt) = best.vtree().apply_move(v, mv) else {
                    continue;
                };
                let mut cand = SddManager::new(vt);
                let cand_roots = best.translate(&best_roots, &mut cand);
                let size = cand.size(&cand_roots).elements;
                if size < best_size {
                    let (c, r) = cand.compact(&cand_roots);
                    best = c;
                    best_roots = r;
                    best_size = size;
                    improved = true;
                    break;
                }
            }
            v += 1;
        }
        if !improved {
            break;
        }
    }
    (best, best_roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vtree::Vtree;

    #[test]
    fn never_grows_and_keeps_semantics() {
        // (x1 ∧ x5) ∨ (x2 ∧ x6) ∨ (x3 ∧ x7) ∨ (x4 ∧ x8) is large on a
        // right-linear order that separates the pairs.
        let vars: Vec<u32> = (1..=8).collect();
        let mut m = SddManager::new(Vtree::right_linear(&vars));
        let mut f = crate::manager::FALSE;
        for i in 1..=4 {
            let a = m.var(i, true);
            let b = m.var(i + 4, true);
            let t = m.and(a, b);
            f = m.or(f, t);
        }
        let before = m.size(&[f]).elements;
        let (m2, r) = minimize(&m, &[f], &MinimizeOptions::default());
        assert!(m2.size(&r).elements <= before);
        assert_eq!(m2.model_count(r[0]), m.model_count(f));
    }
}
