//! Bottom-up CNF compilation.

use std::time::{Duration, Instant};

use crate::cnf::Cnf;
use crate::error::{Result, SddError};
use crate::manager::{NodeId, SddManager, SizeStats, TRUE};
use crate::minimize::{minimize, MinimizeOptions};
use crate::vtree::Vtree;

#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    /// Run vtree search whenever the live SDD has grown by `growth_trigger`
    /// since the last search.
    pub minimize: bool,
    pub growth_trigger: f64,
    /// Searches are skipped while the SDD is smaller than this.
    pub min_size_for_search: usize,
    pub search: MinimizeOptions,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            minimize: false,
            growth_trigger: 2.0,
            min_size_for_search: 512,
            search: MinimizeOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompileStats {
    pub clauses: usize,
    pub searches: u32,
    pub size: SizeStats,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct Compiled {
    pub manager: SddManager,
    pub root: NodeId,
    pub stats: CompileStats,
}

/// Conjoins the clauses of `cnf` one by one, shortest first (ties keep
/// input order).
pub fn compile_cnf(cnf: &Cnf, vtree: Vtree, opts: &CompileOptions) -> Result<Compiled> {
    for v in 1..=cnf.num_vars() {
        if !vtree.contains_var(v) {
            return Err(SddError::UnknownVars(format!("variable {v} missing from vtree")));
        }
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..cnf.clauses().len()).collect();
    order.sort_by_key(|&i| cnf.clauses()[i].len());

    let mut mgr = SddManager::new(vtree);
    let mut root = TRUE;
    let mut last_size = opts.min_size_for_search;
    let mut searches = 0;
    for i in order {
        let c = mgr.clause(&cnf.clauses()[i]);
        root = mgr.and(root, c);
        if opts.minimize {
            let size = mgr.size(&[root]).elements;
            if size as f64 >= opts.growth_trigger * last_size as f64 {
                let (m, r) = minimize(&mgr, &[root], &opts.search);
                mgr = m;
                root = r[0];
                last_size = mgr.size(&[root]).elements.max(opts.min_size_for_search);
                searches += 1;
            }
        }
    }
    let (manager, roots) = mgr.compact(&[root]);
    let root = roots[0];
    let stats = CompileStats {
        clauses: cnf.clauses().len(),
        searches,
        size: manager.size(&[root]),
        elapsed: start.elapsed(),
    };
    Ok(Compiled {
        manager,
        root,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    #[test]
    fn xor_chain_counts() {
        // x1 ⊕ x2 ⊕ x3 = x4 as clauses.
        let mut cnf = Cnf::new(4);
        for bits in 0u32..16 {
            let parity = (bits.count_ones() % 2) == 1;
            if parity {
                // Forbid assignments with odd parity over all four.
                let clause: Vec<i32> = (0..4)
                    .map(|i| if bits >> i & 1 == 1 { -(i as i32 + 1) } else { i as i32 + 1 })
                    .collect();
                cnf.add_clause(&clause).unwrap();
            }
        }
        let c = compile_cnf(&cnf, Vtree::balanced(&[1, 2, 3, 4]), &CompileOptions::default()).unwrap();
        assert_eq!(c.manager.model_count(c.root), BigUint::from(8u32));
        assert_eq!(c.stats.clauses, 8);
    }

    #[test]
    fn missing_variable_is_an_error() {
        let mut cnf = Cnf::new(3);
        cnf.add_clause(&[3]).unwrap();
        assert!(compile_cnf(&cnf, Vtree::balanced(&[1, 2]), &CompileOptions::default()).is_err());
    }

    #[test]
    fn search_does_not_change_the_function() {
        let mut cnf = Cnf::new(10);
        for i in 1..=5 {
            cnf.add_clause(&[i, i + 5]).unwrap();
            cnf.add_clause(&[-i, -(i + 5)]).unwrap();
        }
        let vars: Vec<u32> = (1..=10).collect();
        let opts = CompileOptions {
            minimize: true,
            min_size_for_search: 4,
            ..Default::default()
        };
        let c = compile_cnf(&cnf, Vtree::right_linear(&vars), &opts).unwrap();
        assert_eq!(c.manager.model_count(c.root), BigUint::from(32u32));
        assert!(c.stats.searches > 0);
    }
}
