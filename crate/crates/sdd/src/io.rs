//! Line-oriented text formats for vtrees and SDDs.
//!
//! Vtree section:
//! ```text
//! vtree <node count>
//! L <id> <var>
//! I <id> <left id> <right id>
//! ```
//! Children are listed before parents and the root is the last node line.
//! An SDD file is a vtree section followed by
//! ```text
//! sdd <node count>
//! T <id> TRUE|FALSE
//! L <id> <vtree id> <signed var>
//! D <id> <vtree id> <element count> <prime id> <sub id> ...
//! ```
//! again with the root last. Lines starting with `c` are comments.

use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use crate::cnf::Literal;
use crate::error::{Result, SddError};
use crate::manager::{NodeId, NodeRef, SddManager, FALSE, TRUE};
use crate::vtree::{Shape, Vtree, VtreeId};

pub fn vtree_to_text(vtree: &Vtree) -> String {
    let mut out = format!("vtree {}\n", vtree.num_nodes());
    for v in 0..vtree.num_nodes() as VtreeId {
        match vtree.var(v) {
            Some(x) => writeln!(out, "L {v} {x}").unwrap(),
            None => writeln!(out, "I {v} {} {}", vtree.left(v), vtree.right(v)).unwrap(),
        }
    }
    out
}

pub(crate) fn err(line: usize, msg: impl Into<String>) -> SddError {
    SddError::Parse {
        line,
        msg: msg.into(),
    }
}

pub(crate) fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    let tok = tok.ok_or_else(|| err(line, "missing field"))?;
    tok.parse().map_err(|_| err(line, format!("bad number `{tok}`")))
}

/// Meaningful lines with their 1-based line numbers.
pub(crate) fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('c'))
}

/// Parses a vtree section, returning the tree, the map from file ids to
/// tree ids, and the number of lines consumed.
pub(crate) fn parse_vtree_section<'a>(
    it: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(Vtree, FxHashMap<u32, VtreeId>)> {
    let (line, header) = it.next().ok_or_else(|| err(0, "missing vtree header"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("vtree") {
        return Err(err(line, "expected `vtree <count>`"));
    }
    let count: usize = num(parts.next(), line)?;
    enum Entry {
        Leaf(u32),
        Inner(u32, u32),
    }
    let mut entries: FxHashMap<u32, Entry> = FxHashMap::default();
    let mut last = None;
    for _ in 0..count {
        let (line, l) = it.next().ok_or_else(|| err(0, "truncated vtree section"))?;
        let mut p = l.split_whitespace();
        let kind = p.next();
        let id: u32 = num(p.next(), line)?;
        let e = match kind {
            Some("L") => Entry::Leaf(num(p.next(), line)?),
            Some("I") => {
                let a: u32 = num(p.next(), line)?;
                let b: u32 = num(p.next(), line)?;
                if !entries.contains_key(&a) || !entries.contains_key(&b) {
                    return Err(err(line, "child listed after parent"));
                }
                Entry::Inner(a, b)
            }
            _ => return Err(err(line, "expected L or I")),
        };
        if entries.insert(id, e).is_some() {
            return Err(err(line, format!("duplicate vtree id {id}")));
        }
        last = Some(id);
    }
    let root = last.ok_or_else(|| err(line, "empty vtree"))?;
    fn shape(id: u32, entries: &FxHashMap<u32, Entry>) -> Shape {
        match entries[&id] {
            Entry::Leaf(v) => Shape::Leaf(v),
            Entry::Inner(a, b) => Shape::node(shape(a, entries), shape(b, entries)),
        }
    }
    let s = shape(root, &entries);
    let vtree = Vtree::from_shape(&s)?;
    if vtree.num_nodes() != count {
        return Err(err(line, "vtree lines do not form a single tree"));
    }
    let mut map = FxHashMap::default();
    let mut stack = vec![(root, vtree.root())];
    while let Some((f, t)) = stack.pop() {
        map.insert(f, t);
        if let Entry::Inner(a, b) = entries[&f] {
            stack.push((a, vtree.left(t)));
            stack.push((b, vtree.right(t)));
        }
    }
    Ok((vtree, map))
}

pub fn parse_vtree(text: &str) -> Result<Vtree> {
    let mut it = lines(text);
    let (vtree, _) = parse_vtree_section(&mut it)?;
    if let Some((line, _)) = it.next() {
        return Err(err(line, "trailing content after vtree"));
    }
    Ok(vtree)
}

/// Serializes the SDD rooted at `root`, children before parents.
pub fn sdd_to_text(mgr: &SddManager, root: NodeId) -> String {
    let mut out = vtree_to_text(mgr.vtree());
    let nodes = mgr.reachable(&[root]);
    writeln!(out, "sdd {}", nodes.len()).unwrap();
    for n in nodes {
        match mgr.node(n) {
            NodeRef::False => writeln!(out, "T {n} FALSE").unwrap(),
            NodeRef::True => writeln!(out, "T {n} TRUE").unwrap(),
            NodeRef::Literal(l) => {
                writeln!(out, "L {n} {} {}", mgr.vtree_of(n), l.to_dimacs()).unwrap()
            }
            NodeRef::Decision { vtree, elements } => {
                write!(out, "D {n} {vtree} {}", elements.len()).unwrap();
                for (p, s) in elements {
                    write!(out, " {p} {s}").unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Loads an SDD into `mgr`. The file's vtree must equal the manager's, and
/// every decision node must be a normalized partition.
pub fn parse_sdd(text: &str, mgr: &mut SddManager) -> Result<NodeId> {
    let mut it = lines(text);
    let (vtree, vmap) = parse_vtree_section(&mut it)?;
    if vtree != *mgr.vtree() {
        return Err(SddError::VtreeMismatch(
            "file vtree differs from the manager's vtree".into(),
        ));
    }
    let (line, header) = it.next().ok_or_else(|| err(0, "missing sdd header"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("sdd") {
        return Err(err(line, "expected `sdd <count>`"));
    }
    let count: usize = num(parts.next(), line)?;
    let mut ids: FxHashMap<u32, NodeId> = FxHashMap::default();
    let mut last = None;
    for _ in 0..count {
        let (line, l) = it.next().ok_or_else(|| err(0, "truncated sdd section"))?;
        let mut p = l.split_whitespace();
        let kind = p.next();
        let id: u32 = num(p.next(), line)?;
        let node = match kind {
            Some("T") => match p.next() {
                Some("TRUE") => TRUE,
                Some("FALSE") => FALSE,
                _ => return Err(err(line, "expected TRUE or FALSE")),
            },
            Some("L") => {
                let v: u32 = num(p.next(), line)?;
                let lit = Literal::from_dimacs(num(p.next(), line)?)?;
                let v = *vmap.get(&v).ok_or_else(|| err(line, "unknown vtree id"))?;
                if mgr.vtree().var(v) != Some(lit.var()) {
                    return Err(SddError::VtreeMismatch(format!(
                        "literal {} placed at wrong vtree leaf",
                        lit.to_dimacs()
                    )));
                }
                mgr.literal(lit)
            }
            Some("D") => {
                let v: u32 = num(p.next(), line)?;
                let v = *vmap.get(&v).ok_or_else(|| err(line, "unknown vtree id"))?;
                if mgr.vtree().is_leaf(v) {
                    return Err(SddError::VtreeMismatch("decision at a vtree leaf".into()));
                }
                let k: usize = num(p.next(), line)?;
                let mut elems = Vec::with_capacity(k);
                for _ in 0..k {
                    let a: u32 = num(p.next(), line)?;
                    let b: u32 = num(p.next(), line)?;
                    let a = *ids.get(&a).ok_or_else(|| err(line, format!("unknown node {a}")))?;
                    let b = *ids.get(&b).ok_or_else(|| err(line, format!("unknown node {b}")))?;
                    elems.push((a, b));
                }
                check_partition(mgr, v, &elems)?;
                mgr.make_decision(v, elems)
            }
            _ => return Err(err(line, "expected T, L or D")),
        };
        if p.next().is_some() {
            return Err(err(line, "trailing tokens"));
        }
        ids.insert(id, node);
        last = Some(node);
    }
    if let Some((line, _)) = it.next() {
        return Err(err(line, "trailing content after sdd"));
    }
    last.ok_or_else(|| err(line, "empty sdd"))
}

fn check_partition(mgr: &mut SddManager, v: VtreeId, elems: &[(NodeId, NodeId)]) -> Result<()> {
    let vt = mgr.vtree().clone();
    let (l, r) = (vt.left(v), vt.right(v));
    let mut cover = FALSE;
    for (i, &(p, s)) in elems.iter().enumerate() {
        if p == FALSE {
            return Err(SddError::VtreeMismatch("false prime".into()));
        }
        if p > TRUE && !vt.is_within(mgr.vtree_of(p), l) {
            return Err(SddError::VtreeMismatch("prime outside left subtree".into()));
        }
        if s > TRUE && !vt.is_within(mgr.vtree_of(s), r) {
            return Err(SddError::VtreeMismatch("sub outside right subtree".into()));
        }
        for &(q, _) in &elems[i + 1..] {
            if mgr.and(p, q) != FALSE {
                return Err(SddError::VtreeMismatch("overlapping primes".into()));
            }
        }
        cover = mgr.or(cover, p);
    }
    if cover != TRUE {
        return Err(SddError::VtreeMismatch("primes are not exhaustive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vtree_round_trip() {
        for t in [
            Vtree::left_linear(&[3, 1, 2, 5]),
            Vtree::balanced(&[1, 2, 3, 4, 5, 6, 7]),
        ] {
            assert_eq!(parse_vtree(&vtree_to_text(&t)).unwrap(), t);
        }
    }

    #[test]
    fn vtree_rejects_forward_references() {
        assert!(parse_vtree("vtree 3\nI 2 0 1\nL 0 1\nL 1 2\n").is_err());
        assert!(parse_vtree("vtree 2\nL 0 1\nL 1 2\n").is_err());
    }

    #[test]
    fn sdd_round_trip() {
        let vt = Vtree::balanced(&[1, 2, 3, 4]);
        let mut m = SddManager::new(vt.clone());
        let a = m.var(1, true);
        let b = m.var(4, false);
        let c = m.var(2, true);
        let f = m.or(a, b);
        let f = m.and(f, c);
        let text = sdd_to_text(&m, f);
        let mut m2 = SddManager::new(vt);
        let g = parse_sdd(&text, &mut m2).unwrap();
        assert_eq!(m2.model_count(g), m.model_count(f));
        assert_eq!(sdd_to_text(&m2, g).lines().count(), text.lines().count());
    }

    #[test]
    fn sdd_rejects_other_vtree() {
        let mut m = SddManager::new(Vtree::balanced(&[1, 2, 3]));
        let a = m.var(1, true);
        let b = m.var(3, true);
        let f = m.and(a, b);
        let text = sdd_to_text(&m, f);
        let mut other = SddManager::new(Vtree::right_linear(&[3, 2, 1]));
        assert!(matches!(
            parse_sdd(&text, &mut other),
            Err(SddError::VtreeMismatch(_))
        ));
    }

    #[test]
    fn sdd_rejects_overlapping_primes() {
        let text = "vtree 3\nL 0 1\nL 1 2\nI 2 0 1\nsdd 4\nT 0 TRUE\nL 1 0 1\nL 2 1 2\nD 3 2 2 0 1 1 2\n";
        let mut m = SddManager::new(Vtree::left_linear(&[1, 2]));
        assert!(parse_sdd(text, &mut m).is_err());
    }
}
