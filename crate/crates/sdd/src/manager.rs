//! The SDD manager: unique table, apply, negation, conditioning and counting.
//!
//! Every node stored in a manager is compressed and trimmed and is
//! normalized for a node of the manager's vtree, so two node ids are equal
//! exactly when they denote the same Boolean function.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rustc_hash::FxHashMap;

use crate::cnf::{Literal, Var};
use crate::vtree::{Vtree, VtreeId};

pub type NodeId = u32;

pub const FALSE: NodeId = 0;
pub const TRUE: NodeId = 1;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    And,
    Or,
}

/// Borrowed view of a stored node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef<'a> {
    False,
    True,
    Literal(Literal),
    Decision {
        vtree: VtreeId,
        elements: &'a [(NodeId, NodeId)],
    },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    vtree: u32,
    lit: i32,
    start: u32,
    len: u32,
    hash: u64,
}

#[derive(Clone, Debug, Default)]
struct UniqueTable {
    slots: Vec<u32>,
    len: usize,
}

impl UniqueTable {
    fn with_capacity(cap: usize) -> Self {
        let n = cap.next_power_of_two().max(1024);
        UniqueTable {
            slots: vec![NONE; n],
            len: 0,
        }
    }

    fn find(&self, hash: u64, mut eq: impl FnMut(u32) -> bool) -> Option<u32> {
        let mask = self.slots.len() - 1;
        let mut i = hash as usize & mask;
        loop {
            let s = self.slots[i];
            if s == NONE {
                return None;
            }
            if eq(s) {
                return Some(s);
            }
            i = (i + 1) & mask;
        }
    }

    fn insert(&mut self, hash: u64, id: u32, hashes: &dyn Fn(u32) -> u64) {
        if 2 * (self.len + 1) > self.slots.len() {
            let doubled = vec![NONE; self.slots.len() * 2];
            let old = std::mem::replace(&mut self.slots, doubled);
            self.len = 0;
            for s in old.into_iter().filter(|&s| s != NONE) {
                self.place(hashes(s), s);
            }
        }
        self.place(hash, id);
    }

    fn place(&mut self, hash: u64, id: u32) {
        let mask = self.slots.len() - 1;
        let mut i = hash as usize & mask;
        while self.slots[i] != NONE {
            i = (i + 1) & mask;
        }
        self.slots[i] = id;
        self.len += 1;
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ApplyStats {
    pub apply_calls: u64,
    pub cache_hits: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SizeStats {
    /// Decision (or/sum) nodes.
    pub decisions: usize,
    /// Elements (and/product nodes).
    pub elements: usize,
}

impl SizeStats {
    pub fn total(&self) -> usize {
        self.decisions + self.elements
    }
}

#[derive(Clone, Debug)]
pub struct SddManager {
    vtree: Vtree,
    nodes: Vec<Node>,
    elems: Vec<(NodeId, NodeId)>,
    unique: UniqueTable,
    lit_nodes: Vec<NodeId>,
    apply_cache: FxHashMap<u64, NodeId>,
    neg: Vec<NodeId>,
    pub stats: ApplyStats,
}

fn hash_decision(vtree: u32, elems: &[(NodeId, NodeId)]) -> u64 {
    let mut h = crate::vtree::splitmix(vtree as u64);
    for &(p, s) in elems {
        h = crate::vtree::splitmix(h ^ ((p as u64) << 32 | s as u64));
    }
    h
}

impl SddManager {
    pub fn new(vtree: Vtree) -> Self {
        let terminal = Node {
            vtree: NONE,
            lit: 0,
            start: 0,
            len: 0,
            hash: 0,
        };
        let max_var = vtree.max_var() as usize;
        SddManager {
            vtree,
            nodes: vec![terminal, terminal],
            elems: Vec::new(),
            unique: UniqueTable::with_capacity(1024),
            lit_nodes: vec![NONE; 2 * max_var],
            apply_cache: FxHashMap::default(),
            neg: vec![TRUE, FALSE],
            stats: ApplyStats::default(),
        }
    }

    pub fn vtree(&self) -> &Vtree {
        &self.vtree
    }

    /// Number of stored nodes, dead ones included.
    pub fn stored_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> NodeRef<'_> {
        match id {
            FALSE => NodeRef::False,
            TRUE => NodeRef::True,
            _ => {
                let n = &self.nodes[id as usize];
                if n.lit != 0 {
                    NodeRef::Literal(Literal::from_dimacs(n.lit).unwrap())
                } else {
                    NodeRef::Decision {
                        vtree: n.vtree,
                        elements: &self.elems[n.start as usize..(n.start + n.len) as usize],
                    }
                }
            }
        }
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        id <= TRUE
    }

    /// Vtree node the (non-terminal) node is normalized for.
    pub fn vtree_of(&self, id: NodeId) -> VtreeId {
        debug_assert!(id > TRUE);
        self.nodes[id as usize].vtree
    }

    fn elements(&self, id: NodeId) -> &[(NodeId, NodeId)] {
        let n = &self.nodes[id as usize];
        &self.elems[n.start as usize..(n.start + n.len) as usize]
    }

    pub fn literal(&mut self, lit: Literal) -> NodeId {
        let leaf = self
            .vtree
            .leaf_of(lit.var())
            .unwrap_or_else(|| panic!("variable {} not in vtree", lit.var()));
        let idx = lit.index();
        if self.lit_nodes[idx] != NONE {
            return self.lit_nodes[idx];
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            vtree: leaf,
            lit: lit.to_dimacs(),
            start: 0,
            len: 0,
            hash: 0,
        });
        self.neg.push(NONE);
        self.lit_nodes[idx] = id;
        id
    }

    pub fn var(&mut self, var: Var, positive: bool) -> NodeId {
        self.literal(Literal::new(var, positive))
    }

    fn unique_decision(&mut self, vtree: VtreeId, elems: Vec<(NodeId, NodeId)>) -> NodeId {
        let hash = hash_decision(vtree, &elems);
        let nodes = &self.nodes;
        let all = &self.elems;
        let found = self.unique.find(hash, |id| {
            let n = &nodes[id as usize];
            n.hash == hash
                && n.vtree == vtree
                && n.len as usize == elems.len()
                && all[n.start as usize..(n.start + n.len) as usize] == elems[..]
        });
        if let Some(id) = found {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        let start = self.elems.len() as u32;
        self.elems.extend_from_slice(&elems);
        self.nodes.push(Node {
            vtree,
            lit: 0,
            start,
            len: elems.len() as u32,
            hash,
        });
        self.neg.push(NONE);
        let nodes = &self.nodes;
        self.unique.insert(hash, id, &|i| nodes[i as usize].hash);
        id
    }

    /// Builds the canonical node for a partition at `vtree`: drops false
    /// primes, compresses equal subs and applies the two trimming rules.
    pub fn make_decision(&mut self, vtree: VtreeId, mut elems: Vec<(NodeId, NodeId)>) -> NodeId {
        elems.retain(|e| e.0 != FALSE);
        if elems.is_empty() {
            return FALSE;
        }
        elems.sort_unstable_by_key(|e| e.1);
        let mut out: Vec<(NodeId, NodeId)> = Vec::with_capacity(elems.len());
        for (p, s) in elems {
            match out.last_mut() {
                Some(last) if last.1 == s => {
                    let merged = self.apply(last.0, p, Op::Or);
                    out.last_mut().unwrap().0 = merged;
                }
                _ => out.push((p, s)),
            }
        }
        if out.len() == 1 {
            debug_assert_eq!(out[0].0, TRUE, "partition must be exhaustive");
            return out[0].1;
        }
        if out.len() == 2 && out[0].1 == FALSE && out[1].1 == TRUE {
            return out[1].0;
        }
        out.sort_unstable_by_key(|e| e.0);
        self.unique_decision(vtree, out)
    }

    pub fn negate(&mut self, id: NodeId) -> NodeId {
        let cached = self.neg[id as usize];
        if cached != NONE {
            return cached;
        }
        let n = self.nodes[id as usize];
        let result = if n.lit != 0 {
            self.literal(Literal::from_dimacs(-n.lit).unwrap())
        } else {
            let elems: Vec<_> = self.elements(id).to_vec();
            let negated: Vec<_> = elems.into_iter().map(|(p, s)| (p, self.negate(s))).collect();
            self.unique_decision(n.vtree, negated)
        };
        self.neg[id as usize] = result;
        self.neg[result as usize] = id;
        result
    }

    pub fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(a, b, Op::And)
    }

    pub fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(a, b, Op::Or)
    }

    /// Elements of `id` when viewed as a partition at `w`, an ancestor-or-self
    /// of its vtree node.
    fn elements_at(&mut self, id: NodeId, w: VtreeId) -> Vec<(NodeId, NodeId)> {
        let v = self.vtree_of(id);
        if v == w {
            self.elements(id).to_vec()
        } else if self.vtree.is_within(v, self.vtree.left(w)) {
            let n = self.negate(id);
            vec![(id, TRUE), (n, FALSE)]
        } else {
            vec![(TRUE, id)]
        }
    }

    pub fn apply(&mut self, a: NodeId, b: NodeId, op: Op) -> NodeId {
        match op {
            Op::And => {
                if a == FALSE || b == FALSE {
                    return FALSE;
                }
                if a == TRUE {
                    return b;
                }
                if b == TRUE {
                    return a;
                }
            }
            Op::Or => {
                if a == TRUE || b == TRUE {
                    return TRUE;
                }
                if a == FALSE {
                    return b;
                }
                if b == FALSE {
                    return a;
                }
            }
        }
        if a == b {
            return a;
        }
        if self.neg[a as usize] == b {
            return if op == Op::And { FALSE } else { TRUE };
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let key = (a as u64) << 33 | (b as u64) << 1 | (op == Op::Or) as u64;
        self.stats.apply_calls += 1;
        if let Some(&r) = self.apply_cache.get(&key) {
            self.stats.cache_hits += 1;
            return r;
        }
        let (va, vb) = (self.vtree_of(a), self.vtree_of(b));
        let result = if va == vb && self.vtree.is_leaf(va) {
            // Distinct literals over one variable: x and ¬x.
            if op == Op::And {
                FALSE
            } else {
                TRUE
            }
        } else {
            let w = self.vtree.lca(va, vb);
            let ea = self.elements_at(a, w);
            let eb = self.elements_at(b, w);
            let mut out = Vec::with_capacity(ea.len() * eb.len());
            for &(p1, s1) in &ea {
                for &(p2, s2) in &eb {
                    let p = self.apply(p1, p2, Op::And);
                    if p == FALSE {
                        continue;
                    }
                    let s = self.apply(s1, s2, op);
                    out.push((p, s));
                    if p == p1 {
                        // p1 is contained in p2 and so disjoint from every other prime.
                        break;
                    }
                }
            }
            self.make_decision(w, out)
        };
        self.apply_cache.insert(key, result);
        result
    }

    pub fn conjoin_all(&mut self, nodes: &[NodeId]) -> NodeId {
        nodes.iter().fold(TRUE, |acc, &n| self.and(acc, n))
    }

    pub fn disjoin_all(&mut self, nodes: &[NodeId]) -> NodeId {
        nodes.iter().fold(FALSE, |acc, &n| self.or(acc, n))
    }

    pub fn clause(&mut self, lits: &[Literal]) -> NodeId {
        let nodes: Vec<_> = lits.iter().map(|&l| self.literal(l)).collect();
        self.disjoin_all(&nodes)
    }

    pub fn term(&mut self, lits: &[Literal]) -> NodeId {
        let nodes: Vec<_> = lits.iter().map(|&l| self.literal(l)).collect();
        self.conjoin_all(&nodes)
    }

    /// Fixes the listed literals to true. Conditioned variables are no longer
    /// mentioned by the result.
    pub fn condition(&mut self, f: NodeId, assignment: &[Literal]) -> NodeId {
        let mut value = vec![0i8; self.vtree.max_var() as usize + 1];
        for l in assignment {
            value[l.var() as usize] = if l.is_positive() { 1 } else { -1 };
        }
        // touched[v]: some assigned variable lies below vtree node v.
        let mut touched = vec![false; self.vtree.num_nodes()];
        for v in 0..self.vtree.num_nodes() as VtreeId {
            touched[v as usize] = match self.vtree.var(v) {
                Some(x) => value[x as usize] != 0,
                None => touched[self.vtree.left(v) as usize] || touched[self.vtree.right(v) as usize],
            };
        }
        let mut memo = FxHashMap::default();
        self.condition_rec(f, &value, &touched, &mut memo)
    }

    fn condition_rec(
        &mut self,
        f: NodeId,
        value: &[i8],
        touched: &[bool],
        memo: &mut FxHashMap<NodeId, NodeId>,
    ) -> NodeId {
        if f <= TRUE || !touched[self.vtree_of(f) as usize] {
            return f;
        }
        if let Some(&r) = memo.get(&f) {
            return r;
        }
        let n = self.nodes[f as usize];
        let result = if n.lit != 0 {
            let lit = Literal::from_dimacs(n.lit).unwrap();
            if (value[lit.var() as usize] > 0) == lit.is_positive() {
                TRUE
            } else {
                FALSE
            }
        } else {
            let elems = self.elements(f).to_vec();
            let mut out = Vec::with_capacity(elems.len());
            for (p, s) in elems {
                let p = self.condition_rec(p, value, touched, memo);
                if p == FALSE {
                    continue;
                }
                let s = self.condition_rec(s, value, touched, memo);
                out.push((p, s));
            }
            self.make_decision(n.vtree, out)
        };
        memo.insert(f, result);
        result
    }

    /// Existential quantification of one variable.
    pub fn exists(&mut self, f: NodeId, var: Var) -> NodeId {
        let pos = self.condition(f, &[Literal::new(var, true)]);
        let neg = self.condition(f, &[Literal::new(var, false)]);
        self.or(pos, neg)
    }

    /// Model count over all variables of the vtree.
    pub fn model_count(&self, f: NodeId) -> BigUint {
        self.model_count_scoped(f, &[])
    }

    /// Model count over the vtree variables minus `excluded` (typically
    /// variables removed by conditioning).
    pub fn model_count_scoped(&self, f: NodeId, excluded: &[Var]) -> BigUint {
        let scoped = self.scoped_counts(excluded);
        let mut memo: FxHashMap<NodeId, BigUint> = FxHashMap::default();
        let root = self.vtree.root();
        self.count_lifted(f, root, &scoped, &mut memo)
    }

    fn scoped_counts(&self, excluded: &[Var]) -> Vec<u32> {
        let mut out = vec![0u32; self.vtree.num_nodes()];
        for v in 0..self.vtree.num_nodes() as VtreeId {
            out[v as usize] = match self.vtree.var(v) {
                Some(x) => u32::from(!excluded.contains(&x)),
                None => out[self.vtree.left(v) as usize] + out[self.vtree.right(v) as usize],
            };
        }
        out
    }

    fn count_lifted(
        &self,
        f: NodeId,
        t: VtreeId,
        scoped: &[u32],
        memo: &mut FxHashMap<NodeId, BigUint>,
    ) -> BigUint {
        match f {
            FALSE => BigUint::zero(),
            TRUE => BigUint::one() << scoped[t as usize],
            _ => {
                let v = self.vtree_of(f);
                let own = self.count(f, scoped, memo);
                own << (scoped[t as usize] - scoped[v as usize])
            }
        }
    }

    fn count(&self, f: NodeId, scoped: &[u32], memo: &mut FxHashMap<NodeId, BigUint>) -> BigUint {
        if let Some(c) = memo.get(&f) {
            return c.clone();
        }
        let n = self.nodes[f as usize];
        let c = if n.lit != 0 {
            BigUint::one()
        } else {
            let (l, r) = (self.vtree.left(n.vtree), self.vtree.right(n.vtree));
            let mut total = BigUint::zero();
            for &(p, s) in self.elements(f) {
                if s == FALSE {
                    continue;
                }
                total += self.count_lifted(p, l, scoped, memo) * self.count_lifted(s, r, scoped, memo);
            }
            total
        };
        memo.insert(f, c.clone());
        c
    }

    /// `assignment[v - 1]` is the value of variable `v`.
    pub fn evaluate(&self, f: NodeId, assignment: &[bool]) -> bool {
        let mut cur = f;
        loop {
            match self.node(cur) {
                NodeRef::False => return false,
                NodeRef::True => return true,
                NodeRef::Literal(l) => return assignment[l.var() as usize - 1] == l.is_positive(),
                NodeRef::Decision { elements, .. } => {
                    let (_, s) = elements
                        .iter()
                        .copied()
                        .find(|&(p, _)| self.evaluate(p, assignment))
                        .expect("primes are exhaustive");
                    cur = s;
                }
            }
        }
    }

    /// Node ids reachable from `roots`, children before parents.
    pub fn reachable(&self, roots: &[NodeId]) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.to_vec();
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            if seen[n as usize] {
                continue;
            }
            seen[n as usize] = true;
            out.push(n);
            if let NodeRef::Decision { elements, .. } = self.node(n) {
                for &(p, s) in elements {
                    stack.push(p);
                    stack.push(s);
                }
            }
        }
        // Children are always created before their parents.
        out.sort_unstable();
        out
    }

    pub fn size(&self, roots: &[NodeId]) -> SizeStats {
        let mut st = SizeStats::default();
        for n in self.reachable(roots) {
            if let NodeRef::Decision { elements, .. } = self.node(n) {
                st.decisions += 1;
                st.elements += elements.len();
            }
        }
        st
    }

    /// Copies the functions at `roots` into `target`, whose vtree must cover
    /// the same variables. Nodes whose vtree split survives unchanged are
    /// copied structurally; the rest are rebuilt with apply.
    pub fn translate(&self, roots: &[NodeId], target: &mut SddManager) -> Vec<NodeId> {
        let src_sig = self.vtree.var_signatures();
        let dst_sig = target.vtree.var_signatures();
        let mut split_map: FxHashMap<(u64, u64), VtreeId> = FxHashMap::default();
        for v in target.vtree.internal_nodes() {
            let key = (
                dst_sig[target.vtree.left(v) as usize],
                dst_sig[target.vtree.right(v) as usize],
            );
            split_map.insert(key, v);
        }
        let mut map: FxHashMap<NodeId, NodeId> = FxHashMap::default();
        map.insert(FALSE, FALSE);
        map.insert(TRUE, TRUE);
        for n in self.reachable(roots) {
            if n <= TRUE {
                continue;
            }
            let translated = match self.node(n) {
                NodeRef::Literal(l) => target.literal(l),
                NodeRef::Decision { vtree, elements } => {
                    let key = (
                        src_sig[self.vtree.left(vtree) as usize],
                        src_sig[self.vtree.right(vtree) as usize],
                    );
                    let elems: Vec<_> = elements.iter().map(|&(p, s)| (map[&p], map[&s])).collect();
                    match split_map.get(&key) {
                        Some(&w) => target.make_decision(w, elems),
                        None => {
                            let mut acc = FALSE;
                            for (p, s) in elems {
                                let e = target.and(p, s);
                                acc = target.or(acc, e);
                            }
                            acc
                        }
                    }
                }
                _ => unreachable!(),
            };
            map.insert(n, translated);
        }
        roots.iter().map(|r| map[r]).collect()
    }

    /// Drops dead nodes and caches by copying the live roots into a fresh manager.
    pub fn compact(&self, roots: &[NodeId]) -> (SddManager, Vec<NodeId>) {
        let mut fresh = SddManager::new(self.vtree.clone());
        let new_roots = self.translate(roots, &mut fresh);
        (fresh, new_roots)
    }

    /// Checks the structural SDD invariants for every node below `root`:
    /// normalization, non-false primes that are pairwise disjoint and
    /// exhaustive, and distinct subs.
    pub fn validate(&mut self, root: NodeId) -> Result<(), String> {
        for n in self.reachable(&[root]) {
            let NodeRef::Decision { vtree, elements } = self.node(n) else {
                continue;
            };
            let elements = elements.to_vec();
            let (l, r) = (self.vtree.left(vtree), self.vtree.right(vtree));
            let mut subs = std::collections::HashSet::new();
            let mut cover = FALSE;
            for (i, &(p, s)) in elements.iter().enumerate() {
                if p == FALSE {
                    return Err(format!("node {n}: false prime"));
                }
                if p > TRUE && !self.vtree.is_within(self.vtree_of(p), l) {
                    return Err(format!("node {n}: prime {p} outside left subtree"));
                }
                if s > TRUE && !self.vtree.is_within(self.vtree_of(s), r) {
                    return Err(format!("node {n}: sub {s} outside right subtree"));
                }
                if !subs.insert(s) {
                    return Err(format!("node {n}: repeated sub {s}"));
                }
                for &(q, _) in &elements[i + 1..] {
                    if self.and(p, q) != FALSE {
                        return Err(format!("node {n}: primes {p} and {q} overlap"));
                    }
                }
                cover = self.or(cover, p);
            }
            if cover != TRUE {
                return Err(format!("node {n}: primes not exhaustive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::Cnf;

    fn brute_count(cnf: &Cnf) -> u64 {
        let n = cnf.num_vars();
        (0u64..1 << n)
            .filter(|bits| {
                let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                cnf.is_satisfied_by(&a)
            })
            .count() as u64
    }

    fn compile_naive(m: &mut SddManager, cnf: &Cnf) -> NodeId {
        let mut f = TRUE;
        for c in cnf.clauses() {
            let cl = m.clause(c);
            f = m.and(f, cl);
        }
        f
    }

    #[test]
    fn basic_identities() {
        let mut m = SddManager::new(Vtree::balanced(&[1, 2, 3]));
        let x = m.var(1, true);
        let nx = m.var(1, false);
        assert_eq!(m.and(x, nx), FALSE);
        assert_eq!(m.or(x, nx), TRUE);
        let y = m.var(2, true);
        let f = m.or(x, y);
        assert_eq!(m.and(f, TRUE), f);
        assert_eq!(m.model_count(TRUE), BigUint::from(8u32));
        assert_eq!(m.model_count(FALSE), BigUint::zero());
        assert_eq!(m.model_count(f), BigUint::from(6u32));
        let xy = m.and(x, y);
        assert_eq!(m.condition(xy, &[Literal::new(1, true)]), y);
    }

    #[test]
    fn canonicity_across_construction_orders() {
        let mut m = SddManager::new(Vtree::right_linear(&[1, 2, 3, 4]));
        let lits: Vec<_> = (1..=4).map(|v| m.var(v, true)).collect();
        let a = m.and(lits[0], lits[3]);
        let a = m.or(a, lits[1]);
        let b = m.or(lits[1], lits[0]);
        let c = m.or(lits[1], lits[3]);
        let b = m.and(b, c);
        assert_eq!(a, b);
        m.validate(a).unwrap();
    }

    #[test]
    fn negation_round_trip() {
        let mut m = SddManager::new(Vtree::balanced(&[1, 2, 3, 4]));
        let x = m.var(1, true);
        let y = m.var(3, false);
        let f = m.or(x, y);
        let nf = m.negate(f);
        assert_eq!(m.and(f, nf), FALSE);
        assert_eq!(m.negate(nf), f);
    }

    #[test]
    fn random_cnfs_match_truth_table() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for round in 0..40 {
            let n = 10u32;
            let mut cnf = Cnf::new(n);
            for _ in 0..rng.random_range(1..25) {
                let width = rng.random_range(1..=4);
                let mut vars: Vec<i32> = Vec::new();
                while vars.len() < width {
                    let v = rng.random_range(1..=n as i32);
                    if !vars.iter().any(|x| x.abs() == v) {
                        vars.push(if rng.random_bool(0.5) { v } else { -v });
                    }
                }
                cnf.add_clause(&vars).unwrap();
            }
            let vars: Vec<u32> = (1..=n).collect();
            let vt = match round % 3 {
                0 => Vtree::left_linear(&vars),
                1 => Vtree::right_linear(&vars),
                _ => Vtree::balanced(&vars),
            };
            let mut m = SddManager::new(vt);
            let f = compile_naive(&mut m, &cnf);
            assert_eq!(m.model_count(f), BigUint::from(brute_count(&cnf)));
            m.validate(f).unwrap();
            for bits in (0u64..1 << n).step_by(37) {
                let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                assert_eq!(m.evaluate(f, &a), cnf.is_satisfied_by(&a));
            }
        }
    }

    #[test]
    fn shannon_expansion_matches_quantification() {
        let vars: Vec<u32> = (1..=6).collect();
        let mut m = SddManager::new(Vtree::balanced(&vars));
        let mut cnf = Cnf::new(6);
        cnf.add_clause(&[1, -2, 3]).unwrap();
        cnf.add_clause(&[-1, 4]).unwrap();
        cnf.add_clause(&[2, 5, -6]).unwrap();
        let f = compile_naive(&mut m, &cnf);
        let ex = m.exists(f, 1);
        for bits in 0u64..64 {
            let a: Vec<bool> = (0..6).map(|i| bits >> i & 1 == 1).collect();
            let mut a0 = a.clone();
            a0[0] = false;
            let mut a1 = a.clone();
            a1[0] = true;
            let expected = cnf.is_satisfied_by(&a0) || cnf.is_satisfied_by(&a1);
            assert_eq!(m.evaluate(ex, &a), expected);
        }
    }

    #[test]
    fn scoped_count_after_conditioning() {
        let vars: Vec<u32> = (1..=4).collect();
        let mut m = SddManager::new(Vtree::left_linear(&vars));
        let x = m.var(1, true);
        let y = m.var(2, true);
        let f = m.or(x, y);
        let g = m.condition(f, &[Literal::new(1, false)]);
        assert_eq!(g, y);
        assert_eq!(m.model_count_scoped(g, &[1]), BigUint::from(4u32));
    }

    #[test]
    fn translate_preserves_semantics() {
        let vars: Vec<u32> = (1..=8).collect();
        let mut m = SddManager::new(Vtree::left_linear(&vars));
        let mut cnf = Cnf::new(8);
        cnf.add_clause(&[1, -5, 8]).unwrap();
        cnf.add_clause(&[-2, 6]).unwrap();
        cnf.add_clause(&[3, 4, -7]).unwrap();
        let f = compile_naive(&mut m, &cnf);
        let mut other = SddManager::new(Vtree::balanced(&[8, 1, 7, 2, 6, 3, 5, 4]));
        let g = m.translate(&[f], &mut other)[0];
        assert_eq!(other.model_count(g), m.model_count(f));
        other.validate(g).unwrap();
        let (c, roots) = m.compact(&[f]);
        assert_eq!(c.size(&roots), m.size(&[f]));
    }
}
