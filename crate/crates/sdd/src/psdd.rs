//! Probabilistic SDDs.
//!
//! Every node is normalized for exactly one vtree node and represents a
//! distribution over the variables below it. A decision node at `v` holds
//! elements `(prime, sub, θ)` with primes at `left(v)`, subs at `right(v)`,
//! disjoint prime supports and `Σθ = 1`.
//!
//! Nodes live in an append-only arena. [`Psdd::len`] and [`Psdd::truncate`]
//! let callers discard products built on top of a shared base circuit.

use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use crate::ac::OpCounts;
use crate::cnf::{Literal, Var};
use crate::error::{Result, SddError};
use crate::io::{err, lines, num, parse_vtree_section, vtree_to_text};
use crate::manager::{NodeId, NodeRef, SddManager, FALSE, TRUE};
use crate::vtree::{Projection, Vtree, VtreeId};

pub type PsddId = u32;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Element {
    pub prime: PsddId,
    pub sub: PsddId,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsddNode<'a> {
    /// Point mass on one literal.
    Literal(Literal),
    /// `Pr(var = true) = p`.
    Bernoulli { var: Var, p: f64 },
    Decision(&'a [Element]),
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Literal(i32),
    Bernoulli(u32, f64),
    Decision(u32, u32),
}

#[derive(Clone, Debug)]
pub struct Psdd {
    vtree: Vtree,
    kinds: Vec<Kind>,
    vnode: Vec<VtreeId>,
    elems: Vec<Element>,
    uniform: Vec<PsddId>,
    /// Arithmetic performed by multiply, marginal and MPE queries.
    pub ops: OpCounts,
}

impl Psdd {
    pub fn new(vtree: Vtree) -> Psdd {
        let n = vtree.num_nodes();
        Psdd {
            vtree,
            kinds: Vec::new(),
            vnode: Vec::new(),
            elems: Vec::new(),
            uniform: vec![NONE; n],
            ops: OpCounts::default(),
        }
    }

    pub fn vtree(&self) -> &Vtree {
        &self.vtree
    }

    /// Number of stored nodes; usable as a mark for [`Psdd::truncate`].
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Drops every node created after `mark`.
    pub fn truncate(&mut self, mark: usize) {
        if mark >= self.kinds.len() {
            return;
        }
        let elem_mark = self.kinds[mark..]
            .iter()
            .filter_map(|k| match *k {
                Kind::Decision(start, _) => Some(start as usize),
                _ => None,
            })
            .min()
            .unwrap_or(self.elems.len());
        self.kinds.truncate(mark);
        self.vnode.truncate(mark);
        self.elems.truncate(elem_mark);
        for u in self.uniform.iter_mut() {
            if *u != NONE && *u as usize >= mark {
                *u = NONE;
            }
        }
    }

    pub fn node(&self, id: PsddId) -> PsddNode<'_> {
        match self.kinds[id as usize] {
            Kind::Literal(l) => PsddNode::Literal(Literal::from_dimacs(l).unwrap()),
            Kind::Bernoulli(var, p) => PsddNode::Bernoulli { var, p },
            Kind::Decision(start, len) => {
                PsddNode::Decision(&self.elems[start as usize..(start + len) as usize])
            }
        }
    }

    pub fn vtree_of(&self, id: PsddId) -> VtreeId {
        self.vnode[id as usize]
    }

    fn push(&mut self, k: Kind, v: VtreeId) -> PsddId {
        self.kinds.push(k);
        self.vnode.push(v);
        (self.kinds.len() - 1) as PsddId
    }

    pub fn literal(&mut self, lit: Literal) -> PsddId {
        let v = self.vtree.leaf_of(lit.var()).expect("variable in vtree");
        self.push(Kind::Literal(lit.to_dimacs()), v)
    }

    pub fn bernoulli(&mut self, var: Var, p: f64) -> PsddId {
        let v = self.vtree.leaf_of(var).expect("variable in vtree");
        if p == 1.0 {
            return self.literal(Literal::new(var, true));
        }
        if p == 0.0 {
            return self.literal(Literal::new(var, false));
        }
        self.push(Kind::Bernoulli(var, p), v)
    }

    /// Decision node at `v`. Weights are used as given.
    pub fn decision(&mut self, v: VtreeId, elements: &[Element]) -> PsddId {
        debug_assert!(!self.vtree.is_leaf(v));
        let start = self.elems.len() as u32;
        self.elems.extend_from_slice(elements);
        self.push(Kind::Decision(start, elements.len() as u32), v)
    }

    /// Uniform distribution over the variables under `v`.
    pub fn uniform(&mut self, v: VtreeId) -> PsddId {
        if self.uniform[v as usize] != NONE {
            return self.uniform[v as usize];
        }
        let id = match self.vtree.var(v) {
            Some(x) => self.push(Kind::Bernoulli(x, 0.5), v),
            None => {
                let (l, r) = (self.vtree.left(v), self.vtree.right(v));
                let prime = self.uniform(l);
                let sub = self.uniform(r);
                self.decision(
                    v,
                    &[Element {
                        prime,
                        sub,
                        theta: 1.0,
                    }],
                )
            }
        };
        self.uniform[v as usize] = id;
        id
    }

    /// Uniform distribution over the models of an SDD. Element weights are
    /// proportional to the number of models each element covers.
    pub fn from_sdd(mgr: &SddManager, root: NodeId) -> Result<(Psdd, PsddId)> {
        if root == FALSE {
            return Err(SddError::Unsatisfiable);
        }
        let vt = mgr.vtree().clone();
        let mut out = Psdd::new(vt.clone());
        let nodes = mgr.reachable(&[root]);
        let mut count: FxHashMap<NodeId, f64> = FxHashMap::default();
        let mut pid: FxHashMap<NodeId, PsddId> = FxHashMap::default();
        let mut lifted: FxHashMap<(NodeId, VtreeId), (PsddId, f64)> = FxHashMap::default();
        for &n in &nodes {
            match mgr.node(n) {
                NodeRef::False | NodeRef::True => {}
                NodeRef::Literal(l) => {
                    count.insert(n, 1.0);
                    let id = out.literal(l);
                    pid.insert(n, id);
                }
                NodeRef::Decision { vtree, elements } => {
                    let (l, r) = (vt.left(vtree), vt.right(vtree));
                    let mut elems = Vec::with_capacity(elements.len());
                    let mut total = 0.0;
                    for &(p, s) in elements {
                        if s == FALSE {
                            continue;
                        }
                        let (pp, cp) = out.lift(mgr, p, l, &pid, &count, &mut lifted);
                        let (ps, cs) = out.lift(mgr, s, r, &pid, &count, &mut lifted);
                        total += cp * cs;
                        elems.push(Element {
                            prime: pp,
                            sub: ps,
                            theta: cp * cs,
                        });
                    }
                    for e in &mut elems {
                        e.theta /= total;
                    }
                    count.insert(n, total);
                    let id = out.decision(vtree, &elems);
                    pid.insert(n, id);
                }
            }
        }
        let (id, _) = out.lift(mgr, root, vt.root(), &pid, &count, &mut lifted);
        Ok((out, id))
    }

    /// PSDD node for SDD node `n` (not false) over the scope of vtree node
    /// `t`, with its model count over that scope.
    fn lift(
        &mut self,
        mgr: &SddManager,
        n: NodeId,
        t: VtreeId,
        pid: &FxHashMap<NodeId, PsddId>,
        count: &FxHashMap<NodeId, f64>,
        memo: &mut FxHashMap<(NodeId, VtreeId), (PsddId, f64)>,
    ) -> (PsddId, f64) {
        if n == TRUE {
            let c = (self.vtree.num_vars_under(t) as f64).exp2();
            return (self.uniform(t), c);
        }
        let v = mgr.vtree_of(n);
        if v == t {
            return (pid[&n], count[&n]);
        }
        if let Some(&r) = memo.get(&(n, t)) {
            return r;
        }
        let c = self.vtree.child_toward(t, v);
        let (l, r) = (self.vtree.left(t), self.vtree.right(t));
        let other = if c == l { r } else { l };
        let (inner, ci) = self.lift(mgr, n, c, pid, count, memo);
        let u = self.uniform(other);
        let co = (self.vtree.num_vars_under(other) as f64).exp2();
        let e = if c == l {
            Element {
                prime: inner,
                sub: u,
                theta: 1.0,
            }
        } else {
            Element {
                prime: u,
                sub: inner,
                theta: 1.0,
            }
        };
        let id = self.decision(t, &[e]);
        memo.insert((n, t), (id, ci * co));
        (id, ci * co)
    }

    /// Compiles a distribution over the assignments of `bits` into a PSDD
    /// over `vtree`, whose variables must be exactly `bits`. `pmf[j]` is the
    /// probability that `bits[i]` is bit `i` of `j`.
    pub fn compile_pmf(vtree: &Vtree, bits: &[Var], pmf: &[f64]) -> Result<(Psdd, PsddId)> {
        if pmf.len() != 1 << bits.len() {
            return Err(SddError::UnknownVars("pmf length does not match bit count".into()));
        }
        let mut sorted = bits.to_vec();
        sorted.sort_unstable();
        let mut tv = vtree.vars().to_vec();
        tv.sort_unstable();
        if sorted != tv {
            return Err(SddError::IncompatibleVtree(
                "vtree variables differ from the pmf bits".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if !(total > 0.0) {
            return Err(SddError::Unsatisfiable);
        }
        let mut pos = vec![0u32; *sorted.last().unwrap() as usize + 1];
        for (i, &b) in bits.iter().enumerate() {
            pos[b as usize] = i as u32;
        }
        let mut out = Psdd::new(vtree.clone());
        let support: Vec<(u32, f64)> = pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| (j as u32, p / total))
            .collect();
        let root = out.build_pmf(vtree.root(), &support, &pos);
        Ok((out, root))
    }

    /// `dist`: (assignment, probability) pairs, restricted to the scope of
    /// `v`, no duplicates, summing to 1.
    fn build_pmf(&mut self, v: VtreeId, dist: &[(u32, f64)], pos: &[u32]) -> PsddId {
        if let Some(x) = self.vtree.var(v) {
            let bit = 1 << pos[x as usize];
            let p1: f64 = dist.iter().filter(|(a, _)| a & bit != 0).map(|(_, p)| p).sum();
            let has0 = dist.iter().any(|(a, _)| a & bit == 0);
            let has1 = dist.iter().any(|(a, _)| a & bit != 0);
            return match (has0, has1) {
                (false, _) => self.literal(Literal::new(x, true)),
                (_, false) => self.literal(Literal::new(x, false)),
                _ => self.push(Kind::Bernoulli(x, p1), v),
            };
        }
        let mask_of = |v: VtreeId, vt: &Vtree| -> u32 {
            vt.vars_under(v).iter().fold(0, |m, &x| m | 1 << pos[x as usize])
        };
        let (l, r) = (self.vtree.left(v), self.vtree.right(v));
        let (lm, rm) = (mask_of(l, &self.vtree), mask_of(r, &self.vtree));
        // Group by left assignment: marginal and conditional over the right.
        let mut by_left: Vec<(u32, f64, Vec<(u32, f64)>)> = Vec::new();
        let mut index: FxHashMap<u32, usize> = FxHashMap::default();
        for &(a, p) in dist {
            let la = a & lm;
            let i = *index.entry(la).or_insert_with(|| {
                by_left.push((la, 0.0, Vec::new()));
                by_left.len() - 1
            });
            by_left[i].1 += p;
            by_left[i].2.push((a & rm, p));
        }
        // Left assignments sharing a conditional share one element.
        let mut groups: Vec<(Vec<(u32, f64)>, Vec<(u32, f64)>, f64)> = Vec::new();
        for (la, m, mut cond) in by_left {
            for c in &mut cond {
                c.1 /= m;
            }
            cond.sort_by_key(|c| c.0);
            match groups.iter_mut().find(|g| g.0 == cond) {
                Some(g) => {
                    g.1.push((la, m));
                    g.2 += m;
                }
                None => groups.push((cond, vec![(la, m)], m)),
            }
        }
        let mut elems = Vec::with_capacity(groups.len());
        for (cond, mut primes, mass) in groups {
            for p in &mut primes {
                p.1 /= mass;
            }
            let prime = self.build_pmf(l, &primes, pos);
            let sub = self.build_pmf(r, &cond, pos);
            elems.push(Element {
                prime,
                sub,
                theta: mass,
            });
        }
        self.decision(v, &elems)
    }

    /// Product of `a` (in `self`) with `b` (in `other`, over the projection
    /// `proj` of this vtree). Variables outside `b`'s scope are treated as
    /// uniform. Returns the normalized product and `κ = Σ a·b`.
    pub fn multiply(
        &mut self,
        a: PsddId,
        other: &Psdd,
        b: PsddId,
        proj: &Projection,
    ) -> Result<(PsddId, f64)> {
        let v = self.vtree_of(a);
        let Some(u) = proj.of_master(v) else {
            return Err(SddError::IncompatibleVtree("no shared variables".into()));
        };
        if other.vtree_of(b) != u {
            return Err(SddError::IncompatibleVtree(
                "second circuit is not normalized for the projected node".into(),
            ));
        }
        let mut memo = FxHashMap::default();
        let (id, k) = self.mul(a, other, b, proj, &mut memo, &mut Vec::new());
        if id == NONE {
            return Err(SddError::Unsatisfiable);
        }
        // Uniform lifting of b over the variables it does not mention.
        let missing = self.vtree.num_vars_under(v) - other.vtree.num_vars_under(u);
        Ok((id, k * (-(missing as f64)).exp2()))
    }

    fn mul(
        &mut self,
        a: PsddId,
        other: &Psdd,
        b: PsddId,
        proj: &Projection,
        memo: &mut FxHashMap<(PsddId, PsddId), (PsddId, f64)>,
        scratch: &mut Vec<Element>,
    ) -> (PsddId, f64) {
        if let Some(&r) = memo.get(&(a, b)) {
            return r;
        }
        let v = self.vtree_of(a);
        let result = match (self.kinds[a as usize], other.node(b)) {
            (Kind::Literal(la), PsddNode::Literal(lb)) => {
                if la == lb.to_dimacs() {
                    (a, 1.0)
                } else {
                    (NONE, 0.0)
                }
            }
            (Kind::Literal(la), PsddNode::Bernoulli { p, .. }) => {
                let k = if la > 0 { p } else { 1.0 - p };
                if k > 0.0 {
                    (a, k)
                } else {
                    (NONE, 0.0)
                }
            }
            (Kind::Bernoulli(x, p), PsddNode::Literal(lb)) => {
                let k = if lb.is_positive() { p } else { 1.0 - p };
                if k > 0.0 {
                    let id = self.literal(Literal::new(x, lb.is_positive()));
                    (id, k)
                } else {
                    (NONE, 0.0)
                }
            }
            (Kind::Bernoulli(x, p), PsddNode::Bernoulli { p: q, .. }) => {
                self.ops.products += 3;
                self.ops.sums += 1;
                let on = p * q;
                let k = on + (1.0 - p) * (1.0 - q);
                let id = self.bernoulli(x, on / k);
                (id, k)
            }
            (Kind::Decision(start, len), bn) => {
                let (l, r) = (self.vtree.left(v), self.vtree.right(v));
                let (pl, pr) = (proj.of_master(l), proj.of_master(r));
                // Arena storage is append-only, so indices stay valid while
                // the recursion pushes new nodes.
                let a_elems = start as usize..(start + len) as usize;
                let base = scratch.len();
                let mut total = 0.0;
                match (pl.is_some(), pr.is_some()) {
                    (true, true) => {
                        let PsddNode::Decision(b_elems) = bn else {
                            unreachable!("projected node of an internal split is internal")
                        };
                        for ia in a_elems {
                            let ea = self.elems[ia];
                            for eb in b_elems {
                                let (p, kp) = self.mul(ea.prime, other, eb.prime, proj, memo, scratch);
                                if p == NONE {
                                    continue;
                                }
                                let (s, ks) = self.mul(ea.sub, other, eb.sub, proj, memo, scratch);
                                if s == NONE {
                                    continue;
                                }
                                let w = ea.theta * eb.theta * kp * ks;
                                self.ops.products += 3;
                                if w > 0.0 {
                                    self.ops.sums += 1;
                                    total += w;
                                    scratch.push(Element {
                                        prime: p,
                                        sub: s,
                                        theta: w,
                                    });
                                }
                            }
                        }
                    }
                    (true, false) => {
                        for ia in a_elems {
                            let ea = self.elems[ia];
                            let (p, kp) = self.mul(ea.prime, other, b, proj, memo, scratch);
                            if p == NONE {
                                continue;
                            }
                            let w = ea.theta * kp;
                            self.ops.products += 1;
                            self.ops.sums += 1;
                            total += w;
                            scratch.push(Element {
                                prime: p,
                                sub: ea.sub,
                                theta: w,
                            });
                        }
                    }
                    (false, true) => {
                        for ia in a_elems {
                            let ea = self.elems[ia];
                            let (s, ks) = self.mul(ea.sub, other, b, proj, memo, scratch);
                            if s == NONE {
                                continue;
                            }
                            let w = ea.theta * ks;
                            self.ops.products += 1;
                            self.ops.sums += 1;
                            total += w;
                            scratch.push(Element {
                                prime: ea.prime,
                                sub: s,
                                theta: w,
                            });
                        }
                    }
                    (false, false) => unreachable!("b has no variables under this node"),
                }
                let r = if scratch.len() == base || total <= 0.0 {
                    (NONE, 0.0)
                } else {
                    for e in &mut scratch[base..] {
                        e.theta /= total;
                    }
                    (self.decision(v, &scratch[base..]), total)
                };
                scratch.truncate(base);
                r
            }
            (Kind::Literal(_) | Kind::Bernoulli(..), PsddNode::Decision(_)) => {
                unreachable!("leaf paired with a decision")
            }
        };
        memo.insert((a, b), result);
        result
    }

    /// Nodes reachable from `root`, children before parents.
    pub fn reachable(&self, root: PsddId) -> Vec<PsddId> {
        let mut seen = vec![false; self.kinds.len()];
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n as usize], true) {
                continue;
            }
            if let PsddNode::Decision(es) = self.node(n) {
                for e in es {
                    stack.push(e.prime);
                    stack.push(e.sub);
                }
            }
        }
        // Children always precede parents in the arena.
        let mut out: Vec<PsddId> = Vec::with_capacity(stack.capacity());
        for (i, &s) in seen.iter().enumerate() {
            if s {
                out.push(i as PsddId);
            }
        }
        out
    }

    /// (decision nodes, elements) reachable from `root`.
    pub fn size(&self, root: PsddId) -> (usize, usize) {
        let mut d = 0;
        let mut e = 0;
        for n in self.reachable(root) {
            if let PsddNode::Decision(es) = self.node(n) {
                d += 1;
                e += es.len();
            }
        }
        (d, e)
    }

    /// Probability of a complete assignment (`assignment[v - 1]`).
    pub fn probability(&self, root: PsddId, assignment: &[bool]) -> f64 {
        let mut cur = root;
        let mut acc = 1.0;
        loop {
            match self.node(cur) {
                PsddNode::Literal(l) => {
                    return if assignment[l.var() as usize - 1] == l.is_positive() {
                        acc
                    } else {
                        0.0
                    };
                }
                PsddNode::Bernoulli { var, p } => {
                    return acc * if assignment[var as usize - 1] { p } else { 1.0 - p };
                }
                PsddNode::Decision(es) => {
                    let Some(e) = es.iter().find(|e| self.probability(e.prime, assignment) > 0.0)
                    else {
                        return 0.0;
                    };
                    acc *= e.theta * self.probability(e.prime, assignment);
                    cur = e.sub;
                }
            }
        }
    }

    /// Joint marginal of `bits`: entry `j` is the probability that
    /// `bits[i]` equals bit `i` of `j`. One upward pass; each node carries
    /// the table over the target bits in its scope.
    pub fn marginal(&mut self, root: PsddId, bits: &[Var]) -> Vec<f64> {
        let max = self.vtree.max_var() as usize;
        let mut bit_of = vec![NONE; max + 1];
        for (i, &b) in bits.iter().enumerate() {
            bit_of[b as usize] = i as u32;
        }
        let nv = self.vtree.num_nodes();
        // Global bit mask of the targets under each vtree node.
        let mask: Vec<u32> = (0..nv as VtreeId)
            .map(|v| {
                self.vtree
                    .vars_under(v)
                    .iter()
                    .filter(|&&x| bit_of[x as usize] != NONE)
                    .fold(0u32, |m, &x| m | 1 << bit_of[x as usize])
            })
            .collect();
        // For an internal node, the local indices of the left and right
        // tables for every local index of its own table.
        let split: Vec<Vec<(u32, u32)>> = (0..nv as VtreeId)
            .map(|v| {
                if self.vtree.is_leaf(v) {
                    return Vec::new();
                }
                let (l, r) = (self.vtree.left(v), self.vtree.right(v));
                (0..1u32 << mask[v as usize].count_ones())
                    .map(|t| {
                        let g = deposit(t, mask[v as usize]);
                        (extract(g, mask[l as usize]), extract(g, mask[r as usize]))
                    })
                    .collect()
            })
            .collect();
        let order: Vec<PsddId> = self
            .reachable(root)
            .into_iter()
            .filter(|&n| mask[self.vtree_of(n) as usize] != 0)
            .collect();
        let mut offset = vec![NONE; self.kinds.len()];
        let mut table: Vec<f64> = Vec::new();
        let mut ops = OpCounts::default();
        for &n in &order {
            let v = self.vtree_of(n) as usize;
            let at = table.len();
            offset[n as usize] = at as u32;
            match self.kinds[n as usize] {
                Kind::Literal(l) => {
                    let on = l > 0;
                    table.extend([(!on) as u8 as f64, on as u8 as f64]);
                }
                Kind::Bernoulli(_, p) => table.extend([1.0 - p, p]),
                Kind::Decision(start, len) => {
                    let width = split[v].len();
                    table.resize(at + width, 0.0);
                    for ie in start as usize..(start + len) as usize {
                        let e = self.elems[ie];
                        let (op, os) = (offset[e.prime as usize], offset[e.sub as usize]);
                        for (t, &(a, b)) in split[v].iter().enumerate() {
                            // Children without target bits are normalized.
                            let vp = if op == NONE { 1.0 } else { table[(op + a) as usize] };
                            let vs = if os == NONE { 1.0 } else { table[(os + b) as usize] };
                            table[at + t] += e.theta * vp * vs;
                        }
                        ops.products += 2 * width as u64;
                        ops.sums += width as u64;
                    }
                }
            }
        }
        self.ops += ops;
        let all = (1u32 << bits.len()) - 1;
        let root_mask = mask[self.vtree_of(root) as usize];
        // Target bits outside the root's scope are uniform.
        let spread = f64::from(1u32 << (all & !root_mask).count_ones());
        (0..1u32 << bits.len())
            .map(|j| match offset[root as usize] {
                NONE => 1.0 / spread,
                o => table[(o + extract(j, root_mask)) as usize] / spread,
            })
            .collect()
    }

    /// Most probable complete assignment (`assignment[v - 1]`, false for
    /// variables outside the vtree) and its probability. Among maximizers
    /// the lexicographically smallest assignment wins, comparing variable 1
    /// first and ordering false before true.
    pub fn mpe(&mut self, root: PsddId) -> (Vec<bool>, f64) {
        let nvars = self.vtree.max_var() as usize;
        let words = nvars.div_ceil(64).max(1);
        let order = self.reachable(root);
        let mut val = vec![0.0f64; self.kinds.len()];
        let mut best: FxHashMap<PsddId, Vec<u64>> = FxHashMap::default();
        let mut ops = OpCounts::default();
        let set = |bs: &mut Vec<u64>, var: Var| {
            let i = var as usize - 1;
            bs[i / 64] |= 1 << (i % 64);
        };
        for &n in &order {
            let mut bs = vec![0u64; words];
            val[n as usize] = match self.kinds[n as usize] {
                Kind::Literal(l) => {
                    let lit = Literal::from_dimacs(l).unwrap();
                    if lit.is_positive() {
                        set(&mut bs, lit.var());
                    }
                    1.0
                }
                Kind::Bernoulli(x, p) => {
                    // Ties go to false.
                    if p > 1.0 - p {
                        set(&mut bs, x);
                        p
                    } else {
                        1.0 - p
                    }
                }
                Kind::Decision(start, len) => {
                    let mut top = f64::NEG_INFINITY;
                    let mut arg: Option<Vec<u64>> = None;
                    for e in &self.elems[start as usize..(start + len) as usize] {
                        let s = e.theta * val[e.prime as usize] * val[e.sub as usize];
                        ops.products += 2;
                        ops.sums += 1;
                        let cand: Vec<u64> = best[&e.prime]
                            .iter()
                            .zip(&best[&e.sub])
                            .map(|(a, b)| a | b)
                            .collect();
                        let better = match &arg {
                            None => true,
                            Some(cur) => s > top || (s == top && lex_less(&cand, cur)),
                        };
                        if better {
                            top = s;
                            arg = Some(cand);
                        }
                    }
                    bs = arg.unwrap();
                    top
                }
            };
            best.insert(n, bs);
        }
        self.ops += ops;
        let bs = &best[&root];
        let assignment = (0..nvars).map(|i| bs[i / 64] >> (i % 64) & 1 == 1).collect();
        (assignment, val[root as usize])
    }

    /// Text form: a vtree section, then `psdd <count>` and one line per
    /// node, children first, root last:
    /// `L <id> <vtree> <lit>`, `B <id> <vtree> <var> <p>`,
    /// `D <id> <vtree> <k> <prime sub>×k` followed by `W <θ>×k`.
    pub fn to_text(&self, root: PsddId) -> String {
        let mut out = vtree_to_text(&self.vtree);
        let nodes = self.reachable(root);
        writeln!(out, "psdd {}", nodes.len()).unwrap();
        for n in nodes {
            let v = self.vtree_of(n);
            match self.node(n) {
                PsddNode::Literal(l) => writeln!(out, "L {n} {v} {}", l.to_dimacs()).unwrap(),
                PsddNode::Bernoulli { var, p } => writeln!(out, "B {n} {v} {var} {p:e}").unwrap(),
                PsddNode::Decision(es) => {
                    write!(out, "D {n} {v} {}", es.len()).unwrap();
                    for e in es {
                        write!(out, " {} {}", e.prime, e.sub).unwrap();
                    }
                    out.push_str("\nW");
                    for e in es {
                        write!(out, " {:e}", e.theta).unwrap();
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<(Psdd, PsddId)> {
        let mut it = lines(text);
        let (vtree, vmap) = parse_vtree_section(&mut it)?;
        let (line, header) = it.next().ok_or_else(|| err(0, "missing psdd header"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("psdd") {
            return Err(err(line, "expected `psdd <count>`"));
        }
        let count: usize = num(parts.next(), line)?;
        let mut out = Psdd::new(vtree);
        let mut ids: FxHashMap<u32, PsddId> = FxHashMap::default();
        let mut last = None;
        for _ in 0..count {
            let (line, l) = it.next().ok_or_else(|| err(0, "truncated psdd section"))?;
            let mut p = l.split_whitespace();
            let kind = p.next();
            let id: u32 = num(p.next(), line)?;
            let fv: u32 = num(p.next(), line)?;
            let v = *vmap.get(&fv).ok_or_else(|| err(line, "unknown vtree id"))?;
            let node = match kind {
                Some("L") => {
                    let lit = Literal::from_dimacs(num(p.next(), line)?)?;
                    if out.vtree.var(v) != Some(lit.var()) {
                        return Err(SddError::VtreeMismatch("literal at wrong leaf".into()));
                    }
                    out.push(Kind::Literal(lit.to_dimacs()), v)
                }
                Some("B") => {
                    let var: u32 = num(p.next(), line)?;
                    let pr: f64 = num(p.next(), line)?;
                    if out.vtree.var(v) != Some(var) || !(0.0..=1.0).contains(&pr) {
                        return Err(err(line, "bad Bernoulli terminal"));
                    }
                    out.push(Kind::Bernoulli(var, pr), v)
                }
                Some("D") => {
                    if out.vtree.is_leaf(v) {
                        return Err(SddError::VtreeMismatch("decision at a leaf".into()));
                    }
                    let k: usize = num(p.next(), line)?;
                    let mut pairs = Vec::with_capacity(k);
                    for _ in 0..k {
                        let a: u32 = num(p.next(), line)?;
                        let b: u32 = num(p.next(), line)?;
                        let a = *ids.get(&a).ok_or_else(|| err(line, "unknown prime"))?;
                        let b = *ids.get(&b).ok_or_else(|| err(line, "unknown sub"))?;
                        if out.vtree_of(a) != out.vtree.left(v) || out.vtree_of(b) != out.vtree.right(v) {
                            return Err(SddError::VtreeMismatch("element not normalized".into()));
                        }
                        pairs.push((a, b));
                    }
                    let (wl, w) = it.next().ok_or_else(|| err(line, "missing W line"))?;
                    let mut wp = w.split_whitespace();
                    if wp.next() != Some("W") {
                        return Err(err(wl, "expected W line"));
                    }
                    let mut elems = Vec::with_capacity(k);
                    for (a, b) in pairs {
                        let theta: f64 = num(wp.next(), wl)?;
                        elems.push(Element {
                            prime: a,
                            sub: b,
                            theta,
                        });
                    }
                    let sum: f64 = elems.iter().map(|e| e.theta).sum();
                    if (sum - 1.0).abs() > 1e-9 || elems.iter().any(|e| e.theta < 0.0) {
                        return Err(err(wl, "weights must be non-negative and sum to 1"));
                    }
                    out.decision(v, &elems)
                }
                _ => return Err(err(line, "expected L, B or D")),
            };
            ids.insert(id, node);
            last = Some(node);
        }
        let root = last.ok_or_else(|| err(line, "empty psdd"))?;
        Ok((out, root))
    }
}

/// Scatters the low bits of `t` onto the set bits of `mask`.
fn deposit(t: u32, mask: u32) -> u32 {
    let (mut out, mut m, mut i) = (0, mask, 0);
    while m != 0 {
        let low = m & m.wrapping_neg();
        if t >> i & 1 == 1 {
            out |= low;
        }
        m &= m - 1;
        i += 1;
    }
    out
}

/// Gathers the bits of `g` at the set bits of `mask` into the low bits.
fn extract(g: u32, mask: u32) -> u32 {
    let (mut out, mut m, mut i) = (0, mask, 0);
    while m != 0 {
        let low = m & m.wrapping_neg();
        if g & low != 0 {
            out |= 1 << i;
        }
        m &= m - 1;
        i += 1;
    }
    out
}

fn lex_less(a: &[u64], b: &[u64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let d = x ^ y;
        if d != 0 {
            // Lowest differing variable decides; false sorts first.
            return x & (d & d.wrapping_neg()) == 0;
        }
    }
    false
}
