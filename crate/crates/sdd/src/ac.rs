//! Smooth arithmetic circuits frozen from an SDD, for weighted model
//! counting and its partial derivatives.
//!
//! Every variable of the vtree appears below the root, so the circuit value
//! under literal weights `w(x)`, `w(¬x)` is `Σ_models Π w(literal)`.

use rustc_hash::FxHashMap;

use crate::cnf::Literal;
use crate::manager::{NodeId, NodeRef, SddManager, FALSE, TRUE};
use crate::vtree::VtreeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semiring {
    /// Ordinary sum and product.
    Real,
    /// Values are natural logs; sum is log-sum-exp.
    Log,
    /// Sum is replaced by max.
    MaxProduct,
}

#[derive(Clone, Copy, Debug)]
enum Gate {
    Zero,
    Lit(u32),
    Prod(u32, u32),
    Sum { start: u32, len: u32 },
}

/// Arithmetic operations actually performed by a pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub sums: u64,
    pub products: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.sums + self.products
    }
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        self.sums += o.sums;
        self.products += o.products;
    }
}

#[derive(Clone, Debug)]
pub struct Circuit {
    gates: Vec<Gate>,
    vnode: Vec<VtreeId>,
    kids: Vec<u32>,
    lit_gate: Vec<u32>,
    num_vtree_nodes: usize,
    root: u32,
    vars_of_vnode: Vec<Vec<u32>>,
}

const NONE: u32 = u32::MAX;

struct Builder<'a> {
    mgr: &'a SddManager,
    c: Circuit,
    free: Vec<u32>,
    node_gate: FxHashMap<NodeId, u32>,
    lifted: FxHashMap<(NodeId, VtreeId), u32>,
    zero: u32,
}

impl Builder<'_> {
    fn push(&mut self, g: Gate, v: VtreeId) -> u32 {
        self.c.gates.push(g);
        self.c.vnode.push(v);
        (self.c.gates.len() - 1) as u32
    }

    fn lit(&mut self, l: Literal) -> u32 {
        let idx = l.index();
        if self.c.lit_gate[idx] == NONE {
            let leaf = self.mgr.vtree().leaf_of(l.var()).unwrap();
            self.c.lit_gate[idx] = self.push(Gate::Lit(idx as u32), leaf);
        }
        self.c.lit_gate[idx]
    }

    fn sum(&mut self, children: &[u32], v: VtreeId) -> u32 {
        let start = self.c.kids.len() as u32;
        self.c.kids.extend_from_slice(children);
        self.push(
            Gate::Sum {
                start,
                len: children.len() as u32,
            },
            v,
        )
    }

    /// Sum over all assignments of the variables under `v`.
    fn free(&mut self, v: VtreeId) -> u32 {
        if self.free[v as usize] != NONE {
            return self.free[v as usize];
        }
        let vt = self.mgr.vtree();
        let g = match vt.var(v) {
            Some(x) => {
                let p = self.lit(Literal::new(x, true));
                let n = self.lit(Literal::new(x, false));
                self.sum(&[p, n], v)
            }
            None => {
                let (l, r) = (vt.left(v), vt.right(v));
                let a = self.free(l);
                let b = self.free(r);
                self.push(Gate::Prod(a, b), v)
            }
        };
        self.free[v as usize] = g;
        g
    }

    /// Gate for node `n` smoothed up to vtree node `t`.
    fn lifted(&mut self, n: NodeId, t: VtreeId) -> u32 {
        match n {
            FALSE => return self.zero,
            TRUE => return self.free(t),
            _ => {}
        }
        let v = self.mgr.vtree_of(n);
        if v == t {
            return self.node_gate[&n];
        }
        if let Some(&g) = self.lifted.get(&(n, t)) {
            return g;
        }
        let vt = self.mgr.vtree();
        let c = vt.child_toward(t, v);
        let other = if c == vt.left(t) { vt.right(t) } else { vt.left(t) };
        let inner = self.lifted(n, c);
        let f = self.free(other);
        let g = if c == vt.left(t) {
            self.push(Gate::Prod(inner, f), t)
        } else {
            self.push(Gate::Prod(f, inner), t)
        };
        self.lifted.insert((n, t), g);
        g
    }
}

impl Circuit {
    /// Freezes the SDD at `root`, smoothed over every vtree variable.
    pub fn from_sdd(mgr: &SddManager, root: NodeId) -> Circuit {
        let vt = mgr.vtree();
        let mut vars_of_vnode = Vec::with_capacity(vt.num_nodes());
        for v in 0..vt.num_nodes() as VtreeId {
            vars_of_vnode.push(vt.vars_under(v).to_vec());
        }
        let mut b = Builder {
            mgr,
            c: Circuit {
                gates: Vec::new(),
                vnode: Vec::new(),
                kids: Vec::new(),
                lit_gate: vec![NONE; 2 * vt.max_var() as usize],
                num_vtree_nodes: vt.num_nodes(),
                root: 0,
                vars_of_vnode,
            },
            free: vec![NONE; vt.num_nodes()],
            node_gate: FxHashMap::default(),
            lifted: FxHashMap::default(),
            zero: 0,
        };
        b.zero = b.push(Gate::Zero, vt.root());
        for n in mgr.reachable(&[root]) {
            let g = match mgr.node(n) {
                NodeRef::False | NodeRef::True => continue,
                NodeRef::Literal(l) => b.lit(l),
                NodeRef::Decision { vtree, elements } => {
                    let (l, r) = (vt.left(vtree), vt.right(vtree));
                    let mut children = Vec::with_capacity(elements.len());
                    for &(p, s) in elements {
                        if s == FALSE {
                            continue;
                        }
                        let gp = b.lifted(p, l);
                        let gs = b.lifted(s, r);
                        children.push(b.push(Gate::Prod(gp, gs), vtree));
                    }
                    b.sum(&children, vtree)
                }
            };
            b.node_gate.insert(n, g);
        }
        let root_gate = b.lifted(root, vt.root());
        b.c.root = root_gate;
        b.c
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    /// Number of sum and product gates (edges of sums count once per child).
    pub fn size(&self) -> OpCounts {
        let mut c = OpCounts::default();
        for g in &self.gates {
            match *g {
                Gate::Prod(..) => c.products += 1,
                Gate::Sum { len, .. } => c.sums += len as u64,
                _ => {}
            }
        }
        c
    }

    fn children(&self, start: u32, len: u32) -> &[u32] {
        &self.kids[start as usize..(start + len) as usize]
    }

    /// Upward pass. `weights` is indexed by [`Literal::index`]; in the log
    /// semiring it holds log-weights.
    pub fn forward(&self, weights: &[f64], semiring: Semiring) -> (Vec<f64>, OpCounts) {
        let mut val = vec![0.0; self.gates.len()];
        let mut ops = OpCounts::default();
        let zero = match semiring {
            Semiring::Log => f64::NEG_INFINITY,
            _ => 0.0,
        };
        for (i, g) in self.gates.iter().enumerate() {
            val[i] = match *g {
                Gate::Zero => zero,
                Gate::Lit(idx) => weights[idx as usize],
                Gate::Prod(a, b) => {
                    ops.products += 1;
                    match semiring {
                        Semiring::Log => val[a as usize] + val[b as usize],
                        _ => val[a as usize] * val[b as usize],
                    }
                }
                Gate::Sum { start, len } => {
                    let ch = self.children(start, len);
                    ops.sums += ch.len().saturating_sub(1) as u64;
                    match semiring {
                        Semiring::Real => ch.iter().map(|&c| val[c as usize]).sum(),
                        Semiring::MaxProduct => ch
                            .iter()
                            .map(|&c| val[c as usize])
                            .fold(zero, f64::max),
                        Semiring::Log => {
                            let m = ch.iter().map(|&c| val[c as usize]).fold(zero, f64::max);
                            if m == f64::NEG_INFINITY {
                                m
                            } else {
                                m + ch.iter().map(|&c| (val[c as usize] - m).exp()).sum::<f64>().ln()
                            }
                        }
                    }
                }
            };
        }
        (val, ops)
    }

    /// Root entry of a forward value vector.
    pub fn root_value(&self, val: &[f64]) -> f64 {
        val[self.root as usize]
    }

    pub fn value(&self, weights: &[f64], semiring: Semiring) -> f64 {
        let (val, _) = self.forward(weights, semiring);
        val[self.root as usize]
    }

    /// Downward pass in the real semiring. Returns `∂value/∂w(l)` for every
    /// literal index. With `targets`, only gates whose vtree scope contains
    /// a target variable are visited, so only derivatives of target
    /// literals are meaningful.
    pub fn backward(&self, val: &[f64], targets: Option<&[u32]>) -> (Vec<f64>, OpCounts) {
        let relevant: Vec<bool> = match targets {
            None => vec![true; self.num_vtree_nodes],
            Some(t) => self
                .vars_of_vnode
                .iter()
                .map(|vars| vars.iter().any(|v| t.contains(v)))
                .collect(),
        };
        let mut d = vec![0.0; self.gates.len()];
        let mut ops = OpCounts::default();
        d[self.root as usize] = 1.0;
        for i in (0..self.gates.len()).rev() {
            let di = d[i];
            if di == 0.0 {
                continue;
            }
            match self.gates[i] {
                Gate::Prod(a, b) => {
                    for (x, y) in [(a, b), (b, a)] {
                        if relevant[self.vnode[x as usize] as usize] && !matches!(self.gates[x as usize], Gate::Zero) {
                            d[x as usize] += di * val[y as usize];
                            ops.products += 1;
                            ops.sums += 1;
                        }
                    }
                }
                Gate::Sum { start, len } => {
                    for &c in self.children(start, len) {
                        if relevant[self.vnode[c as usize] as usize] {
                            d[c as usize] += di;
                            ops.sums += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        let mut out = vec![0.0; self.lit_gate.len()];
        for (idx, &g) in self.lit_gate.iter().enumerate() {
            if g != NONE {
                out[idx] = d[g as usize];
            }
        }
        (out, ops)
    }

    /// Most probable assignment under max-product. Ties go to the first
    /// maximal child. `assignment[v - 1]` is the value of variable `v`.
    pub fn mpe(&self, weights: &[f64]) -> (f64, Vec<bool>, OpCounts) {
        let (val, ops) = self.forward(weights, Semiring::MaxProduct);
        let mut assignment = vec![false; self.lit_gate.len() / 2];
        let mut stack = vec![self.root];
        while let Some(g) = stack.pop() {
            match self.gates[g as usize] {
                Gate::Zero => {}
                Gate::Lit(idx) => assignment[idx as usize / 2] = idx % 2 == 0,
                Gate::Prod(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
                Gate::Sum { start, len } => {
                    let ch = self.children(start, len);
                    let best = ch
                        .iter()
                        .copied()
                        .fold(None::<u32>, |acc, c| match acc {
                            Some(a) if val[a as usize] >= val[c as usize] => Some(a),
                            _ => Some(c),
                        });
                    if let Some(b) = best {
                        stack.push(b);
                    }
                }
            }
        }
        (val[self.root as usize], assignment, ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::Cnf;
    use crate::compile::{compile_cnf, CompileOptions};
    use crate::vtree::Vtree;
    use proptest::prelude::*;

    fn cnf() -> Cnf {
        let mut c = Cnf::new(5);
        c.add_clause(&[1, 2]).unwrap();
        c.add_clause(&[-2, 3, -4]).unwrap();
        c.add_clause(&[4, 5]).unwrap();
        c
    }

    fn brute_wmc(c: &Cnf, w: &[f64]) -> f64 {
        let n = c.num_vars();
        let mut total = 0.0;
        for bits in 0u32..1 << n {
            let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            if c.is_satisfied_by(&a) {
                total += (0..n as usize)
                    .map(|i| w[2 * i + usize::from(!a[i])])
                    .product::<f64>();
            }
        }
        total
    }

    fn compiled() -> (SddManager, NodeId) {
        let c = compile_cnf(&cnf(), Vtree::balanced(&[1, 2, 3, 4, 5]), &CompileOptions::default()).unwrap();
        (c.manager, c.root)
    }

    #[test]
    fn unit_weights_count_models() {
        let (m, r) = compiled();
        let ac = Circuit::from_sdd(&m, r);
        let w = vec![1.0; 10];
        assert_eq!(ac.value(&w, Semiring::Real), brute_wmc(&cnf(), &w));
    }

    #[test]
    fn constant_circuits() {
        let m = SddManager::new(Vtree::balanced(&[1, 2, 3]));
        let w = vec![0.5; 6];
        assert_eq!(Circuit::from_sdd(&m, TRUE).value(&w, Semiring::Real), 1.0);
        assert_eq!(Circuit::from_sdd(&m, FALSE).value(&w, Semiring::Real), 0.0);
    }

    proptest! {
        #[test]
        fn weighted_count_and_derivatives(w in proptest::collection::vec(0.05f64..2.0, 10)) {
            let (m, r) = compiled();
            let ac = Circuit::from_sdd(&m, r);
            let c = cnf();
            let v = ac.value(&w, Semiring::Real);
            prop_assert!((v - brute_wmc(&c, &w)).abs() < 1e-9 * v.max(1.0));
            let lv = ac.value(&w.iter().map(|x| x.ln()).collect::<Vec<_>>(), Semiring::Log);
            prop_assert!((lv.exp() - v).abs() < 1e-9 * v.max(1.0));
            let (val, _) = ac.forward(&w, Semiring::Real);
            let (d, _) = ac.backward(&val, None);
            // The circuit is multilinear, so a finite difference is exact up to rounding.
            for i in 0..10 {
                let mut w2 = w.clone();
                w2[i] += 1.0;
                let fd = brute_wmc(&c, &w2) - brute_wmc(&c, &w);
                prop_assert!((d[i] - fd).abs() < 1e-9 * fd.abs().max(1.0));
            }
            let (dt, ops_t) = ac.backward(&val, Some(&[3]));
            let (_, ops_all) = ac.backward(&val, None);
            prop_assert!((dt[4] - d[4]).abs() < 1e-12 && (dt[5] - d[5]).abs() < 1e-12);
            prop_assert!(ops_t.total() <= ops_all.total());
        }

        #[test]
        fn mpe_matches_enumeration(w in proptest::collection::vec(0.05f64..2.0, 10)) {
            let (m, r) = compiled();
            let ac = Circuit::from_sdd(&m, r);
            let c = cnf();
            let (best, a, _) = ac.mpe(&w);
            let mut brute: f64 = 0.0;
            for bits in 0u32..32 {
                let x: Vec<bool> = (0..5).map(|i| bits >> i & 1 == 1).collect();
                if c.is_satisfied_by(&x) {
                    brute = brute.max((0..5).map(|i| w[2 * i + usize::from(!x[i])]).product());
                }
            }
            prop_assert!((best - brute).abs() < 1e-12);
            prop_assert!(c.is_satisfied_by(&a));
            let score: f64 = (0..5).map(|i| w[2 * i + usize::from(!a[i])]).product();
            prop_assert!((score - best).abs() < 1e-12);
        }
    }
}
