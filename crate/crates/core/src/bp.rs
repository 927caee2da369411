//! Word-valued factor graphs and belief propagation over them.

use crate::cipher::{ByteVar, Relation, Variant};
use crate::error::{Error, Result};
use crate::leakage::{Belief, ColumnBeliefs};

#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// `c = a ⊕ b`.
    Xor(usize, usize, usize),
    /// `b = S(a)`.
    Sbox(usize, usize),
    /// `b = xtime(a)`.
    Xtime(usize, usize),
    Local(usize, Belief),
}

impl Factor {
    fn vars(&self) -> Vec<usize> {
        match *self {
            Factor::Xor(a, b, c) => vec![a, b, c],
            Factor::Sbox(a, b) | Factor::Xtime(a, b) => vec![a, b],
            Factor::Local(v, _) => vec![v],
        }
    }
}

#[derive(Clone, Debug)]
pub struct FactorGraph {
    pub variant: Variant,
    names: Vec<String>,
    observed: Vec<Option<u8>>,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(variant: Variant) -> FactorGraph {
        FactorGraph {
            variant,
            names: Vec::new(),
            observed: Vec::new(),
            factors: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.observed.push(None);
        self.names.len() - 1
    }

    pub fn observe(&mut self, v: usize, value: u8) {
        self.observed[v] = Some(value);
    }

    pub fn add_factor(&mut self, f: Factor) {
        debug_assert!(f.vars().iter().all(|&v| v < self.names.len()));
        self.factors.push(f);
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_observed(&self, v: usize) -> bool {
        self.observed[v].is_some()
    }

    pub fn has_local(&self, v: usize) -> bool {
        self.factors.iter().any(|f| matches!(f, Factor::Local(u, _) if *u == v))
    }

    /// Product of local factors and the observation indicator.
    fn prior(&self, v: usize) -> Belief {
        let q = self.variant.size();
        let mut p = match self.observed[v] {
            Some(x) => {
                let mut b = vec![0.0; q];
                b[x as usize] = 1.0;
                b
            }
            None => vec![1.0; q],
        };
        for f in &self.factors {
            if let Factor::Local(u, b) = f {
                if *u == v {
                    p.iter_mut().zip(b).for_each(|(x, y)| *x *= y);
                }
            }
        }
        p
    }

    /// Edges `(factor, position, var)` of the non-unary factors.
    fn edges(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (fi, f) in self.factors.iter().enumerate() {
            if matches!(f, Factor::Local(..)) {
                continue;
            }
            for (pos, v) in f.vars().into_iter().enumerate() {
                out.push((fi, pos, v));
            }
        }
        out
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.names.len();
        let mut parent: Vec<usize> = (0..n + self.factors.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (fi, _, v) in self.edges() {
            let (a, b) = (find(&mut parent, n + fi), find(&mut parent, v));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }
}

fn normalized(mut b: Belief) -> Belief {
    let s: f64 = b.iter().sum();
    if s > 0.0 {
        b.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / b.len() as f64;
        b.iter_mut().for_each(|x| *x = u);
    }
    b
}

fn wht(a: &mut [f64]) {
    let mut h = 1;
    while h < a.len() {
        for i in (0..a.len()).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
}

/// `out(c) = Σ_{a⊕b=c} in1(a)·in2(b)`, via the Walsh–Hadamard transform.
pub fn xor_factor_message(in1: &[f64], in2: &[f64]) -> Belief {
    let mut a = in1.to_vec();
    let mut b = in2.to_vec();
    wht(&mut a);
    wht(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    wht(&mut a);
    let n = a.len() as f64;
    a.iter().map(|x| (x / n).max(0.0)).collect()
}

/// Direct O(|V|²) xor convolution.
pub fn xor_convolve_direct(in1: &[f64], in2: &[f64]) -> Belief {
    let mut out = vec![0.0; in1.len()];
    for (a, &x) in in1.iter().enumerate() {
        for (b, &y) in in2.iter().enumerate() {
            out[a ^ b] += x * y;
        }
    }
    out
}

/// Message from factor `f` to its variable at `pos`, given the incoming
/// messages of all its variables (the entry at `pos` is ignored).
fn factor_message(variant: Variant, f: &Factor, pos: usize, inc: &[&[f64]]) -> Belief {
    let q = variant.size();
    let out = match f {
        Factor::Xor(..) => {
            let others: Vec<&[f64]> = (0..3).filter(|&i| i != pos).map(|i| inc[i]).collect();
            xor_factor_message(others[0], others[1])
        }
        Factor::Sbox(..) | Factor::Xtime(..) => {
            let map = |x: u8| match f {
                Factor::Sbox(..) => variant.sbox(x),
                _ => variant.xtime(x),
            };
            let mut out = vec![0.0; q];
            for x in 0..q {
                let y = map(x as u8) as usize;
                if pos == 1 {
                    out[y] = inc[0][x];
                } else {
                    out[x] = inc[1][y];
                }
            }
            out
        }
        Factor::Local(..) => unreachable!("unary factors act as priors"),
    };
    normalized(out)
}

/// Flooding loopy BP. Each iteration recomputes every variable-to-factor
/// message, then every factor-to-variable message, mixing the new value
/// with weight `1 − damping` into the old one. Returns normalized
/// marginals for every variable.
pub fn loopy_bp(g: &FactorGraph, iterations: usize, damping: f64) -> Vec<Belief> {
    let q = g.variant.size();
    let edges = g.edges();
    let priors: Vec<Belief> = (0..g.num_vars()).map(|v| g.prior(v)).collect();
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); g.num_vars()];
    let mut by_factor: Vec<Vec<usize>> = vec![Vec::new(); g.factors.len()];
    for (e, &(f, _, v)) in edges.iter().enumerate() {
        by_var[v].push(e);
        by_factor[f].push(e);
    }
    let u = vec![1.0 / q as f64; q];
    let mut fv = vec![u.clone(); edges.len()];
    let mut vf = vec![u; edges.len()];
    for _ in 0..iterations {
        for (e, &(_, _, v)) in edges.iter().enumerate() {
            let mut m = priors[v].clone();
            for &e2 in &by_var[v] {
                if e2 != e {
                    m.iter_mut().zip(&fv[e2]).for_each(|(x, y)| *x *= y);
                }
            }
            vf[e] = normalized(m);
        }
        for (f, es) in by_factor.iter().enumerate() {
            let inc: Vec<&[f64]> = es.iter().map(|&e| vf[e].as_slice()).collect();
            for &e in es {
                let new = factor_message(g.variant, &g.factors[f], edges[e].1, &inc);
                fv[e] = if damping > 0.0 {
                    normalized(new.iter().zip(&fv[e]).map(|(n, o)| (1.0 - damping) * n + damping * o).collect())
                } else {
                    new
                };
            }
        }
    }
    (0..g.num_vars())
        .map(|v| {
            let mut m = priors[v].clone();
            for &e in &by_var[v] {
                m.iter_mut().zip(&fv[e]).for_each(|(x, y)| *x *= y);
            }
            normalized(m)
        })
        .collect()
}

/// Exact marginals on an acyclic graph by recursive message passing.
pub fn tree_bp(g: &FactorGraph) -> Result<Vec<Belief>> {
    if !g.is_acyclic() {
        return Err(Error::Cyclic);
    }
    let edges = g.edges();
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); g.num_vars()];
    let mut by_factor: Vec<Vec<usize>> = vec![Vec::new(); g.factors.len()];
    for (e, &(f, _, v)) in edges.iter().enumerate() {
        by_var[v].push(e);
        by_factor[f].push(e);
    }
    struct Ctx<'a> {
        g: &'a FactorGraph,
        edges: Vec<(usize, usize, usize)>,
        by_var: Vec<Vec<usize>>,
        by_factor: Vec<Vec<usize>>,
        priors: Vec<Belief>,
        fv: Vec<Option<Belief>>,
        vf: Vec<Option<Belief>>,
    }
    impl Ctx<'_> {
        fn var_to_factor(&mut self, e: usize) -> Belief {
            if let Some(m) = &self.vf[e] {
                return m.clone();
            }
            let v = self.edges[e].2;
            let mut m = self.priors[v].clone();
            for e2 in self.by_var[v].clone() {
                if e2 != e {
                    let inc = self.factor_to_var(e2);
                    m.iter_mut().zip(&inc).for_each(|(x, y)| *x *= y);
                }
            }
            let m = normalized(m);
            self.vf[e] = Some(m.clone());
            m
        }

        fn factor_to_var(&mut self, e: usize) -> Belief {
            if let Some(m) = &self.fv[e] {
                return m.clone();
            }
            let (f, pos, _) = self.edges[e];
            let q = self.g.variant.size();
            let inc: Vec<Belief> = self.by_factor[f]
                .clone()
                .into_iter()
                .map(|e2| if e2 == e { vec![1.0; q] } else { self.var_to_factor(e2) })
                .collect();
            let refs: Vec<&[f64]> = inc.iter().map(|b| b.as_slice()).collect();
            let m = factor_message(self.g.variant, &self.g.factors[f], pos, &refs);
            self.fv[e] = Some(m.clone());
            m
        }
    }
    let n = edges.len();
    let mut ctx = Ctx {
        g,
        priors: (0..g.num_vars()).map(|v| g.prior(v)).collect(),
        edges,
        by_var,
        by_factor,
        fv: vec![None; n],
        vf: vec![None; n],
    };
    let mut out = Vec::with_capacity(g.num_vars());
    for v in 0..g.num_vars() {
        let mut m = ctx.priors[v].clone();
        for e in ctx.by_var[v].clone() {
            let inc = ctx.factor_to_var(e);
            m.iter_mut().zip(&inc).for_each(|(x, y)| *x *= y);
        }
        out.push(normalized(m));
    }
    Ok(out)
}

/// Variable ids of a column graph.
pub mod column_vars {
    pub fn k(i: usize) -> usize {
        i
    }
    pub fn p(i: usize) -> usize {
        4 + i
    }
    pub fn y(i: usize) -> usize {
        8 + i
    }
    pub fn word(b: crate::cipher::ByteVar) -> usize {
        12 + b.index()
    }
}

fn check(b: &Belief, variant: Variant, name: &str) -> Result<()> {
    if b.len() != variant.size() {
        return Err(Error::MissingBelief(name.to_string()));
    }
    Ok(())
}

/// Factor graph of one column: key, plaintext (observed), key-addition
/// output and the 21 MixColumn words, with a local belief on every leaking
/// variable.
pub fn build_column_graph(variant: Variant, plaintext: [u8; 4], beliefs: &ColumnBeliefs) -> Result<FactorGraph> {
    use column_vars::*;
    let mut g = FactorGraph::new(variant);
    for i in 0..4 {
        g.add_var(format!("k{}", i + 1));
    }
    for i in 0..4 {
        let p = g.add_var(format!("p{}", i + 1));
        g.observe(p, plaintext[i]);
    }
    for i in 0..4 {
        g.add_var(format!("y{}", i + 1));
    }
    for b in ByteVar::ALL {
        g.add_var(b.name());
    }
    if beliefs.v.len() != 21 {
        return Err(Error::MissingBelief("column words".into()));
    }
    for i in 0..4 {
        g.add_factor(Factor::Xor(k(i), p(i), y(i)));
        g.add_factor(Factor::Sbox(y(i), word(ByteVar::INPUTS[i])));
        check(&beliefs.y[i], variant, &format!("y{}", i + 1))?;
        g.add_factor(Factor::Local(y(i), beliefs.y[i].clone()));
    }
    for r in Relation::ALL {
        g.add_factor(match r {
            Relation::Xor(a, b, c) => Factor::Xor(word(a), word(b), word(c)),
            Relation::Xtime(a, t) => Factor::Xtime(word(a), word(t)),
        });
    }
    for b in ByteVar::ALL {
        check(beliefs.get(b), variant, b.name())?;
        g.add_factor(Factor::Local(word(b), beliefs.get(b).clone()));
    }
    Ok(g)
}

/// The acyclic part of a column graph: the four `k → y → x` chains with
/// their local beliefs, dropping MixColumn entirely.
pub fn build_chain_graph(variant: Variant, plaintext: [u8; 4], beliefs: &ColumnBeliefs) -> Result<FactorGraph> {
    let mut g = FactorGraph::new(variant);
    for i in 0..4 {
        let k = g.add_var(format!("k{}", i + 1));
        let p = g.add_var(format!("p{}", i + 1));
        let y = g.add_var(format!("y{}", i + 1));
        let x = g.add_var(format!("x{}", i + 1));
        g.observe(p, plaintext[i]);
        g.add_factor(Factor::Xor(k, p, y));
        g.add_factor(Factor::Sbox(y, x));
        check(&beliefs.y[i], variant, "y")?;
        g.add_factor(Factor::Local(y, beliefs.y[i].clone()));
        let bx = beliefs.get(ByteVar::INPUTS[i]);
        check(bx, variant, "x")?;
        g.add_factor(Factor::Local(x, bx.clone()));
    }
    Ok(g)
}

/// Key marginals of a column by loopy BP on the full column graph.
pub fn sasca_key_marginals(
    variant: Variant,
    plaintext: [u8; 4],
    beliefs: &ColumnBeliefs,
    iterations: usize,
    damping: f64,
) -> Result<[Belief; 4]> {
    let g = build_column_graph(variant, plaintext, beliefs)?;
    let m = loopy_bp(&g, iterations, damping);
    Ok(std::array::from_fn(|i| m[column_vars::k(i)].clone()))
}

/// Key marginals from the chain graph alone.
pub fn baseline_key_marginals(variant: Variant, plaintext: [u8; 4], beliefs: &ColumnBeliefs) -> Result<[Belief; 4]> {
    let g = build_chain_graph(variant, plaintext, beliefs)?;
    let m = tree_bp(&g)?;
    Ok(std::array::from_fn(|i| m[4 * i].clone()))
}
