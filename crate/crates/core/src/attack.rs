//! Column posteriors: belief merging, messages from the MixColumn factor to
//! the S-box outputs (by circuit multiplication or by weighted model
//! counting), key marginals, joint MPE and the exhaustive reference.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use sdd::ac::OpCounts;
use sdd::psdd::{Psdd, PsddId};
use sdd::{CompileOptions, Projection, SddError, SizeStats, Vtree};

use crate::bp::{baseline_key_marginals, sasca_key_marginals};
use crate::cipher::{ByteVar, Variant, OPS_PER_COLUMN_EVALUATION};
use crate::encode::{encode, VarMap};
use crate::error::{Error, Result};
use crate::leakage::{normalize, sparsify, support_size, uniform, Belief, ColumnBeliefs, TraceRecord};
use crate::wmc::{byte_bijection, weights_from_beliefs, IndicatorSdd, RETAINED};

/// Belief arriving at `x_i` from its own chain: `p_x(x)·p_y(S⁻¹(x))`. The
/// key word has a uniform prior and contributes a constant.
pub fn chain_belief(variant: Variant, col: &ColumnBeliefs, i: usize) -> Belief {
    let px = col.get(ByteVar::INPUTS[i]);
    (0..variant.size())
        .map(|x| px[x] * col.y[i][variant.inv_sbox(x as u8) as usize])
        .collect()
}

/// `out(a) = base(a)·other(f(a))`.
fn fold(base: &[f64], other: &[f64], f: impl Fn(u8) -> u8) -> Belief {
    base.iter()
        .enumerate()
        .map(|(a, &p)| p * other[f(a as u8) as usize])
        .collect()
}

fn normalize_log(b: &mut Belief) -> f64 {
    let z: f64 = b.iter().sum();
    if z > 0.0 {
        b.iter_mut().for_each(|x| *x /= z);
    }
    z.ln()
}

/// Beliefs over the retained words ([`RETAINED`] order) for one value of
/// g. `log_scale` is the log of the product of the normalizers removed
/// while folding, so that slices for different g stay comparable.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedBeliefs {
    pub g: u8,
    pub p_g: f64,
    pub log_scale: f64,
    pub beliefs: Vec<Belief>,
}

/// Folds every non-retained word into a retained partner, given `g`:
/// `x̃ = xtime(x)`, `x' = x̃ ⊕ g`, `x34 = x12 ⊕ g` and `x41 = x23 ⊕ g`.
pub fn merge_beliefs(variant: Variant, col: &ColumnBeliefs, g: u8) -> MergedBeliefs {
    use ByteVar::*;
    let t = |a: u8| variant.xtime(a);
    let pair = |lo: ByteVar, tl: ByteVar, pl: ByteVar, hi: ByteVar, th: ByteVar, ph: ByteVar| {
        let b = fold(col.get(lo), col.get(tl), t);
        let b = fold(&b, col.get(pl), |a| t(a) ^ g);
        let b = fold(&b, col.get(hi), |a| a ^ g);
        let b = fold(&b, col.get(th), |a| t(a ^ g));
        fold(&b, col.get(ph), |a| t(a ^ g) ^ g)
    };
    let mut beliefs: Vec<Belief> = Vec::with_capacity(RETAINED.len());
    for i in 0..4 {
        beliefs.push(chain_belief(variant, col, i));
    }
    beliefs.push(pair(X12, T12, P12, X34, T34, P34));
    beliefs.push(pair(X23, T23, P23, X41, T41, P41));
    for m in ByteVar::OUTPUTS {
        beliefs.push(col.get(m).clone());
    }
    let log_scale = beliefs.iter_mut().map(normalize_log).sum();
    MergedBeliefs {
        g,
        p_g: col.get(G)[g as usize],
        log_scale,
        beliefs,
    }
}

/// Non-input factors of the MixColumn product. With `merge`, each `x̃`
/// belief is folded into its xtime input, which needs no knowledge of g.
pub fn mixcolumn_factors(variant: Variant, col: &ColumnBeliefs, merge: bool) -> Vec<(ByteVar, Belief)> {
    use ByteVar::*;
    let mut out = Vec::new();
    for b in ByteVar::ALL {
        if ByteVar::INPUTS.contains(&b) {
            continue;
        }
        if merge && matches!(b, T12 | T23 | T34 | T41) {
            continue;
        }
        let mut belief = col.get(b).clone();
        if merge {
            let partner = match b {
                X12 => Some(T12),
                X23 => Some(T23),
                X34 => Some(T34),
                X41 => Some(T41),
                _ => None,
            };
            if let Some(p) = partner {
                belief = fold(&belief, col.get(p), |a| variant.xtime(a));
            }
        }
        out.push((b, belief));
    }
    out
}

/// Messages `μ_{M→x_i}` with the arithmetic spent computing them.
#[derive(Clone, Debug, PartialEq)]
pub struct Messages {
    pub to_x: [Belief; 4],
    pub ops: OpCounts,
}

fn normalized_or_uniform(mut b: Belief) -> Belief {
    let s: f64 = b.iter().sum();
    if s > 0.0 && s.is_finite() {
        b.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / b.len() as f64;
        b.iter_mut().for_each(|x| *x = u);
    }
    b
}

/// Balanced vtree over the bit-major variable order.
pub fn default_vtree(map: &VarMap) -> Vtree {
    let vars: Vec<u32> = (1..=map.num_vars()).collect();
    Vtree::balanced(&vars)
}

/// SDD of the MixColumn relation, compiled without vtree search.
pub fn compile_relation(variant: Variant, vtree: Vtree) -> Result<(sdd::Compiled, VarMap)> {
    let (cnf, map) = encode(variant);
    let opts = CompileOptions {
        minimize: false,
        ..CompileOptions::default()
    };
    Ok((sdd::compile_cnf(&cnf, vtree, &opts)?, map))
}

/// Uniform-over-traces PSDD of the MixColumn relation, with the projection
/// of its vtree onto every word.
pub struct PsddEngine {
    pub variant: Variant,
    pub map: VarMap,
    psdd: Psdd,
    root: PsddId,
    proj: Vec<Projection>,
    /// Largest number of nodes a product chain may add.
    pub budget: usize,
    pub compile_time: Duration,
    pub sdd_size: SizeStats,
    /// Multiplication order of the most recent chain.
    pub last_schedule: Vec<ByteVar>,
    pub last_peak: usize,
}

pub const DEFAULT_PRODUCT_BUDGET: usize = 20_000_000;

impl PsddEngine {
    /// Compiles SDD(M) on a balanced vtree over the bit-major variable
    /// order and converts it.
    pub fn new(variant: Variant) -> Result<PsddEngine> {
        PsddEngine::with_vtree(variant, default_vtree(&VarMap::new(variant)))
    }

    pub fn with_vtree(variant: Variant, vtree: Vtree) -> Result<PsddEngine> {
        let start = Instant::now();
        let (c, map) = compile_relation(variant, vtree)?;
        let sdd_size = c.manager.size(&[c.root]);
        let (psdd, root) = Psdd::from_sdd(&c.manager, c.root)?;
        let proj = ByteVar::ALL
            .iter()
            .map(|&b| psdd.vtree().project(&map.bits(b)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(PsddEngine {
            variant,
            map,
            psdd,
            root,
            proj,
            budget: DEFAULT_PRODUCT_BUDGET,
            compile_time: start.elapsed(),
            sdd_size,
            last_schedule: Vec::new(),
            last_peak: 0,
        })
    }

    pub fn psdd(&self) -> &Psdd {
        &self.psdd
    }

    pub fn root(&self) -> PsddId {
        self.root
    }

    pub fn projection(&self, b: ByteVar) -> &Projection {
        &self.proj[b.index()]
    }

    /// Multiplies `base` by each factor, sparsest support first. Returns
    /// the product and the log of the accumulated normalizer.
    fn chain(&mut self, base: PsddId, mut factors: Vec<(ByteVar, Belief)>, mark: usize) -> Result<(PsddId, f64)> {
        factors.sort_by_key(|(_, b)| support_size(b));
        self.last_schedule = factors.iter().map(|(b, _)| *b).collect();
        let mut cur = base;
        let mut log_k = 0.0;
        for (b, pmf) in &factors {
            let p = &self.proj[b.index()];
            let (f, fr) = Psdd::compile_pmf(&p.vtree, &self.map.bits(*b), pmf)?;
            let (next, k) = self.psdd.multiply(cur, &f, fr, p)?;
            cur = next;
            log_k += k.ln();
            let grown = self.psdd.len() - mark;
            self.last_peak = self.last_peak.max(grown);
            if grown > self.budget {
                return Err(Error::ProductBudget {
                    size: grown,
                    budget: self.budget,
                });
            }
        }
        Ok((cur, log_k))
    }

    fn with_mark<T>(&mut self, f: impl FnOnce(&mut Self, usize) -> Result<T>) -> Result<T> {
        let mark = self.psdd.len();
        self.last_peak = 0;
        let out = f(self, mark);
        self.psdd.truncate(mark);
        out
    }

    /// `μ_{M→x_i}` for all four inputs from a single product of every
    /// belief: the product's marginal on `x_i` divided by the chain belief
    /// of `x_i`. Values the chain belief rules out get no message mass.
    pub fn messages(&mut self, col: &ColumnBeliefs, merge: bool) -> Result<Messages> {
        let variant = self.variant;
        let ops0 = self.psdd.ops;
        let chains: Vec<Belief> = (0..4).map(|i| chain_belief(variant, col, i)).collect();
        let mut factors = mixcolumn_factors(variant, col, merge);
        for (i, c) in chains.iter().enumerate() {
            factors.push((ByteVar::INPUTS[i], c.clone()));
        }
        let to_x = self.with_mark(|e, mark| {
            let (p, _) = e.chain(e.root, factors, mark)?;
            let mut out: Vec<Belief> = Vec::with_capacity(4);
            for (i, chain) in chains.iter().enumerate() {
                let bits = e.map.bits(ByteVar::INPUTS[i]);
                let m = e.psdd.marginal(p, &bits);
                let mu = m
                    .iter()
                    .zip(chain)
                    .map(|(&m, &c)| if c > 0.0 { m / c } else { 0.0 })
                    .collect();
                out.push(normalized_or_uniform(mu));
            }
            Ok(out)
        })?;
        let mut ops = self.psdd.ops;
        ops.sums -= ops0.sums;
        ops.products -= ops0.products;
        Ok(Messages {
            to_x: to_x.try_into().unwrap(),
            ops,
        })
    }

    /// Jointly most probable inputs `x1..x4` and their posterior
    /// probability, from the product of every belief.
    pub fn mpe(&mut self, col: &ColumnBeliefs, merge: bool) -> Result<([u8; 4], f64, OpCounts)> {
        let variant = self.variant;
        let ops0 = self.psdd.ops;
        let mut factors = mixcolumn_factors(variant, col, merge);
        for i in 0..4 {
            factors.push((ByteVar::INPUTS[i], chain_belief(variant, col, i)));
        }
        let (x, p) = self.with_mark(|e, mark| {
            let (q, _) = e.chain(e.root, factors, mark)?;
            let (assignment, p) = e.psdd.mpe(q);
            let x: [u8; 4] = std::array::from_fn(|i| decode(&e.map, &assignment, ByteVar::INPUTS[i]));
            Ok((x, p))
        })?;
        let mut ops = self.psdd.ops;
        ops.sums -= ops0.sums;
        ops.products -= ops0.products;
        Ok((x, p, ops))
    }
}

fn decode(map: &VarMap, assignment: &[bool], b: ByteVar) -> u8 {
    (0..map.variant().width()).fold(0u8, |acc, bit| acc | (assignment[map.var(b, bit) as usize - 1] as u8) << bit)
}

/// Messages by one forward and one backward WMC pass per value of g, on
/// the circuit compiled for `ic.g` with permuted weights. Each slice is
/// weighted by `p(g)` and its merge normalizer.
pub fn compute_messages_wmc(ic: &IndicatorSdd, col: &ColumnBeliefs) -> Messages {
    let variant = ic.variant;
    let q = variant.size();
    let targets: Vec<u32> = ByteVar::INPUTS
        .iter()
        .flat_map(|&b| ic.indicators_of(b).unwrap())
        .collect();
    let mut ops = OpCounts::default();
    let mut slices: Vec<(f64, Vec<Belief>)> = Vec::new();
    for g2 in 0..q as u8 {
        let mb = merge_beliefs(variant, col, g2);
        if mb.p_g <= 0.0 || mb.log_scale == f64::NEG_INFINITY {
            continue;
        }
        let w = weights_from_beliefs(ic, &mb, None);
        let t = ic.wmc_with_derivatives(&w, Some(&targets));
        ops += t.forward_ops;
        ops += t.backward_ops;
        let mut contrib = vec![vec![0.0; q]; 4];
        for (i, c) in contrib.iter_mut().enumerate() {
            for j in 0..q {
                let x = byte_bijection(variant, ic.g, g2, ByteVar::INPUTS[i], j as u8).unwrap();
                c[x as usize] = t.derivative(sdd::Literal::new(ic.indicator(i, j as u8), true));
            }
        }
        slices.push((mb.p_g.ln() + mb.log_scale, contrib));
    }
    let top = slices.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut to_x = vec![vec![0.0; q]; 4];
    for (lw, contrib) in &slices {
        let s = (lw - top).exp();
        for i in 0..4 {
            for x in 0..q {
                to_x[i][x] += s * contrib[i][x];
            }
        }
    }
    Messages {
        to_x: to_x.into_iter().map(normalized_or_uniform).collect::<Vec<_>>().try_into().unwrap(),
        ops,
    }
}

/// Joint MPE by max-product evaluation per value of g. Returns the inputs
/// `x1..x4` and their posterior probability.
pub fn joint_mpe_wmc(ic: &IndicatorSdd, col: &ColumnBeliefs) -> ([u8; 4], f64, OpCounts) {
    let variant = ic.variant;
    let mut ops = OpCounts::default();
    let mut best: Option<(f64, [u8; 4])> = None;
    let mut slices = Vec::new();
    for g2 in 0..variant.size() as u8 {
        let mb = merge_beliefs(variant, col, g2);
        if mb.p_g <= 0.0 || mb.log_scale == f64::NEG_INFINITY {
            continue;
        }
        let w = weights_from_beliefs(ic, &mb, None);
        let (v, assignment, o) = ic.max_product(&w);
        ops += o;
        let total = ic.wmc(&w);
        let lw = mb.p_g.ln() + mb.log_scale;
        slices.push((lw, total));
        if v <= 0.0 {
            continue;
        }
        let score = v.ln() + lw;
        if best.is_none_or(|(s, _)| score > s) {
            let x = std::array::from_fn(|i| {
                let b = ByteVar::INPUTS[i];
                byte_bijection(variant, ic.g, g2, b, ic.decode(&assignment, b)).unwrap()
            });
            best = Some((score, x));
        }
    }
    let Some((score, x)) = best else {
        return ([0; 4], 0.0, ops);
    };
    let z: f64 = slices.iter().map(|(lw, t)| (lw - score).exp() * t).sum();
    (x, 1.0 / z, ops)
}

/// `p(k_i | ℓ) ∝ p_y(k ⊕ p)·p_x(S(k ⊕ p))·μ(S(k ⊕ p))`.
pub fn key_marginals(variant: Variant, messages: &[Belief; 4], col: &ColumnBeliefs, plaintext: [u8; 4]) -> [Belief; 4] {
    std::array::from_fn(|i| {
        let px = col.get(ByteVar::INPUTS[i]);
        let b = (0..variant.size())
            .map(|k| {
                let y = k as u8 ^ plaintext[i];
                let x = variant.sbox(y) as usize;
                col.y[i][y as usize] * px[x] * messages[i][x]
            })
            .collect();
        normalized_or_uniform(b)
    })
}

/// Tables for enumerating the column joint, with the input chains and the
/// xtime partners pre-folded.
struct Tables {
    f: [Belief; 4],
    a: [Belief; 4],
    g: Belief,
    p: [Belief; 4],
    m: [Belief; 4],
}

impl Tables {
    fn new(variant: Variant, col: &ColumnBeliefs, exclude: Option<usize>) -> Tables {
        use ByteVar::*;
        let ones = vec![1.0; variant.size()];
        let f = std::array::from_fn(|i| {
            if exclude == Some(i) {
                ones.clone()
            } else {
                chain_belief(variant, col, i)
            }
        });
        let pairs = [(X12, T12), (X23, T23), (X34, T34), (X41, T41)];
        Tables {
            f,
            a: pairs.map(|(x, t)| fold(col.get(x), col.get(t), |v| variant.xtime(v))),
            g: col.get(G).clone(),
            p: [P12, P23, P34, P41].map(|b| col.get(b).clone()),
            m: ByteVar::OUTPUTS.map(|b| col.get(b).clone()),
        }
    }
}

/// Calls `visit(x, w)` for every input quadruple with `w` the product of
/// all beliefs at the induced trace.
fn enumerate(variant: Variant, t: &Tables, mut visit: impl FnMut([u8; 4], f64)) {
    let q = variant.size();
    let xt: Vec<u8> = (0..q).map(|v| variant.xtime(v as u8)).collect();
    for x1 in 0..q {
        for x2 in 0..q {
            let x12 = x1 ^ x2;
            let w12 = t.f[0][x1] * t.f[1][x2] * t.a[0][x12];
            if w12 == 0.0 {
                continue;
            }
            let t12 = xt[x12] as usize;
            for x3 in 0..q {
                let x23 = x2 ^ x3;
                let w123 = w12 * t.f[2][x3] * t.a[1][x23];
                if w123 == 0.0 {
                    continue;
                }
                let t23 = xt[x23] as usize;
                for x4 in 0..q {
                    let x34 = x3 ^ x4;
                    let x41 = x4 ^ x1;
                    let g = x12 ^ x34;
                    let t34 = xt[x34] as usize;
                    let t41 = xt[x41] as usize;
                    let w = w123
                        * t.f[3][x4]
                        * t.a[2][x34]
                        * t.a[3][x41]
                        * t.g[g]
                        * t.p[0][t12 ^ g]
                        * t.p[1][t23 ^ g]
                        * t.p[2][t34 ^ g]
                        * t.p[3][t41 ^ g]
                        * t.m[0][x1 ^ t12 ^ g]
                        * t.m[1][x2 ^ t23 ^ g]
                        * t.m[2][x3 ^ t34 ^ g]
                        * t.m[3][x4 ^ t41 ^ g];
                    if w != 0.0 {
                        visit([x1 as u8, x2 as u8, x3 as u8, x4 as u8], w);
                    }
                }
            }
        }
    }
}

/// Exact column posterior by enumerating every subkey.
#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustivePosterior {
    pub marginals: [Belief; 4],
    pub argmax: [u8; 4],
    pub max_posterior: f64,
    pub evaluations: u64,
}

pub fn exhaustive_oracle(variant: Variant, col: &ColumnBeliefs, plaintext: [u8; 4]) -> ExhaustivePosterior {
    let q = variant.size();
    let t = Tables::new(variant, col, None);
    let mut mx = vec![vec![0.0; q]; 4];
    let mut z = 0.0;
    let mut best = (f64::NEG_INFINITY, [0u8; 4]);
    enumerate(variant, &t, |x, w| {
        for i in 0..4 {
            mx[i][x[i] as usize] += w;
        }
        z += w;
        if w > best.0 {
            best = (w, x);
        }
    });
    let to_key = |i: usize, x: u8| variant.inv_sbox(x) ^ plaintext[i];
    let marginals = std::array::from_fn(|i| {
        let mut b: Belief = (0..q)
            .map(|k| mx[i][variant.sbox(k as u8 ^ plaintext[i]) as usize])
            .collect();
        if z > 0.0 {
            normalize(&mut b);
            b
        } else {
            uniform(variant)
        }
    });
    ExhaustivePosterior {
        marginals,
        argmax: std::array::from_fn(|i| to_key(i, best.1[i])),
        max_posterior: if z > 0.0 { best.0 / z } else { 0.0 },
        evaluations: (q as u64).pow(4),
    }
}

/// Posterior over all subkeys, indexed by `k1 + q·k2 + q²·k3 + q³·k4`.
/// Only sensible for the mini variant.
pub fn exhaustive_joint(variant: Variant, col: &ColumnBeliefs, plaintext: [u8; 4]) -> Vec<f64> {
    let q = variant.size();
    let t = Tables::new(variant, col, None);
    let mut out = vec![0.0; q.pow(4)];
    enumerate(variant, &t, |x, w| {
        let k: usize = (0..4)
            .map(|i| ((variant.inv_sbox(x[i]) ^ plaintext[i]) as usize) * q.pow(i as u32))
            .sum();
        out[k] = w;
    });
    normalize(&mut out);
    out
}

/// Messages `μ_{M→x_i}` by direct summation over all inputs.
pub fn exhaustive_messages(variant: Variant, col: &ColumnBeliefs) -> [Belief; 4] {
    std::array::from_fn(|i| {
        let t = Tables::new(variant, col, Some(i));
        let mut m = vec![0.0; variant.size()];
        enumerate(variant, &t, |x, w| m[x[i] as usize] += w);
        normalized_or_uniform(m)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMethod {
    Baseline,
    Sasca { iterations: usize },
    ExsascaMar,
    ExsascaMpe,
    Exhaustive,
}

impl AttackMethod {
    pub fn name(&self) -> String {
        match self {
            AttackMethod::Baseline => "baseline".into(),
            AttackMethod::Sasca { iterations } => format!("sasca-{iterations}"),
            AttackMethod::ExsascaMar => "exsasca-mar".into(),
            AttackMethod::ExsascaMpe => "exsasca-mpe".into(),
            AttackMethod::Exhaustive => "exhaustive".into(),
        }
    }

    /// Parses `baseline`, `sasca` (with `iterations`), `sasca-<n>`,
    /// `exsasca-mar`, `exsasca-mpe` or `exhaustive`.
    pub fn parse(s: &str, iterations: usize) -> Result<AttackMethod> {
        Ok(match s {
            "baseline" => AttackMethod::Baseline,
            "sasca" => AttackMethod::Sasca { iterations },
            "exsasca-mar" => AttackMethod::ExsascaMar,
            "exsasca-mpe" => AttackMethod::ExsascaMpe,
            "exhaustive" => AttackMethod::Exhaustive,
            _ => match s.strip_prefix("sasca-").and_then(|n| n.parse().ok()) {
                Some(iterations) => AttackMethod::Sasca { iterations },
                None => return Err(Error::InvalidParam(format!("unknown method `{s}`"))),
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Psdd,
    Wmc,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub alpha: f64,
    pub engine: Engine,
    pub merge: bool,
    pub damping: f64,
}

impl AttackConfig {
    pub fn new(method: AttackMethod) -> AttackConfig {
        AttackConfig {
            method,
            epsilon: 0.0,
            alpha: 0.0,
            engine: Engine::Psdd,
            merge: true,
            damping: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParam(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParam(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if let AttackMethod::Sasca { iterations: 0 } = self.method {
            return Err(Error::InvalidParam("sasca needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnPosterior {
    pub marginals: Option<[Belief; 4]>,
    pub messages: Option<[Belief; 4]>,
    /// Joint maximizer and its posterior probability.
    pub mpe: Option<([u8; 4], f64)>,
    pub predicted: [u8; 4],
    pub ops: OpCounts,
    /// Forward column evaluations (exhaustive enumeration only).
    pub evaluations: u64,
    /// Set when a sparsified product vanished and the column was redone
    /// without sparsification.
    pub fell_back: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyPosteriorResult {
    pub columns: Vec<ColumnPosterior>,
    pub predicted_key: [u8; 16],
    pub elapsed: Duration,
}

pub fn argmax(b: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &p) in b.iter().enumerate() {
        if p > b[best] {
            best = i;
        }
    }
    best as u8
}

/// 1 plus the number of values strictly more probable than `v`.
pub fn rank(b: &[f64], v: u8) -> usize {
    1 + b.iter().filter(|&&p| p > b[v as usize]).count()
}

fn keys_of(variant: Variant, x: [u8; 4], plaintext: [u8; 4]) -> [u8; 4] {
    std::array::from_fn(|i| variant.inv_sbox(x[i]) ^ plaintext[i])
}

/// Runs attacks, compiling each engine on first use.
pub struct Attacker {
    pub variant: Variant,
    psdd: Option<PsddEngine>,
    wmc: Option<IndicatorSdd>,
}

impl Attacker {
    pub fn new(variant: Variant) -> Attacker {
        Attacker {
            variant,
            psdd: None,
            wmc: None,
        }
    }

    pub fn psdd_engine(&mut self) -> Result<&mut PsddEngine> {
        if self.psdd.is_none() {
            self.psdd = Some(PsddEngine::new(self.variant)?);
        }
        Ok(self.psdd.as_mut().unwrap())
    }

    pub fn wmc_engine(&mut self) -> Result<&IndicatorSdd> {
        if self.wmc.is_none() {
            self.wmc = Some(IndicatorSdd::build(self.variant, 0)?);
        }
        Ok(self.wmc.as_ref().unwrap())
    }

    pub fn attack_column(&mut self, col: &ColumnBeliefs, plaintext: [u8; 4], cfg: &AttackConfig) -> Result<ColumnPosterior> {
        let variant = self.variant;
        let mar = |m: [Belief; 4]| -> ColumnPosterior {
            let predicted = std::array::from_fn(|i| argmax(&m[i]));
            ColumnPosterior {
                marginals: Some(m),
                messages: None,
                mpe: None,
                predicted,
                ops: OpCounts::default(),
                evaluations: 0,
                fell_back: false,
            }
        };
        Ok(match cfg.method {
            AttackMethod::Baseline => mar(baseline_key_marginals(variant, plaintext, col)?),
            AttackMethod::Sasca { iterations } => {
                mar(sasca_key_marginals(variant, plaintext, col, iterations, cfg.damping)?)
            }
            AttackMethod::Exhaustive => {
                let e = exhaustive_oracle(variant, col, plaintext);
                ColumnPosterior {
                    marginals: Some(e.marginals),
                    messages: None,
                    mpe: Some((e.argmax, e.max_posterior)),
                    predicted: e.argmax,
                    ops: OpCounts::default(),
                    evaluations: e.evaluations,
                    fell_back: false,
                }
            }
            AttackMethod::ExsascaMar | AttackMethod::ExsascaMpe => {
                let sparse = col.map(|b| sparsify(b, cfg.epsilon));
                match self.exsasca(&sparse, plaintext, cfg) {
                    Err(Error::Sdd(SddError::Unsatisfiable)) if cfg.epsilon > 0.0 => {
                        let mut p = self.exsasca(col, plaintext, cfg)?;
                        p.fell_back = true;
                        p
                    }
                    other => other?,
                }
            }
        })
    }

    fn exsasca(&mut self, col: &ColumnBeliefs, plaintext: [u8; 4], cfg: &AttackConfig) -> Result<ColumnPosterior> {
        let variant = self.variant;
        if cfg.method == AttackMethod::ExsascaMpe {
            let (x, p, ops) = match cfg.engine {
                Engine::Psdd => self.psdd_engine()?.mpe(col, cfg.merge)?,
                Engine::Wmc => joint_mpe_wmc(self.wmc_engine()?, col),
            };
            let k = keys_of(variant, x, plaintext);
            return Ok(ColumnPosterior {
                marginals: None,
                messages: None,
                mpe: Some((k, p)),
                predicted: k,
                ops,
                evaluations: 0,
                fell_back: false,
            });
        }
        let m = match cfg.engine {
            Engine::Psdd => self.psdd_engine()?.messages(col, cfg.merge)?,
            Engine::Wmc => compute_messages_wmc(self.wmc_engine()?, col),
        };
        let marginals = key_marginals(variant, &m.to_x, col, plaintext);
        Ok(ColumnPosterior {
            predicted: std::array::from_fn(|i| argmax(&marginals[i])),
            marginals: Some(marginals),
            messages: Some(m.to_x),
            mpe: None,
            ops: m.ops,
            evaluations: 0,
            fell_back: false,
        })
    }

    pub fn run_attack(&mut self, record: &TraceRecord, cfg: &AttackConfig) -> Result<KeyPosteriorResult> {
        cfg.validate()?;
        if record.variant != self.variant {
            return Err(Error::InvalidParam(format!(
                "record is {} but the attacker is {}",
                record.variant.name(),
                self.variant.name()
            )));
        }
        let start = Instant::now();
        let record = if cfg.alpha > 0.0 { record.corrupted(cfg.alpha)? } else { record.clone() };
        let mut columns = Vec::with_capacity(4);
        let mut predicted_key = [0u8; 16];
        for c in 0..4 {
            let p = self.attack_column(&record.columns[c], record.plaintext_column(c), cfg)?;
            predicted_key[4 * c..4 * c + 4].copy_from_slice(&p.predicted);
            columns.push(p);
        }
        Ok(KeyPosteriorResult {
            columns,
            predicted_key,
            elapsed: start.elapsed(),
        })
    }
}

/// Word operations of an exhaustive column attack.
pub fn exhaustive_ops(variant: Variant) -> u64 {
    (variant.size() as u64).pow(4) * OPS_PER_COLUMN_EVALUATION
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leakage::{build_dataset, LeakageParams};

    fn records(n: usize, sigma: f64, seed: u64) -> Vec<TraceRecord> {
        build_dataset(Variant::Mini, n, LeakageParams { sigma, seed }).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1e-300) || (x - y).abs() < 1e-15)
    }

    #[test]
    fn merged_product_matches_full_product() {
        let v = Variant::Mini;
        let r = &records(1, 1.0, 3)[0];
        let col = &r.columns[0];
        for x in 0..(1u32 << 16) {
            let xs = [x as u8 & 15, (x >> 4) as u8 & 15, (x >> 8) as u8 & 15, (x >> 12) as u8 & 15];
            let t = crate::cipher::ColumnTrace::new(v, xs);
            let g = t.get(ByteVar::G);
            let full: f64 = ByteVar::ALL.iter().map(|&b| col.get(b)[t.get(b) as usize]).product::<f64>()
                * (0..4).map(|i| col.y[i][v.inv_sbox(xs[i]) as usize]).product::<f64>();
            let mb = merge_beliefs(v, col, g);
            let merged: f64 = RETAINED
                .iter()
                .enumerate()
                .map(|(r, &b)| mb.beliefs[r][t.get(b) as usize])
                .product::<f64>()
                * mb.p_g
                * mb.log_scale.exp();
            assert!((full - merged).abs() <= 1e-12 * full.max(1e-300), "{full} vs {merged}");
        }
    }

    #[test]
    fn messages_reproduce_oracle_marginals() {
        let v = Variant::Mini;
        for r in records(5, 1.0, 1) {
            for c in 0..4 {
                let col = &r.columns[c];
                let p = r.plaintext_column(c);
                let m = exhaustive_messages(v, col);
                let k = key_marginals(v, &m, col, p);
                let o = exhaustive_oracle(v, col, p);
                for i in 0..4 {
                    assert!(close(&k[i], &o.marginals[i], 1e-9));
                }
            }
        }
    }

    #[test]
    fn psdd_and_wmc_messages_are_exact() {
        let v = Variant::Mini;
        let mut psdd = PsddEngine::new(v).unwrap();
        let ic = IndicatorSdd::build(v, 0).unwrap();
        for r in records(3, 1.0, 7) {
            let col = &r.columns[1];
            let exact = exhaustive_messages(v, col);
            for merge in [true, false] {
                let m = psdd.messages(col, merge).unwrap();
                for i in 0..4 {
                    assert!(close(&m.to_x[i], &exact[i], 1e-9), "psdd merge={merge} x{i}");
                }
            }
            let m = compute_messages_wmc(&ic, col);
            for i in 0..4 {
                assert!(close(&m.to_x[i], &exact[i], 1e-9), "wmc x{i}");
            }
        }
    }

    #[test]
    fn mpe_engines_agree_with_enumeration() {
        let v = Variant::Mini;
        let mut psdd = PsddEngine::new(v).unwrap();
        let ic = IndicatorSdd::build(v, 5).unwrap();
        for r in records(3, 1.0, 11) {
            let col = &r.columns[2];
            let p = r.plaintext_column(2);
            let o = exhaustive_oracle(v, col, p);
            let (x, prob, _) = psdd.mpe(col, true).unwrap();
            assert_eq!(keys_of(v, x, p), o.argmax);
            assert!((prob - o.max_posterior).abs() < 1e-9);
            let (x, prob, _) = joint_mpe_wmc(&ic, col);
            assert_eq!(keys_of(v, x, p), o.argmax);
            assert!((prob - o.max_posterior).abs() < 1e-9);
        }
    }

    #[test]
    fn joint_table_marginalizes_to_oracle() {
        let v = Variant::Mini;
        let r = &records(1, 1.5, 2)[0];
        let p = r.plaintext_column(0);
        let joint = exhaustive_joint(v, &r.columns[0], p);
        let o = exhaustive_oracle(v, &r.columns[0], p);
        let mut k1 = vec![0.0; 16];
        for (k, w) in joint.iter().enumerate() {
            k1[k % 16] += w;
        }
        assert!(close(&k1, &o.marginals[0], 1e-9));
    }

    #[test]
    fn method_names_parse_back() {
        for m in [
            AttackMethod::Baseline,
            AttackMethod::Sasca { iterations: 3 },
            AttackMethod::ExsascaMar,
            AttackMethod::ExsascaMpe,
            AttackMethod::Exhaustive,
        ] {
            assert_eq!(AttackMethod::parse(&m.name(), 0).unwrap(), m);
        }
        assert!(AttackMethod::parse("bogus", 1).is_err());
    }

    #[test]
    fn rank_counts_strictly_better_values() {
        assert_eq!(rank(&[0.1, 0.5, 0.5, 0.2], 3), 3);
        assert_eq!(rank(&[0.1, 0.5, 0.5, 0.2], 1), 1);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = AttackConfig::new(AttackMethod::ExsascaMar);
        cfg.epsilon = 1.5;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.0;
        cfg.alpha = -0.1;
        assert!(cfg.validate().is_err());
    }
}
