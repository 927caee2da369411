//! Simulated template beliefs and the belief transformations applied to them.
//!
//! Leakage is a scalar `HW(v) + N(0, σ²)` per variable; the belief is the
//! posterior under univariate Gaussian templates and a uniform prior.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cipher::{first_round_intermediates, ByteVar, Variant};
use crate::error::{Error, Result};

/// Probability mass over the values of one word.
pub type Belief = Vec<f64>;

pub fn uniform(variant: Variant) -> Belief {
    vec![1.0 / variant.size() as f64; variant.size()]
}

pub fn point_mass(variant: Variant, v: u8) -> Belief {
    let mut b = vec![0.0; variant.size()];
    b[v as usize] = 1.0;
    b
}

/// Scales `b` to sum to one. All-zero input is returned unchanged.
pub fn normalize(b: &mut [f64]) {
    let s: f64 = b.iter().sum();
    if s > 0.0 {
        b.iter_mut().for_each(|x| *x /= s);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageParams {
    pub sigma: f64,
    pub seed: u64,
}

/// Belief induced by an observed leakage value `leak`.
pub fn belief_from_leakage(variant: Variant, leak: f64, sigma: f64) -> Belief {
    let logs: Vec<f64> = (0..variant.size())
        .map(|v| {
            let d = leak - (v as u32).count_ones() as f64;
            -d * d / (2.0 * sigma * sigma)
        })
        .collect();
    // Shift by the max so the best class never underflows.
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut b: Belief = logs.iter().map(|l| (l - m).exp()).collect();
    normalize(&mut b);
    b
}

pub fn simulate_belief(variant: Variant, v_true: u8, sigma: f64, rng: &mut impl Rng) -> Result<Belief> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma).unwrap().sample(rng);
    Ok(belief_from_leakage(variant, v_true.count_ones() as f64 + noise, sigma))
}

/// Mixes `b` with the uniform distribution: `(1 − α)·b + α/|V|`.
pub fn corrupt(b: &[f64], alpha: f64) -> Result<Belief> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParam(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let u = alpha / b.len() as f64;
    Ok(b.iter().map(|&p| (1.0 - alpha) * p + u).collect())
}

/// Zeroes the largest set of smallest entries whose total mass is at most
/// `epsilon`, then renormalizes. Equal entries are removed in ascending
/// value order.
pub fn sparsify(b: &[f64], epsilon: f64) -> Belief {
    let mut out = b.to_vec();
    if epsilon <= 0.0 {
        return out;
    }
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(i.cmp(&j)));
    let mut removed = 0.0;
    for &i in &order[..order.len() - 1] {
        if removed + b[i] > epsilon {
            break;
        }
        removed += b[i];
        out[i] = 0.0;
    }
    normalize(&mut out);
    out
}

pub fn support_size(b: &[f64]) -> usize {
    b.iter().filter(|&&p| p > 0.0).count()
}

/// Beliefs of one column: the four key-addition outputs `y` and the 21
/// MixColumn words, indexed by [`ByteVar::index`]. Key words carry no
/// leakage and have a uniform prior.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnBeliefs {
    pub y: [Belief; 4],
    pub v: Vec<Belief>,
}

impl ColumnBeliefs {
    pub fn uniform(variant: Variant) -> ColumnBeliefs {
        ColumnBeliefs {
            y: std::array::from_fn(|_| uniform(variant)),
            v: vec![uniform(variant); 21],
        }
    }

    pub fn get(&self, b: ByteVar) -> &Belief {
        &self.v[b.index()]
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Belief) -> ColumnBeliefs {
        ColumnBeliefs {
            y: std::array::from_fn(|i| f(&self.y[i])),
            v: self.v.iter().map(|b| f(b)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub variant: Variant,
    pub key: [u8; 16],
    pub plaintext: [u8; 16],
    pub columns: [ColumnBeliefs; 4],
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    variant: Variant,
    key: Vec<u8>,
    plaintext: Vec<u8>,
    beliefs: BTreeMap<String, Vec<f64>>,
}

/// Dataset key of a belief: `col{c}.y{i}` or `col{c}.<word name>`.
pub fn belief_key(column: usize, name: &str) -> String {
    format!("col{column}.{name}")
}

impl TraceRecord {
    pub fn plaintext_column(&self, c: usize) -> [u8; 4] {
        self.plaintext[4 * c..4 * c + 4].try_into().unwrap()
    }

    pub fn key_column(&self, c: usize) -> [u8; 4] {
        self.key[4 * c..4 * c + 4].try_into().unwrap()
    }

    pub fn corrupted(&self, alpha: f64) -> Result<TraceRecord> {
        corrupt(&[1.0], alpha)?;
        let mut r = self.clone();
        for c in &mut r.columns {
            *c = c.map(|b| corrupt(b, alpha).unwrap());
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        let mut beliefs = BTreeMap::new();
        for (c, col) in self.columns.iter().enumerate() {
            for i in 0..4 {
                beliefs.insert(belief_key(c, &format!("y{}", i + 1)), col.y[i].clone());
            }
            for b in ByteVar::ALL {
                beliefs.insert(belief_key(c, b.name()), col.get(b).clone());
            }
        }
        serde_json::to_string(&RecordJson {
            variant: self.variant,
            key: self.key.to_vec(),
            plaintext: self.plaintext.to_vec(),
            beliefs,
        })
        .expect("records serialize")
    }

    pub fn from_json(line: &str, line_no: usize) -> Result<TraceRecord> {
        let bad = |msg: String| Error::Dataset { line: line_no, msg };
        let r: RecordJson = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let size = r.variant.size();
        let words = |v: Vec<u8>, what: &str| -> Result<[u8; 16]> {
            if v.iter().any(|&x| x as usize >= size) {
                return Err(bad(format!("{what} word out of range")));
            }
            v.try_into().map_err(|_| bad(format!("{what} must have 16 words")))
        };
        let key = words(r.key, "key")?;
        let plaintext = words(r.plaintext, "plaintext")?;
        let mut beliefs = r.beliefs;
        let mut take = |c: usize, name: &str| -> Result<Belief> {
            let k = belief_key(c, name);
            let b = beliefs.remove(&k).ok_or_else(|| Error::MissingBelief(k.clone()))?;
            let s: f64 = b.iter().sum();
            if b.len() != size || b.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(bad(format!("`{k}` is not a distribution over {size} values")));
            }
            Ok(b)
        };
        let mut columns = Vec::with_capacity(4);
        for c in 0..4 {
            let mut y = Vec::with_capacity(4);
            for i in 0..4 {
                y.push(take(c, &format!("y{}", i + 1))?);
            }
            let mut v = Vec::with_capacity(21);
            for b in ByteVar::ALL {
                v.push(take(c, b.name())?);
            }
            columns.push(ColumnBeliefs {
                y: y.try_into().unwrap(),
                v,
            });
        }
        if let Some(k) = beliefs.keys().next() {
            return Err(bad(format!("unexpected belief `{k}`")));
        }
        Ok(TraceRecord {
            variant: r.variant,
            key,
            plaintext,
            columns: columns.try_into().unwrap(),
        })
    }
}

/// `n` records with uniform keys and plaintexts and simulated beliefs for
/// every leaking variable. Deterministic in `params.seed`.
pub fn build_dataset(variant: Variant, n: usize, params: LeakageParams) -> Result<Vec<TraceRecord>> {
    if !(params.sigma > 0.0 && params.sigma.is_finite()) {
        return Err(Error::InvalidParam(format!("sigma must be positive, got {}", params.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = variant.size() as u16;
    let word = |rng: &mut ChaCha8Rng| rng.random_range(0..size) as u8;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let key: [u8; 16] = std::array::from_fn(|_| word(&mut rng));
        let plaintext: [u8; 16] = std::array::from_fn(|_| word(&mut rng));
        let cols = first_round_intermediates(variant, &key, &plaintext);
        let mut columns = Vec::with_capacity(4);
        for cv in &cols {
            let mut sim = |v: u8| simulate_belief(variant, v, params.sigma, &mut rng).unwrap();
            let y: [Belief; 4] = std::array::from_fn(|i| sim(cv.y[i]));
            let v = ByteVar::ALL.iter().map(|&b| sim(cv.trace.get(b))).collect();
            columns.push(ColumnBeliefs { y, v });
        }
        out.push(TraceRecord {
            variant,
            key,
            plaintext,
            columns: columns.try_into().unwrap(),
        });
    }
    Ok(out)
}

pub fn write_jsonl(records: &[TraceRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json())?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(TraceRecord::from_json(&line, i + 1)?);
    }
    Ok(out)
}
