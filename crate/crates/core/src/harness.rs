//! Experiment driver: method comparison, success metrics, sweeps,
//! operation accounting and CSV reports.

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use sdd::ac::{OpCounts, Semiring};

use crate::attack::{compute_messages_wmc, exhaustive_ops, rank, AttackConfig, AttackMethod, Attacker, Engine, KeyPosteriorResult};
use crate::cipher::Variant;
use crate::error::{Error, Result};
use crate::leakage::{build_dataset, ColumnBeliefs, LeakageParams, TraceRecord};
use crate::wmc::IndicatorSdd;

/// Experiment parameters, read from a TOML file. Every field is echoed
/// into report headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub methods: Vec<String>,
    pub iterations: usize,
    pub damping: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub engine: Engine,
    pub merge: bool,
    /// Also run the exhaustive oracle.
    pub oracle: bool,
    pub slow: bool,
    pub workers: usize,
    /// Add a wall-clock column; reports are then no longer reproducible.
    pub timing: bool,
    pub dataset: Option<String>,
    pub report: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: Variant::Mini,
            n: 100,
            sigma: 1.0,
            seed: 1,
            methods: vec!["exsasca-mar".into()],
            iterations: 100,
            damping: 0.0,
            epsilon: 0.0,
            alpha: 0.0,
            engine: Engine::Psdd,
            merge: true,
            oracle: false,
            slow: false,
            workers: 1,
            timing: false,
            dataset: None,
            report: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for m in &self.methods {
            self.attack_config(m)?;
        }
        Ok(())
    }

    pub fn leakage(&self) -> LeakageParams {
        LeakageParams {
            sigma: self.sigma,
            seed: self.seed,
        }
    }

    /// Methods to run, with the oracle appended when requested.
    pub fn method_names(&self) -> Vec<String> {
        let mut m = self.methods.clone();
        if self.oracle && !m.iter().any(|x| x == "exhaustive") {
            m.push("exhaustive".into());
        }
        m
    }

    pub fn attack_config(&self, method: &str) -> Result<AttackConfig> {
        let cfg = AttackConfig {
            method: AttackMethod::parse(method, self.iterations)?,
            epsilon: self.epsilon,
            alpha: self.alpha,
            engine: self.engine,
            merge: self.merge,
            damping: self.damping,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key = value` lines in field order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        for (k, v) in value.as_table().expect("table").iter() {
            out.push((k.clone(), v.to_string()));
        }
        out
    }
}

/// What one attack on one trace produced, next to the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub true_key: [u8; 16],
    pub predicted_key: [u8; 16],
    /// Rank of each true key byte in its marginal, when the method has
    /// marginals.
    pub ranks: Option<[usize; 16]>,
    pub ops: OpCounts,
    /// Whether `ops` was measured for this method.
    pub counted: bool,
    pub fell_back: bool,
    pub elapsed: Duration,
}

impl AttackOutcome {
    pub fn from_result(record: &TraceRecord, r: &KeyPosteriorResult, counted: bool) -> AttackOutcome {
        let mut ranks = [0usize; 16];
        let mut have = true;
        let mut ops = OpCounts::default();
        for (c, col) in r.columns.iter().enumerate() {
            ops += col.ops;
            match &col.marginals {
                Some(m) => {
                    for i in 0..4 {
                        ranks[4 * c + i] = rank(&m[i], record.key[4 * c + i]);
                    }
                }
                None => have = false,
            }
        }
        AttackOutcome {
            true_key: record.key,
            predicted_key: r.predicted_key,
            ranks: have.then_some(ranks),
            ops,
            counted,
            fell_back: r.columns.iter().any(|c| c.fell_back),
            elapsed: r.elapsed,
        }
    }

    pub fn key_correct(&self) -> bool {
        self.true_key == self.predicted_key
    }

    pub fn column_correct(&self, c: usize) -> bool {
        self.true_key[4 * c..4 * c + 4] == self.predicted_key[4 * c..4 * c + 4]
    }
}

/// Fraction of outcomes whose whole 16-byte key was recovered.
pub fn top1_success_rate(outcomes: &[AttackOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::InvalidParam("no attack results".into()));
    }
    Ok(outcomes.iter().filter(|o| o.key_correct()).count() as f64 / outcomes.len() as f64)
}

/// Fraction of recovered 4-byte columns, pooled over all columns.
pub fn column_success_rate(outcomes: &[AttackOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::InvalidParam("no attack results".into()));
    }
    let hits: usize = outcomes
        .iter()
        .map(|o| (0..4).filter(|&c| o.column_correct(c)).count())
        .sum();
    Ok(hits as f64 / (4 * outcomes.len()) as f64)
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One method, summarized.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// Swept parameter and its value, if any.
    pub point: Option<(String, f64)>,
    pub n: usize,
    pub key_hits: usize,
    pub column_hits: [usize; 4],
    pub mean_rank: Option<f64>,
    pub sums_per_trace: Option<f64>,
    pub products_per_trace: Option<f64>,
    pub fallbacks: usize,
    pub seconds_per_trace: f64,
}

impl MetricsRow {
    pub fn summarize(method: &str, point: Option<(String, f64)>, outcomes: &[AttackOutcome]) -> MetricsRow {
        let n = outcomes.len();
        let ranks: Vec<[usize; 16]> = outcomes.iter().filter_map(|o| o.ranks).collect();
        let mean_rank = (n > 0 && ranks.len() == n)
            .then(|| ranks.iter().flatten().sum::<usize>() as f64 / (16 * n) as f64);
        let counted = n > 0 && outcomes.iter().all(|o| o.counted);
        let per = |f: fn(&OpCounts) -> u64| {
            counted.then(|| outcomes.iter().map(|o| f(&o.ops) as f64).sum::<f64>() / n as f64)
        };
        MetricsRow {
            method: method.to_string(),
            point,
            n,
            key_hits: outcomes.iter().filter(|o| o.key_correct()).count(),
            column_hits: std::array::from_fn(|c| outcomes.iter().filter(|o| o.column_correct(c)).count()),
            mean_rank,
            sums_per_trace: per(|o| o.sums),
            products_per_trace: per(|o| o.products),
            fallbacks: outcomes.iter().filter(|o| o.fell_back).count(),
            seconds_per_trace: if n == 0 {
                0.0
            } else {
                outcomes.iter().map(|o| o.elapsed.as_secs_f64()).sum::<f64>() / n as f64
            },
        }
    }

    pub fn key_success(&self) -> f64 {
        self.key_hits as f64 / self.n.max(1) as f64
    }

    pub fn column_success(&self) -> f64 {
        self.column_hits.iter().sum::<usize>() as f64 / (4 * self.n).max(1) as f64
    }

    pub fn column_ci(&self) -> (f64, f64) {
        wilson(self.column_hits.iter().sum(), 4 * self.n)
    }

    pub fn key_ci(&self) -> (f64, f64) {
        wilson(self.key_hits, self.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub header: Vec<(String, String)>,
    pub rows: Vec<MetricsRow>,
    /// Extra comment lines after the table.
    pub notes: Vec<String>,
    pub timing: bool,
}

impl MetricsReport {
    pub fn new(cfg: &ExperimentConfig) -> MetricsReport {
        MetricsReport {
            header: cfg.echo(),
            rows: Vec::new(),
            notes: Vec::new(),
            timing: cfg.timing,
        }
    }

    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::new();
        writeln!(s, "# exsasca {}", env!("CARGO_PKG_VERSION")).unwrap();
        for (k, v) in &self.header {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        s.push_str(
            "method,param,value,n,key_success,key_ci_lo,key_ci_hi,column_success,column_ci_lo,column_ci_hi,\
             col0,col1,col2,col3,mean_rank,sums_per_trace,products_per_trace,fallbacks",
        );
        if self.timing {
            s.push_str(",seconds_per_trace");
        }
        s.push('\n');
        for r in &self.rows {
            let (param, value) = match &r.point {
                Some((p, v)) => (p.clone(), format!("{v}")),
                None => (String::new(), String::new()),
            };
            let (klo, khi) = r.key_ci();
            let (clo, chi) = r.column_ci();
            write!(
                s,
                "{},{param},{value},{},{:.6},{klo:.6},{khi:.6},{:.6},{clo:.6},{chi:.6}",
                r.method,
                r.n,
                r.key_success(),
                r.column_success()
            )
            .unwrap();
            for h in r.column_hits {
                write!(s, ",{:.6}", h as f64 / r.n.max(1) as f64).unwrap();
            }
            write!(
                s,
                ",{},{},{},{}",
                opt(r.mean_rank),
                opt(r.sums_per_trace),
                opt(r.products_per_trace),
                r.fallbacks
            )
            .unwrap();
            if self.timing {
                write!(s, ",{:.6}", r.seconds_per_trace).unwrap();
            }
            s.push('\n');
        }
        for n in &self.notes {
            writeln!(s, "# {n}").unwrap();
        }
        s
    }
}

/// A pool of attackers, one per worker thread, reused across runs so each
/// engine is compiled once per worker.
pub struct Harness {
    pub variant: Variant,
    attackers: Vec<Attacker>,
}

impl Harness {
    pub fn new(variant: Variant, workers: usize) -> Harness {
        Harness {
            variant,
            attackers: (0..workers.max(1)).map(|_| Attacker::new(variant)).collect(),
        }
    }

    pub fn attacker(&mut self) -> &mut Attacker {
        &mut self.attackers[0]
    }

    /// Attacks every record; traces are split into contiguous chunks, one
    /// per worker, and results come back in input order.
    pub fn evaluate(&mut self, records: &[TraceRecord], cfg: &AttackConfig) -> Result<Vec<AttackOutcome>> {
        let counted = matches!(cfg.method, AttackMethod::ExsascaMar | AttackMethod::ExsascaMpe);
        let run = |a: &mut Attacker, chunk: &[TraceRecord]| -> Result<Vec<AttackOutcome>> {
            chunk
                .iter()
                .map(|r| Ok(AttackOutcome::from_result(r, &a.run_attack(r, cfg)?, counted)))
                .collect()
        };
        if self.attackers.len() == 1 || records.len() < 2 {
            return run(&mut self.attackers[0], records);
        }
        let size = records.len().div_ceil(self.attackers.len());
        let parts: Vec<Result<Vec<AttackOutcome>>> = std::thread::scope(|s| {
            let handles: Vec<_> = self
                .attackers
                .iter_mut()
                .zip(records.chunks(size))
                .map(|(a, chunk)| s.spawn(move || run(a, chunk)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(records.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

fn check_variant(records: &[TraceRecord], variant: Variant) -> Result<()> {
    match records.iter().find(|r| r.variant != variant) {
        Some(r) => Err(Error::Config(format!(
            "dataset holds {} traces but the config says {}",
            r.variant.name(),
            variant.name()
        ))),
        None => Ok(()),
    }
}

/// Runs every configured method on `records`.
pub fn run_experiment(h: &mut Harness, records: &[TraceRecord], cfg: &ExperimentConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    check_variant(records, cfg.variant)?;
    let mut report = MetricsReport::new(cfg);
    for m in cfg.method_names() {
        let acfg = cfg.attack_config(&m)?;
        let outcomes = h.evaluate(records, &acfg)?;
        report.rows.push(MetricsRow::summarize(&acfg.method.name(), None, &outcomes));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Epsilon,
    Sigma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Result<SweepParam> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "epsilon" => Ok(SweepParam::Epsilon),
            "sigma" => Ok(SweepParam::Sigma),
            _ => Err(Error::InvalidParam(format!("unknown sweep parameter `{s}`"))),
        }
    }
}

/// Success per method at every grid point. Alpha sweeps run with ε = 0;
/// sigma sweeps simulate a fresh dataset of `cfg.n` traces per point and
/// ignore `records`.
pub fn sweep(
    h: &mut Harness,
    records: &[TraceRecord],
    cfg: &ExperimentConfig,
    param: SweepParam,
    grid: &[f64],
) -> Result<MetricsReport> {
    let mut cfg = cfg.clone();
    if param == SweepParam::Alpha {
        cfg.epsilon = 0.0;
    }
    cfg.validate()?;
    let mut report = MetricsReport::new(&cfg);
    report.header.push(("sweep".into(), param.name().into()));
    report.header.push(("grid".into(), format!("{grid:?}")));
    for &x in grid {
        let mut point = cfg.clone();
        let fresh;
        let data = match param {
            SweepParam::Alpha => {
                point.alpha = x;
                records
            }
            SweepParam::Epsilon => {
                point.epsilon = x;
                records
            }
            SweepParam::Sigma => {
                point.sigma = x;
                point.validate()?;
                fresh = build_dataset(cfg.variant, cfg.n, point.leakage())?;
                &fresh[..]
            }
        };
        check_variant(data, cfg.variant)?;
        for m in point.method_names() {
            let acfg = point.attack_config(&m)?;
            let outcomes = h.evaluate(data, &acfg)?;
            report.rows.push(MetricsRow::summarize(
                &acfg.method.name(),
                Some((param.name().into(), x)),
                &outcomes,
            ));
        }
    }
    if param == SweepParam::Alpha {
        for m in cfg.method_names() {
            let m = cfg.attack_config(&m)?.method.name();
            let curve: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.column_success())
                .collect();
            let monotone = curve.windows(2).all(|w| w[1] <= w[0]);
            report
                .notes
                .push(format!("{m}: column success non-increasing in alpha = {monotone}"));
        }
    }
    Ok(report)
}

/// Measured circuit arithmetic for one trace next to the exhaustive
/// equivalent (`q⁴` column evaluations of 25 word operations, four
/// columns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpsReport {
    pub sums: u64,
    pub products: u64,
    pub exhaustive_equivalent: u64,
}

impl OpsReport {
    /// Exhaustive operations per circuit operation.
    pub fn ratio(&self) -> f64 {
        self.exhaustive_equivalent as f64 / (self.sums + self.products).max(1) as f64
    }

    pub fn to_line(&self) -> String {
        format!(
            "sums={} products={} exhaustive={} ratio={:.3}",
            self.sums,
            self.products,
            self.exhaustive_equivalent,
            self.ratio()
        )
    }
}

pub fn count_ops(a: &mut Attacker, record: &TraceRecord, cfg: &AttackConfig) -> Result<OpsReport> {
    let r = a.run_attack(record, cfg)?;
    let mut ops = OpCounts::default();
    for c in &r.columns {
        ops += c.ops;
    }
    Ok(OpsReport {
        sums: ops.sums,
        products: ops.products,
        exhaustive_equivalent: 4 * exhaustive_ops(a.variant),
    })
}

/// Cost of one WMC message pass against a single forward evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WmcCost {
    pub pass: OpCounts,
    pub forward: OpCounts,
    pub slices: usize,
}

impl WmcCost {
    /// `pass / (forward · slices)`; about 2 when the backward pass costs
    /// as much as the forward one.
    pub fn ratio(&self) -> f64 {
        self.pass.total() as f64 / (self.forward.total() as f64 * self.slices as f64)
    }
}

pub fn wmc_cost(ic: &IndicatorSdd, col: &ColumnBeliefs) -> WmcCost {
    let (_, forward) = ic.circuit().forward(&ic.base_weights().weights, Semiring::Real);
    WmcCost {
        pass: compute_messages_wmc(ic, col).ops,
        forward,
        slices: ic.variant.size(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(correct_columns: usize) -> AttackOutcome {
        let mut predicted = [0u8; 16];
        for b in predicted.iter_mut().skip(4 * correct_columns) {
            *b = 1;
        }
        AttackOutcome {
            true_key: [0; 16],
            predicted_key: predicted,
            ranks: None,
            ops: OpCounts::default(),
            counted: false,
            fell_back: false,
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn success_rates() {
        let all: Vec<_> = (0..4).map(|_| outcome(4)).collect();
        assert_eq!(top1_success_rate(&all).unwrap(), 1.0);
        let none: Vec<_> = (0..4).map(|_| outcome(0)).collect();
        assert_eq!(top1_success_rate(&none).unwrap(), 0.0);
        let mut mixed: Vec<_> = (0..6).map(|_| outcome(1)).collect();
        mixed.extend([outcome(4), outcome(4)]);
        assert_eq!(top1_success_rate(&mixed).unwrap(), 0.25);
        assert_eq!(column_success_rate(&mixed).unwrap(), (6.0 + 8.0) / 32.0);
        assert!(top1_success_rate(&[]).is_err());
    }

    #[test]
    fn wilson_matches_reference_values() {
        // Reference values from the closed form at z = 1.96.
        let (lo, hi) = wilson(20, 100);
        assert!((lo - 0.1334).abs() < 1e-4 && (hi - 0.2888).abs() < 1e-4);
        let (lo, hi) = wilson(0, 10);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn wilson_width_shrinks_like_root_n() {
        let (a, b) = wilson(30, 100);
        let (c, d) = wilson(120, 400);
        let ratio = (b - a) / (d - c);
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::from_toml("variant = \"mini\"\nn = 7\nmethods = [\"baseline\", \"sasca-3\"]\n").unwrap();
        assert_eq!(c.n, 7);
        assert_eq!(c.method_names(), vec!["baseline", "sasca-3"]);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"nope\"]").is_err());
        assert!(ExperimentConfig::from_toml("sigma = -1.0").is_err());
        let echo = c.echo();
        assert!(echo.iter().any(|(k, v)| k == "n" && v == "7"));
    }

    #[test]
    fn report_is_reproducible() {
        let cfg = ExperimentConfig {
            n: 6,
            methods: vec!["baseline".into(), "exsasca-mar".into(), "exsasca-mpe".into()],
            oracle: true,
            engine: Engine::Wmc,
            ..ExperimentConfig::default()
        };
        let data = build_dataset(cfg.variant, cfg.n, cfg.leakage()).unwrap();
        let a = run_experiment(&mut Harness::new(cfg.variant, 1), &data, &cfg).unwrap().to_csv();
        let b = run_experiment(&mut Harness::new(cfg.variant, 2), &data, &cfg).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# exsasca "));
        assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 5);
    }

    #[test]
    fn mpe_and_exhaustive_agree_on_mini() {
        let cfg = ExperimentConfig {
            n: 10,
            sigma: 1.5,
            methods: vec!["exsasca-mpe".into()],
            oracle: true,
            engine: Engine::Wmc,
            ..ExperimentConfig::default()
        };
        let data = build_dataset(cfg.variant, cfg.n, cfg.leakage()).unwrap();
        let r = run_experiment(&mut Harness::new(cfg.variant, 1), &data, &cfg).unwrap();
        let (a, b) = (r.row("exsasca-mpe").unwrap(), r.row("exhaustive").unwrap());
        assert_eq!(a.key_hits, b.key_hits);
        assert_eq!(a.column_hits, b.column_hits);
    }

    #[test]
    fn alpha_zero_point_equals_plain_run() {
        let cfg = ExperimentConfig {
            n: 5,
            methods: vec!["sasca-3".into()],
            ..ExperimentConfig::default()
        };
        let data = build_dataset(cfg.variant, cfg.n, cfg.leakage()).unwrap();
        let mut h = Harness::new(cfg.variant, 1);
        let plain = run_experiment(&mut h, &data, &cfg).unwrap();
        let s = sweep(&mut h, &data, &cfg, SweepParam::Alpha, &[0.0, 1.0]).unwrap();
        assert_eq!(s.rows[0].column_hits, plain.rows[0].column_hits);
        assert_eq!(s.rows[0].mean_rank, plain.rows[0].mean_rank);
    }

    #[test]
    fn exhaustive_equivalent_for_mini() {
        let cfg = ExperimentConfig::default();
        let data = build_dataset(cfg.variant, 1, cfg.leakage()).unwrap();
        let mut a = Attacker::new(Variant::Mini);
        let ops = count_ops(&mut a, &data[0], &cfg.attack_config("exsasca-mar").unwrap()).unwrap();
        assert_eq!(ops.exhaustive_equivalent, 4 * (1 << 16) * 25);
        assert!(ops.sums > 0 && ops.products > 0);
        assert!(ops.to_line().starts_with("sums="));
    }
}
