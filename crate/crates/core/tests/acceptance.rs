//! Acceptance run: one PASS/FAIL line per criterion. Full-scale oracle
//! checks run only with `EXSASCA_SLOW=1`.

use std::process::ExitCode;
use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exsasca::attack::{
    compile_relation, compute_messages_wmc, default_vtree, exhaustive_joint, exhaustive_oracle, joint_mpe_wmc, key_marginals,
    merge_beliefs, AttackConfig, AttackMethod, Engine, PsddEngine,
};
use exsasca::cipher::{ByteVar, ColumnTrace, Variant};
use exsasca::encode::VarMap;
use exsasca::harness::{sweep, wilson, wmc_cost, ExperimentConfig, Harness, MetricsRow, SweepParam};
use exsasca::leakage::{build_dataset, sparsify, Belief, ColumnBeliefs, LeakageParams, TraceRecord};
use exsasca::wmc::{byte_bijection, weights_from_beliefs, IndicatorSdd, WeightFunction, RETAINED};
use sdd::ac::{Circuit, Semiring};
use sdd::Literal;

const TOL_EXACT: f64 = 1e-9;
const TOL_MERGE: f64 = 1e-12;
const TOL_FD: f64 = 1e-6;
const STAT_TRACES: usize = 500;
const MINI_TRACES: usize = 100;

struct Log {
    failed: Vec<String>,
}

impl Log {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }

    fn skip(&self, id: &str, why: &str) {
        println!("[SKIP] {id}: {why}");
    }

    fn info(&self, id: &str, detail: String) {
        println!("[INFO] {id}: {detail}");
    }
}

/// Largest entrywise relative error; zero entries must match exactly.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if y == 0.0 {
                if x == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((x - y) / y).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn max_rel_err(a: &[Belief; 4], b: &[Belief; 4]) -> f64 {
    (0..4).map(|i| rel_err(&a[i], &b[i])).fold(0.0, f64::max)
}

/// Hamming-weight leakage gives equal beliefs to equal-weight values, so
/// the joint can have several maximizers; `a` is accepted when its joint
/// value equals that of `b`.
fn is_tied(v: Variant, col: &ColumnBeliefs, p: [u8; 4], a: [u8; 4], b: [u8; 4]) -> bool {
    let joint = exhaustive_joint(v, col, p);
    let q = v.size();
    let idx = |k: [u8; 4]| (0..4).map(|i| k[i] as usize * q.pow(i as u32)).sum::<usize>();
    let (ja, jb) = (joint[idx(a)], joint[idx(b)]);
    ((ja - jb) / jb).abs() <= 1e-12
}

fn slow() -> bool {
    std::env::var("EXSASCA_SLOW").is_ok_and(|v| v == "1")
}

fn columns(records: &[TraceRecord]) -> impl Iterator<Item = (&ColumnBeliefs, [u8; 4])> {
    records
        .iter()
        .flat_map(|r| (0..4).map(move |c| (&r.columns[c], r.plaintext_column(c))))
}

fn oracle_mini(log: &mut Log, ic: &IndicatorSdd, psdd: &mut PsddEngine) {
    let v = Variant::Mini;
    let data = build_dataset(v, MINI_TRACES, LeakageParams { sigma: 1.0, seed: 101 }).unwrap();
    let (mut err_wmc, mut err_psdd, mut err_cross) = (0.0f64, 0.0f64, 0.0f64);
    let mut mpe_same = 0;
    let mut mpe_psdd_same = 0;
    let mut ties = 0;
    let mut n = 0usize;
    let start = Instant::now();
    for (k, (col, p)) in columns(&data).enumerate() {
        let o = exhaustive_oracle(v, col, p);
        let w = compute_messages_wmc(ic, col);
        let kw = key_marginals(v, &w.to_x, col, p);
        let ps = psdd.messages(col, true).unwrap();
        let kp = key_marginals(v, &ps.to_x, col, p);
        err_wmc = err_wmc.max(max_rel_err(&kw, &o.marginals));
        err_psdd = err_psdd.max(max_rel_err(&kp, &o.marginals));
        err_cross = err_cross.max(max_rel_err(&kp, &kw));
        let (x, _, _) = joint_mpe_wmc(ic, col);
        let kx: [u8; 4] = std::array::from_fn(|i| v.inv_sbox(x[i]) ^ p[i]);
        if kx == o.argmax {
            mpe_same += 1;
        } else if is_tied(v, col, p, kx, o.argmax) {
            ties += 1;
        }
        // The PSDD MPE query repeats the full product; a tenth of the
        // columns keeps the run short.
        if k % 10 == 0 {
            let (x, _, _) = psdd.mpe(col, true).unwrap();
            let kx: [u8; 4] = std::array::from_fn(|i| v.inv_sbox(x[i]) ^ p[i]);
            if kx == o.argmax {
                mpe_psdd_same += 1;
            } else if is_tied(v, col, p, kx, o.argmax) {
                ties += 1;
            }
        }
        n += 1;
    }
    let psdd_mpe_n = n.div_ceil(10);
    log.check(
        "1 oracle-equivalence-mini",
        err_wmc <= TOL_EXACT && err_psdd <= TOL_EXACT && (n - mpe_same) + (psdd_mpe_n - mpe_psdd_same) == ties,
        format!(
            "{MINI_TRACES} traces ({n} columns): MAR max rel err wmc={err_wmc:.2e} psdd={err_psdd:.2e} (tol {TOL_EXACT:.0e}); \
             MPE argmax identical wmc {mpe_same}/{n}, psdd {mpe_psdd_same}/{psdd_mpe_n}, \
             other keys exactly tied with the oracle's: {ties}; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
    log.check(
        "5 cross-engine-mini",
        err_cross <= TOL_EXACT,
        format!("psdd (eps=0) vs wmc key marginals over {n} columns: max rel err {err_cross:.2e} (tol {TOL_EXACT:.0e})"),
    );
}

fn oracle_full(log: &mut Log) {
    if !slow() {
        log.skip("2 oracle-equivalence-full", "set EXSASCA_SLOW=1 (2^32 enumeration per column)");
        log.skip("5 cross-engine-full", "set EXSASCA_SLOW=1");
        log.skip("6 bijection-full-indicators", "set EXSASCA_SLOW=1");
        return;
    }
    let v = Variant::Full;
    let mut psdd = PsddEngine::new(v).unwrap();
    psdd.budget = 30_000_000;
    // Dense full-width beliefs make the product intractable; sharp leakage
    // with the smallest pruning threshold keeps it within budget, and the
    // oracle enumerates the same pruned beliefs.
    let eps = 1e-2;
    let data = build_dataset(v, 10, LeakageParams { sigma: 0.3, seed: 202 }).unwrap();
    let mut worst = 0.0f64;
    let mut n = 0;
    let start = Instant::now();
    for r in &data {
        let col = r.columns[0].map(|b| sparsify(b, eps));
        let p = r.plaintext_column(0);
        let Ok(m) = psdd.messages(&col, true) else {
            continue;
        };
        let o = exhaustive_oracle(v, &col, p);
        worst = worst.max(max_rel_err(&key_marginals(v, &m.to_x, &col, p), &o.marginals));
        n += 1;
    }
    log.check(
        "2 oracle-equivalence-full",
        n >= 10 && worst <= TOL_EXACT,
        format!(
            "{n} full column traces (sigma 0.3, eps {eps:.0e} applied to both sides): max rel err {worst:.2e}; {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
    log.check(
        "5 cross-engine-full",
        false,
        "full byte-indicator circuit cannot be built in memory here (apply grows past 32 GB), so no WMC messages to compare".into(),
    );
    log.check(
        "6 bijection-full-indicators",
        false,
        "same obstacle as the full WMC engine; the bit-level bijection check below covers the full relation".into(),
    );
}

fn model_counts(log: &mut Log) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = true;
    let mut notes = Vec::new();
    for (v, all, per_g) in [(Variant::Mini, 16u32, 12u32), (Variant::Full, 32, 24)] {
        let map = VarMap::new(v);
        let (c, _) = compile_relation(v, default_vtree(&map)).unwrap();
        let mut mgr = c.manager;
        let total = mgr.model_count(c.root);
        ok &= total == BigUint::from(1u64 << all);
        let mut gs = Vec::new();
        for _ in 0..8 {
            let g = rng.random_range(0..v.size() as u32) as u8;
            let f = mgr.condition(c.root, &map.literals(ByteVar::G, g));
            let k = mgr.model_count_scoped(f, &map.bits(ByteVar::G));
            ok &= k == BigUint::from(1u64 << per_g);
            gs.push(g);
        }
        notes.push(format!("{}: |M| = {total}, |M|g| = 2^{per_g} for g in {gs:?}", v.name()));
    }
    log.check("3 model-counts", ok, notes.join("; "));
}

fn compile_size(log: &mut Log) {
    let v = Variant::Full;
    let map = VarMap::new(v);
    let start = Instant::now();
    let (c, _) = compile_relation(v, default_vtree(&map)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let s = c.manager.size(&[c.root]);
    let circuit = Circuit::from_sdd(&c.manager, c.root).size();
    log.check(
        "4 compile-size-time",
        secs <= 600.0 && s.decisions + s.elements <= 200_000,
        format!(
            "SDD(M) in {secs:.2}s: {} decisions, {} elements; smoothed circuit {} sums + {} products \
             (reference circuit: 19k sums and products in about 30s)",
            s.decisions, s.elements, circuit.sums, circuit.products
        ),
    );
}

/// Bit-level weights on the retained words of `map`'s relation; with
/// `shift`, word `b` is read as `x ⊕ shift(b)`.
fn bit_weights(map: &VarMap, g: u8, base: &[(ByteVar, Vec<(f64, f64)>)], shift: impl Fn(ByteVar) -> u8) -> WeightFunction {
    let mut w = WeightFunction::ones(map.num_vars());
    for lit in map.literals(ByteVar::G, g) {
        w.set(lit.negate(), 0.0);
    }
    for (b, bits) in base {
        let c = shift(*b);
        for (k, &(off, on)) in bits.iter().enumerate() {
            let flip = c >> k & 1 == 1;
            let (off, on) = if flip { (on, off) } else { (off, on) };
            let var = map.var(*b, k as u32);
            w.set(Literal::new(var, false), off);
            w.set(Literal::new(var, true), on);
        }
    }
    w
}

fn bijection(log: &mut Log) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // Full relation, bit-level weights: every word map is an xor with a
    // constant, which permutes bit literals.
    let v = Variant::Full;
    let map = VarMap::new(v);
    let (c, _) = compile_relation(v, default_vtree(&map)).unwrap();
    let mut mgr = c.manager;
    let mut worst_full = 0.0f64;
    for _ in 0..10 {
        let g = rng.random_range(0..256u32) as u8;
        let g2 = rng.random_range(0..256u32) as u8;
        let base: Vec<(ByteVar, Vec<(f64, f64)>)> = RETAINED
            .iter()
            .map(|&b| (b, (0..8).map(|_| (rng.random_range(0.1..1.0), rng.random_range(0.1..1.0))).collect()))
            .collect();
        let fg = mgr.condition(c.root, &map.literals(ByteVar::G, g));
        let fg2 = mgr.condition(c.root, &map.literals(ByteVar::G, g2));
        let (cg, cg2) = (Circuit::from_sdd(&mgr, fg), Circuit::from_sdd(&mgr, fg2));
        let permuted = bit_weights(&map, g, &base, |b| byte_bijection(v, g, g2, b, 0).unwrap());
        let direct = bit_weights(&map, g2, &base, |_| 0);
        let a = cg.value(&permuted.weights, Semiring::Real);
        let b = cg2.value(&direct.weights, Semiring::Real);
        worst_full = worst_full.max(((a - b) / b).abs());
    }
    // Mini relation with word indicators, plus enumeration of M|g'.
    let v = Variant::Mini;
    let ic = IndicatorSdd::build(v, 0).unwrap();
    let data = build_dataset(v, 10, LeakageParams { sigma: 1.0, seed: 303 }).unwrap();
    let mut worst_mini = 0.0f64;
    let mut worst_enum = 0.0f64;
    for r in &data {
        let g2 = rng.random_range(0..16u32) as u8;
        let mb = merge_beliefs(v, &r.columns[0], g2);
        let fresh = IndicatorSdd::build(v, g2).unwrap();
        let a = ic.wmc(&weights_from_beliefs(&ic, &mb, None));
        let b = fresh.wmc(&weights_from_beliefs(&fresh, &mb, None));
        let e: f64 = (0..1u32 << 16)
            .map(|x| ColumnTrace::new(v, std::array::from_fn(|i| (x >> (4 * i)) as u8 & 15)))
            .filter(|t| t.get(ByteVar::G) == g2)
            .map(|t| {
                RETAINED
                    .iter()
                    .enumerate()
                    .map(|(k, &b)| mb.beliefs[k][t.get(b) as usize])
                    .product::<f64>()
            })
            .sum();
        worst_mini = worst_mini.max(((a - b) / b).abs());
        worst_enum = worst_enum.max(((a - e) / e).abs());
    }
    log.check(
        "6 bijection",
        worst_full <= TOL_EXACT && worst_mini <= TOL_EXACT && worst_enum <= TOL_EXACT,
        format!(
            "10 (g,g') pairs: full bit-level rel err {worst_full:.2e}; mini indicators vs fresh g' {worst_mini:.2e}, \
             vs enumeration {worst_enum:.2e} (tol {TOL_EXACT:.0e})"
        ),
    );
}

fn merging(log: &mut Log, psdd: &mut PsddEngine) {
    let v = Variant::Mini;
    let data = build_dataset(v, 5, LeakageParams { sigma: 1.0, seed: 404 }).unwrap();
    let (mut diff, mut vs_oracle) = (0.0f64, 0.0f64);
    let mut n = 0;
    for (col, p) in columns(&data) {
        let on = key_marginals(v, &psdd.messages(col, true).unwrap().to_x, col, p);
        let off = key_marginals(v, &psdd.messages(col, false).unwrap().to_x, col, p);
        let o = exhaustive_oracle(v, col, p);
        for i in 0..4 {
            for x in 0..16 {
                diff = diff.max((on[i][x] - off[i][x]).abs());
                vs_oracle = vs_oracle.max((off[i][x] - o.marginals[i][x]).abs());
            }
        }
        n += 1;
    }
    log.check(
        "7 merging-invariance",
        diff <= TOL_MERGE && vs_oracle <= TOL_MERGE,
        format!("{n} columns: |merged - unmerged| <= {diff:.2e}, |unmerged - oracle| <= {vs_oracle:.2e} (tol {TOL_MERGE:.0e})"),
    );
}

fn derivatives(log: &mut Log, ic: &IndicatorSdd) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut w = ic.base_weights();
    for r in 0..RETAINED.len() {
        for j in 0..16 {
            w.set(Literal::new(ic.indicator(r, j), true), rng.random_range(0.05..1.0));
            w.set(Literal::new(ic.indicator(r, j), false), rng.random_range(0.5..1.5));
        }
    }
    let t = ic.wmc_with_derivatives(&w, None);
    let n_lits = 2 * ic.num_vars();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let idx = rng.random_range(0..n_lits);
        let lit = Literal::new(idx / 2 + 1, idx % 2 == 0);
        let x = w.get(lit);
        let h = 1e-4 * x.max(1e-2);
        let (mut up, mut down) = (w.clone(), w.clone());
        up.set(lit, x + h);
        down.set(lit, (x - h).max(0.0));
        let fd = (ic.wmc(&up) - ic.wmc(&down)) / (x + h - (x - h).max(0.0));
        let d = t.derivative(lit);
        let scale = d.abs().max(fd.abs()).max(1e-12 * t.value);
        worst = worst.max((d - fd).abs() / scale);
    }
    let mut euler = 0.0f64;
    for r in 0..RETAINED.len() {
        let s: f64 = (0..16u8)
            .map(|j| {
                let lit = Literal::new(ic.indicator(r, j), true);
                w.get(lit) * t.derivative(lit)
            })
            .sum();
        // With non-unit negative weights the root factors as
        // Σ_j w(b_j)·∂/∂w(b_j); each model has exactly one hot indicator.
        euler = euler.max(((s - t.value) / t.value).abs());
    }
    log.check(
        "8 derivatives",
        worst <= TOL_FD && euler <= TOL_EXACT,
        format!(
            "100 random literals: max rel err vs central differences {worst:.2e} (tol {TOL_FD:.0e}); \
             Euler identity over all 10 words: {euler:.2e}"
        ),
    );
}

fn stat_config(sigma: f64, seed: u64, methods: &[&str]) -> ExperimentConfig {
    ExperimentConfig {
        variant: Variant::Mini,
        n: STAT_TRACES,
        sigma,
        seed,
        methods: methods.iter().map(|s| s.to_string()).collect(),
        engine: Engine::Wmc,
        ..ExperimentConfig::default()
    }
}

fn column_rate(h: &mut Harness, data: &[TraceRecord], method: &str) -> MetricsRow {
    let cfg = stat_config(1.0, 0, &[method]);
    let acfg = cfg.attack_config(method).unwrap();
    MetricsRow::summarize(method, None, &h.evaluate(data, &acfg).unwrap())
}

/// Smallest grid σ at which a 100-trace pilot puts SASCA-100 between 25%
/// and 45% per-column success.
fn tune_sigma(h: &mut Harness) -> f64 {
    for sigma in [0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0] {
        let pilot = build_dataset(Variant::Mini, 100, LeakageParams { sigma, seed: 9 }).unwrap();
        let s = column_rate(h, &pilot, "sasca-100").column_success();
        if (0.25..=0.45).contains(&s) {
            return sigma;
        }
    }
    0.85
}

fn ordering(log: &mut Log, h: &mut Harness) -> f64 {
    let sigma = tune_sigma(h);
    let data = build_dataset(Variant::Mini, STAT_TRACES, LeakageParams { sigma, seed: 909 }).unwrap();
    let names = ["exsasca-mpe", "exsasca-mar", "sasca-100", "sasca-3", "baseline"];
    let rows: Vec<MetricsRow> = names.iter().map(|m| column_rate(h, &data, m)).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.column_success()).collect();
    let ci: Vec<(f64, f64)> = rows.iter().map(|r| r.column_ci()).collect();
    let in_band = (0.2..=0.5).contains(&s[2]);
    let order = s[0] >= s[1] && s[1] >= s[2] && s[2] > s[3] && s[3] > s[4];
    // The large gap: exact inference against loopy BP.
    let separated = ci[1].0 > ci[2].1;
    let detail = names
        .iter()
        .zip(&rows)
        .map(|(n, r)| {
            let (lo, hi) = r.column_ci();
            format!("{n} {:.3} [{lo:.3},{hi:.3}]", r.column_success())
        })
        .collect::<Vec<_>>()
        .join(", ");
    log.check(
        "9 method-ordering",
        in_band && order && separated,
        format!(
            "sigma {sigma}, {STAT_TRACES} traces, per-column success with 95% Wilson CI: {detail}; \
             SASCA-100 in 20-50%: {in_band}; ordering: {order}; exact-vs-BP CIs disjoint: {separated}"
        ),
    );
    sigma
}

fn alpha_sweep(log: &mut Log, h: &mut Harness, sigma: f64) {
    let cfg = stat_config(sigma, 1010, &["exsasca-mar", "exsasca-mpe", "sasca-100"]);
    let data = build_dataset(Variant::Mini, STAT_TRACES, cfg.leakage()).unwrap();
    let grid = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];
    let report = sweep(h, &data, &cfg, SweepParam::Alpha, &grid).unwrap();
    let at = |m: &str, a: f64| {
        report
            .rows
            .iter()
            .find(|r| r.method == m && r.point.as_ref().is_some_and(|p| p.1 == a))
            .unwrap()
    };
    let mut dominant = true;
    let mut curve = Vec::new();
    for &a in &grid {
        let (mar, mpe, bp) = (at("exsasca-mar", a), at("exsasca-mpe", a), at("sasca-100", a));
        dominant &= mar.column_success() >= bp.column_success() && mpe.column_success() >= bp.column_success();
        curve.push(format!(
            "a={a}: mar {:.3} mpe {:.3} sasca {:.3}",
            mar.column_success(),
            mpe.column_success(),
            bp.column_success()
        ));
    }
    // Chance for a 4-word column is q^-4; it must sit inside each CI.
    let chance = 1.0 / 65536.0;
    let at_chance = ["exsasca-mar", "exsasca-mpe", "sasca-100"].iter().all(|m| {
        let r = at(m, 1.0);
        let (lo, hi) = wilson(r.column_hits.iter().sum(), 4 * r.n);
        lo <= chance && chance <= hi
    });
    log.check(
        "10 alpha-sweep",
        dominant && at_chance,
        format!(
            "sigma {sigma}, {STAT_TRACES} traces per point, eps 0; {}; exact >= BP everywhere: {dominant}; \
             chance at alpha=1: {at_chance}",
            curve.join("; ")
        ),
    );
}

fn op_accounting(log: &mut Log, ic: &IndicatorSdd, psdd: &mut PsddEngine) {
    let v = Variant::Mini;
    let data = build_dataset(v, 5, LeakageParams { sigma: 1.0, seed: 1111 }).unwrap();
    let ratios: Vec<f64> = columns(&data).map(|(col, _)| wmc_cost(ic, col).ratio()).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    log.check(
        "11 wmc-pass-cost",
        (1.8..=2.2).contains(&lo) && (1.8..=2.2).contains(&hi),
        format!(
            "message pass / (forward x 16 slices) over {} columns: mean {mean:.3}, range [{lo:.3}, {hi:.3}] (target 2 +/- 10%)",
            ratios.len()
        ),
    );
    let exhaustive = exsasca::attack::exhaustive_ops(v) as f64;
    let (col, _) = columns(&data).next().unwrap();
    let wmc_mar = compute_messages_wmc(ic, col).ops.total() as f64;
    let (_, _, wmc_mpe) = joint_mpe_wmc(ic, col);
    let psdd_mar = psdd.messages(col, true).unwrap().ops.total() as f64;
    let (_, _, psdd_mpe) = psdd.mpe(col, true).unwrap();
    log.info(
        "11 exhaustive-vs-circuit",
        format!(
            "mini column, exhaustive {exhaustive:.0} word ops; ratio exhaustive/circuit: wmc MAR {:.3}, wmc MPE {:.3}, \
             psdd MAR {:.3}, psdd MPE {:.3}; full-scale 6x/3.5x comparison needs the full indicator circuit, \
             which is out of desk scale",
            exhaustive / wmc_mar,
            exhaustive / wmc_mpe.total() as f64,
            exhaustive / psdd_mar,
            exhaustive / psdd_mpe.total() as f64
        ),
    );
}

fn sparsity(log: &mut Log, h: &mut Harness) {
    // Low enough noise that eps = 1e-8 prunes values in most beliefs.
    let sigma = 0.5;
    let data = build_dataset(Variant::Mini, STAT_TRACES, LeakageParams { sigma, seed: 1212 }).unwrap();
    let exact = AttackConfig {
        engine: Engine::Wmc,
        ..AttackConfig::new(AttackMethod::ExsascaMar)
    };
    let with_eps = |epsilon| AttackConfig {
        epsilon,
        ..AttackConfig::new(AttackMethod::ExsascaMar)
    };
    let reference = h.evaluate(&data, &exact).unwrap();
    let t = Instant::now();
    let fine = h.evaluate(&data, &with_eps(1e-8)).unwrap();
    let t_fine = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let coarse = h.evaluate(&data, &with_eps(1e-2)).unwrap();
    let t_coarse = t.elapsed().as_secs_f64();
    let agree = reference
        .iter()
        .zip(&fine)
        .filter(|(a, b)| a.predicted_key == b.predicted_key)
        .count();
    let frac = agree as f64 / data.len() as f64;
    let fallbacks = fine.iter().chain(&coarse).filter(|o| o.fell_back).count();
    log.check(
        "12 epsilon-consistency",
        frac >= 0.95 && t_coarse < t_fine,
        format!(
            "sigma {sigma}, {} traces: eps=1e-8 keys equal eps=0 keys on {agree} ({:.1}%); \
             psdd time eps=1e-2 {t_coarse:.1}s < eps=1e-8 {t_fine:.1}s; {fallbacks} traces fell back to eps=0",
            data.len(),
            100.0 * frac
        ),
    );
}

fn main() -> ExitCode {
    let mut log = Log { failed: Vec::new() };
    let start = Instant::now();
    let ic = IndicatorSdd::build(Variant::Mini, 0).unwrap();
    let mut psdd = PsddEngine::new(Variant::Mini).unwrap();
    let mut h = Harness::new(Variant::Mini, 1);

    oracle_mini(&mut log, &ic, &mut psdd);
    oracle_full(&mut log);
    model_counts(&mut log);
    compile_size(&mut log);
    bijection(&mut log);
    merging(&mut log, &mut psdd);
    derivatives(&mut log, &ic);
    let sigma = ordering(&mut log, &mut h);
    alpha_sweep(&mut log, &mut h, sigma);
    op_accounting(&mut log, &ic, &mut psdd);
    sparsity(&mut log, &mut h);

    println!("acceptance finished in {:.0}s", start.elapsed().as_secs_f64());
    if log.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", log.failed.join(", "));
        ExitCode::FAILURE
    }
}
