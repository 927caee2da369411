use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use exsasca::attack::{compile_relation, default_vtree, Attacker, Engine};
use exsasca::cipher::Variant;
use exsasca::encode::VarMap;
use exsasca::harness::{count_ops, run_experiment, sweep, wmc_cost, ExperimentConfig, Harness, SweepParam};
use exsasca::leakage::{build_dataset, read_jsonl, write_jsonl, LeakageParams, TraceRecord};
use exsasca::wmc::IndicatorSdd;

#[derive(Parser)]
#[command(name = "exsasca", version, about = "Exact key posteriors for simulated AES first-round leakage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a JSONL dataset of traces.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "full")]
        variant: VariantArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile the MixColumn relation and write the SDD and its vtree.
    Compile {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long)]
        out_sdd: PathBuf,
        #[arg(long)]
        out_vtree: PathBuf,
        /// Condition on g and add word indicators.
        #[arg(long, requires = "g")]
        indicators: bool,
        #[arg(long)]
        g: Option<u8>,
        /// Fail if the SDD has more elements than this.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Attack every trace of a dataset with one method.
    Attack {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        method: String,
        #[command(flatten)]
        opts: AttackOpts,
    },
    /// Success of several methods over a parameter grid.
    Sweep {
        /// Not needed for sigma sweeps, which simulate their own data.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum)]
        param: ParamArg,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',', default_value = "sasca-100,exsasca-mar")]
        methods: Vec<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[command(flatten)]
        opts: AttackOpts,
    },
    /// Circuit arithmetic per trace next to the exhaustive equivalent.
    CountOps {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        method: String,
        #[command(flatten)]
        opts: AttackOpts,
    },
}

#[derive(Args)]
struct AttackOpts {
    /// TOML config; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Multiply every belief separately instead of folding xtime outputs.
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Add a wall-clock column to the report.
    #[arg(long)]
    timing: bool,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Mini,
    Full,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Mini => Variant::Mini,
            VariantArg::Full => Variant::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Mixcolumn,
    Mini,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Psdd,
    Wmc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    Alpha,
    Epsilon,
    Sigma,
}

impl AttackOpts {
    fn config(&self, methods: Vec<String>) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_toml(&read(p)?)?,
            None => ExperimentConfig::default(),
        };
        c.methods = methods;
        if let Some(x) = self.iters {
            c.iterations = x;
        }
        if let Some(x) = self.epsilon {
            c.epsilon = x;
        }
        if let Some(x) = self.alpha {
            c.alpha = x;
        }
        if let Some(x) = self.damping {
            c.damping = x;
        }
        if let Some(e) = self.engine {
            c.engine = match e {
                EngineArg::Psdd => Engine::Psdd,
                EngineArg::Wmc => Engine::Wmc,
            };
        }
        if self.no_merge {
            c.merge = false;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        c.timing |= self.timing;
        if let Some(r) = &self.report {
            c.report = Some(r.display().to_string());
        }
        c.validate()?;
        Ok(c)
    }
}

fn read(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn load(p: &Path) -> anyhow::Result<Vec<TraceRecord>> {
    let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
    Ok(read_jsonl(BufReader::new(f))?)
}

fn dataset_variant(records: &[TraceRecord]) -> anyhow::Result<Variant> {
    match records.first() {
        Some(r) => Ok(r.variant),
        None => bail!("dataset is empty"),
    }
}

fn emit(report: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match report {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            n,
            sigma,
            seed,
            variant,
            out,
        } => {
            let records = build_dataset(variant.into(), n, LeakageParams { sigma, seed })?;
            let f = fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut w = BufWriter::new(f);
            write_jsonl(&records, &mut w)?;
            w.flush()?;
        }
        Command::Compile {
            target,
            out_sdd,
            out_vtree,
            indicators,
            g,
            budget,
        } => {
            let variant = match target {
                Target::Mixcolumn => Variant::Full,
                Target::Mini => Variant::Mini,
            };
            let start = Instant::now();
            let (sdd_text, vtree_text, size, models) = if indicators {
                let g = g.expect("clap enforces --g");
                if g as usize >= variant.size() {
                    bail!("g = {g} is out of range for {}", variant.name());
                }
                let ic = IndicatorSdd::build(variant, g)?;
                let (mgr, root) = (ic.manager(), ic.root());
                (
                    sdd::io::sdd_to_text(mgr, root),
                    sdd::io::vtree_to_text(mgr.vtree()),
                    mgr.size(&[root]),
                    ic.model_count(),
                )
            } else {
                let (c, _) = compile_relation(variant, default_vtree(&VarMap::new(variant)))?;
                (
                    sdd::io::sdd_to_text(&c.manager, c.root),
                    sdd::io::vtree_to_text(c.manager.vtree()),
                    c.manager.size(&[c.root]),
                    c.manager.model_count(c.root),
                )
            };
            if let Some(b) = budget {
                if size.elements > b {
                    bail!("compiled SDD has {} elements, over the budget of {b}", size.elements);
                }
            }
            fs::write(&out_sdd, sdd_text).with_context(|| format!("cannot write {}", out_sdd.display()))?;
            fs::write(&out_vtree, vtree_text).with_context(|| format!("cannot write {}", out_vtree.display()))?;
            println!(
                "decisions={} elements={} models={} seconds={:.3}",
                size.decisions,
                size.elements,
                models,
                start.elapsed().as_secs_f64()
            );
        }
        Command::Attack { dataset, method, opts } => {
            let records = load(&dataset)?;
            let mut cfg = opts.config(vec![method])?;
            cfg.variant = dataset_variant(&records)?;
            cfg.n = records.len();
            cfg.dataset = Some(dataset.display().to_string());
            let mut h = Harness::new(cfg.variant, cfg.workers);
            let report = run_experiment(&mut h, &records, &cfg)?;
            emit(&opts.report, &report.to_csv())?;
        }
        Command::Sweep {
            dataset,
            param,
            grid,
            methods,
            n,
            seed,
            variant,
            opts,
        } => {
            let mut cfg = opts.config(methods)?;
            let param = match param {
                ParamArg::Alpha => SweepParam::Alpha,
                ParamArg::Epsilon => SweepParam::Epsilon,
                ParamArg::Sigma => SweepParam::Sigma,
            };
            let records = match &dataset {
                Some(p) => {
                    let r = load(p)?;
                    cfg.variant = dataset_variant(&r)?;
                    cfg.n = r.len();
                    cfg.dataset = Some(p.display().to_string());
                    r
                }
                None if param == SweepParam::Sigma => Vec::new(),
                None => bail!("--dataset is required for {} sweeps", param.name()),
            };
            if let Some(v) = variant {
                cfg.variant = v.into();
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut h = Harness::new(cfg.variant, cfg.workers);
            let report = sweep(&mut h, &records, &cfg, param, &grid)?;
            emit(&opts.report, &report.to_csv())?;
        }
        Command::CountOps { dataset, method, opts } => {
            let records = load(&dataset)?;
            let mut cfg = opts.config(vec![method.clone()])?;
            cfg.variant = dataset_variant(&records)?;
            cfg.n = records.len();
            cfg.dataset = Some(dataset.display().to_string());
            let acfg = cfg.attack_config(&method)?;
            let mut a = Attacker::new(cfg.variant);
            let wmc_ratio = method == "exsasca-mar" && cfg.engine == Engine::Wmc;
            let mut out = String::new();
            out.push_str(&format!("# exsasca {}\n", env!("CARGO_PKG_VERSION")));
            for (k, v) in cfg.echo() {
                out.push_str(&format!("# {k} = {v}\n"));
            }
            out.push_str("trace,sums,products,exhaustive_equivalent,exhaustive_ratio");
            if wmc_ratio {
                out.push_str(",pass_over_forward_times_q");
            }
            out.push('\n');
            for (t, r) in records.iter().enumerate() {
                let ops = count_ops(&mut a, r, &acfg)?;
                out.push_str(&format!(
                    "{t},{},{},{},{:.6}",
                    ops.sums,
                    ops.products,
                    ops.exhaustive_equivalent,
                    ops.ratio()
                ));
                if wmc_ratio {
                    let ic = a.wmc_engine()?;
                    let mean = r.columns.iter().map(|c| wmc_cost(ic, c).ratio()).sum::<f64>() / 4.0;
                    out.push_str(&format!(",{mean:.6}"));
                }
                out.push('\n');
            }
            emit(&opts.report, &out)?;
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.downcast_ref::<exsasca::Error>() {
                Some(exsasca::Error::Dataset { .. }) => "dataset",
                Some(exsasca::Error::Config(_)) => "config",
                Some(exsasca::Error::InvalidParam(_)) => "invalid-param",
                Some(exsasca::Error::ProductBudget { .. }) => "budget",
                Some(exsasca::Error::Io(_)) => "io",
                Some(_) => "exsasca",
                None => "runtime",
            };
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
