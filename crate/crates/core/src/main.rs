use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use replhs::data::{error_rate, gen_dataset, load_dataset, DatasetSource, FeatureLaw, MarginSpec, SampleSource, SyntheticSource};
use replhs::exec::{with_threads, Execution};
use replhs::harness::calibrate::{boost_sweep, jl_sweep, learner_sweep, Knob};
use replhs::harness::lemmas::{run_suite, SuiteConfig};
use replhs::harness::{accuracy_experiment, replicability_experiment, write_results, AlgoLearner, ExperimentConfig, OutputFormat};
use replhs::label;
use replhs::learners::{learn, Algorithm, LearnParams};
use replhs::rng::{derive_stream, SharedSeed};

#[derive(Parser)]
#[command(name = "replhs", version, about = "Replicable learners for large-margin halfspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic τ-margin dataset in the text format.
    GenData(GenArgs),
    /// Train one learner once and print its canonical token.
    Run(RunArgs),
    /// Paired executions; passes iff the Wilson upper bound on disagreement is ≤ ρ.
    Replicability(ExpArgs),
    /// Single executions; passes iff enough runs reach test error ≤ ε.
    Accuracy(ExpArgs),
    /// Monte Carlo checks of the rounding, projection and solver bounds.
    Lemmas(LemmaArgs),
    /// Sweep a hidden constant.
    Calibrate(CalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Algo2,
    Algo4,
    Algo3,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Algo2 => Algorithm::Algo2,
            AlgoArg::Algo4 => Algorithm::Algo4,
            AlgoArg::Algo3 => Algorithm::Algo3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => OutputFormat::Jsonl,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Sphere,
    TwoCluster,
}

#[derive(Args, Clone)]
struct Shared {
    /// Master seed, decimal or 0x-prefixed hex.
    #[arg(long, default_value = "0x5eed")]
    seed: SharedSeed,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: FormatArg,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Run every loop sequentially.
    #[arg(long)]
    sequential: bool,
}

impl Shared {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Args, Clone)]
struct Distribution {
    #[arg(long, default_value_t = 30)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    tau: f64,
    #[arg(long, value_enum, default_value = "sphere")]
    law: LawArg,
    /// Cluster spread for `--law two-cluster`.
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
}

impl Distribution {
    fn law(&self) -> FeatureLaw {
        match self.law {
            LawArg::Sphere => FeatureLaw::UniformSphere,
            LawArg::TwoCluster => FeatureLaw::TwoCluster { sigma: self.sigma },
        }
    }
}

#[derive(Args, Clone)]
struct Learning {
    #[arg(long, value_enum, default_value = "algo2")]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0.15)]
    eps: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c3: Option<f64>,
    #[arg(long)]
    c4: Option<f64>,
    #[arg(long)]
    cjl: Option<f64>,
    #[arg(long)]
    ct: Option<f64>,
    #[arg(long)]
    cn: Option<f64>,
}

impl Learning {
    fn params(&self, tau: f64, exec: Execution) -> Result<LearnParams> {
        let mut p = LearnParams::new(self.algo.into(), self.eps, tau, self.rho, self.delta)?;
        let c = &mut p.consts;
        for (slot, v) in [
            (&mut c.c1, self.c1),
            (&mut c.c2, self.c2),
            (&mut c.c3, self.c3),
            (&mut c.c4, self.c4),
            (&mut c.c_jl, self.cjl),
            (&mut c.c_t, self.ct),
            (&mut c.c_n, self.cn),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p.exec = exec;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    dist: Distribution,
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dist: Distribution,
    #[command(flatten)]
    learn: Learning,
    /// Train on this dataset file instead of fresh synthetic samples.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fresh test samples for reporting the error (synthetic data only).
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct ExpArgs {
    #[command(flatten)]
    dist: Distribution,
    #[command(flatten)]
    learn: Learning,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Fresh test samples per run (0 skips test error for replicability runs).
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    /// Record per-trial wall time (makes output nondeterministic).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct LemmaArgs {
    /// Multiplier on every trial count.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    cjl: Option<f64>,
    #[arg(long)]
    ct: Option<f64>,
    #[arg(long)]
    cn: Option<f64>,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Jl,
    Boost,
    Learner,
}

#[derive(Args)]
struct CalArgs {
    #[arg(long, value_enum, default_value = "learner")]
    target: Target,
    /// Constant to sweep for `--target learner`.
    #[arg(long, default_value = "c4")]
    knob: Knob,
    /// Comma-separated values (pairs `ct:cn` for `--target boost`).
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[command(flatten)]
    dist: Distribution,
    #[command(flatten)]
    learn: Learning,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    test_size: usize,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Serialize)]
struct RunRecord {
    algorithm: String,
    seed: String,
    canonical: String,
    hypothesis: Vec<f64>,
    k: usize,
    batches: usize,
    n: usize,
    cell: f64,
    samples_drawn: u64,
    transcript: Vec<String>,
    test_error: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::GenData(a) => a.shared.threads,
        Command::Run(a) => a.shared.threads,
        Command::Replicability(a) | Command::Accuracy(a) => a.shared.threads,
        Command::Lemmas(a) => a.shared.threads,
        Command::Calibrate(a) => a.shared.threads,
    };
    match with_threads(threads, || dispatch(cli.command)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a),
        Command::Replicability(a) => experiment(a, true),
        Command::Accuracy(a) => experiment(a, false),
        Command::Lemmas(a) => lemmas(a),
        Command::Calibrate(a) => calibrate(a),
    }
}

fn gen_data(a: GenArgs) -> Result<bool> {
    let seed = a.shared.seed;
    let spec = MarginSpec::random(a.dist.dim, a.dist.tau, a.dist.law(), &mut derive_stream(seed, &label!["gen", "w_star"]))?;
    let ds = gen_dataset(&spec, a.samples, &mut derive_stream(seed, &label!["gen", "data"]))?;
    let mut w = a.shared.writer()?;
    w.write_all(ds.to_text().as_bytes())?;
    w.flush()?;
    Ok(true)
}

fn run(a: RunArgs) -> Result<bool> {
    let exec = a.shared.exec();
    let seed = a.shared.seed;
    let (source, spec): (Box<dyn SampleSource>, Option<MarginSpec>) = match &a.data {
        Some(path) => {
            let data = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
            (Box::new(DatasetSource { data }), None)
        }
        None => {
            let spec = MarginSpec::random(a.dist.dim, a.dist.tau, a.dist.law(), &mut derive_stream(seed, &label!["run", "w_star"]))?;
            let data_seed = derive_stream(seed, &label!["run", "data"]).next_seed();
            (Box::new(SyntheticSource::new(spec.clone(), data_seed)), Some(spec))
        }
    };
    let tau = match &a.data {
        Some(_) => a.dist.tau,
        None => spec.as_ref().map_or(a.dist.tau, |s| s.tau),
    };
    let params = a.learn.params(tau, exec)?;
    let out = learn(a.learn.algo.into(), source.as_ref(), &params, seed)?;
    let test_error = match (&spec, a.test_size) {
        (Some(spec), n) if n > 0 => {
            let test = gen_dataset(spec, n, &mut derive_stream(seed, &label!["run", "test"]))?;
            Some(error_rate(&out.hypothesis, &test)?)
        }
        _ => None,
    };
    let rec = RunRecord {
        algorithm: out.algorithm.to_string(),
        seed: seed.to_string(),
        canonical: out.canonical.to_string(),
        hypothesis: out.hypothesis.weights().to_vec(),
        k: out.sizes.k,
        batches: out.sizes.batches,
        n: out.sizes.n,
        cell: out.sizes.cell,
        samples_drawn: out.samples_drawn,
        transcript: out.transcript,
        test_error,
    };
    let mut w = a.shared.writer()?;
    match a.shared.format {
        FormatArg::Jsonl => {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        FormatArg::Csv => {
            let mut c = csv::Writer::from_writer(&mut w);
            c.write_record(["algorithm", "seed", "canonical", "k", "batches", "n", "cell", "samples_drawn", "test_error", "hypothesis"])?;
            let hyp: Vec<String> = rec.hypothesis.iter().map(f64::to_string).collect();
            c.write_record([
                rec.algorithm.clone(),
                rec.seed.clone(),
                rec.canonical.clone(),
                rec.k.to_string(),
                rec.batches.to_string(),
                rec.n.to_string(),
                rec.cell.to_string(),
                rec.samples_drawn.to_string(),
                rec.test_error.map(|e| e.to_string()).unwrap_or_default(),
                hyp.join(" "),
            ])?;
            c.flush()?;
        }
    }
    w.flush()?;
    Ok(true)
}

fn experiment(a: ExpArgs, paired: bool) -> Result<bool> {
    let exec = a.shared.exec();
    let cfg = ExperimentConfig {
        d: a.dist.dim,
        tau: a.dist.tau,
        eps: a.learn.eps,
        rho: a.learn.rho,
        delta: a.learn.delta,
        law: a.dist.law(),
        trials: a.trials,
        test_size: a.test_size,
        master: a.shared.seed,
        exec,
        timings: a.timings,
    };
    // trials run in parallel; keep each learner sequential to avoid nested pools
    let params = a.learn.params(a.dist.tau, Execution::Sequential)?;
    let learner = AlgoLearner {
        algo: a.learn.algo.into(),
        params,
    };
    let (records, summary) = if paired {
        replicability_experiment(&learner, &cfg)?
    } else {
        accuracy_experiment(&learner, &cfg)?
    };
    let mut w = a.shared.writer()?;
    write_results(&mut w, a.shared.format.into(), &records, &summary)?;
    w.flush()?;
    eprintln!(
        "{} {}: disagreements {}/{} (wilson95 [{:.4}, {:.4}]), failures {}, accurate {:.3}, mean error {:.4} -> {}",
        summary.algorithm,
        if paired { "replicability" } else { "accuracy" },
        summary.disagreements,
        summary.completed,
        summary.wilson_low,
        summary.wilson_high,
        summary.failures,
        summary.accurate_fraction,
        summary.mean_error,
        if summary.passed { "PASS" } else { "FAIL" }
    );
    Ok(summary.passed)
}

fn lemmas(a: LemmaArgs) -> Result<bool> {
    let mut cfg = SuiteConfig::new(a.shared.seed);
    cfg.exec = a.shared.exec();
    cfg.scale = a.scale;
    if let Some(v) = a.cjl {
        cfg.c_jl = v;
    }
    if let Some(v) = a.ct {
        cfg.c_t = v;
    }
    if let Some(v) = a.cn {
        cfg.c_n = v;
    }
    let report = run_suite(&cfg)?;
    let mut w = a.shared.writer()?;
    for c in &report.checks {
        match a.shared.format {
            FormatArg::Jsonl => {
                serde_json::to_writer(&mut w, c)?;
                w.write_all(b"\n")?;
            }
            FormatArg::Csv => writeln!(w, "{}", c.render())?,
        }
        eprintln!("{}", c.render());
    }
    w.flush()?;
    Ok(report.passed())
}

fn parse_values(values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value {v:?}")))
        .collect()
}

fn calibrate(a: CalArgs) -> Result<bool> {
    let exec = a.shared.exec();
    let seed = a.shared.seed;
    let mut w = a.shared.writer()?;
    let mut any = false;
    match a.target {
        Target::Jl => {
            for (c, checks) in jl_sweep(seed, exec, &parse_values(&a.values)?, a.trials)? {
                let ok = checks.iter().all(|c| c.ok());
                any |= ok;
                for chk in &checks {
                    writeln!(w, "cjl={c} {}", chk.render())?;
                }
            }
        }
        Target::Boost => {
            let pairs = a
                .values
                .iter()
                .map(|v| {
                    let (t, n) = v.split_once(':').with_context(|| format!("expected ct:cn, got {v:?}"))?;
                    Ok((t.trim().parse()?, n.trim().parse()?))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            for chk in boost_sweep(seed, exec, &pairs, a.trials)? {
                any |= chk.ok();
                writeln!(w, "{}", chk.render())?;
            }
        }
        Target::Learner => {
            let cfg = ExperimentConfig {
                d: a.dist.dim,
                tau: a.dist.tau,
                eps: a.learn.eps,
                rho: a.learn.rho,
                delta: a.learn.delta,
                law: a.dist.law(),
                trials: a.trials,
                test_size: a.test_size,
                master: seed,
                exec,
                timings: false,
            };
            if a.test_size == 0 {
                bail!("learner calibration needs --test-size > 0");
            }
            let base = a.learn.params(a.dist.tau, Execution::Sequential)?;
            for pt in learner_sweep(a.learn.algo.into(), &base, a.knob, &parse_values(&a.values)?, &cfg)? {
                any |= pt.replicable && pt.accurate;
                serde_json::to_writer(&mut w, &pt)?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(any)
}
