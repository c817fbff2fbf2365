//! Paired-execution experiments, statistical summaries and result files.
//!
//! Trial `i` of an experiment with master seed `m` derives everything from
//! streams labelled `trial/i/*` under `m`: the distribution (`dist`), the shared
//! learner seed (`shared`), the two training seeds (`data1`, `data2`) and the
//! test set (`test`). Trials are independent of each other and of the
//! execution schedule, and records are emitted in trial order.

pub mod calibrate;
pub mod lemmas;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{error_rate, gen_dataset, FeatureLaw, Halfspace, MarginSpec, SyntheticSource};
use crate::error::{invalid, Result};
use crate::exec::{map_indices, Execution};
use crate::label;
use crate::learners::{learn, Algorithm, LearnParams};
use crate::rng::{derive_stream, SharedSeed};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// A trained hypothesis with its canonical token rendered as text.
#[derive(Debug, Clone)]
pub struct Trained {
    pub token: String,
    pub hypothesis: Halfspace,
}

/// Anything the harness can run in paired executions.
pub trait Learner: Sync {
    fn name(&self) -> String;

    fn train(&self, source: &SyntheticSource, seed: SharedSeed) -> Result<Trained>;
}

/// One of the three algorithms with fixed parameters.
#[derive(Debug, Clone)]
pub struct AlgoLearner {
    pub algo: Algorithm,
    pub params: LearnParams,
}

impl Learner for AlgoLearner {
    fn name(&self) -> String {
        self.algo.to_string()
    }

    fn train(&self, source: &SyntheticSource, seed: SharedSeed) -> Result<Trained> {
        let out = learn(self.algo, source, &self.params, seed)?;
        Ok(Trained {
            token: out.canonical.to_string(),
            hypothesis: out.hypothesis,
        })
    }
}

/// Distribution and protocol settings shared by all experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub tau: f64,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
    pub law: FeatureLaw,
    pub trials: usize,
    pub test_size: usize,
    pub master: SharedSeed,
    #[serde(skip)]
    pub exec: Execution,
    #[serde(skip)]
    pub timings: bool,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        if self.d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        Ok(())
    }
}

/// Seeds of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub dist: SharedSeed,
    pub shared: SharedSeed,
    pub data: [SharedSeed; 2],
    pub test: SharedSeed,
}

impl TrialSeeds {
    pub fn derive(master: SharedSeed, trial: usize) -> Self {
        let s = |purpose: &str| derive_stream(master, &label!["trial", trial, purpose]).next_seed();
        Self {
            dist: s("dist"),
            shared: s("shared"),
            data: [s("data1"), s("data2")],
            test: s("test"),
        }
    }
}

/// The τ-margin distribution of a trial.
pub fn trial_spec(cfg: &ExperimentConfig, seeds: &TrialSeeds) -> Result<MarginSpec> {
    MarginSpec::random(cfg.d, cfg.tau, cfg.law, &mut derive_stream(seeds.dist, &label!["w_star"]))
}

/// Result of one paired (or single, for accuracy runs) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub algorithm: String,
    pub shared_seed: String,
    pub data_seeds: Vec<String>,
    /// Token equality; `None` for accuracy runs and failed trials.
    pub equal: Option<bool>,
    pub tokens: Vec<String>,
    pub test_errors: Vec<f64>,
    pub failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Replicability,
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub kind: ExperimentKind,
    pub algorithm: String,
    pub trials: usize,
    pub completed: usize,
    pub failures: usize,
    pub disagreements: usize,
    pub disagreement_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_error: f64,
    pub median_error: f64,
    pub q90_error: f64,
    pub max_error: f64,
    /// Fraction of all trials (failures included) whose errors are all `≤ ε`.
    pub accurate_fraction: f64,
    pub passed: bool,
    pub config: ExperimentConfig,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[pos]
}

/// Aggregates records. Replicability passes iff the Wilson upper bound on
/// disagreement is `≤ ρ`; accuracy passes iff the accurate fraction is
/// `≥ 1 − δ − 0.05`.
pub fn summarize(kind: ExperimentKind, algorithm: &str, records: &[TrialRecord], cfg: &ExperimentConfig) -> ExperimentSummary {
    let trials = records.len();
    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    let completed = trials - failures;
    let disagreements = records.iter().filter(|r| r.equal == Some(false)).count();
    let rate = if completed > 0 { disagreements as f64 / completed as f64 } else { 0.0 };
    let (lo, hi) = wilson_interval(disagreements, completed, Z95);
    let mut errs: Vec<f64> = records.iter().flat_map(|r| r.test_errors.iter().copied()).collect();
    errs.sort_by(f64::total_cmp);
    let mean = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    let accurate = records
        .iter()
        .filter(|r| r.failure.is_none() && !r.test_errors.is_empty() && r.test_errors.iter().all(|&e| e <= cfg.eps))
        .count();
    let accurate_fraction = accurate as f64 / trials.max(1) as f64;
    let passed = match kind {
        ExperimentKind::Replicability => completed > 0 && hi <= cfg.rho,
        ExperimentKind::Accuracy => accurate_fraction >= 1.0 - cfg.delta - 0.05,
    };
    ExperimentSummary {
        kind,
        algorithm: algorithm.to_string(),
        trials,
        completed,
        failures,
        disagreements,
        disagreement_rate: rate,
        wilson_low: lo,
        wilson_high: hi,
        mean_error: mean,
        median_error: quantile(&errs, 0.5),
        q90_error: quantile(&errs, 0.9),
        max_error: errs.last().copied().unwrap_or(f64::NAN),
        accurate_fraction,
        passed,
        config: *cfg,
    }
}

fn test_error(h: &Halfspace, spec: &MarginSpec, seeds: &TrialSeeds, size: usize) -> Result<Option<f64>> {
    if size == 0 {
        return Ok(None);
    }
    let test = gen_dataset(spec, size, &mut derive_stream(seeds.test, &label!["test"]))?;
    error_rate(h, &test).map(Some)
}

fn run_trial(learner: &dyn Learner, cfg: &ExperimentConfig, i: usize, paired: bool) -> TrialRecord {
    let start = cfg.timings.then(Instant::now);
    let seeds = TrialSeeds::derive(cfg.master, i);
    let runs = if paired { 2 } else { 1 };
    let mut rec = TrialRecord {
        trial: i,
        algorithm: learner.name(),
        shared_seed: seeds.shared.to_string(),
        data_seeds: seeds.data[..runs].iter().map(ToString::to_string).collect(),
        equal: None,
        tokens: Vec::new(),
        test_errors: Vec::new(),
        failure: None,
        wall_time_s: None,
    };
    let outcome = (|| -> Result<()> {
        let spec = trial_spec(cfg, &seeds)?;
        let mut outs = Vec::with_capacity(runs);
        for data in &seeds.data[..runs] {
            let src = SyntheticSource::new(spec.clone(), *data);
            outs.push(learner.train(&src, seeds.shared)?);
        }
        for o in &outs {
            if let Some(e) = test_error(&o.hypothesis, &spec, &seeds, cfg.test_size)? {
                rec.test_errors.push(e);
            }
        }
        rec.tokens = outs.iter().map(|o| o.token.clone()).collect();
        if paired {
            rec.equal = Some(outs[0].token == outs[1].token);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.failure = Some(e.to_string());
        rec.equal = None;
        rec.tokens.clear();
        rec.test_errors.clear();
    }
    rec.wall_time_s = start.map(|s| s.elapsed().as_secs_f64());
    rec
}

/// Per trial: one shared seed and two independent datasets from the trial's
/// distribution; records token equality (and test errors when
/// `test_size > 0`). Learner errors become failed trials.
pub fn replicability_experiment(learner: &dyn Learner, cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, ExperimentSummary)> {
    cfg.validate()?;
    let records = map_indices(cfg.exec, cfg.trials, |i| run_trial(learner, cfg, i, true));
    let summary = summarize(ExperimentKind::Replicability, &learner.name(), &records, cfg);
    Ok((records, summary))
}

/// Per trial: train once, evaluate on a fresh test set of `test_size`.
pub fn accuracy_experiment(learner: &dyn Learner, cfg: &ExperimentConfig) -> Result<(Vec<TrialRecord>, ExperimentSummary)> {
    cfg.validate()?;
    if cfg.test_size == 0 {
        return Err(invalid("accuracy experiments need a positive test size"));
    }
    let records = map_indices(cfg.exec, cfg.trials, |i| run_trial(learner, cfg, i, false));
    let summary = summarize(ExperimentKind::Accuracy, &learner.name(), &records, cfg);
    Ok((records, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    #[serde(rename = "type")]
    tag: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// One JSON object per trial, then the summary object.
pub fn write_jsonl(w: &mut dyn Write, records: &[TrialRecord], summary: &ExperimentSummary) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, &Tagged { tag: "trial", body: r }).map_err(io_err)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut *w, &Tagged { tag: "summary", body: summary }).map_err(io_err)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// A trial table, then the summary as a trailing `# summary ...` JSON comment.
pub fn write_csv(w: &mut dyn Write, records: &[TrialRecord], summary: &ExperimentSummary) -> Result<()> {
    {
        let mut c = csv::Writer::from_writer(&mut *w);
        c.write_record([
            "trial",
            "algorithm",
            "shared_seed",
            "data_seed_1",
            "data_seed_2",
            "equal",
            "token_1",
            "token_2",
            "test_error_1",
            "test_error_2",
            "failure",
            "wall_time_s",
        ])
        .map_err(csv_err)?;
        let at = |v: &[String], i: usize| v.get(i).cloned().unwrap_or_default();
        let num = |v: &[f64], i: usize| v.get(i).map(|e| e.to_string()).unwrap_or_default();
        for r in records {
            c.write_record([
                r.trial.to_string(),
                r.algorithm.clone(),
                r.shared_seed.clone(),
                at(&r.data_seeds, 0),
                at(&r.data_seeds, 1),
                r.equal.map(|e| e.to_string()).unwrap_or_default(),
                at(&r.tokens, 0),
                at(&r.tokens, 1),
                num(&r.test_errors, 0),
                num(&r.test_errors, 1),
                r.failure.clone().unwrap_or_default(),
                r.wall_time_s.map(|t| t.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        c.flush()?;
    }
    write!(w, "# summary ")?;
    serde_json::to_writer(&mut *w, summary).map_err(io_err)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_results(w: &mut dyn Write, format: OutputFormat, records: &[TrialRecord], summary: &ExperimentSummary) -> Result<()> {
    match format {
        OutputFormat::Jsonl => write_jsonl(w, records, summary),
        OutputFormat::Csv => write_csv(w, records, summary),
    }
}

fn io_err(e: serde_json::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}
