//! Sweeps that fix the hidden constants empirically.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::lemmas::{boost_optimality, jl_check, Check, JlProperty};
use super::{accuracy_experiment, replicability_experiment, AlgoLearner, ExperimentConfig};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::learners::{derive_sizes, Algorithm, Constants, LearnParams, Sizes};
use crate::rng::SharedSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    C1,
    C2,
    C3,
    C4,
    CJl,
    CT,
    CN,
}

impl Knob {
    pub fn set(self, c: &mut Constants, v: f64) {
        match self {
            Knob::C1 => c.c1 = v,
            Knob::C2 => c.c2 = v,
            Knob::C3 => c.c3 = v,
            Knob::C4 => c.c4 = v,
            Knob::CJl => c.c_jl = v,
            Knob::CT => c.c_t = v,
            Knob::CN => c.c_n = v,
        }
    }
}

impl FromStr for Knob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "c1" => Knob::C1,
            "c2" => Knob::C2,
            "c3" => Knob::C3,
            "c4" => Knob::C4,
            "cjl" => Knob::CJl,
            "ct" => Knob::CT,
            "cn" => Knob::CN,
            _ => return Err(invalid(format!("unknown constant `{s}`"))),
        })
    }
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Knob::C1 => "c1",
            Knob::C2 => "c2",
            Knob::C3 => "c3",
            Knob::C4 => "c4",
            Knob::CJl => "cjl",
            Knob::CT => "ct",
            Knob::CN => "cn",
        })
    }
}

/// The three JL checks at each `c_jl`; a value passes when all three hold.
pub fn jl_sweep(seed: SharedSeed, exec: Execution, values: &[f64], matrices: usize) -> Result<Vec<(f64, Vec<Check>)>> {
    values
        .iter()
        .map(|&c| {
            let checks = [JlProperty::Norm, JlProperty::Pairwise, JlProperty::InnerProduct]
                .into_iter()
                .map(|prop| jl_check(seed, exec, prop, 0.2, 0.05, c, 20, matrices))
                .collect::<Result<Vec<_>>>()?;
            Ok((c, checks))
        })
        .collect()
}

/// Boosted-SGD success rate at each `(c_T, c_n)`.
pub fn boost_sweep(seed: SharedSeed, exec: Execution, values: &[(f64, f64)], runs: usize) -> Result<Vec<Check>> {
    values
        .iter()
        .map(|&(ct, cn)| boost_optimality(seed, exec, 20, 0.3, 0.1, 0.1, 2000, ct, cn, runs, 0.9))
        .collect()
}

/// One point of a learner sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerPoint {
    pub knob: Knob,
    pub value: f64,
    pub sizes: Sizes,
    pub disagreement_rate: f64,
    pub wilson_high: f64,
    pub failures: usize,
    pub accurate_fraction: f64,
    pub mean_error: f64,
    pub replicable: bool,
    pub accurate: bool,
}

/// Paired runs at each value of `knob`; each paired run also measures test
/// error, so one sweep point yields both replicability and accuracy.
pub fn learner_sweep(
    algo: Algorithm,
    base: &LearnParams,
    knob: Knob,
    values: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<LearnerPoint>> {
    if cfg.test_size == 0 {
        return Err(invalid("learner sweeps need a positive test size"));
    }
    values
        .iter()
        .map(|&v| {
            let mut params = *base;
            knob.set(&mut params.consts, v);
            params.exec = Execution::Sequential;
            let sizes = derive_sizes(&params, algo)?;
            let learner = AlgoLearner { algo, params };
            let (_, s) = replicability_experiment(&learner, cfg)?;
            Ok(LearnerPoint {
                knob,
                value: v,
                sizes,
                disagreement_rate: s.disagreement_rate,
                wilson_high: s.wilson_high,
                failures: s.failures,
                accurate_fraction: s.accurate_fraction,
                mean_error: s.mean_error,
                replicable: s.passed,
                accurate: s.accurate_fraction >= 1.0 - cfg.delta - 0.05,
            })
        })
        .collect()
}

/// Accuracy alone at each knob value, for sweeps where pairing is not needed.
pub fn accuracy_sweep(
    algo: Algorithm,
    base: &LearnParams,
    knob: Knob,
    values: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<(f64, f64)>> {
    values
        .iter()
        .map(|&v| {
            let mut params = *base;
            knob.set(&mut params.consts, v);
            params.exec = Execution::Sequential;
            let (_, s) = accuracy_experiment(&AlgoLearner { algo, params }, cfg)?;
            Ok((v, s.accurate_fraction))
        })
        .collect()
}
