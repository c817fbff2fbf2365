//! The three end-to-end replicable learners.
//!
//! All three share one shape: learn from fresh data, then map the result into
//! a discrete object chosen with the shared seed. Two executions agree exactly
//! when their discrete objects ("canonical tokens") agree.
//!
//! | algorithm | per-batch solver       | discretization                    |
//! |-----------|------------------------|-----------------------------------|
//! | `algo2`   | margin perceptron      | JL projection, then grid rounding |
//! | `algo4`   | boosted projected SGD  | JL projection, then grid rounding |
//! | `algo3`   | none (single batch)    | JL projection, then a lattice net |
//!
//! Shared streams, all under the algorithm name: `jl` (matrix, row-major),
//! `offsets`, `thresholds` for the grid; `select/theta` and `select/priority`
//! for the net; `batch/i` for per-batch solver randomness.

pub mod net;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Halfspace, SampleSource};
use crate::error::{invalid, Error, Result};
use crate::exec::{try_map_indices, Execution};
use crate::label;
use crate::projection::{ceil_tolerant, sample_jl, JlFamily, JlMatrix, DEFAULT_C_JL};
use crate::rng::{derive_stream, SharedSeed, StreamLabel};
use crate::rounding::{make_grid, GridHandle, GridId};
use crate::solvers::{boost_sgd, svm_margin, DEFAULT_SVM_BUDGET};

pub use net::{build_net, finite_rlearner, net_errors, select_replicable, LatticeNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Algo2,
    Algo4,
    Algo3,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Algo2, Algorithm::Algo4, Algorithm::Algo3];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Algo2 => "algo2",
            Algorithm::Algo4 => "algo4",
            Algorithm::Algo3 => "algo3",
        }
    }

    fn stream(self, purpose: &str) -> StreamLabel {
        label![self.name(), purpose]
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algo2" => Ok(Algorithm::Algo2),
            "algo4" => Ok(Algorithm::Algo4),
            "algo3" => Ok(Algorithm::Algo3),
            _ => Err(invalid(format!("unknown algorithm `{s}` (expected algo2, algo4 or algo3)"))),
        }
    }
}

/// Hidden constants. Roles are the same for every algorithm: `c1` scales the
/// projected dimension `k`, `c2` the batch count `B`, `c3` the batch size `n`
/// and `c4` the discretization cell (grid width `β` for algo2/algo4, risk
/// bucket width `Δ` for algo3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c_jl: f64,
    pub c_t: f64,
    pub c_n: f64,
}

impl Constants {
    /// Calibrated defaults (see the `calibrate` subcommand).
    pub fn calibrated(algo: Algorithm) -> Self {
        match algo {
            Algorithm::Algo2 => Constants {
                c1: 0.37,
                c2: 0.0111,
                c3: 1.11,
                c4: 7.3,
                c_jl: DEFAULT_C_JL,
                c_t: 0.1,
                c_n: 0.1,
            },
            Algorithm::Algo4 => Constants {
                c1: 0.37,
                c2: 0.0111,
                c3: 0.56,
                c4: 7.3,
                c_jl: DEFAULT_C_JL,
                c_t: 0.1,
                c_n: 0.1,
            },
            Algorithm::Algo3 => Constants {
                c1: 0.11,
                c2: 1.0,
                c3: 0.5,
                c4: 0.5,
                c_jl: DEFAULT_C_JL,
                c_t: 0.1,
                c_n: 0.1,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c_jl, self.c_t, self.c_n];
        if all.iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(invalid("all constants must be positive and finite"))
        }
    }
}

/// Resource caps checked by [`derive_sizes`] before any work starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_samples: u64,
    pub max_dim: usize,
    pub max_net: usize,
    pub svm_updates: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_samples: 50_000_000,
            max_dim: 4096,
            max_net: net::DEFAULT_MAX_NET,
            svm_updates: DEFAULT_SVM_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnParams {
    pub eps: f64,
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
    pub consts: Constants,
    pub family: JlFamily,
    pub budgets: Budgets,
    #[serde(skip)]
    pub exec: Execution,
}

impl LearnParams {
    pub fn new(algo: Algorithm, eps: f64, tau: f64, rho: f64, delta: f64) -> Result<Self> {
        let p = Self {
            eps,
            tau,
            rho,
            delta,
            consts: Constants::calibrated(algo),
            family: JlFamily::Gaussian,
            budgets: Budgets::default(),
            exec: Execution::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps", self.eps), ("tau", self.tau), ("rho", self.rho), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        self.consts.validate()
    }

    /// `δ' = min(δ, ε/2, ρ)`.
    pub fn effective_delta(&self) -> f64 {
        self.delta.min(self.eps / 2.0).min(self.rho)
    }

    /// `L = ln(1/(ε·τ·ρ·δ'))`.
    pub fn log_term(&self) -> f64 {
        (1.0 / (self.eps * self.tau * self.rho * self.effective_delta())).ln()
    }
}

/// Derived sizes. `batches = 1` for algo3, whose `cell` is the risk bucket
/// width; for algo2/algo4 `cell` is the grid width `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub k: usize,
    pub batches: usize,
    pub n: usize,
    pub cell: f64,
    pub log_term: f64,
}

impl Sizes {
    pub fn total_samples(&self) -> u64 {
        self.n as u64 * self.batches as u64
    }
}

fn size(quantity: &'static str, raw: f64, limit: f64) -> Result<usize> {
    let v = ceil_tolerant(raw).max(1.0);
    if !(v <= limit) {
        return Err(Error::BudgetExceeded {
            quantity,
            value: v,
            limit,
        });
    }
    Ok(v as usize)
}

/// Sizes from the hidden-constant formulas, with `L` as in
/// [`LearnParams::log_term`]:
///
/// * algo2: `k = c1 τ⁻² L`, `B = c2 τ⁻⁴ ρ⁻² L`, `n = c3 ε⁻¹ τ⁻³ L`, `β = c4 τ / L`
/// * algo4: as algo2 but `n = c3 ε⁻² τ⁻² L`
/// * algo3: `k = c1 τ⁻² L`, `n = c3 ε⁻¹ τ⁻⁴ ρ⁻² L`, `Δ = c4 ε`
pub fn derive_sizes(p: &LearnParams, algo: Algorithm) -> Result<Sizes> {
    p.validate()?;
    let c = &p.consts;
    let l = p.log_term();
    let (eps, tau, rho) = (p.eps, p.tau, p.rho);
    let b = &p.budgets;
    let k = size("k", c.c1 * l / (tau * tau), b.max_dim as f64)?;
    let lim = b.max_samples as f64;
    let sizes = match algo {
        Algorithm::Algo2 | Algorithm::Algo4 => {
            let batches = size("B", c.c2 * l / (tau.powi(4) * rho * rho), lim)?;
            let raw_n = if algo == Algorithm::Algo2 {
                c.c3 * l / (eps * tau.powi(3))
            } else {
                c.c3 * l / (eps * eps * tau * tau)
            };
            let n = size("n", raw_n, lim)?;
            Sizes {
                k,
                batches,
                n,
                cell: c.c4 * tau / l,
                log_term: l,
            }
        }
        Algorithm::Algo3 => Sizes {
            k,
            batches: 1,
            n: size("n", c.c3 * l / (eps * tau.powi(4) * rho * rho), lim)?,
            cell: c.c4 * eps,
            log_term: l,
        },
    };
    if sizes.total_samples() > b.max_samples {
        return Err(Error::BudgetExceeded {
            quantity: "total samples",
            value: sizes.total_samples() as f64,
            limit: lim,
        });
    }
    Ok(sizes)
}

/// The discrete output compared across executions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CanonicalToken {
    Grid { grid: GridId, coords: Vec<i64> },
    Net { k: usize, spacing_bits: u64, index: usize },
}

impl fmt::Display for CanonicalToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalToken::Grid { grid, coords } => {
                write!(f, "grid:{grid}:")?;
                for (i, c) in coords.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            CanonicalToken::Net { k, spacing_bits, index } => {
                write!(f, "net:{k}:{:x}:{index}", spacing_bits)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerOutput {
    pub algorithm: Algorithm,
    pub hypothesis: Halfspace,
    pub canonical: CanonicalToken,
    /// Shared-stream labels consumed, in order.
    pub transcript: Vec<String>,
    pub sizes: Sizes,
    pub samples_drawn: u64,
}

/// Runs `algo` on `source` with the shared `seed`.
pub fn learn(algo: Algorithm, source: &dyn SampleSource, p: &LearnParams, seed: SharedSeed) -> Result<LearnerOutput> {
    match algo {
        Algorithm::Algo2 => algo2(source, p, seed),
        Algorithm::Algo4 => algo4(source, p, seed),
        Algorithm::Algo3 => algo3(source, p, seed),
    }
}

/// Margin perceptron at `τ/2` per batch, average, project, round.
pub fn algo2(source: &dyn SampleSource, p: &LearnParams, seed: SharedSeed) -> Result<LearnerOutput> {
    let sizes = derive_sizes(p, Algorithm::Algo2)?;
    let budget = p.budgets.svm_updates;
    let ws = try_map_indices(p.exec, sizes.batches, |i| {
        let s = source.batch(i, sizes.n)?;
        svm_margin(&s, p.tau / 2.0, budget)
            .map(Halfspace::into_weights)
            .map_err(|e| match e {
                Error::InfeasibleMargin { target, best, .. } => Error::InfeasibleMargin {
                    target,
                    best,
                    batch: Some(i),
                },
                other => other,
            })
    })?;
    finish_rounded(Algorithm::Algo2, source.dim(), &ws, sizes, p, seed, Vec::new())
}

/// Boosted SGD at accuracy `ε/10` and confidence `δ'/B` per normalized batch,
/// average, project, round.
pub fn algo4(source: &dyn SampleSource, p: &LearnParams, seed: SharedSeed) -> Result<LearnerOutput> {
    let sizes = derive_sizes(p, Algorithm::Algo4)?;
    let batch_delta = p.effective_delta() / sizes.batches as f64;
    let base = derive_stream(seed, &Algorithm::Algo4.stream("batch"));
    let ws = try_map_indices(p.exec, sizes.batches, |i| {
        let s = source.batch(i, sizes.n)?;
        let out = boost_sgd(&s, p.eps / 10.0, p.tau, batch_delta, p.consts.c_t, p.consts.c_n, &base.child(i))?;
        Ok::<_, Error>(out.halfspace.into_weights())
    })?;
    let pre = vec![format!("{}/*", base.label())];
    finish_rounded(Algorithm::Algo4, source.dim(), &ws, sizes, p, seed, pre)
}

/// The shared JL matrix and grid of algo2/algo4.
pub fn shared_grid(algo: Algorithm, d: usize, sizes: &Sizes, p: &LearnParams, seed: SharedSeed) -> Result<(JlMatrix, GridHandle)> {
    let a = sample_jl(&mut derive_stream(seed, &algo.stream("jl")), sizes.k, d, p.family)?;
    let grid = make_grid(
        sizes.k,
        sizes.cell,
        &mut derive_stream(seed, &algo.stream("offsets")),
        &mut derive_stream(seed, &algo.stream("thresholds")),
    )?;
    Ok((a, grid))
}

/// `b = AKround(Az)` and `ŵ = Aᵀb/‖Aᵀb‖`.
pub fn project_and_round(z: &[f64], a: &JlMatrix, grid: &GridHandle) -> Result<(CanonicalToken, Halfspace)> {
    let az = a.project(z)?;
    let b = grid.ak_round(&az)?;
    let w = a.transpose_apply(&b.value())?;
    let h = Halfspace::new(w).map_err(|_| Error::Degenerate("rounded point maps to the zero vector".into()))?;
    Ok((
        CanonicalToken::Grid {
            grid: b.grid_id(),
            coords: b.coords,
        },
        h,
    ))
}

fn finish_rounded(
    algo: Algorithm,
    d: usize,
    ws: &[Vec<f64>],
    sizes: Sizes,
    p: &LearnParams,
    seed: SharedSeed,
    mut transcript: Vec<String>,
) -> Result<LearnerOutput> {
    let z = average(ws, d)?;
    let (a, grid) = shared_grid(algo, d, &sizes, p, seed)?;
    let (canonical, hypothesis) = project_and_round(&z, &a, &grid)?;
    for purpose in ["jl", "offsets", "thresholds"] {
        transcript.push(algo.stream(purpose).to_string());
    }
    Ok(LearnerOutput {
        algorithm: algo,
        hypothesis,
        canonical,
        transcript,
        sizes,
        samples_drawn: sizes.total_samples(),
    })
}

/// `(1/B) Σ w_i`, summed in index order.
pub fn average(ws: &[Vec<f64>], d: usize) -> Result<Vec<f64>> {
    if ws.is_empty() {
        return Err(invalid("nothing to average"));
    }
    let mut z = vec![0.0; d];
    for w in ws {
        if w.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: w.len() });
        }
        crate::linalg::axpy(1.0, w, &mut z);
    }
    crate::linalg::scale(1.0 / ws.len() as f64, &mut z);
    Ok(z)
}

/// Net spacing `τ/20`.
pub fn net_spacing(tau: f64) -> f64 {
    tau / 20.0
}

/// Project one batch, then replicable selection over the `τ/20` lattice net.
pub fn algo3(source: &dyn SampleSource, p: &LearnParams, seed: SharedSeed) -> Result<LearnerOutput> {
    let sizes = derive_sizes(p, Algorithm::Algo3)?;
    let spacing = net_spacing(p.tau);
    let net = build_net(sizes.k, spacing, p.budgets.max_net)?;
    let s = source.batch(0, sizes.n)?;
    let a = sample_jl(&mut derive_stream(seed, &Algorithm::Algo3.stream("jl")), sizes.k, source.dim(), p.family)?;
    let sel = algo3_select(&s, &a, &net, &sizes, p, seed)?;
    let hypothesis = Halfspace::new(a.transpose_apply(&net.point(sel.index))?)
        .map_err(|_| Error::Degenerate("selected net point maps to the zero vector".into()))?;
    let transcript = vec![
        Algorithm::Algo3.stream("jl").to_string(),
        format!("{}/theta", Algorithm::Algo3.stream("select")),
        format!("{}/priority", Algorithm::Algo3.stream("select")),
    ];
    Ok(LearnerOutput {
        algorithm: Algorithm::Algo3,
        hypothesis,
        canonical: CanonicalToken::Net {
            k: sizes.k,
            spacing_bits: spacing.to_bits(),
            index: sel.index,
        },
        transcript,
        sizes,
        samples_drawn: sizes.total_samples(),
    })
}

/// The net selection step of algo3 for an explicit projection.
pub fn algo3_select(
    s: &Dataset,
    a: &JlMatrix,
    net: &LatticeNet,
    sizes: &Sizes,
    p: &LearnParams,
    seed: SharedSeed,
) -> Result<net::Selection> {
    let projected = s.map_features(a.rows(), |x, out| a.project_into(x, out))?;
    let n = projected.len() as f64;
    let risks: Vec<f64> = net_errors(net, &projected, p.exec)?
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    select_replicable(&risks, sizes.cell, &derive_stream(seed, &Algorithm::Algo3.stream("select")))
}

/// Rebuilds the hypothesis from the canonical token and the shared seed.
pub fn reconstruct(algo: Algorithm, token: &CanonicalToken, d: usize, p: &LearnParams, seed: SharedSeed) -> Result<Halfspace> {
    let sizes = derive_sizes(p, algo)?;
    match (algo, token) {
        (Algorithm::Algo2 | Algorithm::Algo4, CanonicalToken::Grid { grid, coords }) => {
            let (a, g) = shared_grid(algo, d, &sizes, p, seed)?;
            if g.id() != *grid || coords.len() != sizes.k {
                return Err(invalid("token does not belong to this seed and parameter set"));
            }
            let b: Vec<f64> = coords
                .iter()
                .enumerate()
                .map(|(i, &c)| g.grid().corner_value(i, c))
                .collect();
            Halfspace::new(a.transpose_apply(&b)?)
        }
        (Algorithm::Algo3, CanonicalToken::Net { k, spacing_bits, index }) => {
            if *k != sizes.k || *spacing_bits != net_spacing(p.tau).to_bits() {
                return Err(invalid("token does not belong to this parameter set"));
            }
            let net = build_net(*k, net_spacing(p.tau), p.budgets.max_net)?;
            if *index >= net.len() {
                return Err(invalid("net index out of range"));
            }
            let a = sample_jl(&mut derive_stream(seed, &algo.stream("jl")), *k, d, p.family)?;
            Halfspace::new(a.transpose_apply(&net.point(*index))?)
        }
        _ => Err(invalid("token kind does not match the algorithm")),
    }
}

#[cfg(test)]
mod tests;
