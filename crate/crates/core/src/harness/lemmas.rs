//! Monte Carlo checks of the probabilistic facts the learners rest on.
//!
//! Every check compares one measured number against one bound and records
//! both. Trials are split into fixed-size chunks, each with its own stream
//! (`chunk/c` under the check's label), so results do not depend on the
//! execution policy or thread count.

use serde::Serialize;

use crate::data::{error_rate, gen_dataset, margin_loss_rate, Dataset, FeatureLaw, MarginSpec};
use crate::error::{invalid, Result};
use crate::exec::{map_indices, Execution};
use crate::label;
use crate::linalg::{dot, norm, norm_sq, normalized};
use crate::learners::project_and_round;
use crate::projection::{required_dim, sample_jl, JlFamily, DEFAULT_C_JL};
use crate::rng::{derive_stream, RandomStream, SharedSeed};
use crate::rounding::{GridHandle, RoundingGrid};
use crate::solvers::{boost_sgd, regularized_objective, svm_margin, SurrogateParams, DEFAULT_SVM_BUDGET};

const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `measured ≤ bound`.
    AtMost,
    /// `measured ≥ bound`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub params: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub trials: usize,
    /// Whether the measured value satisfies the bound.
    pub holds: bool,
    /// Negative controls are expected to violate their (wrong) bound.
    pub expect_violation: bool,
}

impl Check {
    fn new(name: &str, params: String, measured: f64, bound: f64, relation: Relation, trials: usize) -> Self {
        let holds = match relation {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
        };
        Self {
            name: name.to_string(),
            params,
            measured,
            bound,
            relation,
            trials,
            holds,
            expect_violation: false,
        }
    }

    fn control(mut self) -> Self {
        self.expect_violation = true;
        self
    }

    /// A regular check passes when its bound holds, a control when it does not.
    pub fn ok(&self) -> bool {
        self.holds != self.expect_violation
    }

    pub fn render(&self) -> String {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        let verdict = match (self.ok(), self.expect_violation) {
            (true, false) => "PASS",
            (true, true) => "PASS (violation flagged)",
            (false, false) => "FAIL",
            (false, true) => "FAIL (violation missed)",
        };
        format!(
            "{verdict} {} [{}] measured {:.6} {rel} bound {:.6} over {} trials",
            self.name, self.params, self.measured, self.bound, self.trials
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub checks: Vec<Check>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::ok)
    }
}

/// Runs `f` once per trial; trial `t` draws from the stream of chunk `t / CHUNK`.
fn trials<T, F>(exec: Execution, n: usize, base: &RandomStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RandomStream) -> Result<T> + Sync + Send,
{
    let chunks = map_indices(exec, n.div_ceil(CHUNK), |c| {
        let mut st = base.child2("chunk", c);
        let len = CHUNK.min(n - c * CHUNK);
        (0..len).map(|_| f(&mut st)).collect::<Result<Vec<T>>>()
    });
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&b| b).count() as f64 / flags.len().max(1) as f64
}

fn fresh_grid(st: &mut RandomStream, k: usize, beta: f64) -> Result<GridHandle> {
    let offsets = (0..k).map(|_| st.uniform(0.0, beta)).collect::<Result<Vec<_>>>()?;
    let thresholds = (0..k).map(|_| st.uniform(0.0, 1.0)).collect::<Result<Vec<_>>>()?;
    Ok(GridHandle::new(RoundingGrid::from_parts(beta, offsets, thresholds)?))
}

fn random_unit(st: &mut RandomStream, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    loop {
        st.fill_standard_normal(&mut v);
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

fn uniform_vec(st: &mut RandomStream, d: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    (0..d).map(|_| st.uniform(lo, hi)).collect()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

/// `4·√(p(1−p)/N)` at the worst case `p = 1/2`.
pub fn mc_slack(n: usize) -> f64 {
    4.0 * (0.25 / n as f64).sqrt()
}

/// Shared-grid stability: the fraction of grids on which `z` and a point at
/// ℓ₁ distance `l1` round differently, against `2‖z−z′‖₁/β_claim + slack`.
/// The grids have width `beta`; a `beta_claim` larger than `beta` is a
/// deliberately wrong claim.
#[allow(clippy::too_many_arguments)]
pub fn rounding_stability(
    seed: SharedSeed,
    exec: Execution,
    k: usize,
    beta: f64,
    beta_claim: f64,
    l1: f64,
    grids: usize,
    slack: f64,
) -> Result<Check> {
    positive("beta", beta)?;
    positive("claimed beta", beta_claim)?;
    let base = derive_stream(seed, &label!["lemma", "stability"]);
    let mut st = base.child("points");
    let z = uniform_vec(&mut st, k, -1.0, 1.0)?;
    let zp: Vec<f64> = z.iter().map(|v| v + st.rademacher() * l1 / k as f64).collect();
    let flags = trials(exec, grids, &base, |st| {
        let g = fresh_grid(st, k, beta)?;
        Ok(g.ak_round(&z)? != g.ak_round(&zp)?)
    })?;
    Ok(Check::new(
        "rounding stability",
        format!("k={k} beta={beta} claimed_beta={beta_claim} l1={l1:.4}"),
        fraction(&flags),
        2.0 * l1 / beta_claim + slack,
        Relation::AtMost,
        grids,
    ))
}

/// Inner-product tail: fraction of grids with `|bᵀx − zᵀx| > α` for a random
/// `z ∈ [−1,1]^k` and unit `x`, against `2·exp(−2α²/β²) + slack`.
pub fn rounding_inner_product(
    seed: SharedSeed,
    exec: Execution,
    k: usize,
    beta: f64,
    alpha: f64,
    grids: usize,
    slack: f64,
) -> Result<Check> {
    positive("beta", beta)?;
    positive("alpha", alpha)?;
    let base = derive_stream(seed, &label!["lemma", "inner"]);
    let mut st = base.child("points");
    let z = uniform_vec(&mut st, k, -1.0, 1.0)?;
    let x = random_unit(&mut st, k);
    let zx = dot(&z, &x);
    let flags = trials(exec, grids, &base, |st| {
        let b = fresh_grid(st, k, beta)?.ak_round(&z)?.value();
        Ok((dot(&b, &x) - zx).abs() > alpha)
    })?;
    Ok(Check::new(
        "rounding inner product",
        format!("k={k} beta={beta} alpha={alpha}"),
        fraction(&flags),
        2.0 * (-2.0 * alpha * alpha / (beta * beta)).exp() + slack,
        Relation::AtMost,
        grids,
    ))
}

/// Unbiasedness: largest coordinate gap between the mean rounded point and
/// `z`, against `4·(β/2)/√N`.
pub fn rounding_unbiased(seed: SharedSeed, exec: Execution, z: &[f64], beta: f64, grids: usize) -> Result<Check> {
    positive("beta", beta)?;
    if grids == 0 {
        return Err(invalid("need at least one grid"));
    }
    let k = z.len();
    let base = derive_stream(seed, &label!["lemma", "unbiased"]);
    let vals = trials(exec, grids, &base, |st| Ok(fresh_grid(st, k, beta)?.ak_round(z)?.value()))?;
    let mut mean = vec![0.0; k];
    for v in &vals {
        crate::linalg::axpy(1.0, v, &mut mean);
    }
    let gap = mean
        .iter()
        .zip(z)
        .map(|(m, zi)| (m / grids as f64 - zi).abs())
        .fold(0.0, f64::max);
    Ok(Check::new(
        "rounding unbiasedness",
        format!("k={k} beta={beta}"),
        gap,
        4.0 * (beta / 2.0) / (grids as f64).sqrt(),
        Relation::AtMost,
        grids,
    ))
}

/// Which distortion a JL check measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JlProperty {
    /// `|‖Ax‖² − ‖x‖²| > ε‖x‖²` for one fixed `x`.
    Norm,
    /// Any pair of a fixed 10-point set distorted, at `δ/|T|²`.
    Pairwise,
    /// `|zᵀx − (Az)ᵀ(Ax)| > ε‖z‖‖x‖` for fixed unit `z, x`.
    InnerProduct,
}

/// Failure rate of fresh JL matrices at `k = required_dim(ε, δ')` against
/// `δ + 4√(δ/N)`.
#[allow(clippy::too_many_arguments)]
pub fn jl_check(
    seed: SharedSeed,
    exec: Execution,
    property: JlProperty,
    eps: f64,
    delta_jl: f64,
    c_jl: f64,
    d: usize,
    matrices: usize,
) -> Result<Check> {
    const SET: usize = 10;
    let delta_k = match property {
        JlProperty::Pairwise => delta_jl / (SET * SET) as f64,
        _ => delta_jl,
    };
    let k = required_dim(eps, delta_k, c_jl)?;
    let base = derive_stream(seed, &label!["lemma", "jl", format!("{property:?}").to_lowercase()]);
    let mut st = base.child("points");
    let pts: Vec<Vec<f64>> = (0..SET).map(|_| random_unit(&mut st, d)).collect();
    let flags = trials(exec, matrices, &base, |st| {
        let a = sample_jl(st, k, d, JlFamily::Gaussian)?;
        Ok(match property {
            JlProperty::Norm => {
                let ax = a.project(&pts[0])?;
                (norm_sq(&ax) - 1.0).abs() > eps
            }
            JlProperty::InnerProduct => {
                let (az, ax) = (a.project(&pts[0])?, a.project(&pts[1])?);
                (dot(&pts[0], &pts[1]) - dot(&az, &ax)).abs() > eps
            }
            JlProperty::Pairwise => {
                let proj = pts.iter().map(|p| a.project(p)).collect::<Result<Vec<_>>>()?;
                let mut bad = false;
                'outer: for i in 0..SET {
                    for j in i + 1..SET {
                        let orig: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                        let img: f64 = proj[i].iter().zip(&proj[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                        if (img - orig).abs() > eps * orig {
                            bad = true;
                            break 'outer;
                        }
                    }
                }
                bad
            }
        })
    })?;
    Ok(Check::new(
        match property {
            JlProperty::Norm => "jl norm",
            JlProperty::Pairwise => "jl pairwise",
            JlProperty::InnerProduct => "jl inner product",
        },
        format!("eps={eps} delta={delta_jl} c_jl={c_jl} d={d} k={k}"),
        fraction(&flags),
        delta_jl + 4.0 * (delta_jl / matrices as f64).sqrt(),
        Relation::AtMost,
        matrices,
    ))
}

/// Unit-vector families with a known mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitFamily {
    /// Uniform on the sphere; mean 0.
    Sphere,
    /// `e₁` with probability `p`, else uniform on the sphere; mean `p·e₁`.
    Spike(f64),
}

/// Tail of `‖(1/B) Σ wᵢ − E w‖ ≥ t` against `exp(−t²B/32 + 1/4) + slack`.
#[allow(clippy::too_many_arguments)]
pub fn vector_bernstein(
    seed: SharedSeed,
    exec: Execution,
    family: UnitFamily,
    d: usize,
    batch: usize,
    t: f64,
    reps: usize,
    slack: f64,
) -> Result<Check> {
    if d == 0 || batch == 0 {
        return Err(invalid("dimension and batch size must be positive"));
    }
    let mut mean = vec![0.0; d];
    let p = match family {
        UnitFamily::Sphere => 0.0,
        UnitFamily::Spike(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("spike probability {p} outside [0, 1]")));
            }
            mean[0] = p;
            p
        }
    };
    let base = derive_stream(seed, &label!["lemma", "bernstein"]);
    let flags = trials(exec, reps, &base, |st| {
        let mut avg = vec![0.0; d];
        for _ in 0..batch {
            if p > 0.0 && st.next_f64() < p {
                avg[0] += 1.0;
            } else {
                crate::linalg::axpy(1.0, &random_unit(st, d), &mut avg);
            }
        }
        let gap: f64 = avg.iter().zip(&mean).map(|(a, m)| (a / batch as f64 - m).powi(2)).sum();
        Ok(gap.sqrt() >= t)
    })?;
    Ok(Check::new(
        "vector bernstein",
        format!("family={family:?} d={d} B={batch} t={t}"),
        fraction(&flags),
        (-t * t * batch as f64 / 32.0 + 0.25).exp() + slack,
        Relation::AtMost,
        reps,
    ))
}

/// Pigeonhole step of the batch average: `⌊τB/16⌋` vectors with margin −1
/// and the rest with margin exactly `τ/4` on a unit `x`. The smallest margin
/// of the average over all instances is compared with `τ/8`.
pub fn aggregate_margin(seed: SharedSeed, tau: f64, batch: usize, d: usize, instances: usize) -> Result<Check> {
    if d < 2 || batch == 0 {
        return Err(invalid("need d ≥ 2 and a nonempty batch"));
    }
    let mut st = derive_stream(seed, &label!["lemma", "aggregate"]);
    let minority = (tau * batch as f64 / 16.0).floor() as usize;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let x = random_unit(&mut st, d);
        let mut z = vec![0.0; d];
        for i in 0..batch {
            let w: Vec<f64> = if i < minority {
                x.iter().map(|v| -v).collect()
            } else {
                // τ/4 along x plus a unit component orthogonal to x
                let mut u = random_unit(&mut st, d);
                let ux = dot(&u, &x);
                crate::linalg::axpy(-ux, &x, &mut u);
                let u = normalized(&u).ok_or_else(|| invalid("degenerate orthogonal direction"))?;
                let c = tau / 4.0;
                x.iter().zip(&u).map(|(a, b)| c * a + (1.0 - c * c).sqrt() * b).collect()
            };
            crate::linalg::axpy(1.0 / batch as f64, &w, &mut z);
        }
        worst = worst.min(dot(&z, &x));
    }
    Ok(Check::new(
        "aggregate margin",
        format!("tau={tau} B={batch} minority={minority}"),
        worst,
        tau / 8.0,
        Relation::AtLeast,
        instances,
    ))
}

/// Projection-then-rounding pipeline. A perceptron solution `z` on a small
/// planted batch is kept only if its `τ/2`-margin loss on a test set is at
/// most `ε`; then over fresh `(A, grid)` draws the fraction with test 0-1 loss
/// `≤ 2ε` is compared with `1 − 2δ`. Uses `k = c_k τ⁻² ln(1/(εδ))` and
/// `β = c_β τ / ln(1/(εδ))`.
#[allow(clippy::too_many_arguments)]
pub fn pipeline(
    seed: SharedSeed,
    exec: Execution,
    d: usize,
    tau: f64,
    eps: f64,
    delta: f64,
    c_k: f64,
    c_beta: f64,
    draws: usize,
) -> Result<Check> {
    let log = (1.0 / (eps * delta)).ln();
    let k = (c_k * log / (tau * tau)).ceil() as usize;
    let beta = c_beta * tau / log;
    let mut st = derive_stream(seed, &label!["lemma", "pipeline", "setup"]);
    let spec = MarginSpec::random(d, tau, FeatureLaw::UniformSphere, &mut st)?;
    let test = gen_dataset(&spec, 4000, &mut st)?;
    let mut z = None;
    for attempt in 0..100 {
        let train = gen_dataset(&spec, 20 + attempt, &mut st)?;
        let w = svm_margin(&train, tau / 2.0, DEFAULT_SVM_BUDGET)?;
        if margin_loss_rate(&w, &test, tau / 2.0)? <= eps {
            z = Some(w);
            break;
        }
    }
    let z = z.ok_or_else(|| invalid("no candidate met the margin-loss precondition"))?;
    let pre = margin_loss_rate(&z, &test, tau / 2.0)?;
    let base = derive_stream(seed, &label!["lemma", "pipeline"]);
    let flags = trials(exec, draws, &base, |st| {
        let a = sample_jl(st, k, d, JlFamily::Gaussian)?;
        let g = fresh_grid(st, k, beta)?;
        let (_, w) = project_and_round(z.weights(), &a, &g)?;
        Ok(error_rate(&w, &test)? <= 2.0 * eps)
    })?;
    Ok(Check::new(
        "projection and rounding pipeline",
        format!("d={d} tau={tau} eps={eps} delta={delta} k={k} beta={beta:.4} z_loss={pre:.4}"),
        fraction(&flags),
        1.0 - 2.0 * delta - mc_slack(draws),
        Relation::AtLeast,
        draws,
    ))
}

/// Parameters of the good-projection check. The exact statement uses
/// tolerances `τ/100` and `96τ/100`, which need `k` in the tens of thousands;
/// here both are knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodProjection {
    pub d: usize,
    pub tau: f64,
    pub k: usize,
    pub eps_prime: f64,
    /// Allowed relative squared-norm distortion.
    pub norm_tol: f64,
    /// Required projected margin as a fraction of `τ`.
    pub margin_frac: f64,
    pub matrices: usize,
    pub points: usize,
}

impl Default for GoodProjection {
    fn default() -> Self {
        Self {
            d: 50,
            tau: 0.5,
            k: 100,
            eps_prime: 0.2,
            norm_tol: 0.25,
            margin_frac: 0.5,
            matrices: 400,
            points: 2000,
        }
    }
}

/// Frequency of `E1 ∩ E2` over fresh matrices against the Markov-plus-union
/// bound `1 − δ_x/ε′ − δ_w`, where `δ_x` is the measured rate of points outside
/// `G_A` and `δ_w` the measured rate of `E2` failing.
pub fn good_projection(seed: SharedSeed, exec: Execution, g: &GoodProjection) -> Result<Check> {
    let mut st = derive_stream(seed, &label!["lemma", "good-projection", "setup"]);
    let spec = MarginSpec::random(g.d, g.tau, FeatureLaw::UniformSphere, &mut st)?;
    let w = spec.w_star.clone();
    let base = derive_stream(seed, &label!["lemma", "good-projection"]);
    let per = trials(exec, g.matrices, &base, |st| {
        let a = sample_jl(st, g.k, g.d, JlFamily::Gaussian)?;
        let aw = a.project(&w)?;
        let e2 = (norm_sq(&aw) - 1.0).abs() <= g.norm_tol;
        let aw_hat = normalized(&aw).ok_or_else(|| invalid("projected w* vanished"))?;
        let pts = gen_dataset(&spec, g.points, st)?;
        let mut bad = 0usize;
        for (x, y) in pts.iter() {
            let ax = a.project(x)?;
            let nx2 = norm_sq(x);
            let ok = (norm_sq(&ax) - nx2).abs() <= g.norm_tol * nx2
                && y.sign() * dot(&aw_hat, &ax) / norm(&ax) >= g.margin_frac * g.tau;
            bad += usize::from(!ok);
        }
        Ok((bad as f64 / g.points as f64, e2))
    })?;
    let delta_x = per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64;
    let delta_w = per.iter().filter(|p| !p.1).count() as f64 / per.len() as f64;
    let both = per.iter().filter(|p| p.0 <= g.eps_prime && p.1).count() as f64 / per.len() as f64;
    Ok(Check::new(
        "good projection",
        format!(
            "d={} tau={} k={} eps'={} norm_tol={} margin={}tau delta_x={delta_x:.4} delta_w={delta_w:.4}",
            g.d, g.tau, g.k, g.eps_prime, g.norm_tol, g.margin_frac
        ),
        both,
        1.0 - delta_x / g.eps_prime - delta_w - mc_slack(g.matrices),
        Relation::AtLeast,
        g.matrices,
    ))
}

/// Perceptron at `τ/2` on batches of `n`; fraction of runs whose test
/// `τ/4`-margin loss is at most `eps`, against `1 − δ`.
#[allow(clippy::too_many_arguments)]
pub fn svm_generalization(
    seed: SharedSeed,
    exec: Execution,
    d: usize,
    tau: f64,
    n: usize,
    eps: f64,
    delta: f64,
    runs: usize,
) -> Result<Check> {
    let base = derive_stream(seed, &label!["lemma", "svm-generalization"]);
    let flags = trials(exec, runs, &base, |st| {
        let spec = MarginSpec::random(d, tau, FeatureLaw::UniformSphere, st)?;
        let train = gen_dataset(&spec, n, st)?;
        let test = gen_dataset(&spec, 4000, st)?;
        let w = svm_margin(&train, tau / 2.0, DEFAULT_SVM_BUDGET)?;
        Ok(margin_loss_rate(&w, &test, tau / 4.0)? <= eps)
    })?;
    Ok(Check::new(
        "svm generalization",
        format!("d={d} tau={tau} n={n} eps={eps}"),
        fraction(&flags),
        1.0 - delta,
        Relation::AtLeast,
        runs,
    ))
}

/// Boosted SGD on planted batches of `n`. A run succeeds when the population
/// objective of its output (estimated on 20000 fresh samples) is at most `ε`;
/// the objective is nonnegative, so this implies `ε`-optimality.
#[allow(clippy::too_many_arguments)]
pub fn boost_optimality(
    seed: SharedSeed,
    exec: Execution,
    d: usize,
    tau: f64,
    eps: f64,
    delta: f64,
    n: usize,
    c_t: f64,
    c_n: f64,
    runs: usize,
    target: f64,
) -> Result<Check> {
    let p = SurrogateParams::for_accuracy(eps, tau)?;
    let base = derive_stream(seed, &label!["lemma", "boost"]);
    let flags = trials(exec, runs, &base, |st| {
        let spec = MarginSpec::random(d, tau, FeatureLaw::UniformSphere, st)?;
        let train = gen_dataset(&spec, n, st)?;
        let pop = gen_dataset(&spec, 20_000, st)?;
        let out = boost_sgd(&train, eps, tau, delta, c_t, c_n, &st.child("boost"))?;
        Ok(regularized_objective(out.halfspace.weights(), &pop, &p)? <= eps)
    })?;
    Ok(Check::new(
        "boosted sgd optimality",
        format!("d={d} tau={tau} eps={eps} delta={delta} n={n} c_t={c_t} c_n={c_n}"),
        fraction(&flags),
        target,
        Relation::AtLeast,
        runs,
    ))
}

/// Perceptron certificate: among batches where the solver returns, the
/// fraction whose exact training margin is `≥ τ/2`. Also returns the number
/// of batches that ended in an error.
pub fn svm_certificate(
    seed: SharedSeed,
    exec: Execution,
    d: usize,
    tau: f64,
    n: usize,
    batches: usize,
) -> Result<(Check, usize)> {
    let base = derive_stream(seed, &label!["lemma", "svm-certificate"]);
    let res = trials(exec, batches, &base, |st| {
        let spec = MarginSpec::random(d, tau, FeatureLaw::UniformSphere, st)?;
        let s = gen_dataset(&spec, n, st)?;
        Ok(svm_margin(&s, tau / 2.0, DEFAULT_SVM_BUDGET).ok().map(|w| s.min_margin(w.weights())))
    })?;
    let returned: Vec<f64> = res.iter().flatten().copied().collect();
    let errors = batches - returned.len();
    let good = returned.iter().filter(|&&m| m >= tau / 2.0).count();
    Ok((
        Check::new(
            "svm certificate",
            format!("d={d} tau={tau} n={n} errors={errors}"),
            good as f64 / returned.len().max(1) as f64,
            1.0,
            Relation::AtLeast,
            batches,
        ),
        errors,
    ))
}

/// Best margin over `angles` evenly spaced directions in the plane.
pub fn angle_scan_margin(s: &Dataset, angles: usize) -> f64 {
    (0..angles)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / angles as f64;
            s.min_margin(&[th.cos(), th.sin()])
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Fraction of planar instances on which the perceptron margin is at least
/// `τ/2` and at least half the angle-scan optimum.
pub fn svm_vs_scan(seed: SharedSeed, exec: Execution, tau: f64, n: usize, instances: usize) -> Result<Check> {
    let base = derive_stream(seed, &label!["lemma", "svm-scan"]);
    let flags = trials(exec, instances, &base, |st| {
        let spec = MarginSpec::random(2, tau, FeatureLaw::UniformSphere, st)?;
        let s = gen_dataset(&spec, n, st)?;
        let opt = angle_scan_margin(&s, 10_000);
        let got = s.min_margin(svm_margin(&s, tau / 2.0, DEFAULT_SVM_BUDGET)?.weights());
        Ok(got >= tau / 2.0 && got >= 0.5 * opt)
    })?;
    Ok(Check::new(
        "svm vs angle scan",
        format!("d=2 tau={tau} n={n}"),
        fraction(&flags),
        1.0,
        Relation::AtLeast,
        instances,
    ))
}

/// Suite settings. `scale` multiplies every trial count; `1.0` gives the full
/// sizes (10⁵ grids, 10⁴ matrices and repetitions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: SharedSeed,
    pub exec: Execution,
    pub scale: f64,
    pub c_jl: f64,
    pub c_t: f64,
    pub c_n: f64,
}

impl SuiteConfig {
    pub fn new(seed: SharedSeed) -> Self {
        Self {
            seed,
            exec: Execution::default(),
            scale: 1.0,
            c_jl: DEFAULT_C_JL,
            c_t: crate::solvers::DEFAULT_C_T,
            c_n: crate::solvers::DEFAULT_C_N,
        }
    }

    fn n(&self, full: usize) -> usize {
        ((full as f64 * self.scale).round() as usize).max(10)
    }
}

/// Every check at its reference parameters, followed by a negative control
/// (grids 100× finer than the claimed width) that must be flagged.
pub fn run_suite(cfg: &SuiteConfig) -> Result<LemmaReport> {
    let (seed, exec) = (cfg.seed, cfg.exec);
    let grids = cfg.n(100_000);
    let mut checks = Vec::new();
    let beta = 0.1;
    for ratio in [0.01, 0.05, 0.2] {
        checks.push(rounding_stability(seed, exec, 16, beta, beta, ratio * beta, grids, mc_slack(grids))?);
    }
    for alpha in [0.05, 0.1] {
        checks.push(rounding_inner_product(seed, exec, 64, beta, alpha, grids, mc_slack(grids))?);
    }
    checks.push(rounding_unbiased(seed, exec, &[2.3], 1.0, grids)?);
    checks.push(rounding_unbiased(seed, exec, &[0.31, -1.7, 4.05, 0.0, 2.5, -0.2, 9.99, 1.0], beta, grids)?);
    let mats = cfg.n(10_000);
    for prop in [JlProperty::Norm, JlProperty::Pairwise, JlProperty::InnerProduct] {
        checks.push(jl_check(seed, exec, prop, 0.2, 0.05, cfg.c_jl, 20, mats)?);
    }
    let reps = cfg.n(10_000);
    for fam in [UnitFamily::Sphere, UnitFamily::Spike(0.5)] {
        for t in [0.2, 0.3] {
            checks.push(vector_bernstein(seed, exec, fam, 10, 400, t, reps, 0.02)?);
        }
    }
    for (tau, b) in [(0.3, 250), (0.5, 64), (0.1, 1000)] {
        checks.push(aggregate_margin(seed, tau, b, 10, 20)?);
    }
    checks.push(pipeline(seed, exec, 30, 0.3, 0.15, 0.1, 2.0, 1.0, cfg.n(400))?);
    let gp = GoodProjection {
        matrices: cfg.n(400),
        ..GoodProjection::default()
    };
    checks.push(good_projection(seed, exec, &gp)?);
    checks.push(svm_generalization(seed, exec, 30, 0.3, 2000, 0.15, 0.1, cfg.n(100))?);
    checks.push(boost_optimality(seed, exec, 20, 0.3, 0.1, 0.1, 2000, cfg.c_t, cfg.c_n, cfg.n(100), 0.9)?);
    checks.push(svm_certificate(seed, exec, 30, 0.3, 200, cfg.n(1000))?.0);
    checks.push(svm_vs_scan(seed, exec, 0.3, 200, cfg.n(100))?);
    checks.push(rounding_stability(seed, exec, 16, beta / 100.0, beta, 0.05 * beta, cfg.n(10_000), mc_slack(grids))?.control());
    Ok(LemmaReport { checks })
}
