//! Per-batch weak solvers: a certified margin perceptron and projected SGD on
//! the regularized surrogate hinge objective, with repetition and held-out
//! selection.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Halfspace};
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq, normalized, project_unit_ball};
use crate::projection::ceil_tolerant;
use crate::rng::RandomStream;

pub const DEFAULT_C_T: f64 = 4.0;
pub const DEFAULT_C_N: f64 = 3.0;
pub const DEFAULT_SVM_BUDGET: usize = 100_000;

/// `h(w; x, y) = max(0, 2 − (2/τ) y xᵀw)`.
#[inline]
pub fn surrogate_loss(w: &[f64], x: &[f64], y: f64, tau: f64) -> f64 {
    (2.0 - (2.0 / tau) * y * dot(x, w)).max(0.0)
}

/// Margin `τ` and regularization weight `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub tau: f64,
    pub mu: f64,
}

impl SurrogateParams {
    /// `μ = ε/10`.
    pub fn for_accuracy(eps: f64, tau: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must be in (0, 1), got {eps}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid(format!("tau must be in (0, 1), got {tau}")));
        }
        Ok(Self { tau, mu: eps / 10.0 })
    }

    /// Lipschitz bound `G = 2/τ + 2μ` on the unit ball.
    pub fn lipschitz(&self) -> f64 {
        2.0 / self.tau + 2.0 * self.mu
    }
}

/// Empirical mean of `h` over `S` plus `μ‖w‖²`.
pub fn regularized_objective(w: &[f64], s: &Dataset, p: &SurrogateParams) -> Result<f64> {
    if s.is_empty() {
        return Err(invalid("objective of an empty dataset"));
    }
    if w.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: w.len(),
        });
    }
    let hinge: f64 = s.iter().map(|(x, y)| surrogate_loss(w, x, y.sign(), p.tau)).sum();
    Ok(hinge / s.len() as f64 + p.mu * norm_sq(w))
}

/// A subgradient of [`regularized_objective`]; the hinge contributes on
/// `y xᵀw < τ`.
pub fn objective_subgradient(w: &[f64], s: &Dataset, p: &SurrogateParams) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(invalid("subgradient of an empty dataset"));
    }
    let mut g = vec![0.0; w.len()];
    let c = -(2.0 / p.tau) / s.len() as f64;
    for (x, y) in s.iter() {
        if y.sign() * dot(x, w) < p.tau {
            axpy(c * y.sign(), x, &mut g);
        }
    }
    axpy(2.0 * p.mu, w, &mut g);
    Ok(g)
}

/// Projected SGD with step `η_t = 2/(μ(t+1))` from `w₁ = 0`, sampling one
/// index of `S` per step from `stream`; returns `Σ_t 2t/(T(T+1)) · w_t`.
///
/// Consumes exactly `T` words of `stream`.
pub fn sgd_surrogate(s: &Dataset, p: &SurrogateParams, t_max: usize, stream: &mut RandomStream) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(invalid("SGD needs at least one iteration"));
    }
    if s.is_empty() {
        return Err(invalid("SGD on an empty dataset"));
    }
    if !(p.mu > 0.0) {
        return Err(invalid("regularization weight must be positive"));
    }
    let d = s.dim();
    let mut w = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let denom = t_max as f64 * (t_max as f64 + 1.0);
    let inv_tau2 = 2.0 / p.tau;
    for t in 1..=t_max {
        axpy(2.0 * t as f64 / denom, &w, &mut avg);
        let i = stream.index(s.len());
        let (x, y) = (s.x(i), s.y(i).sign());
        let eta = 2.0 / (p.mu * (t as f64 + 1.0));
        let active = y * dot(x, &w) < p.tau;
        // w ← w − η(2μw − [active](2/τ)yx)
        let shrink = 1.0 - eta * 2.0 * p.mu;
        w.iter_mut().for_each(|v| *v *= shrink);
        if active {
            axpy(eta * inv_tau2 * y, x, &mut w);
        }
        project_unit_ball(&mut w);
    }
    Ok(avg)
}

/// Index of the smallest value; the lowest index wins ties. NaN never wins.
pub fn select_best(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Iteration count `T = ⌈c_T ε⁻² τ⁻²⌉` and repetition count
/// `max(1, ⌈c_n ln(1/δ)⌉)`.
pub fn boost_sizes(eps: f64, tau: f64, delta: f64, c_t: f64, c_n: f64) -> Result<(usize, usize)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    if !(c_t > 0.0 && c_n > 0.0) {
        return Err(invalid("SGD constants must be positive"));
    }
    SurrogateParams::for_accuracy(eps, tau)?;
    let t = ceil_tolerant(c_t / (eps * eps * tau * tau)).max(1.0);
    let reps = ceil_tolerant(c_n * (1.0 / delta).ln()).max(1.0);
    Ok((t as usize, reps as usize))
}

/// Result of [`boost_sgd`] with the per-candidate held-out objectives.
#[derive(Debug, Clone)]
pub struct BoostOutcome {
    pub halfspace: Halfspace,
    pub raw: Vec<f64>,
    pub estimates: Vec<f64>,
    pub chosen: usize,
}

/// Runs [`sgd_surrogate`] on the first half of the normalized batch once per
/// repetition (stream `rep/r`), scores every candidate on the second half and
/// returns the normalized argmin.
pub fn boost_sgd(
    s: &Dataset,
    eps: f64,
    tau: f64,
    delta: f64,
    c_t: f64,
    c_n: f64,
    stream: &RandomStream,
) -> Result<BoostOutcome> {
    if s.len() < 2 {
        return Err(invalid("boostSGD needs at least two samples"));
    }
    let p = SurrogateParams::for_accuracy(eps, tau)?;
    let (t_max, reps) = boost_sizes(eps, tau, delta, c_t, c_n)?;
    let s = s.normalized();
    let half = s.len() / 2;
    let train = s.slice(0, half)?;
    let held = s.slice(half, s.len())?;
    let mut cands = Vec::with_capacity(reps);
    let mut estimates = Vec::with_capacity(reps);
    for r in 0..reps {
        let w = sgd_surrogate(&train, &p, t_max, &mut stream.child2("rep", r))?;
        estimates.push(regularized_objective(&w, &held, &p)?);
        cands.push(w);
    }
    let chosen = select_best(&estimates).ok_or_else(|| Error::Degenerate("no finite candidate objective".into()))?;
    let raw = cands.swap_remove(chosen);
    let halfspace = Halfspace::new(raw.clone())?;
    Ok(BoostOutcome {
        halfspace,
        raw,
        estimates,
        chosen,
    })
}

/// Margin perceptron returning a unit `w` with `y wᵀx/‖x‖ ≥ γ` on all of `S`.
///
/// Starts at the normalized centroid `Σ y x̂`, then tries the aims
/// `γ + (1−γ)/2^j` for `j = 1, 2, …` and finally `γ`, each with an equal share
/// of `budget` updates; the first aim reached is returned. The result is
/// re-verified against `γ` before returning.
pub fn svm_margin(s: &Dataset, gamma: f64, budget: usize) -> Result<Halfspace> {
    if s.is_empty() {
        return Err(invalid("SVM on an empty dataset"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("target margin must be in (0, 1), got {gamma}")));
    }
    let s = s.normalized();
    let d = s.dim();
    let mut centroid = vec![0.0; d];
    for (x, y) in s.iter() {
        axpy(y.sign(), x, &mut centroid);
    }
    let start = normalized(&centroid).unwrap_or_else(|| s.x(0).iter().map(|v| v * s.y(0).sign()).collect());

    let mut aims = Vec::new();
    let mut gap = (1.0 - gamma) / 2.0;
    while gap > 0.02 * gamma {
        aims.push(gamma + gap);
        gap /= 2.0;
    }
    aims.push(gamma);
    let share = (budget / aims.len()).max(1);

    let start_margin = s.min_margin(&start);
    let mut best = start_margin;
    if start_margin >= aims[0] {
        return Ok(Halfspace::new(start)?);
    }
    for (j, &aim) in aims.iter().enumerate() {
        if start_margin >= aim {
            return Ok(Halfspace::new(start)?);
        }
        let budget_j = if j + 1 == aims.len() { budget.saturating_sub(share * j).max(share) } else { share };
        if let Some((w, m)) = perceptron(&s, &start, aim, budget_j) {
            if m >= gamma {
                return Ok(Halfspace::new(w)?);
            }
            best = best.max(m);
        }
    }
    Err(Error::InfeasibleMargin {
        target: gamma,
        best,
        batch: None,
    })
}

/// Updates `w += y x̂` on every sample with `y wᵀx̂ < aim ‖w‖` until a clean
/// pass or the update budget runs out. Returns the unit vector and its
/// exactly recomputed minimum margin on success.
fn perceptron(s: &Dataset, start: &[f64], aim: f64, budget: usize) -> Option<(Vec<f64>, f64)> {
    let mut w = start.to_vec();
    let mut wn2 = norm_sq(&w);
    let mut updates = 0usize;
    loop {
        let mut clean = true;
        for (x, y) in s.iter() {
            let m = y.sign() * dot(&w, x);
            if m <= 0.0 || m < aim * wn2.max(0.0).sqrt() {
                if updates == budget {
                    return None;
                }
                // ‖w + y x̂‖² = ‖w‖² + 2 y wᵀx̂ + 1
                axpy(y.sign(), x, &mut w);
                wn2 += 2.0 * m + 1.0;
                updates += 1;
                clean = false;
            }
        }
        if clean {
            let n = norm(&w);
            let unit: Vec<f64> = w.iter().map(|v| v / n).collect();
            let m = s.min_margin(&unit);
            return Some((unit, m));
        }
        // refresh the running norm against drift
        wn2 = norm_sq(&w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_dataset, FeatureLaw, Label, MarginSpec};
    use crate::label;
    use crate::rng::{derive_stream, SharedSeed};

    fn two_points() -> Dataset {
        let mut s = Dataset::new(2, 0.0).unwrap();
        s.push(&[1.0, 0.0], Label::Pos).unwrap();
        s.push(&[-1.0, 0.0], Label::Neg).unwrap();
        s
    }

    #[test]
    fn axis_aligned_pair() {
        let w = svm_margin(&two_points(), 0.5, 1000).unwrap();
        assert_eq!(w.weights(), &[1.0, 0.0]);
        let mut f = Dataset::new(2, 0.0).unwrap();
        f.push(&[1.0, 0.0], Label::Neg).unwrap();
        f.push(&[-1.0, 0.0], Label::Pos).unwrap();
        assert_eq!(svm_margin(&f, 0.5, 1000).unwrap().weights(), &[-1.0, 0.0]);
    }

    #[test]
    fn inseparable_batch_is_reported() {
        let mut s = two_points();
        s.push(&[2.0, 0.0], Label::Neg).unwrap();
        match svm_margin(&s, 0.1, 500) {
            Err(Error::InfeasibleMargin { target, .. }) => assert_eq!(target, 0.1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn certified_margin_on_planted_data() {
        for seed in 0..20u64 {
            let mut st = derive_stream(SharedSeed(seed), &label!["w"]);
            let spec = MarginSpec::random(30, 0.3, FeatureLaw::UniformSphere, &mut st).unwrap();
            let s = gen_dataset(&spec, 200, &mut derive_stream(SharedSeed(seed), &label!["d"])).unwrap();
            let w = svm_margin(&s, 0.15, DEFAULT_SVM_BUDGET).unwrap();
            assert!(s.min_margin(w.weights()) >= 0.15);
        }
    }

    #[test]
    fn surrogate_values_from_the_definition() {
        let tau = 0.4;
        let x = [0.6, 0.0];
        assert!((surrogate_loss(&[tau / 0.6, 0.0], &x, 1.0, tau)).abs() < 1e-12);
        assert!((surrogate_loss(&[tau / 1.2, 0.0], &x, 1.0, tau) - 1.0).abs() < 1e-12);
        assert_eq!(surrogate_loss(&[0.0, 0.0], &x, -1.0, tau), 2.0);
    }

    #[test]
    fn hand_objective() {
        // h at (1,0): max(0, 2 − 5·0.5) = 0; at (−1,0) with y=+1: 2 + 2.5 = 4.5
        let mut s = Dataset::new(2, 0.0).unwrap();
        s.push(&[1.0, 0.0], Label::Pos).unwrap();
        s.push(&[-1.0, 0.0], Label::Pos).unwrap();
        let p = SurrogateParams { tau: 0.4, mu: 0.01 };
        let f = regularized_objective(&[0.5, 0.5], &s, &p).unwrap();
        assert!((f - (4.5 / 2.0 + 0.01 * 0.5)).abs() < 1e-12);
        assert_eq!(regularized_objective(&[0.0, 0.0], &s, &p).unwrap(), 2.0);
    }

    #[test]
    fn margin_tau_vector_costs_only_regularizer() {
        let mut st = derive_stream(SharedSeed(7), &label!["w"]);
        let spec = MarginSpec::random(8, 0.3, FeatureLaw::UniformSphere, &mut st).unwrap();
        let s = gen_dataset(&spec, 500, &mut derive_stream(SharedSeed(7), &label!["d"])).unwrap();
        let p = SurrogateParams::for_accuracy(0.1, 0.3).unwrap();
        let f = regularized_objective(&spec.w_star, &s, &p).unwrap();
        assert!(f <= 0.1 / 10.0 + 1e-12);
    }

    #[test]
    fn sgd_weights_sum_to_one() {
        let t = 5usize;
        let s: f64 = (1..=t).map(|i| 2.0 * i as f64 / (t * (t + 1)) as f64).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sgd_first_two_steps_by_hand() {
        let mut s = Dataset::new(2, 0.0).unwrap();
        s.push(&[0.1, 0.0], Label::Pos).unwrap();
        let p = SurrogateParams { tau: 0.5, mu: 0.5 };
        // w₁ = 0 contributes nothing; w₂ = Π(η₁·(2/τ)·x) with η₁ = 2/(μ·2) = 2
        // = Π((0.8, 0)) = (0.8, 0); T = 2 weights (1/3, 2/3)
        let w = sgd_surrogate(&s, &p, 2, &mut derive_stream(SharedSeed(0), &label!["s"])).unwrap();
        assert!((w[0] - 2.0 / 3.0 * 0.8).abs() < 1e-15, "{w:?}");
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn sgd_consumes_one_word_per_step() {
        let s = two_points();
        let p = SurrogateParams { tau: 0.5, mu: 0.01 };
        let mut st = derive_stream(SharedSeed(1), &label!["s"]);
        sgd_surrogate(&s, &p, 37, &mut st).unwrap();
        assert_eq!(st.counter(), 37);
    }

    #[test]
    fn select_best_is_argmin_with_low_index_ties() {
        assert_eq!(select_best(&[0.3, 0.1, 0.2, 0.1]), Some(1));
        assert_eq!(select_best(&[f64::NAN, 0.5]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn repetitions_grow_as_delta_shrinks() {
        let (_, a) = boost_sizes(0.1, 0.3, 0.5, 4.0, 3.0).unwrap();
        let (_, b) = boost_sizes(0.1, 0.3, 0.01, 4.0, 3.0).unwrap();
        assert!(a < b);
        let (t, _) = boost_sizes(0.1, 0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(t, 400);
    }

    #[test]
    fn boost_sgd_picks_planted_optimum() {
        let mut st = derive_stream(SharedSeed(11), &label!["w"]);
        let spec = MarginSpec::random(5, 0.4, FeatureLaw::UniformSphere, &mut st).unwrap();
        let s = gen_dataset(&spec, 400, &mut derive_stream(SharedSeed(11), &label!["d"])).unwrap();
        let out = boost_sgd(&s, 0.2, 0.4, 0.1, 1.0, 1.0, &derive_stream(SharedSeed(11), &label!["b"])).unwrap();
        assert_eq!(out.estimates.len(), (1.0 * 10f64.ln()).ceil() as usize);
        assert_eq!(select_best(&out.estimates), Some(out.chosen));
        assert!((norm(out.halfspace.weights()) - 1.0).abs() < 1e-12);
        let p = SurrogateParams::for_accuracy(0.2, 0.4).unwrap();
        assert!(regularized_objective(out.halfspace.weights(), &s, &p).unwrap() <= 0.2);
    }
}
