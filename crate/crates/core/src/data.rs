//! Labeled datasets, synthetic τ-margin distributions, loss evaluators and the
//! plain-text dataset format.
//!
//! File format: a header line `d n tau`, then `n` lines of `d` floats followed
//! by a label in {-1, 1}, all space separated. Floats are written in shortest
//! round-trip form so `load(save(S)) == S` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{derive_stream, RandomStream, SharedSeed, StreamLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    /// `Pos` for `s > 0`, `Neg` otherwise.
    #[inline]
    pub fn from_sign(s: f64) -> Self {
        if s > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }
}

/// A unit normal vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    w: Vec<f64>,
}

impl Halfspace {
    /// Normalizes `w`; fails on the zero or non-finite vector.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let n = norm(&w);
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Degenerate("halfspace normal has zero or non-finite norm".into()));
        }
        Ok(Self {
            w: w.into_iter().map(|v| v / n).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.w
    }

    /// `sign(wᵀx)` with `sign(0) = Neg`.
    pub fn predict(&self, x: &[f64]) -> Label {
        Label::from_sign(dot(&self.w, x))
    }
}

/// Row-major feature matrix with labels and the declared margin (0 if unknown).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    dim: usize,
    tau: f64,
    xs: Vec<f64>,
    ys: Vec<Label>,
}

impl Dataset {
    pub fn new(dim: usize, tau: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dataset dimension must be positive"));
        }
        if !(tau.is_finite() && (0.0..1.0).contains(&tau)) {
            return Err(invalid(format!("declared margin must be in [0, 1), got {tau}")));
        }
        Ok(Self {
            dim,
            tau,
            xs: Vec::new(),
            ys: Vec::new(),
        })
    }

    pub fn with_capacity(dim: usize, tau: f64, n: usize) -> Result<Self> {
        let mut s = Self::new(dim, tau)?;
        s.xs.reserve(n * dim);
        s.ys.reserve(n);
        Ok(s)
    }

    /// Appends a sample; `x` must be finite, nonzero and of the right length.
    pub fn push(&mut self, x: &[f64], y: Label) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature vector has a non-finite entry"));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Err(invalid("feature vector is zero"));
        }
        self.xs.extend_from_slice(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> Label {
        self.ys[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.xs
    }

    pub fn labels(&self) -> &[Label] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        self.xs.chunks_exact(self.dim).zip(self.ys.iter().copied())
    }

    /// Samples `start..end` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if start > end || end > self.len() {
            return Err(Error::DataExhausted {
                start,
                end,
                available: self.len(),
            });
        }
        Ok(Dataset {
            dim: self.dim,
            tau: self.tau,
            xs: self.xs[start * self.dim..end * self.dim].to_vec(),
            ys: self.ys[start..end].to_vec(),
        })
    }

    /// Every feature vector scaled to unit norm.
    pub fn normalized(&self) -> Dataset {
        let mut xs = self.xs.clone();
        for row in xs.chunks_exact_mut(self.dim) {
            let n = norm(row);
            row.iter_mut().for_each(|v| *v /= n);
        }
        Dataset { xs, ..self.clone_meta() }
    }

    /// Applies `f` to every feature vector, producing vectors of length `dim`.
    /// Samples mapped to zero are kept (projected data may legitimately vanish).
    pub fn map_features(&self, dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Dataset> {
        if dim == 0 {
            return Err(invalid("mapped dimension must be positive"));
        }
        let mut xs = vec![0.0; self.len() * dim];
        for (src, dst) in self.xs.chunks_exact(self.dim).zip(xs.chunks_exact_mut(dim)) {
            f(src, dst);
        }
        Ok(Dataset {
            dim,
            tau: self.tau,
            xs,
            ys: self.ys.clone(),
        })
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            tau: self.tau,
            xs: Vec::new(),
            ys: self.ys.clone(),
        }
    }

    /// Smallest `y · wᵀx/‖x‖` over the set (`+∞` when empty).
    pub fn min_margin(&self, w: &[f64]) -> f64 {
        self.iter()
            .map(|(x, y)| y.sign() * dot(w, x) / norm(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * self.dim * 22);
        let _ = writeln!(s, "{} {} {}", self.dim, self.len(), self.tau);
        for (x, y) in self.iter() {
            for v in x {
                let _ = write!(s, "{v} ");
            }
            let _ = writeln!(s, "{}", if y == Label::Pos { "1" } else { "-1" });
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Dataset> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header `d n tau`".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(hline, format!("header needs 3 fields, found {}", fields.len())));
        }
        let d: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(hline, format!("bad dimension `{}`", fields[0])))?;
        let n: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(hline, format!("bad sample count `{}`", fields[1])))?;
        let tau: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(hline, format!("bad margin `{}`", fields[2])))?;
        let mut ds = Dataset::with_capacity(d, tau, n).map_err(|e| parse_err(hline, e.to_string()))?;
        let mut x = vec![0.0; d];
        for (line, row) in lines.by_ref().take(n) {
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != d + 1 {
                return Err(parse_err(line, format!("expected {} columns, found {}", d + 1, toks.len())));
            }
            for (xi, t) in x.iter_mut().zip(&toks[..d]) {
                *xi = t
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad number `{t}`")))?;
            }
            let y = match toks[d].parse::<f64>() {
                Ok(v) if v == 1.0 => Label::Pos,
                Ok(v) if v == -1.0 => Label::Neg,
                _ => return Err(parse_err(line, format!("label must be -1 or 1, found `{}`", toks[d]))),
            };
            ds.push(&x, y).map_err(|e| parse_err(line, e.to_string()))?;
        }
        if ds.len() != n {
            return Err(parse_err(
                text.lines().count() + 1,
                format!("header promises {n} samples, found {}", ds.len()),
            ));
        }
        if let Some((line, _)) = lines.next() {
            return Err(parse_err(line, "trailing data after the declared samples"));
        }
        Ok(ds)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, ds.to_text())?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_text(&std::fs::read_to_string(path)?)
}

/// Fraction of `S` with `y · wᵀx ≤ 0`.
pub fn error_rate(w: &Halfspace, s: &Dataset) -> Result<f64> {
    check_eval(w, s)?;
    let bad = s
        .iter()
        .filter(|(x, y)| y.sign() * dot(w.weights(), x) <= 0.0)
        .count();
    Ok(bad as f64 / s.len() as f64)
}

/// Fraction of `S` with `y · wᵀx/‖x‖ < θ`.
pub fn margin_loss_rate(w: &Halfspace, s: &Dataset, theta: f64) -> Result<f64> {
    check_eval(w, s)?;
    let bad = s
        .iter()
        .filter(|(x, y)| y.sign() * dot(w.weights(), x) / norm(x) < theta)
        .count();
    Ok(bad as f64 / s.len() as f64)
}

fn check_eval(w: &Halfspace, s: &Dataset) -> Result<()> {
    if s.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    if w.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: w.dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum FeatureLaw {
    /// Uniform direction on the sphere; points inside the margin band are
    /// reflected out of it along `w*`.
    UniformSphere,
    /// `x = y·w* + σ·g` with `g` standard normal; margin deficits are
    /// reflected as above.
    TwoCluster { sigma: f64 },
}

/// A τ-margin distribution around `w*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub d: usize,
    pub tau: f64,
    pub w_star: Vec<f64>,
    pub law: FeatureLaw,
    /// Feature norms drawn uniformly from `[lo, hi)`; unit norms when `None`.
    pub radius: Option<(f64, f64)>,
}

impl MarginSpec {
    pub fn new(tau: f64, w_star: Vec<f64>, law: FeatureLaw) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(invalid(format!("margin must be in (0, 1), got {tau}")));
        }
        let d = w_star.len();
        let w = Halfspace::new(w_star)?.into_weights();
        if let FeatureLaw::TwoCluster { sigma } = law {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(invalid(format!("cluster spread must be positive, got {sigma}")));
            }
        }
        Ok(Self {
            d,
            tau,
            w_star: w,
            law,
            radius: None,
        })
    }

    /// `w*` drawn uniformly from the sphere using `stream`.
    pub fn random(d: usize, tau: f64, law: FeatureLaw, stream: &mut RandomStream) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let mut w = vec![0.0; d];
        loop {
            stream.fill_standard_normal(&mut w);
            if norm(&w) > 0.0 {
                break;
            }
        }
        Self::new(tau, w, law)
    }

    pub fn with_radius(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(invalid(format!("radius range must satisfy 0 < lo < hi, got [{lo}, {hi})")));
        }
        self.radius = Some((lo, hi));
        Ok(self)
    }

    pub fn halfspace(&self) -> Halfspace {
        Halfspace {
            w: self.w_star.clone(),
        }
    }

    /// Draws one sample into `x`.
    ///
    /// Consumes `2⌈d/2⌉` words, plus one for the label under the two-cluster
    /// law and one for the radius when set.
    pub fn sample_into(&self, stream: &mut RandomStream, x: &mut [f64]) -> Result<Label> {
        let w = &self.w_star;
        let (y, r) = match self.law {
            FeatureLaw::UniformSphere => {
                stream.fill_standard_normal(x);
                let n = norm(x);
                if !(n > 0.0) {
                    x.copy_from_slice(w);
                } else {
                    x.iter_mut().for_each(|v| *v /= n);
                }
                let t = dot(w, x);
                let y = if t >= 0.0 { Label::Pos } else { Label::Neg };
                if y.sign() * t < self.tau {
                    let s = y.sign() * t;
                    let target = self.tau + s * (1.0 - self.tau);
                    rebuild(x, w, y, target, self.tau);
                }
                (y, 1.0)
            }
            FeatureLaw::TwoCluster { sigma } => {
                let y = if stream.next_u64() >> 63 == 1 { Label::Pos } else { Label::Neg };
                stream.fill_standard_normal(x);
                for (xi, wi) in x.iter_mut().zip(w) {
                    *xi = y.sign() * wi + sigma * *xi;
                }
                let n = norm(x);
                if !(n > 0.0) {
                    x.copy_from_slice(w);
                    crate::linalg::scale(y.sign(), x);
                } else {
                    x.iter_mut().for_each(|v| *v /= n);
                }
                let s = y.sign() * dot(w, x);
                if s < self.tau {
                    let target = self.tau + (self.tau - s) * (1.0 - self.tau) / (1.0 + self.tau);
                    rebuild(x, w, y, target, self.tau);
                }
                (y, n.max(f64::MIN_POSITIVE))
            }
        };
        let scale = match self.radius {
            Some((lo, hi)) => stream.uniform(lo, hi)?,
            None if matches!(self.law, FeatureLaw::TwoCluster { .. }) => r,
            None => 1.0,
        };
        if scale != 1.0 {
            crate::linalg::scale(scale, x);
        }
        Ok(y)
    }
}

/// Replaces the unit vector `x` by `y·t·w + √(1−t²)·p̂`, where `p̂` is the
/// direction of `x` orthogonal to `w`, then nudges `t` up until the margin
/// check holds in floating point.
fn rebuild(x: &mut [f64], w: &[f64], y: Label, target: f64, tau: f64) {
    let along = dot(w, x);
    let mut perp: Vec<f64> = x.iter().zip(w).map(|(xi, wi)| xi - along * wi).collect();
    let pn = norm(&perp);
    if pn > 1e-300 {
        perp.iter_mut().for_each(|v| *v /= pn);
    } else {
        perp.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut t = target.clamp(tau, 1.0);
    loop {
        let c = (1.0 - t * t).max(0.0).sqrt();
        for ((xi, wi), pi) in x.iter_mut().zip(w).zip(&perp) {
            *xi = y.sign() * t * wi + c * pi;
        }
        if pn <= 1e-300 || y.sign() * dot(w, x) / norm(x) >= tau || t >= 1.0 {
            break;
        }
        t = (t + 1e-12).min(1.0);
    }
    if pn <= 1e-300 {
        x.copy_from_slice(w);
        crate::linalg::scale(y.sign(), x);
    }
}

/// `n` samples from `spec`, drawn sequentially from `stream`.
pub fn gen_dataset(spec: &MarginSpec, n: usize, stream: &mut RandomStream) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let mut ds = Dataset::with_capacity(spec.d, spec.tau, n)?;
    let mut x = vec![0.0; spec.d];
    for _ in 0..n {
        let y = spec.sample_into(stream, &mut x)?;
        ds.push(&x, y)?;
    }
    Ok(ds)
}

/// Indexed access to i.i.d. batches, so batches can be generated in any order
/// or in parallel.
pub trait SampleSource: Sync {
    fn dim(&self) -> usize;

    /// Batch `index` of `n` samples. Distinct indices give disjoint samples.
    fn batch(&self, index: usize, n: usize) -> Result<Dataset>;
}

/// Fresh synthetic batches, batch `i` drawn from stream `label/"batch"/i`.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub spec: MarginSpec,
    pub seed: SharedSeed,
    pub label: StreamLabel,
}

impl SyntheticSource {
    pub fn new(spec: MarginSpec, seed: SharedSeed) -> Self {
        Self {
            spec,
            seed,
            label: StreamLabel::new().push("data"),
        }
    }
}

impl SampleSource for SyntheticSource {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn batch(&self, index: usize, n: usize) -> Result<Dataset> {
        let label = self.label.clone().push("batch").push(index);
        gen_dataset(&self.spec, n, &mut derive_stream(self.seed, &label))
    }
}

/// Consecutive slices of a fixed dataset; batch `i` is samples `[i·n, (i+1)·n)`.
#[derive(Debug, Clone)]
pub struct DatasetSource {
    pub data: Dataset,
}

impl SampleSource for DatasetSource {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn batch(&self, index: usize, n: usize) -> Result<Dataset> {
        let start = index.saturating_mul(n);
        let end = start.saturating_add(n);
        self.data.slice(start, end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label;

    fn sphere(d: usize, tau: f64, seed: u64) -> MarginSpec {
        let mut st = derive_stream(SharedSeed(seed), &label!["w"]);
        MarginSpec::random(d, tau, FeatureLaw::UniformSphere, &mut st).unwrap()
    }

    #[test]
    fn tight_margin_in_the_plane() {
        let spec = sphere(2, 0.99, 1);
        let ds = gen_dataset(&spec, 2000, &mut derive_stream(SharedSeed(1), &label!["d"])).unwrap();
        let cos = 0.99f64;
        for (x, y) in ds.iter() {
            let c = y.sign() * dot(&spec.w_star, x) / norm(x);
            assert!(c >= cos, "angle too wide: {c}");
        }
    }

    #[test]
    fn generated_data_is_realizable() {
        for law in [FeatureLaw::UniformSphere, FeatureLaw::TwoCluster { sigma: 0.3 }] {
            let mut st = derive_stream(SharedSeed(2), &label!["w"]);
            let spec = MarginSpec::random(15, 0.3, law, &mut st).unwrap();
            let spec = spec.with_radius(0.5, 2.0).unwrap();
            let ds = gen_dataset(&spec, 5000, &mut derive_stream(SharedSeed(2), &label!["d"])).unwrap();
            let h = spec.halfspace();
            assert_eq!(error_rate(&h, &ds).unwrap(), 0.0);
            assert_eq!(margin_loss_rate(&h, &ds, 0.3).unwrap(), 0.0);
            let neg = Halfspace::new(h.weights().iter().map(|v| -v).collect()).unwrap();
            assert_eq!(error_rate(&neg, &ds).unwrap(), 1.0);
        }
    }

    #[test]
    fn min_margin_is_tight() {
        let spec = sphere(10, 0.3, 3);
        let ds = gen_dataset(&spec, 100_000, &mut derive_stream(SharedSeed(3), &label!["d"])).unwrap();
        let m = ds.min_margin(&spec.w_star);
        assert!(m >= 0.3 && m <= 0.35, "min margin {m}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = sphere(5, 0.2, 4);
        let a = gen_dataset(&spec, 50, &mut derive_stream(SharedSeed(9), &label!["d"])).unwrap();
        let b = gen_dataset(&spec, 50, &mut derive_stream(SharedSeed(9), &label!["d"])).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn hand_counted_error_rates() {
        let mut ds = Dataset::new(2, 0.0).unwrap();
        ds.push(&[1.0, 0.0], Label::Pos).unwrap();
        ds.push(&[2.0, 1.0], Label::Pos).unwrap();
        ds.push(&[-1.0, 0.5], Label::Neg).unwrap();
        ds.push(&[0.0, 1.0], Label::Pos).unwrap();
        let h = Halfspace::new(vec![1.0, 0.0]).unwrap();
        // last point has wᵀx = 0, which counts as an error
        assert_eq!(error_rate(&h, &ds).unwrap(), 0.25);
        assert_eq!(margin_loss_rate(&h, &ds, 0.0).unwrap(), 0.0);
        assert_eq!(margin_loss_rate(&h, &ds, 0.9).unwrap(), 0.75);
        assert!(error_rate(&h, &Dataset::new(2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut ds = Dataset::new(3, 0.25).unwrap();
        ds.push(&[0.1, -1e-300, 1.0 / 3.0], Label::Pos).unwrap();
        ds.push(&[std::f64::consts::PI, 2.0, -0.0], Label::Neg).unwrap();
        ds.push(&[5e-324, 1.7976931348623157e308, 0.5], Label::Pos).unwrap();
        let back = Dataset::from_text(&ds.to_text()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.features().iter().zip(ds.features()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        save_dataset(&p, &ds).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_cols = "2 2 0.1\n1 2 1\n3 -1\n";
        match Dataset::from_text(bad_cols) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = "2 1 0.1\n1 2 0\n";
        match Dataset::from_text(bad_label) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("label"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Dataset::from_text("2 3 0.1\n1 1 1\n").is_err());
        assert!(Dataset::from_text("x 1 0.1\n").is_err());
    }

    #[test]
    fn dataset_source_slices_and_exhausts() {
        let spec = sphere(4, 0.2, 5);
        let ds = gen_dataset(&spec, 10, &mut derive_stream(SharedSeed(5), &label!["d"])).unwrap();
        let src = DatasetSource { data: ds.clone() };
        assert_eq!(src.batch(1, 4).unwrap(), ds.slice(4, 8).unwrap());
        assert!(matches!(src.batch(2, 4), Err(Error::DataExhausted { .. })));
    }

    #[test]
    fn synthetic_batches_are_independent_of_order() {
        let src = SyntheticSource::new(sphere(6, 0.3, 6), SharedSeed(6));
        let b3 = src.batch(3, 20).unwrap();
        let _ = src.batch(2, 20).unwrap();
        assert_eq!(src.batch(3, 20).unwrap(), b3);
        assert_ne!(src.batch(2, 20).unwrap(), b3);
    }
}
