//! Johnson–Lindenstrauss projections drawn from a shared stream.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;

/// Default constant in `k = ⌈c · ε⁻² · ln(1/δ)⌉`.
pub const DEFAULT_C_JL: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JlFamily {
    /// Entries i.i.d. N(0, 1/k).
    #[default]
    Gaussian,
    /// Entries i.i.d. uniform on {−1/√k, +1/√k}.
    Rademacher,
}

/// Dense row-major `k × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JlMatrix {
    rows: usize,
    cols: usize,
    family: JlFamily,
    entries: Vec<f64>,
}

impl JlMatrix {
    /// Builds a matrix from explicit row-major entries (fixtures, tests).
    pub fn from_rows(rows: usize, cols: usize, family: JlFamily, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            family,
            entries,
        })
    }

    /// The `d × d` identity, used as a degenerate "projection".
    pub fn identity(d: usize) -> Result<Self> {
        let mut e = vec![0.0; d * d];
        for i in 0..d {
            e[i * d + i] = 1.0;
        }
        Self::from_rows(d, d, JlFamily::Gaussian, e)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn family(&self) -> JlFamily {
        self.family
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `A x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        self.project_into(x, &mut out);
        Ok(out)
    }

    /// `A x` into a caller buffer; lengths are the caller's responsibility.
    #[inline]
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *o = crate::linalg::dot(row, x);
        }
    }

    /// `Aᵀ b`.
    pub fn transpose_apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: b.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (bi, row) in b.iter().zip(self.entries.chunks_exact(self.cols)) {
            crate::linalg::axpy(*bi, row, &mut out);
        }
        Ok(out)
    }
}

/// Samples a JL matrix row-major from `stream`.
///
/// Gaussian entries consume `2·⌈kd/2⌉` words, Rademacher entries one word each.
pub fn sample_jl(stream: &mut RandomStream, k: usize, d: usize, family: JlFamily) -> Result<JlMatrix> {
    if k == 0 || d == 0 {
        return Err(invalid(format!("JL dimensions must be positive, got {k}x{d}")));
    }
    let scale = 1.0 / (k as f64).sqrt();
    let mut entries = vec![0.0; k * d];
    match family {
        JlFamily::Gaussian => {
            stream.fill_standard_normal(&mut entries);
            crate::linalg::scale(scale, &mut entries);
        }
        JlFamily::Rademacher => {
            for e in entries.iter_mut() {
                *e = stream.rademacher() * scale;
            }
        }
    }
    JlMatrix::from_rows(k, d, family, entries)
}

/// `k = ⌈c_jl · ε⁻² · ln(1/δ_JL)⌉`.
///
/// The ceiling ignores relative excess below 1e-12 so that exact products
/// such as `8 · 1 · ln(e)` are not pushed up by rounding noise.
pub fn required_dim(eps: f64, delta_jl: f64, c_jl: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0 + 1e-15) {
        return Err(invalid(format!("eps must be in (0, 1], got {eps}")));
    }
    if !(delta_jl > 0.0 && delta_jl < 1.0) {
        return Err(invalid(format!("delta_jl must be in (0, 1), got {delta_jl}")));
    }
    if !(c_jl.is_finite() && c_jl > 0.0) {
        return Err(invalid(format!("c_jl must be positive, got {c_jl}")));
    }
    let raw = c_jl * (1.0 / delta_jl).ln() / (eps * eps);
    Ok(ceil_tolerant(raw).max(1.0) as usize)
}

pub(crate) fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label;
    use crate::linalg::{dot, norm_sq};
    use crate::rng::{derive_stream, SharedSeed};

    #[test]
    fn same_seed_same_matrix() {
        let s = SharedSeed(3);
        let a = sample_jl(&mut derive_stream(s, &label!["jl"]), 5, 7, JlFamily::Gaussian).unwrap();
        let b = sample_jl(&mut derive_stream(s, &label!["jl"]), 5, 7, JlFamily::Gaussian).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rademacher_entries_are_scaled_signs() {
        let k = 16;
        let a = sample_jl(&mut derive_stream(SharedSeed(1), &label!["r"]), k, 9, JlFamily::Rademacher)
            .unwrap();
        let s = 1.0 / (k as f64).sqrt();
        assert!(a.entries().iter().all(|&e| e == s || e == -s));
    }

    #[test]
    fn gaussian_entries_center_and_scale() {
        let a = sample_jl(&mut derive_stream(SharedSeed(2), &label!["g"]), 100, 100, JlFamily::Gaussian)
            .unwrap();
        let n = a.entries().len() as f64;
        let mean = a.entries().iter().sum::<f64>() / n;
        assert!(mean.abs() <= 0.05 * 0.1, "mean {mean}");
        let var = a.entries().iter().map(|e| e * e).sum::<f64>() / n;
        assert!((var - 0.01).abs() < 0.001, "var {var}");
    }

    #[test]
    fn project_zero_and_identity() {
        let a = sample_jl(&mut derive_stream(SharedSeed(4), &label!["p"]), 3, 4, JlFamily::Gaussian)
            .unwrap();
        assert_eq!(a.project(&[0.0; 4]).unwrap(), vec![0.0; 3]);
        let id = JlMatrix::identity(3).unwrap();
        assert_eq!(id.project(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
        assert!(matches!(a.project(&[1.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(a.transpose_apply(&[1.0; 4]).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let a = sample_jl(&mut derive_stream(SharedSeed(5), &label!["t"]), 6, 11, JlFamily::Gaussian)
            .unwrap();
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..6).map(|i| (i as f64 * 1.1).cos()).collect();
        let lhs = dot(&a.project(&x).unwrap(), &b);
        let rhs = dot(&x, &a.transpose_apply(&b).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn required_dim_examples() {
        assert_eq!(required_dim(1.0, (-1.0f64).exp(), 8.0).unwrap(), 8);
        let k1 = required_dim(0.4, 0.01, 8.0).unwrap();
        let k2 = required_dim(0.2, 0.01, 8.0).unwrap();
        // ⌈4x⌉ vs 4⌈x⌉ differ by at most 3
        let raw = 8.0 * 100f64.ln() / 0.16;
        assert_eq!(k1, raw.ceil() as usize);
        assert_eq!(k2, (4.0 * raw).ceil() as usize);
        assert!(k2 >= 4 * k1 - 3 && k2 <= 4 * k1);
    }

    #[test]
    fn required_dim_rejects_bad_parameters() {
        assert!(required_dim(0.0, 0.1, 8.0).is_err());
        assert!(required_dim(0.5, 0.0, 8.0).is_err());
        assert!(required_dim(0.5, 1.0, 8.0).is_err());
        assert!(required_dim(0.5, 0.1, 0.0).is_err());
        assert!(required_dim(1.5, 0.1, 8.0).is_err());
    }

    #[test]
    fn linearity() {
        let a = sample_jl(&mut derive_stream(SharedSeed(6), &label!["lin"]), 20, 50, JlFamily::Gaussian)
            .unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let (ca, cb) = (2.5, -0.75);
        let comb: Vec<f64> = x.iter().zip(&y).map(|(u, v)| ca * u + cb * v).collect();
        let lhs = a.project(&comb).unwrap();
        let ax = a.project(&x).unwrap();
        let ay = a.project(&y).unwrap();
        let rhs: Vec<f64> = ax.iter().zip(&ay).map(|(u, v)| ca * u + cb * v).collect();
        let err: f64 = lhs.iter().zip(&rhs).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * norm_sq(&rhs).sqrt());
    }
}
