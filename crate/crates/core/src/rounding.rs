//! Randomized grid rounding with shared offsets and thresholds.
//!
//! A [`RoundingGrid`] of cell width `β` is shifted by offsets `o ∈ [0, β)^k`.
//! A point `z` lies in the half-open cell whose lower corner is
//! `o + β·⌊(z − o)/β⌋`; each coordinate is then rounded down to that corner
//! when `u[i] ≤ p[i]` and up otherwise, where `p[i]` is chosen so that the
//! rounded point equals `z` in expectation.
//!
//! Rounded points are compared by their integer cell coordinates, never by
//! floating-point value, so "same output" is an exact predicate.
//!
//! The floor is computed in double precision. Inputs within one ulp of a grid
//! line may land in either neighbouring cell; the offsets are continuous so
//! this has probability ~0 for data-dependent `z`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::rng::RandomStream;

/// Content fingerprint of a grid; two grids with equal parameters share it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridId(pub u64);

impl fmt::Display for GridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridRecord", try_from = "GridRecord")]
pub struct RoundingGrid {
    /// Cell width β.
    pub beta: f64,
    /// Offsets `o[i] ∈ [0, β]`.
    pub offsets: Vec<f64>,
    /// Thresholds `u[i] ∈ [0, 1]`.
    pub thresholds: Vec<f64>,
}

impl RoundingGrid {
    /// Builds a grid from explicit parameters, validating the invariants.
    pub fn from_parts(beta: f64, offsets: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid(format!("cell width must be positive, got {beta}")));
        }
        if offsets.is_empty() || offsets.len() != thresholds.len() {
            return Err(invalid(format!(
                "offsets ({}) and thresholds ({}) must be equal, nonzero lengths",
                offsets.len(),
                thresholds.len()
            )));
        }
        if let Some(o) = offsets.iter().find(|o| !(0.0..=beta).contains(*o)) {
            return Err(invalid(format!("offset {o} outside [0, {beta}]")));
        }
        if let Some(u) = thresholds.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(invalid(format!("threshold {u} outside [0, 1]")));
        }
        Ok(Self {
            beta,
            offsets,
            thresholds,
        })
    }

    pub fn dim(&self) -> usize {
        self.offsets.len()
    }

    pub fn id(&self) -> GridId {
        let mut h = Sha256::new();
        h.update(self.beta.to_bits().to_le_bytes());
        for v in self.offsets.iter().chain(&self.thresholds) {
            h.update(v.to_bits().to_le_bytes());
        }
        let d = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        GridId(u64::from_le_bytes(b))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| invalid(format!("bad grid json: {e}")))
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite coordinate {v}")));
        }
        Ok(())
    }

    #[inline]
    fn cell(&self, i: usize, zi: f64) -> Result<i64> {
        let c = ((zi - self.offsets[i]) / self.beta).floor();
        if c.abs() >= 9.007_199_254_740_992e15 {
            return Err(invalid(format!("coordinate {zi} is too far from the grid origin")));
        }
        Ok(c as i64)
    }

    #[inline]
    pub fn corner_value(&self, i: usize, c: i64) -> f64 {
        self.offsets[i] + c as f64 * self.beta
    }
}

/// JSON form of a grid: `{"k", "beta", "offsets", "thresholds"}`.
#[derive(Serialize, Deserialize)]
struct GridRecord {
    k: usize,
    beta: f64,
    offsets: Vec<f64>,
    thresholds: Vec<f64>,
}

impl From<RoundingGrid> for GridRecord {
    fn from(g: RoundingGrid) -> Self {
        GridRecord {
            k: g.dim(),
            beta: g.beta,
            offsets: g.offsets,
            thresholds: g.thresholds,
        }
    }
}

impl TryFrom<GridRecord> for RoundingGrid {
    type Error = Error;

    fn try_from(r: GridRecord) -> Result<Self> {
        if r.k != r.offsets.len() {
            return Err(invalid(format!("k = {} but {} offsets", r.k, r.offsets.len())));
        }
        RoundingGrid::from_parts(r.beta, r.offsets, r.thresholds)
    }
}

/// A grid vertex, identified by integer coordinates on a specific grid.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub coords: Vec<i64>,
    grid: Arc<RoundingGrid>,
    grid_id: GridId,
}

impl PartialEq for GridPoint {
    fn eq(&self, other: &Self) -> bool {
        self.grid_id == other.grid_id && self.coords == other.coords
    }
}

impl Eq for GridPoint {}

impl GridPoint {
    pub fn grid(&self) -> &RoundingGrid {
        &self.grid
    }

    pub fn grid_id(&self) -> GridId {
        self.grid_id
    }

    /// Real coordinates `o[i] + c[i]·β`.
    pub fn value(&self) -> Vec<f64> {
        self.coords
            .iter()
            .enumerate()
            .map(|(i, &c)| self.grid.corner_value(i, c))
            .collect()
    }
}

/// Shared handle so grid points can refer back to their grid cheaply.
#[derive(Debug, Clone)]
pub struct GridHandle {
    grid: Arc<RoundingGrid>,
    id: GridId,
}

impl GridHandle {
    pub fn new(grid: RoundingGrid) -> Self {
        let id = grid.id();
        Self {
            grid: Arc::new(grid),
            id,
        }
    }

    pub fn grid(&self) -> &RoundingGrid {
        &self.grid
    }

    pub fn id(&self) -> GridId {
        self.id
    }

    fn point(&self, coords: Vec<i64>) -> GridPoint {
        GridPoint {
            coords,
            grid: Arc::clone(&self.grid),
            grid_id: self.id,
        }
    }

    /// Lower corner `o(z)` of the half-open cell containing `z`.
    pub fn floor_corner(&self, z: &[f64]) -> Result<GridPoint> {
        self.grid.check_input(z)?;
        let coords = z
            .iter()
            .enumerate()
            .map(|(i, &zi)| self.grid.cell(i, zi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.point(coords))
    }

    /// `p[i] = (o(z)[i] + β − z[i]) / β`, the weight on the lower corner.
    pub fn rounding_probability(&self, z: &[f64]) -> Result<Vec<f64>> {
        let corner = self.floor_corner(z)?;
        Ok(corner
            .value()
            .iter()
            .zip(z)
            .map(|(&lo, &zi)| ((lo + self.grid.beta - zi) / self.grid.beta).clamp(0.0, 1.0))
            .collect())
    }

    /// Rounds `z` down on coordinates with `u[i] ≤ p[i]`, up elsewhere.
    pub fn ak_round(&self, z: &[f64]) -> Result<GridPoint> {
        self.grid.check_input(z)?;
        let g = &*self.grid;
        let mut coords = Vec::with_capacity(z.len());
        for (i, &zi) in z.iter().enumerate() {
            let c = g.cell(i, zi)?;
            let p = ((g.corner_value(i, c) + g.beta - zi) / g.beta).clamp(0.0, 1.0);
            coords.push(if g.thresholds[i] <= p { c } else { c + 1 });
        }
        Ok(self.point(coords))
    }
}

/// Draws a grid: offsets `o[i] ~ U[0, β)` in index order from
/// `offset_stream`, then thresholds `u[i] ~ U[0, 1)` from `threshold_stream`.
pub fn make_grid(
    k: usize,
    beta: f64,
    offset_stream: &mut RandomStream,
    threshold_stream: &mut RandomStream,
) -> Result<GridHandle> {
    if k == 0 {
        return Err(invalid("grid dimension must be at least 1"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid(format!("cell width must be positive, got {beta}")));
    }
    let offsets = (0..k)
        .map(|_| offset_stream.uniform(0.0, beta))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = (0..k)
        .map(|_| threshold_stream.uniform(0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(GridHandle::new(RoundingGrid::from_parts(beta, offsets, thresholds)?))
}

pub fn floor_corner(z: &[f64], grid: &GridHandle) -> Result<GridPoint> {
    grid.floor_corner(z)
}

pub fn rounding_probability(z: &[f64], grid: &GridHandle) -> Result<Vec<f64>> {
    grid.rounding_probability(z)
}

pub fn ak_round(z: &[f64], grid: &GridHandle) -> Result<GridPoint> {
    grid.ak_round(z)
}

pub fn value(gp: &GridPoint) -> Vec<f64> {
    gp.value()
}
