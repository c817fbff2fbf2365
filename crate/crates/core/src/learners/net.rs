//! Finite hypothesis nets over the unit ball and replicable selection among
//! them.

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::exec::{map_indices, Execution};
use crate::linalg::dot;
use crate::rng::RandomStream;

/// Default cap on the number of net points.
pub const DEFAULT_MAX_NET: usize = 4_000_000;

/// Lattice `pitch · Zᵏ` intersected with the closed unit ball, in lexicographic
/// order of the integer coordinates (first coordinate slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeNet {
    k: usize,
    spacing: f64,
    pitch: f64,
    /// Largest integer radius, `⌊1/pitch⌋`.
    m: i32,
    coords: Vec<i32>,
}

impl LatticeNet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[i32] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.coords(i).iter().map(|&c| c as f64 * self.pitch).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

fn in_ball(sq: i64, pitch: f64) -> bool {
    sq as f64 * pitch * pitch <= 1.0 + 1e-12
}

/// Lattice net with pitch `spacing/√k`: every point of the unit ball lies
/// within `spacing/2` of a net point, and every net point has norm ≤ 1.
pub fn build_net(k: usize, spacing: f64, max_points: usize) -> Result<LatticeNet> {
    if k == 0 {
        return Err(invalid("net dimension must be positive"));
    }
    if !(spacing > 0.0 && spacing <= 1.0) {
        return Err(invalid(format!("net spacing must be in (0, 1], got {spacing}")));
    }
    let pitch = spacing / (k as f64).sqrt();
    let m = (1.0 / pitch + 1e-12).floor() as i32;
    // the ball holds about vol(Bᵏ)/pitchᵏ lattice points
    let log_ball = log_ball_volume(k) - k as f64 * pitch.ln();
    if log_ball > (1.05 * max_points as f64 + 10.0).ln() {
        return Err(Error::BudgetExceeded {
            quantity: "net size",
            value: log_ball.exp(),
            limit: max_points as f64,
        });
    }
    let mut coords = Vec::new();
    let mut c = vec![-m; k];
    loop {
        let sq: i64 = c.iter().map(|&v| i64::from(v) * i64::from(v)).sum();
        if in_ball(sq, pitch) {
            if coords.len() / k >= max_points {
                return Err(Error::BudgetExceeded {
                    quantity: "net size",
                    value: (coords.len() / k + 1) as f64,
                    limit: max_points as f64,
                });
            }
            coords.extend_from_slice(&c);
        }
        // odometer, last coordinate fastest
        let mut j = k;
        loop {
            if j == 0 {
                return Ok(LatticeNet {
                    k,
                    spacing,
                    pitch,
                    m,
                    coords,
                });
            }
            j -= 1;
            if c[j] < m {
                c[j] += 1;
                break;
            }
            c[j] = -m;
        }
    }
}

fn log_ball_volume(k: usize) -> f64 {
    // ln V_k with V_k = 2π/k · V_{k−2}
    let mut v = if k % 2 == 0 { 0.0 } else { 2f64.ln() };
    let mut j = if k % 2 == 0 { 2 } else { 3 };
    while j <= k {
        v += (2.0 * std::f64::consts::PI / j as f64).ln();
        j += 2;
    }
    v
}

/// Empirical error counts `#{y · hᵀx ≤ 0}` of every hypothesis in `hyps`.
pub fn brute_force_errors(s: &Dataset, hyps: &[Vec<f64>]) -> Result<Vec<u32>> {
    hyps.iter()
        .map(|h| {
            if h.len() != s.dim() {
                return Err(Error::DimensionMismatch {
                    expected: s.dim(),
                    got: h.len(),
                });
            }
            Ok(s.iter().filter(|(x, y)| y.sign() * dot(h, x) <= 0.0).count() as u32)
        })
        .collect()
}

/// Error counts of every net point, in net order.
///
/// Net points sharing their first `k−1` coordinates form a column; within a
/// column each sample is misclassified on an interval of the last coordinate,
/// so a column costs `O(n + m)` after its prefix sums.
pub fn net_errors(net: &LatticeNet, s: &Dataset, exec: Execution) -> Result<Vec<u32>> {
    let k = net.k;
    if s.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: s.dim(),
        });
    }
    if net.is_empty() {
        return Ok(Vec::new());
    }
    // columns grouped by first coordinate, so slabs are contiguous in net order
    let mut slab_start = vec![0usize];
    for i in 1..net.len() {
        if net.coords(i)[0] != net.coords(i - 1)[0] {
            slab_start.push(i);
        }
    }
    slab_start.push(net.len());
    let slabs = map_indices(exec, slab_start.len() - 1, |j| {
        column_sweep(net, s, slab_start[j], slab_start[j + 1])
    });
    Ok(slabs.concat())
}

fn column_sweep(net: &LatticeNet, s: &Dataset, lo: usize, hi: usize) -> Vec<u32> {
    let k = net.k;
    let m = net.m as i64;
    let width = (2 * m + 1) as usize;
    let n = s.len();
    let mut out = Vec::with_capacity(hi - lo);
    let mut diff = vec![0i64; width + 1];
    // signed features y·x, and −1/(y·x_k) for the crossing point
    let signed: Vec<f64> = s.iter().flat_map(|(x, y)| x.iter().map(move |v| y.sign() * v)).collect();
    let neg_inv: Vec<f64> = (0..n).map(|t| -1.0 / signed[t * k + k - 1]).collect();
    let mut i = lo;
    while i < hi {
        let head = &net.coords(i)[..k - 1];
        let mut j = i;
        while j < hi && &net.coords(j)[..k - 1] == head {
            j += 1;
        }
        diff.iter_mut().for_each(|v| *v = 0);
        let mut always = 0u32;
        for (t, &ni) in neg_inv.iter().enumerate() {
            let row = &signed[t * k..t * k + k];
            let u = head.iter().zip(row).map(|(&c, xv)| c as f64 * xv).sum::<f64>();
            let sl = row[k - 1];
            // error iff u + c·sl ≤ 0
            if sl > 0.0 {
                let b = clamp_floor(u * ni, m);
                if b >= -m {
                    diff[0] += 1;
                    diff[(b + m + 1) as usize] -= 1;
                }
            } else if sl < 0.0 {
                let a = clamp_ceil(u * ni, m);
                if a <= m {
                    diff[(a + m) as usize] += 1;
                    diff[width] -= 1;
                }
            } else if u <= 0.0 {
                always += 1;
            }
        }
        let mut run = 0i64;
        let mut counts = vec![0u32; width];
        for (c, d) in counts.iter_mut().zip(&diff) {
            run += d;
            *c = run as u32 + always;
        }
        for p in i..j {
            let ck = net.coords(p)[k - 1] as i64;
            out.push(counts[(ck + m) as usize]);
        }
        debug_assert!(out.iter().all(|&c| c as usize <= n));
        i = j;
    }
    out
}

fn clamp_floor(v: f64, m: i64) -> i64 {
    if v.is_nan() {
        return -m - 1;
    }
    let f = v.floor();
    if f >= m as f64 {
        m
    } else if f < -(m as f64) {
        -m - 1
    } else {
        f as i64
    }
}

fn clamp_ceil(v: f64, m: i64) -> i64 {
    if v.is_nan() {
        return m + 1;
    }
    let c = v.ceil();
    if c <= -(m as f64) {
        -m
    } else if c > m as f64 {
        m + 1
    } else {
        c as i64
    }
}

/// Outcome of [`select_replicable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub theta: f64,
    pub bucket: i64,
    pub bucket_size: usize,
}

/// Replicable minimum-risk selection.
///
/// Draws `θ ~ U[0, Δ)` from `stream/theta`, buckets every risk as
/// `⌊(r − θ)/Δ⌋`, and among the lowest bucket returns the hypothesis whose
/// priority word `stream/priority[i]` is smallest (lowest index on ties).
pub fn select_replicable(risks: &[f64], width: f64, stream: &RandomStream) -> Result<Selection> {
    if risks.is_empty() {
        return Err(invalid("hypothesis class is empty"));
    }
    if !(width > 0.0 && width.is_finite()) {
        return Err(invalid(format!("risk bucket width must be positive, got {width}")));
    }
    let theta = stream.child("theta").uniform(0.0, width)?;
    let bucket = |r: f64| ((r - theta) / width).floor() as i64;
    let low = risks
        .iter()
        .map(|&r| bucket(r))
        .min()
        .unwrap_or(0);
    let priority = stream.child("priority");
    let mut best: Option<(u64, usize)> = None;
    let mut size = 0usize;
    for (i, &r) in risks.iter().enumerate() {
        if bucket(r) != low {
            continue;
        }
        size += 1;
        let p = priority.draw_at(i as u64);
        if best.is_none_or(|(bp, _)| p < bp) {
            best = Some((p, i));
        }
    }
    let (_, index) = best.expect("lowest bucket is nonempty");
    Ok(Selection {
        index,
        theta,
        bucket: low,
        bucket_size: size,
    })
}

/// Empirical risks of `hyps` on `s`, then [`select_replicable`].
pub fn finite_rlearner(s: &Dataset, hyps: &[Vec<f64>], width: f64, stream: &RandomStream) -> Result<usize> {
    if s.is_empty() {
        return Err(invalid("empty sample"));
    }
    let n = s.len() as f64;
    let risks: Vec<f64> = brute_force_errors(s, hyps)?.into_iter().map(|c| c as f64 / n).collect();
    Ok(select_replicable(&risks, width, stream)?.index)
}
