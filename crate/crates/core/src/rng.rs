//! Deterministic, labelled random streams.
//!
//! A [`RandomStream`] is keyed by `SHA-256(seed, label)` and produces its
//! output with ChaCha8 in counter mode, so the `i`-th draw of a stream is a
//! pure function of `(seed, label, i)`. Two streams with different labels never
//! interact: consuming one has no effect on any other, whatever the
//! interleaving or thread schedule.
//!
//! Draw costs, in 64-bit words of the stream counter:
//!
//! | draw                         | words              |
//! |------------------------------|--------------------|
//! | `next_u64`, `next_f64`       | 1                  |
//! | `uniform`, `rademacher`      | 1                  |
//! | `index`                      | 1                  |
//! | `gaussian` (Box–Muller)      | 2                  |
//! | `fill_standard_normal(n)`    | `2 * ceil(n / 2)`  |

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

const KEY_DOMAIN: &[u8] = b"replhs/stream/v1";
const TWO_PI: f64 = std::f64::consts::TAU;
const F64_UNIT: f64 = 1.0 / (1u64 << 53) as f64;

/// The published random string shared by paired executions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedSeed(pub u64);

impl FromStr for SharedSeed {
    type Err = Error;

    /// Accepts decimal (`12345`) or hexadecimal (`0x3039`) notation.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            u64::from_str_radix(&hex.replace('_', ""), 16)
        } else {
            s.replace('_', "").parse::<u64>()
        };
        parsed
            .map(SharedSeed)
            .map_err(|e| invalid(format!("bad seed {s:?}: {e}")))
    }
}

impl fmt::Display for SharedSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelPart {
    Name(String),
    Index(u64),
}

impl From<&str> for LabelPart {
    fn from(s: &str) -> Self {
        LabelPart::Name(s.to_string())
    }
}

impl From<String> for LabelPart {
    fn from(s: String) -> Self {
        LabelPart::Name(s)
    }
}

impl From<u64> for LabelPart {
    fn from(i: u64) -> Self {
        LabelPart::Index(i)
    }
}

impl From<usize> for LabelPart {
    fn from(i: usize) -> Self {
        LabelPart::Index(i as u64)
    }
}

impl From<u32> for LabelPart {
    fn from(i: u32) -> Self {
        LabelPart::Index(u64::from(i))
    }
}

/// Structured stream name such as `algo2/batch/17`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamLabel(Vec<LabelPart>);

impl StreamLabel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, part: impl Into<LabelPart>) -> Self {
        self.0.push(part.into());
        self
    }

    pub fn parts(&self) -> &[LabelPart] {
        &self.0
    }

    fn key(&self, seed: SharedSeed) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(KEY_DOMAIN);
        h.update(seed.0.to_le_bytes());
        for part in &self.0 {
            match part {
                LabelPart::Name(s) => {
                    h.update([1u8]);
                    h.update((s.len() as u64).to_le_bytes());
                    h.update(s.as_bytes());
                }
                LabelPart::Index(i) => {
                    h.update([2u8]);
                    h.update(i.to_le_bytes());
                }
            }
        }
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }
}

impl fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, part) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match part {
                LabelPart::Name(s) => f.write_str(s)?,
                LabelPart::Index(n) => write!(f, "{n}")?,
            }
        }
        Ok(())
    }
}

/// Builds a [`StreamLabel`] from a list of names and indices.
///
/// ```
/// use replhs::label;
/// assert_eq!(label!["batch", 3usize].to_string(), "batch/3");
/// ```
#[macro_export]
macro_rules! label {
    ($($part:expr),* $(,)?) => {
        $crate::rng::StreamLabel::new()$(.push($part))*
    };
}

/// A deterministic pseudorandom stream identified by `(seed, label)`.
///
/// Not `Sync`-shared on purpose: concurrent tasks derive their own child
/// streams instead of drawing from one value.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: SharedSeed,
    label: StreamLabel,
    rng: ChaCha8Rng,
}

/// Derives the stream for `(seed, label)`, positioned at counter 0.
pub fn derive_stream(seed: SharedSeed, label: &StreamLabel) -> RandomStream {
    RandomStream {
        seed,
        label: label.clone(),
        rng: ChaCha8Rng::from_seed(label.key(seed)),
    }
}

impl RandomStream {
    pub fn seed(&self) -> SharedSeed {
        self.seed
    }

    pub fn label(&self) -> &StreamLabel {
        &self.label
    }

    /// Number of 64-bit words consumed so far.
    pub fn counter(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    /// A fresh stream for `label/part`; does not touch `self`.
    pub fn child(&self, part: impl Into<LabelPart>) -> RandomStream {
        derive_stream(self.seed, &self.label.clone().push(part))
    }

    /// A child keyed by two parts, e.g. `child2("rep", 4)`.
    pub fn child2(&self, a: impl Into<LabelPart>, b: impl Into<LabelPart>) -> RandomStream {
        derive_stream(self.seed, &self.label.clone().push(a).push(b))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// The word at position `counter`, without moving this stream.
    pub fn draw_at(&self, counter: u64) -> u64 {
        let mut rng = self.rng.clone();
        rng.set_word_pos(u128::from(counter) * 2);
        rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * F64_UNIT
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    fn next_f64_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * F64_UNIT
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("uniform range [{lo}, {hi}) is empty or non-finite")));
        }
        let v = lo + (hi - lo) * self.next_f64();
        // lo + (hi - lo) * u can round up to hi
        Ok(if v < hi { v } else { lo.max(prev_float(hi)) })
    }

    pub fn gaussian(&mut self, mean: f64, stddev: f64) -> Result<f64> {
        if !(stddev.is_finite() && stddev > 0.0 && mean.is_finite()) {
            return Err(invalid(format!("gaussian needs finite mean and stddev > 0, got {stddev}")));
        }
        let (z, _) = self.box_muller();
        Ok(mean + stddev * z)
    }

    /// ±1 with equal probability.
    #[inline]
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Integer in `0..n` (multiply-high reduction; bias below 2⁻⁶⁴·n).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Fills `out` with i.i.d. N(0, 1) draws, two per Box–Muller pair.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.box_muller();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.box_muller().0;
        }
    }

    /// A seed for a nested experiment, drawn from this stream.
    pub fn next_seed(&mut self) -> SharedSeed {
        SharedSeed(self.next_u64())
    }

    #[inline]
    fn box_muller(&mut self) -> (f64, f64) {
        let u1 = self.next_f64_open0();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        (r * c, r * s)
    }
}

fn prev_float(x: f64) -> f64 {
    if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else if x < 0.0 {
        f64::from_bits(x.to_bits() + 1)
    } else {
        -f64::from_bits(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s() -> SharedSeed {
        SharedSeed(0xDEC0DE)
    }

    #[test]
    fn replay_is_exact() {
        let mut a = derive_stream(s(), &label!["jl"]);
        let mut b = derive_stream(s(), &label!["jl"]);
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn distinct_labels_differ() {
        let mut a = derive_stream(s(), &label!["jl"]);
        let mut b = derive_stream(s(), &label!["offsets"]);
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
        // name vs. index parts are distinct keys
        let c = derive_stream(s(), &label!["3"]).next_u64();
        let d = derive_stream(s(), &label![3u64]).next_u64();
        assert_ne!(c, d);
    }

    #[test]
    fn consumption_order_is_irrelevant() {
        let seed = s();
        // order 1: consume batch/2 fully, then batch/3
        let mut b2 = derive_stream(seed, &label!["batch", 2u64]);
        let first2: Vec<u64> = (0..64).map(|_| b2.next_u64()).collect();
        let mut b3 = derive_stream(seed, &label!["batch", 3u64]);
        let after: Vec<u64> = (0..64).map(|_| b3.next_u64()).collect();
        // order 2: batch/3 first, interleaved with batch/2
        let mut c3 = derive_stream(seed, &label!["batch", 3u64]);
        let mut c2 = derive_stream(seed, &label!["batch", 2u64]);
        let mut before = Vec::new();
        let mut second2 = Vec::new();
        for _ in 0..64 {
            before.push(c3.next_u64());
            second2.push(c2.next_u64());
        }
        assert_eq!(after, before);
        assert_eq!(first2, second2);
        let bytes_a: Vec<u8> = after.iter().flat_map(|v| v.to_le_bytes()).collect();
        let bytes_b: Vec<u8> = before.iter().flat_map(|v| v.to_le_bytes()).collect();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn counters_advance_by_documented_amounts() {
        let mut st = derive_stream(s(), &label!["cost"]);
        assert_eq!(st.counter(), 0);
        st.uniform(0.0, 1.0).unwrap();
        assert_eq!(st.counter(), 1);
        st.rademacher();
        assert_eq!(st.counter(), 2);
        st.gaussian(0.0, 1.0).unwrap();
        assert_eq!(st.counter(), 4);
        st.index(7);
        assert_eq!(st.counter(), 5);
        let mut buf = [0.0; 5];
        st.fill_standard_normal(&mut buf);
        assert_eq!(st.counter(), 11);
    }

    #[test]
    fn draw_at_matches_sequential_draws() {
        let mut st = derive_stream(s(), &label!["ra"]);
        let probe = st.clone();
        for i in 0..20 {
            assert_eq!(probe.draw_at(i), st.next_u64());
        }
    }

    #[test]
    fn child_streams_equal_derived_streams() {
        let parent = derive_stream(s(), &label!["algo", 1u64]);
        let mut a = parent.child("rep");
        let mut b = derive_stream(s(), &label!["algo", 1u64, "rep"]);
        assert_eq!(a.next_u64(), b.next_u64());
        assert_eq!(parent.child2("rep", 4u64).label().to_string(), "algo/1/rep/4");
    }

    #[test]
    fn argument_errors() {
        let mut st = derive_stream(s(), &label!["x"]);
        assert!(st.uniform(1.0, 1.0).is_err());
        assert!(st.uniform(2.0, 1.0).is_err());
        assert!(st.uniform(0.0, f64::INFINITY).is_err());
        assert!(st.gaussian(0.0, 0.0).is_err());
        assert!(st.gaussian(0.0, -1.0).is_err());
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut st = derive_stream(s(), &label!["u"]);
        for _ in 0..10_000 {
            let v = st.uniform(0.0, 1.0).unwrap();
            assert!((0.0..1.0).contains(&v));
            let w = st.uniform(-3.0, -2.5).unwrap();
            assert!((-3.0..-2.5).contains(&w));
        }
    }

    #[test]
    fn gaussian_and_rademacher_means() {
        let n = 100_000;
        let mut st = derive_stream(s(), &label!["g"]);
        let mean: f64 = (0..n).map(|_| st.gaussian(0.0, 1.0).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "gaussian mean {mean}");
        let mut st = derive_stream(s(), &label!["r"]);
        let mean: f64 = (0..n).map(|_| st.rademacher()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.02, "rademacher mean {mean}");
    }

    #[test]
    fn uniform_ks_statistic() {
        // KS critical value at alpha = 0.001 is 1.95 / sqrt(n)
        let n = 10_000;
        let mut st = derive_stream(s(), &label!["ks"]);
        let mut v: Vec<f64> = (0..n).map(|_| st.uniform(0.0, 1.0).unwrap()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        assert!(d < 1.95 / (n as f64).sqrt(), "KS D = {d}");
    }

    #[test]
    fn seed_parsing() {
        assert_eq!("12345".parse::<SharedSeed>().unwrap(), SharedSeed(12345));
        assert_eq!("0x3039".parse::<SharedSeed>().unwrap(), SharedSeed(12345));
        assert_eq!("0XFF".parse::<SharedSeed>().unwrap(), SharedSeed(255));
        assert!("0xZZ".parse::<SharedSeed>().is_err());
        assert!("-1".parse::<SharedSeed>().is_err());
        assert_eq!(SharedSeed(255).to_string(), "0x00000000000000ff");
    }
}
