//! Axis-aligned box domains and low-discrepancy point generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `[lo_1, hi_1] x ... x [lo_p, hi_p]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("box bounds must be non-empty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("box must satisfy lo < hi with finite bounds".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).ln()).sum()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Clamp a point onto the box, coordinate-wise.
    pub fn clamp(&self, x: &mut [f64]) {
        for i in 0..self.dim() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Reflect a point back into the box (billiard reflection at the faces).
    pub fn reflect(&self, x: &mut [f64]) {
        for i in 0..self.dim() {
            let w = self.width(i);
            if w <= 0.0 {
                continue;
            }
            // Map onto a sawtooth of period 2w, then fold.
            let mut t = (x[i] - self.lo[i]).rem_euclid(2.0 * w);
            if t > w {
                t = 2.0 * w - t;
            }
            x[i] = self.lo[i] + t;
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lo[i] + rng.random::<f64>() * self.width(i))
            .collect()
    }
}

/// First `n` points of the Halton sequence scaled to `bounds`.
///
/// Deterministic, unscrambled; used as the fixed integration-node set for
/// I-optimal selection and as a space-filling probe.
pub fn halton(bounds: &BoxDomain, n: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let p = bounds.dim();
    assert!(p <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    (0..n)
        .map(|k| {
            (0..p)
                .map(|j| {
                    let u = radical_inverse(k as u64 + 1, PRIMES[j]);
                    bounds.lo[j] + u * bounds.width(j)
                })
                .collect()
        })
        .collect()
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut f = 1.0 / base as f64;
    while k > 0 {
        inv += (k % base) as f64 * f;
        k /= base;
        f /= base as f64;
    }
    inv
}

/// Mix a base seed with a stream tag (splitmix64 finalizer), so that every
/// (replicate, iteration, purpose) triple gets an independent RNG stream.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
