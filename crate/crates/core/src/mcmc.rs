//! Adaptive Metropolis sampling.
//!
//! The proposal covariance adapts to `s_p * (empirical covariance + eps I)`
//! with `s_p = 2.38^2 / p` and `eps = 1e-6`, starting after 200 draws
//! (Haario-style adaptation). Out-of-box proposals are always rejected, so
//! every retained sample lies inside the prior box. The first fifth of the
//! run is discarded as burn-in.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

const ADAPTATION_START: usize = 200;
const ADAPTATION_EPS: f64 = 1e-6;

/// An ergodic chain targeting a posterior: retained samples, their
/// log-densities, the run's acceptance rate and per-coordinate integrated
/// autocorrelation times.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    samples: Vec<Vec<f64>>,
    log_densities: Vec<f64>,
    acceptance_rate: f64,
    iat: Vec<f64>,
    burn_in: usize,
}

impl PosteriorChain {
    pub fn from_parts(samples: Vec<Vec<f64>>, log_densities: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != log_densities.len() {
            return Err(Error::EmptyChain("from_parts needs aligned, non-empty arrays"));
        }
        let iat = estimate_iat_samples(&samples);
        Ok(Self {
            samples,
            log_densities,
            acceptance_rate: f64::NAN,
            iat,
            burn_in: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn log_densities(&self) -> &[f64] {
        &self.log_densities
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    pub fn iat(&self) -> &[f64] {
        &self.iat
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Indices of at most `max` evenly-strided retained samples.
    pub fn strided_indices(&self, max: usize) -> Vec<usize> {
        let n = self.len();
        if n <= max {
            return (0..n).collect();
        }
        let stride = n as f64 / max as f64;
        (0..max).map(|k| (k as f64 * stride) as usize).collect()
    }

    /// Persist as CSV with columns `x1..xp,logpdf`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let p = self.dim();
        let mut header: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
        header.push("logpdf".into());
        wtr.write_record(&header)?;
        for (x, lp) in self.samples.iter().zip(&self.log_densities) {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            rec.push(format!("{lp}"));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Config("chain CSV needs x columns and a logpdf column".into()));
        }
        let mut samples = Vec::new();
        let mut lps = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            let mut vals = vals.map_err(|e| Error::Config(format!("bad chain value: {e}")))?;
            let lp = vals.pop().unwrap();
            samples.push(vals);
            lps.push(lp);
        }
        Self::from_parts(samples, lps)
    }
}

/// Run the Adaptive Metropolis sampler for `total_steps` iterations.
///
/// Reproducible per seed; the first `total_steps / 5` draws are discarded
/// from `samples` and recorded as `burn_in`.
pub fn adaptive_metropolis<F: Fn(&[f64]) -> f64>(
    logpdf: F,
    bounds: &BoxDomain,
    total_steps: usize,
    seed: u64,
    init: &[f64],
) -> Result<PosteriorChain> {
    let p = bounds.dim();
    if init.len() != p || !bounds.contains(init) {
        return Err(Error::Config("chain start must lie inside the prior box".into()));
    }
    if total_steps < 10 {
        return Err(Error::Config("chain length is too small".into()));
    }
    let mut lp_current = logpdf(init);
    if lp_current == f64::NEG_INFINITY || lp_current.is_nan() {
        return Err(Error::InvalidStart);
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let s_p = 2.38f64.powi(2) / p as f64;
    let stuck_limit = 10 * p * 1000;

    // Pre-adaptation proposal: diagonal steps at 5% of the box widths.
    let init_sd: Vec<f64> = bounds.widths().iter().map(|w| 0.05 * w).collect();

    // Welford accumulators for the running sample covariance.
    let mut run_mean = DVector::from_row_slice(init);
    let mut m2 = DMatrix::<f64>::zeros(p, p);
    let mut count = 1usize;

    let mut current = init.to_vec();
    let mut samples = Vec::with_capacity(total_steps);
    let mut lps = Vec::with_capacity(total_steps);
    let mut accepted = 0usize;
    let mut consecutive_rejects = 0usize;
    let mut prop_chol: Option<DMatrix<f64>> = None;

    for step in 0..total_steps {
        // Refresh the adapted Cholesky factor periodically.
        if step >= ADAPTATION_START && (step == ADAPTATION_START || step % 20 == 0) {
            let mut cov = &m2 / (count as f64 - 1.0);
            for i in 0..p {
                cov[(i, i)] += ADAPTATION_EPS;
            }
            cov *= s_p;
            prop_chol = cov.cholesky().map(|c| c.l());
        }

        let mut cand = current.clone();
        match &prop_chol {
            Some(l) => {
                let xi = DVector::from_iterator(p, (0..p).map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g
                }));
                let stepv = l * xi;
                for i in 0..p {
                    cand[i] += stepv[i];
                }
            }
            None => {
                for i in 0..p {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    cand[i] += g * init_sd[i];
                }
            }
        }

        let mut accept = false;
        if bounds.contains(&cand) {
            let lp_cand = logpdf(&cand);
            if !lp_cand.is_nan()
                && (lp_cand >= lp_current || rng.random::<f64>().ln() < lp_cand - lp_current)
            {
                lp_current = lp_cand;
                current = cand;
                accept = true;
            }
        }

        if accept {
            accepted += 1;
            consecutive_rejects = 0;
        } else {
            consecutive_rejects += 1;
            if consecutive_rejects >= stuck_limit {
                return Err(Error::StuckChain {
                    rejections: consecutive_rejects,
                    acceptance: accepted as f64 / (step + 1) as f64,
                    logp: lp_current,
                });
            }
        }

        samples.push(current.clone());
        lps.push(lp_current);

        // Welford update with the (possibly repeated) current state.
        count += 1;
        let x = DVector::from_row_slice(&current);
        let delta = &x - &run_mean;
        run_mean += &delta / count as f64;
        let delta2 = &x - &run_mean;
        m2 += delta * delta2.transpose();
    }

    let burn = total_steps / 5;
    let retained: Vec<Vec<f64>> = samples.split_off(burn);
    let retained_lps: Vec<f64> = lps.split_off(burn);
    let iat = estimate_iat_samples(&retained);
    Ok(PosteriorChain {
        samples: retained,
        log_densities: retained_lps,
        acceptance_rate: accepted as f64 / total_steps as f64,
        iat,
        burn_in: burn,
    })
}

/// Integrated autocorrelation time per coordinate via Geyer's initial
/// positive sequence. Degenerate (constant) coordinates yield NaN.
pub fn estimate_iat(chain: &PosteriorChain) -> Vec<f64> {
    estimate_iat_samples(chain.samples())
}

fn estimate_iat_samples(samples: &[Vec<f64>]) -> Vec<f64> {
    let p = samples.first().map_or(0, |s| s.len());
    (0..p)
        .map(|i| {
            let series: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            iat_series(&series)
        })
        .collect()
}

/// IAT of a scalar series: `tau = -1 + 2 sum_m Gamma_m` over the initial
/// positive sequence of paired autocorrelations, clamped at 1.
pub fn iat_series(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if c0 <= 1e-300 || !c0.is_finite() {
        return f64::NAN; // constant chain: tau undefined
    }
    let max_lag = n / 3;
    let rho = |k: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..n - k {
            s += (x[t] - mean) * (x[t + k] - mean);
        }
        s / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut m = 0;
    loop {
        let k0 = 2 * m;
        let k1 = 2 * m + 1;
        if k1 > max_lag {
            break;
        }
        let gamma = rho(k0) + rho(k1);
        if gamma <= 0.0 {
            break;
        }
        tau += 2.0 * gamma;
        m += 1;
    }
    tau.max(1.0)
}
