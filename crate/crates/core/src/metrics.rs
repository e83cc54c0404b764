//! Performance metrics: posterior-weighted integrated variance, KDE
//! differential entropy and KDE Kullback–Leibler divergence.
//!
//! All three are ergodic chain averages. Densities come from a Gaussian KDE
//! with Scott's-rule bandwidth `M^{-1/(p+4)} * sample-covariance^{1/2}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::TrainedGP;
use crate::mcmc::PosteriorChain;

/// Gaussian kernel density estimate over chain samples.
#[derive(Debug, Clone)]
pub struct KdeModel {
    points: Vec<DVector<f64>>,
    /// Scott's-rule bandwidth matrix `M^{-1/(p+4)} * Sigma^{1/2}` (lower
    /// triangular); the kernel covariance is `bandwidth * bandwidth^T`.
    bandwidth: DMatrix<f64>,
    /// Inverse of the bandwidth factor, for allocation-free evaluation.
    inv_bandwidth: DMatrix<f64>,
    /// 1D only: centers scaled by the inverse bandwidth, sorted, so that
    /// evaluation can restrict to the kernel's numerical support window.
    sorted_scaled_1d: Option<Vec<f64>>,
    log_norm: f64,
    degenerate: bool,
}

/// Terms more than this far (in log space) below the leading kernel term
/// are numerically invisible in the log-sum-exp.
const LOG_TERM_CUTOFF: f64 = 45.0;

impl KdeModel {
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let m = samples.len();
        if m < 2 {
            return Err(Error::Config("KDE needs at least two points".into()));
        }
        let p = samples[0].len();
        if p > 8 {
            return Err(Error::Config("KDE supports at most 8 dimensions".into()));
        }
        let points: Vec<DVector<f64>> = samples.iter().map(|s| DVector::from_row_slice(s)).collect();
        let mut mean = DVector::zeros(p);
        for x in &points {
            mean += x;
        }
        mean /= m as f64;
        let mut cov = DMatrix::zeros(p, p);
        for x in &points {
            let r = x - &mean;
            cov += &r * r.transpose();
        }
        cov /= (m - 1) as f64;

        // Degenerate sample covariance: floor the diagonal at 1e-6 of the
        // per-coordinate data scale.
        let mut degenerate = false;
        let mut lo = vec![f64::INFINITY; p];
        let mut hi = vec![f64::NEG_INFINITY; p];
        for x in &points {
            for i in 0..p {
                lo[i] = lo[i].min(x[i]);
                hi[i] = hi[i].max(x[i]);
            }
        }
        for i in 0..p {
            let scale = (hi[i] - lo[i]).max(mean[i].abs()).max(1.0);
            let floor = (1e-6 * scale).powi(2);
            if cov[(i, i)] < floor {
                cov[(i, i)] += floor;
                degenerate = true;
            }
        }
        let mut chol = cov.clone().cholesky();
        if chol.is_none() {
            // Last resort: isotropic floor over the whole diagonal.
            degenerate = true;
            for i in 0..p {
                cov[(i, i)] += 1e-6 * (1.0 + cov.diagonal().amax());
            }
            chol = cov.clone().cholesky();
        }
        let chol = chol.ok_or(Error::NotSpd("KDE sample covariance"))?;
        if degenerate {
            log::warn!("KDE bandwidth floored: sample covariance was (near-)singular");
        }
        let factor = (m as f64).powf(-1.0 / (p as f64 + 4.0));
        let bandwidth = factor * chol.l();
        let inv_bandwidth = bandwidth
            .clone()
            .try_inverse()
            .ok_or(Error::NotSpd("KDE bandwidth factor"))?;
        let log_det_bw: f64 = bandwidth.diagonal().iter().map(|v| v.ln()).sum();
        let log_norm =
            (m as f64).ln() + 0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_bw;
        let sorted_scaled_1d = (p == 1).then(|| {
            let inv = inv_bandwidth[(0, 0)];
            let mut scaled: Vec<f64> = points.iter().map(|c| c[0] * inv).collect();
            scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
            scaled
        });
        Ok(Self {
            points,
            bandwidth,
            inv_bandwidth,
            sorted_scaled_1d,
            log_norm,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.nrows()
    }

    pub fn bandwidth(&self) -> &DMatrix<f64> {
        &self.bandwidth
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Log-density at one point (streaming log-sum-exp over kernel terms;
    /// finite even far into the tails).
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let p = self.dim();
        let mut max_t = f64::NEG_INFINITY;
        let mut scaled_sum = 0.0;
        let mut diff = [0.0f64; 8];
        for c in &self.points {
            for i in 0..p {
                diff[i] = x[i] - c[i];
            }
            // ||L^{-1} (x - c)||^2 with the lower-triangular inverse factor.
            let mut q = 0.0;
            for i in 0..p {
                let mut v = 0.0;
                for j in 0..=i {
                    v += self.inv_bandwidth[(i, j)] * diff[j];
                }
                q += v * v;
            }
            let t = -0.5 * q;
            if t > max_t {
                scaled_sum = scaled_sum * (max_t - t).exp() + 1.0;
                max_t = t;
            } else if t - max_t > -45.0 {
                scaled_sum += (t - max_t).exp();
            }
        }
        max_t + scaled_sum.ln() - self.log_norm
    }

    /// Log-density at many points, in parallel.
    pub fn log_density_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.par_iter().map(|x| self.log_density(x)).collect()
    }
}

/// Posterior-weighted integrated variance estimate: the chain average of the
/// predictive-covariance determinant.
pub fn ivar(gp: &TrainedGP, chain: &PosteriorChain) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::EmptyChain("ivar"));
    }
    let sum: f64 = chain
        .samples()
        .par_iter()
        .map(|x| gp.predict(x).cov.determinant().max(0.0))
        .sum();
    Ok(sum / chain.len() as f64)
}

/// KDE differential-entropy estimate `-(1/L) sum log p(X_l)`.
pub fn entropy_kde(chain: &PosteriorChain) -> Result<f64> {
    if chain.len() < 2 {
        return Err(Error::EmptyChain("entropy_kde"));
    }
    let kde = KdeModel::fit(chain.samples())?;
    let lps = kde.log_density_many(chain.samples());
    Ok(-lps.iter().sum::<f64>() / lps.len() as f64)
}

/// KDE Kullback–Leibler estimate `(1/L) sum log(p_n(X_l) / p_ref(X_l))`
/// evaluated at the samples of `chain_n`. Reported raw: small negative
/// values from KDE bias are possible and are not clamped.
pub fn kl_kde(chain_n: &PosteriorChain, chain_ref: &PosteriorChain) -> Result<f64> {
    if chain_n.len() < 2 || chain_ref.len() < 2 {
        return Err(Error::EmptyChain("kl_kde"));
    }
    let kde_n = KdeModel::fit(chain_n.samples())?;
    let kde_ref = KdeModel::fit(chain_ref.samples())?;
    let lp_n = kde_n.log_density_many(chain_n.samples());
    let lp_r = kde_ref.log_density_many(chain_n.samples());
    let kl = lp_n
        .iter()
        .zip(&lp_r)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / lp_n.len() as f64;
    if kl < 0.0 {
        log::debug!("KL estimate slightly negative ({kl:.3e}): KDE bias, reported raw");
    }
    Ok(kl)
}

/// One metrics row of the experiment record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub ivar: f64,
    pub entropy: f64,
    pub kl: f64,
    pub acceptance_rate: f64,
}
