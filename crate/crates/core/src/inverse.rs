//! Surrogate-based Bayesian inverse-problem densities.
//!
//! The likelihood fuses the epistemic GP covariance with the aleatoric
//! observation noise through the effective covariance
//! `C_eff(x) = C_n(x) + C_obs / N`; the posterior is the product with a
//! uniform prior on the input box. The full Kronecker-form likelihood over
//! all N observations is kept only as a verification oracle. Normalization
//! constants are never computed: every consumer works with ratios or chain
//! averages.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::gp::TrainedGP;
use crate::optim::{minimize, AnnealConfig};

/// Size guard for the O((Nd)^3) oracle likelihood.
const FULL_LIKELIHOOD_MAX_ND: usize = 200;

/// A set of N noisy observations of the direct model with known noise
/// covariance.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    y: Vec<DVector<f64>>,
    c_obs: DMatrix<f64>,
    y_bar: DVector<f64>,
}

impl ObservationSet {
    pub fn new(y: Vec<DVector<f64>>, c_obs: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Config("observation set must contain at least one row".into()));
        }
        let d = y[0].len();
        if y.iter().any(|row| row.len() != d) {
            return Err(Error::Config("observation rows have inconsistent dimensions".into()));
        }
        if c_obs.nrows() != d || c_obs.ncols() != d {
            return Err(Error::Config("noise covariance must be d x d".into()));
        }
        if (&c_obs - c_obs.transpose()).abs().max() > 1e-10 * (1.0 + c_obs.abs().max()) {
            return Err(Error::NotSpd("observation covariance is not symmetric"));
        }
        if c_obs.clone().cholesky().is_none() {
            return Err(Error::NotSpd("observation covariance is not positive definite"));
        }
        let mut y_bar = DVector::zeros(d);
        for row in &y {
            y_bar += row;
        }
        y_bar /= y.len() as f64;
        Ok(Self { y, c_obs, y_bar })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y_bar.len()
    }

    pub fn y_bar(&self) -> &DVector<f64> {
        &self.y_bar
    }

    pub fn c_obs(&self) -> &DMatrix<f64> {
        &self.c_obs
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.y
    }

    /// Write the observation rows as CSV (`y1..yd` header) and the noise
    /// covariance plus prior box as a JSON sidecar.
    pub fn save(&self, csv_path: &Path, sidecar_path: &Path, bounds: &BoxDomain) -> Result<()> {
        let mut wtr = csv::Writer::from_path(csv_path)?;
        let d = self.dim();
        wtr.write_record((1..=d).map(|i| format!("y{i}")))?;
        for row in &self.y {
            wtr.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        wtr.flush()?;
        let sidecar = ObsSidecar {
            c_obs: (0..d)
                .map(|i| (0..d).map(|j| self.c_obs[(i, j)]).collect())
                .collect(),
            bounds: bounds.clone(),
        };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Load observations from a CSV file plus its JSON sidecar.
    pub fn load(csv_path: &Path, sidecar_path: &Path) -> Result<(Self, BoxDomain)> {
        let sidecar: ObsSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let d = rdr.headers()?.len();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != d {
                return Err(Error::Config("observation CSV row width differs from header".into()));
            }
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Config(format!("bad observation value: {e}")))?;
            rows.push(DVector::from_vec(vals));
        }
        if sidecar.c_obs.len() != d || sidecar.c_obs.iter().any(|r| r.len() != d) {
            return Err(Error::Config("sidecar covariance does not match CSV width".into()));
        }
        let c_obs = DMatrix::from_fn(d, d, |i, j| sidecar.c_obs[i][j]);
        Ok((Self::new(rows, c_obs)?, sidecar.bounds))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ObsSidecar {
    c_obs: Vec<Vec<f64>>,
    bounds: BoxDomain,
}

/// The surrogate-based inverse problem: observations, GP surrogate and the
/// uniform prior box. Immutable; `log_posterior` is safe to call
/// concurrently (it is the MCMC hot path).
#[derive(Debug, Clone)]
pub struct InverseProblem {
    obs: ObservationSet,
    gp: Arc<TrainedGP>,
    bounds: BoxDomain,
    log_prior_inside: f64,
}

impl InverseProblem {
    pub fn new(obs: ObservationSet, gp: Arc<TrainedGP>, bounds: BoxDomain) -> Result<Self> {
        if gp.dim_out() != obs.dim() {
            return Err(Error::Config("GP output dimension does not match observations".into()));
        }
        if gp.dim_in() != bounds.dim() {
            return Err(Error::Config("GP input dimension does not match the prior box".into()));
        }
        let log_prior_inside = -bounds.log_volume();
        Ok(Self {
            obs,
            gp,
            bounds,
            log_prior_inside,
        })
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn gp(&self) -> &Arc<TrainedGP> {
        &self.gp
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    /// Swap in an updated surrogate, keeping observations and prior.
    pub fn with_gp(&self, gp: Arc<TrainedGP>) -> Self {
        Self {
            gp,
            obs: self.obs.clone(),
            bounds: self.bounds.clone(),
            log_prior_inside: self.log_prior_inside,
        }
    }

    /// `C_eff(x) = C_n(x) + C_obs / N`.
    pub fn effective_cov(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.obs.len() as f64;
        self.gp.predict(x).cov + self.obs.c_obs() / n
    }

    /// Simplified log-likelihood (up to an x-independent constant):
    /// `-1/2 log|C_eff(x)| - 1/2 (ybar - m_n(x))^T C_eff(x)^{-1} (ybar - m_n(x))`.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let pred = self.gp.predict(x);
        let n = self.obs.len() as f64;
        let c_eff = pred.cov + self.obs.c_obs() / n;
        let Some(chol) = c_eff.cholesky() else {
            debug_assert!(false, "effective covariance must be SPD");
            return f64::NEG_INFINITY;
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let r = self.obs.y_bar() - pred.mean;
        let quad = r.dot(&chol.solve(&r));
        -0.5 * (log_det + quad)
    }

    /// Full Kronecker-form log-likelihood over all N observations
    /// (verification oracle only; refuses when `N * d > 200`).
    ///
    /// Layout is output-major: `C_tot = C_n(x) (x) U_N + C_obs (x) I_N` with
    /// flattened index `i * N + k` for output i, observation k.
    pub fn log_likelihood_full(&self, x: &[f64]) -> Result<f64> {
        let n_obs = self.obs.len();
        let d = self.obs.dim();
        let nd = n_obs * d;
        if nd > FULL_LIKELIHOOD_MAX_ND {
            return Err(Error::OracleMisuse(format!(
                "full likelihood is O((Nd)^3); Nd = {nd} exceeds the {FULL_LIKELIHOOD_MAX_ND} guard"
            )));
        }
        let pred = self.gp.predict(x);
        let mut c_tot = DMatrix::zeros(nd, nd);
        for i in 0..d {
            for j in 0..d {
                let cn = pred.cov[(i, j)];
                let co = self.obs.c_obs()[(i, j)];
                for k in 0..n_obs {
                    for l in 0..n_obs {
                        c_tot[(i * n_obs + k, j * n_obs + l)] = cn + if k == l { co } else { 0.0 };
                    }
                }
            }
        }
        let mut r = DVector::zeros(nd);
        for i in 0..d {
            for (k, row) in self.obs.rows().iter().enumerate() {
                r[i * n_obs + k] = row[i] - pred.mean[i];
            }
        }
        let chol = c_tot
            .cholesky()
            .ok_or(Error::Numerical("total covariance is not SPD".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let quad = r.dot(&chol.solve(&r));
        Ok(-0.5 * (nd as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
    }

    pub fn log_prior(&self, x: &[f64]) -> f64 {
        if self.bounds.contains(x) {
            self.log_prior_inside
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Unnormalized log-posterior; exactly `-inf` off the prior box.
    pub fn log_posterior(&self, x: &[f64]) -> f64 {
        let lp = self.log_prior(x);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp + self.log_likelihood(x)
    }

    /// Maximum a posteriori point through the shared global optimizer.
    /// Returns the best point seen and its log-posterior.
    pub fn find_map(&self, cfg: &AnnealConfig) -> Result<(Vec<f64>, f64)> {
        let out = minimize(|x| -self.log_posterior(x), &self.bounds, cfg)?;
        Ok((out.x_min, -out.f_min))
    }
}
