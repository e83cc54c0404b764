//! Linear Model of Coregionalization kernels.
//!
//! A multi-output covariance is built as `k(x, x') = sum_q  a_q a_q^T k_q(x, x')`
//! where the `k_q` are scalar stationary kernels (RBF or Matérn) with ARD
//! lengthscales and the `a_q` are the mixing columns that correlate outputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary latent-kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Rbf,
    Matern32,
    Matern52,
}

/// One latent scalar kernel: family, per-dimension lengthscales and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentKernel {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl LatentKernel {
    /// Scaled squared distance `sum_i ((x_i - y_i) / l_i)^2`.
    fn r2(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let d = (a - b) / l;
                d * d
            })
            .sum()
    }

    /// Kernel value `k_q(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2 = self.r2(x, y);
        match self.family {
            KernelFamily::Rbf => self.variance * (-0.5 * r2).exp(),
            KernelFamily::Matern32 => {
                let r = r2.sqrt();
                let s = 3f64.sqrt() * r;
                self.variance * (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                let s = 5f64.sqrt() * r;
                self.variance * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Partial derivative of `k_q(x, y)` w.r.t. `log lengthscale_m`.
    pub fn d_log_lengthscale(&self, x: &[f64], y: &[f64], m: usize) -> f64 {
        let r2 = self.r2(x, y);
        let dm = (x[m] - y[m]) / self.lengthscales[m];
        let um = dm * dm;
        if um == 0.0 {
            return 0.0;
        }
        match self.family {
            KernelFamily::Rbf => self.variance * (-0.5 * r2).exp() * um,
            KernelFamily::Matern32 => {
                let r = r2.sqrt();
                3.0 * self.variance * um * (-(3f64.sqrt()) * r).exp()
            }
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                let s5 = 5f64.sqrt();
                (5.0 / 3.0) * self.variance * um * (1.0 + s5 * r) * (-s5 * r).exp()
            }
        }
    }
}

/// Full LMC kernel specification shared by every GP in the crate.
///
/// `mixing` has one column per latent process (d rows, Q columns); `nugget`
/// holds the per-output observation-noise variances added on the Gram
/// diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub latents: Vec<LatentKernel>,
    pub mixing: DMatrix<f64>,
    pub nugget: Vec<f64>,
}

impl KernelSpec {
    /// Number of latent processes.
    pub fn num_latents(&self) -> usize {
        self.latents.len()
    }

    /// Output dimension d.
    pub fn dim_out(&self) -> usize {
        self.mixing.nrows()
    }

    /// Input dimension p.
    pub fn dim_in(&self) -> usize {
        self.latents.first().map_or(0, |l| l.lengthscales.len())
    }

    /// Default spec: one Matérn-5/2 latent per output (Q = d), identity
    /// mixing, lengthscales at half the box width per dimension.
    pub fn default_for(dim_in: usize, dim_out: usize, widths: &[f64]) -> Self {
        let latents = (0..dim_out)
            .map(|_| LatentKernel {
                family: KernelFamily::Matern52,
                lengthscales: widths.iter().map(|w| 0.5 * w).collect(),
                variance: 1.0,
            })
            .collect();
        let _ = dim_in;
        Self {
            latents,
            mixing: DMatrix::identity(dim_out, dim_out),
            nugget: vec![1e-6; dim_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latents.is_empty() {
            return Err(Error::Config("kernel spec needs at least one latent process".into()));
        }
        let p = self.dim_in();
        let d = self.dim_out();
        for l in &self.latents {
            if l.lengthscales.len() != p {
                return Err(Error::Config("inconsistent lengthscale dimensions across latents".into()));
            }
            if l.variance <= 0.0 || l.lengthscales.iter().any(|v| *v <= 0.0) {
                return Err(Error::Config("lengthscales and variances must be strictly positive".into()));
            }
        }
        if self.mixing.ncols() != self.latents.len() {
            return Err(Error::Config("mixing must have one column per latent process".into()));
        }
        if self.nugget.len() != d || self.nugget.iter().any(|v| *v < 0.0) {
            return Err(Error::Config("nugget must be length d and non-negative".into()));
        }
        Ok(())
    }

    /// Matrix-valued kernel block `k(x, y)` (d x d).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let d = self.dim_out();
        let mut k = DMatrix::zeros(d, d);
        for (q, latent) in self.latents.iter().enumerate() {
            let kq = latent.eval(x, y);
            if kq == 0.0 {
                continue;
            }
            let a = self.mixing.column(q);
            // k += kq * a a^T
            for i in 0..d {
                for j in 0..d {
                    k[(i, j)] += kq * a[i] * a[j];
                }
            }
        }
        k
    }

    /// Prior covariance at a point, `k(x, x)`.
    pub fn prior_cov(&self, x: &[f64]) -> DMatrix<f64> {
        self.eval(x, x)
    }

    /// Scalar latent values `k_q(x, y)` for all q (used by cached evaluators).
    pub fn latent_values(&self, x: &[f64], y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.latents.len(), self.latents.iter().map(|l| l.eval(x, y)))
    }
}
