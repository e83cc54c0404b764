//! Multi-output Gaussian-process regression with LMC kernels.
//!
//! A [`TrainedGP`] caches the Cholesky factorization of the block Gram matrix
//! and exposes the conditional mean/covariance, posterior cross-covariances,
//! the one-point covariance update and the log-marginal likelihood. Outputs
//! are standardized internally (per-output mean and scale from the training
//! data by default); every public quantity is reported in original units.

mod fit;
mod kernel;

pub use fit::{fit_hyperparameters, FitBounds, FitConfig, FitOutcome, GradientMode};
pub(crate) use fit::gradient_pair as gradient_pair_for_tests;
pub use kernel::{KernelFamily, KernelSpec, LatentKernel};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior-mean policy applied before standardization.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanPolicy {
    /// Per-output empirical mean of the training outputs.
    Empirical,
    /// A fixed constant mean in original output units.
    Fixed(Vec<f64>),
}

/// Per-output scaling policy for the internal representation.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalePolicy {
    /// Per-output standard deviation of the training outputs (floored at 1).
    Standardize,
    /// No scaling; kernel hyperparameters act in original units.
    One,
    /// A fixed scale vector (used when re-conditioning must preserve the model).
    Fixed(Vec<f64>),
}

/// Predictive distribution at a single point.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Jitter escalation ladder applied to the Gram diagonal on factorization
/// failure, relative to the mean diagonal entry.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// A conditioned multi-output GP. Immutable after construction.
#[derive(Debug, Clone)]
pub struct TrainedGP {
    spec: KernelSpec,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<DVector<f64>>,
    mean_const: DVector<f64>,
    scale: DVector<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
    log_det: f64,
}

impl TrainedGP {
    /// Condition the GP prior on training pairs with the default policies
    /// (empirical prior mean, standardized outputs).
    pub fn condition(spec: KernelSpec, inputs: &[Vec<f64>], outputs: &[DVector<f64>]) -> Result<Self> {
        Self::condition_with(spec, inputs, outputs, MeanPolicy::Empirical, ScalePolicy::Standardize)
    }

    /// Condition with explicit mean/scale policies.
    pub fn condition_with(
        spec: KernelSpec,
        inputs: &[Vec<f64>],
        outputs: &[DVector<f64>],
        mean: MeanPolicy,
        scale: ScalePolicy,
    ) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim_out();
        let p = spec.dim_in();
        let n = inputs.len();
        if outputs.len() != n {
            return Err(Error::Config("inputs and outputs must have equal length".into()));
        }
        if inputs.iter().any(|x| x.len() != p) || outputs.iter().any(|z| z.len() != d) {
            return Err(Error::Config("training pair dimensions do not match the kernel spec".into()));
        }

        let mean_const = match mean {
            MeanPolicy::Empirical => empirical_mean(outputs, d),
            MeanPolicy::Fixed(v) => {
                if v.len() != d {
                    return Err(Error::Config("fixed mean has wrong dimension".into()));
                }
                DVector::from_vec(v)
            }
        };
        let scale = match scale {
            ScalePolicy::Standardize => empirical_scale(outputs, d),
            ScalePolicy::One => DVector::from_element(d, 1.0),
            ScalePolicy::Fixed(v) => {
                if v.len() != d || v.iter().any(|s| *s <= 0.0) {
                    return Err(Error::Config("fixed scale must be positive and of dimension d".into()));
                }
                DVector::from_vec(v)
            }
        };

        if n == 0 {
            return Ok(Self {
                spec,
                inputs: Vec::new(),
                outputs: Vec::new(),
                mean_const,
                scale,
                chol: None,
                alpha: DVector::zeros(0),
                jitter: 0.0,
                log_det: 0.0,
            });
        }

        // Precondition: inputs pairwise distinct or nugget > 0. Coincident
        // inputs with a noise-free model make the Gram exactly singular.
        if spec.nugget.iter().all(|v| *v == 0.0) && n > 1 {
            let (i, j, dist) = nearest_pair(inputs);
            if dist == 0.0 {
                return Err(Error::Factorization {
                    max_jitter: 0.0,
                    i,
                    j,
                    dist,
                });
            }
        }

        let gram = build_gram(&spec, inputs);
        let (chol, jitter) = factorize(gram, inputs)?;
        let z_std = standardized_outputs(outputs, &mean_const, &scale);
        let alpha = chol.solve(&z_std);
        let log_det = chol_log_det(&chol);

        Ok(Self {
            spec,
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
            mean_const,
            scale,
            chol: Some(chol),
            alpha,
            jitter,
            log_det,
        })
    }

    /// Re-condition with one extra pair, keeping the spec, prior mean and
    /// scale of this model fixed (the `gp (+) (x, z)` operation).
    pub fn augmented(&self, x: &[f64], z: &DVector<f64>) -> Result<Self> {
        let mut inputs = self.inputs.clone();
        let mut outputs = self.outputs.clone();
        inputs.push(x.to_vec());
        outputs.push(z.clone());
        Self::condition_with(
            self.spec.clone(),
            &inputs,
            &outputs,
            MeanPolicy::Fixed(self.mean_const.iter().copied().collect()),
            ScalePolicy::Fixed(self.scale.iter().copied().collect()),
        )
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[DVector<f64>] {
        &self.outputs
    }

    pub fn mean_const(&self) -> &DVector<f64> {
        &self.mean_const
    }

    pub fn output_scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn num_points(&self) -> usize {
        self.inputs.len()
    }

    pub fn dim_in(&self) -> usize {
        self.spec.dim_in()
    }

    pub fn dim_out(&self) -> usize {
        self.spec.dim_out()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Cross-covariance blocks `K(x, X)` against the training set, in
    /// standardized units (d x nd).
    pub(crate) fn cross_training(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim_out();
        let n = self.num_points();
        let mut k = DMatrix::zeros(d, n * d);
        for (i, xi) in self.inputs.iter().enumerate() {
            let block = self.spec.eval(x, xi);
            k.view_mut((0, i * d), (d, d)).copy_from(&block);
        }
        k
    }

    /// Solve `K v = b` against the cached factorization.
    pub(crate) fn solve_gram(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DMatrix::zeros(b.nrows(), b.ncols()),
        }
    }

    /// Predictive mean and covariance at `x`, in original units. The
    /// covariance is symmetrized and its eigenvalues clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let d = self.dim_out();
        if self.inputs.is_empty() {
            let cov = scale_cov(&self.spec.prior_cov(x), &self.scale);
            return Prediction {
                mean: self.mean_const.clone(),
                cov: clamp_psd(cov),
            };
        }
        let kx = self.cross_training(x);
        let mean_std = &kx * &self.alpha;
        let v = self.solve_gram(&kx.transpose());
        let cov_std = self.spec.prior_cov(x) - &kx * v;
        let mean = &self.mean_const + self.scale.component_mul(&mean_std);
        let cov = clamp_psd(scale_cov(&cov_std, &self.scale));
        let _ = d;
        Prediction { mean, cov }
    }

    /// Posterior cross-covariance `C_n(x_star, x)` in original units.
    pub fn cross_cov(&self, x_star: &[f64], x: &[f64]) -> DMatrix<f64> {
        let base = self.spec.eval(x_star, x);
        let cov_std = if self.inputs.is_empty() {
            base
        } else {
            let ka = self.cross_training(x_star);
            let kb = self.cross_training(x);
            let v = self.solve_gram(&kb.transpose());
            base - ka * v
        };
        scale_cov(&cov_std, &self.scale)
    }

    /// One-point covariance update: the predictive covariance at `x_star`
    /// after conditioning on a (noise-free) observation at `x`, computed
    /// without refactorizing the Gram matrix:
    /// `C_{n+1}(x_star | x) = C_n(x_star) - C_n(x_star, x) C_n(x)^{-1} C_n(x, x_star)`.
    pub fn updated_cov(&self, x_star: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
        let c_star = self.predict(x_star).cov;
        let c_x = self.predict(x).cov;
        let cross = self.cross_cov(x_star, x);
        let chol = factorize_query_cov(&c_x).ok_or(Error::ExhaustedPoint)?;
        let sol = chol.solve(&cross.transpose());
        let reduced = &c_star - &cross * sol;
        Ok(clamp_psd(reduced))
    }

    /// Log-marginal likelihood of the (standardized) training data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.num_points();
        if n == 0 {
            return 0.0;
        }
        let nd = n * self.dim_out();
        let z_std = standardized_outputs(&self.outputs, &self.mean_const, &self.scale);
        let quad = z_std.dot(&self.alpha);
        -0.5 * (nd as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det + quad)
    }

    /// Serializable snapshot of the full model state.
    pub fn to_state(&self) -> GpState {
        let n = self.num_points();
        let p = self.dim_in();
        let d = self.dim_out();
        let mut inputs_row_major = Vec::with_capacity(n * p);
        for x in &self.inputs {
            inputs_row_major.extend_from_slice(x);
        }
        let mut outputs_row_major = Vec::with_capacity(n * d);
        for z in &self.outputs {
            outputs_row_major.extend(z.iter().copied());
        }
        GpState {
            format_version: GP_STATE_VERSION,
            spec: self.spec.clone(),
            num_points: n,
            dim_in: p,
            dim_out: d,
            inputs_row_major,
            outputs_row_major,
            mean_const: self.mean_const.iter().copied().collect(),
            scale: self.scale.iter().copied().collect(),
        }
    }

    /// Rebuild a model from a snapshot.
    pub fn from_state(state: &GpState) -> Result<Self> {
        if state.format_version != GP_STATE_VERSION {
            return Err(Error::Config(format!(
                "unsupported GP state version {} (expected {})",
                state.format_version, GP_STATE_VERSION
            )));
        }
        let n = state.num_points;
        let p = state.dim_in;
        let d = state.dim_out;
        if state.inputs_row_major.len() != n * p || state.outputs_row_major.len() != n * d {
            return Err(Error::Config("GP state arrays have inconsistent sizes".into()));
        }
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|i| state.inputs_row_major[i * p..(i + 1) * p].to_vec())
            .collect();
        let outputs: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_row_slice(&state.outputs_row_major[i * d..(i + 1) * d]))
            .collect();
        Self::condition_with(
            state.spec.clone(),
            &inputs,
            &outputs,
            MeanPolicy::Fixed(state.mean_const.clone()),
            ScalePolicy::Fixed(state.scale.clone()),
        )
    }
}

pub const GP_STATE_VERSION: u32 = 1;

/// JSON-serializable GP snapshot (training arrays row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpState {
    pub format_version: u32,
    pub spec: KernelSpec,
    pub num_points: usize,
    pub dim_in: usize,
    pub dim_out: usize,
    pub inputs_row_major: Vec<f64>,
    pub outputs_row_major: Vec<f64>,
    pub mean_const: Vec<f64>,
    pub scale: Vec<f64>,
}

fn empirical_mean(outputs: &[DVector<f64>], d: usize) -> DVector<f64> {
    if outputs.is_empty() {
        return DVector::zeros(d);
    }
    let mut m = DVector::zeros(d);
    for z in outputs {
        m += z;
    }
    m / outputs.len() as f64
}

fn empirical_scale(outputs: &[DVector<f64>], d: usize) -> DVector<f64> {
    if outputs.len() < 2 {
        return DVector::from_element(d, 1.0);
    }
    let m = empirical_mean(outputs, d);
    let mut v = DVector::zeros(d);
    for z in outputs {
        let r = z - &m;
        v += r.component_mul(&r);
    }
    v /= outputs.len() as f64;
    DVector::from_iterator(
        d,
        (0..d).map(|i| {
            let s = v[i].sqrt();
            if s > 1e-12 * (1.0 + m[i].abs()) {
                s
            } else {
                1.0
            }
        }),
    )
}

fn standardized_outputs(
    outputs: &[DVector<f64>],
    mean_const: &DVector<f64>,
    scale: &DVector<f64>,
) -> DVector<f64> {
    let d = mean_const.len();
    let mut z = DVector::zeros(outputs.len() * d);
    for (i, out) in outputs.iter().enumerate() {
        for o in 0..d {
            z[i * d + o] = (out[o] - mean_const[o]) / scale[o];
        }
    }
    z
}

/// Block Gram matrix of the kernel over the training inputs, nugget included.
pub(crate) fn build_gram(spec: &KernelSpec, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    let d = spec.dim_out();
    let mut k = DMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..=i {
            let block = spec.eval(&inputs[i], &inputs[j]);
            k.view_mut((i * d, j * d), (d, d)).copy_from(&block);
            if i != j {
                k.view_mut((j * d, i * d), (d, d)).copy_from(&block.transpose());
            }
        }
    }
    for i in 0..n {
        for o in 0..d {
            k[(i * d + o, i * d + o)] += spec.nugget[o];
        }
    }
    k
}

/// Cholesky with jitter escalation. Returns the factorization and the jitter
/// (relative to the mean Gram diagonal) that was needed.
fn factorize(gram: DMatrix<f64>, inputs: &[Vec<f64>]) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let nd = gram.nrows();
    let mean_diag = gram.diagonal().sum() / nd as f64;
    if let Some(c) = gram.clone().cholesky() {
        return Ok((c, 0.0));
    }
    for rel in JITTER_LADDER {
        let mut g = gram.clone();
        let add = rel * mean_diag.max(f64::MIN_POSITIVE);
        for i in 0..nd {
            g[(i, i)] += add;
        }
        if let Some(c) = g.cholesky() {
            return Ok((c, rel));
        }
    }
    let (i, j, dist) = nearest_pair(inputs);
    Err(Error::Factorization {
        max_jitter: *JITTER_LADDER.last().unwrap(),
        i,
        j,
        dist,
    })
}

fn nearest_pair(inputs: &[Vec<f64>]) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..inputs.len() {
        for j in 0..i {
            let d2: f64 = inputs[i]
                .iter()
                .zip(&inputs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = d2.sqrt();
            if d < best.2 {
                best = (j, i, d);
            }
        }
    }
    best
}

/// Factorize a small predictive covariance, adding the one-shot jitter
/// `1e-9 * trace / d` if needed. `None` means the point is exhausted.
pub(crate) fn factorize_query_cov(c: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(chol) = c.clone().cholesky() {
        return Some(chol);
    }
    let d = c.nrows();
    let delta = 1e-9 * c.diagonal().sum() / d as f64;
    if delta <= 0.0 {
        return None;
    }
    let mut g = c.clone();
    for i in 0..d {
        g[(i, i)] += delta;
    }
    g.cholesky()
}

fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn scale_cov(cov: &DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let d = scale.len();
    let mut out = cov.clone();
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    out
}

/// Symmetrize and clamp the eigenvalues of a small covariance at zero.
pub(crate) fn clamp_psd(cov: DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (&cov + cov.transpose());
    if sym.nrows() == 1 {
        return DMatrix::from_element(1, 1, sym[(0, 0)].max(0.0));
    }
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return sym;
    }
    let mut rebuilt = DMatrix::zeros(sym.nrows(), sym.ncols());
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let l = lam.max(0.0);
        if l == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        rebuilt += l * &v * v.transpose();
    }
    rebuilt
}
