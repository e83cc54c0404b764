//! Marginal-likelihood hyperparameter fitting.
//!
//! Positive hyperparameters (lengthscales, variances, nuggets) are optimized
//! in log space, mixing coefficients in linear space, with box bounds on
//! every coordinate. Gradients are analytic by default with a mandatory
//! finite-difference fallback; both paths must agree (see the gradient-check
//! tests). The ascent is Adam with projection, multi-restart, best kept.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{build_gram, KernelSpec, MeanPolicy, ScalePolicy};
use crate::error::{Error, Result};

/// Box bounds on every hyperparameter, in natural units.
#[derive(Debug, Clone)]
pub struct FitBounds {
    /// Per-input-dimension lengthscale bounds.
    pub lengthscales: Vec<(f64, f64)>,
    pub variance: (f64, f64),
    pub mixing: (f64, f64),
    /// `None` keeps the nugget fixed at its starting value.
    pub nugget: Option<(f64, f64)>,
}

impl FitBounds {
    /// Sensible defaults relative to the input-box widths, for standardized
    /// outputs.
    pub fn for_box(widths: &[f64]) -> Self {
        Self {
            lengthscales: widths.iter().map(|w| (1e-2 * w, 10.0 * w)).collect(),
            variance: (1e-3, 1e3),
            mixing: (-10.0, 10.0),
            nugget: Some((1e-9, 1e-2)),
        }
    }
}

/// Gradient evaluation mode for the ascent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub bounds: FitBounds,
    /// Extra random restarts beyond the warm start.
    pub restarts: usize,
    /// Adam iterations per restart.
    pub max_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub gradient: GradientMode,
    pub mean: MeanPolicy,
    pub scale: ScalePolicy,
}

impl FitConfig {
    pub fn new(bounds: FitBounds) -> Self {
        Self {
            bounds,
            restarts: 2,
            max_iters: 150,
            learning_rate: 0.08,
            seed: 0,
            gradient: GradientMode::Analytic,
            mean: MeanPolicy::Empirical,
            scale: ScalePolicy::Standardize,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub spec: KernelSpec,
    pub lml: f64,
    /// LML of the (bound-clamped) starting spec under the same policies.
    pub lml_start: f64,
    /// Set when no restart produced a finite marginal likelihood.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy)]
enum ParamIndex {
    LogLengthscale { q: usize, m: usize },
    LogVariance { q: usize },
    Mixing { q: usize, row: usize },
    LogNugget { o: usize },
}

#[derive(Debug, Clone, Copy)]
enum Transform {
    Log,
    Linear,
}

struct ParamSpace {
    entries: Vec<(ParamIndex, Transform, (f64, f64))>,
    base: KernelSpec,
}

impl ParamSpace {
    fn new(spec0: &KernelSpec, bounds: &FitBounds) -> Result<Self> {
        let p = spec0.dim_in();
        let d = spec0.dim_out();
        if bounds.lengthscales.len() != p {
            return Err(Error::Config("fit bounds need one lengthscale range per input dim".into()));
        }
        let mut entries = Vec::new();
        for q in 0..spec0.num_latents() {
            for m in 0..p {
                let (lo, hi) = bounds.lengthscales[m];
                entries.push((ParamIndex::LogLengthscale { q, m }, Transform::Log, (lo.ln(), hi.ln())));
            }
            let (lo, hi) = bounds.variance;
            entries.push((ParamIndex::LogVariance { q }, Transform::Log, (lo.ln(), hi.ln())));
        }
        for q in 0..spec0.num_latents() {
            for row in 0..d {
                entries.push((ParamIndex::Mixing { q, row }, Transform::Linear, bounds.mixing));
            }
        }
        if let Some((lo, hi)) = bounds.nugget {
            for o in 0..d {
                entries.push((ParamIndex::LogNugget { o }, Transform::Log, (lo.ln(), hi.ln())));
            }
        }
        Ok(Self {
            entries,
            base: spec0.clone(),
        })
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    /// Transformed coordinates of a spec, clamped into bounds.
    fn pack(&self, spec: &KernelSpec) -> Vec<f64> {
        self.entries
            .iter()
            .map(|(idx, tr, (lo, hi))| {
                let raw = match *idx {
                    ParamIndex::LogLengthscale { q, m } => spec.latents[q].lengthscales[m],
                    ParamIndex::LogVariance { q } => spec.latents[q].variance,
                    ParamIndex::Mixing { q, row } => spec.mixing[(row, q)],
                    ParamIndex::LogNugget { o } => spec.nugget[o],
                };
                let t = match tr {
                    Transform::Log => raw.max(f64::MIN_POSITIVE).ln(),
                    Transform::Linear => raw,
                };
                t.clamp(*lo, *hi)
            })
            .collect()
    }

    fn unpack(&self, theta: &[f64]) -> KernelSpec {
        let mut spec = self.base.clone();
        for ((idx, tr, (lo, hi)), t) in self.entries.iter().zip(theta) {
            let t = t.clamp(*lo, *hi);
            let v = match tr {
                Transform::Log => t.exp(),
                Transform::Linear => t,
            };
            match *idx {
                ParamIndex::LogLengthscale { q, m } => spec.latents[q].lengthscales[m] = v,
                ParamIndex::LogVariance { q } => spec.latents[q].variance = v,
                ParamIndex::Mixing { q, row } => spec.mixing[(row, q)] = v,
                ParamIndex::LogNugget { o } => spec.nugget[o] = v,
            }
        }
        spec
    }

    fn random(&self, rng: &mut StdRng) -> Vec<f64> {
        self.entries
            .iter()
            .map(|(_, _, (lo, hi))| lo + rng.random::<f64>() * (hi - lo))
            .collect()
    }

    fn clamp(&self, theta: &mut [f64]) {
        for ((_, _, (lo, hi)), t) in self.entries.iter().zip(theta.iter_mut()) {
            *t = t.clamp(*lo, *hi);
        }
    }
}

/// Log-marginal likelihood of standardized data under a candidate spec.
/// Returns `None` when the Gram matrix cannot be factorized.
fn lml_value(spec: &KernelSpec, inputs: &[Vec<f64>], z_std: &DVector<f64>) -> Option<f64> {
    let gram = build_gram(spec, inputs);
    let chol = gram.cholesky()?;
    let nd = z_std.len() as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let alpha = chol.solve(z_std);
    let lml = -0.5 * (nd * (2.0 * std::f64::consts::PI).ln() + log_det + z_std.dot(&alpha));
    lml.is_finite().then_some(lml)
}

/// Analytic gradient of the LML w.r.t. the transformed parameters:
/// `dLML/dtheta = 0.5 alpha^T (dK/dtheta) alpha - 0.5 tr(K^{-1} dK/dtheta)`.
fn lml_with_gradient_analytic(
    space: &ParamSpace,
    theta: &[f64],
    inputs: &[Vec<f64>],
    z_std: &DVector<f64>,
) -> Option<(f64, Vec<f64>)> {
    let spec = space.unpack(theta);
    let gram = build_gram(&spec, inputs);
    let chol = gram.cholesky()?;
    let nd = z_std.len() as f64;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let alpha = chol.solve(z_std);
    let lml = -0.5 * (nd * (2.0 * std::f64::consts::PI).ln() + log_det + z_std.dot(&alpha));
    if !lml.is_finite() {
        return None;
    }
    let k_inv = chol.inverse();
    let grad = space
        .entries
        .iter()
        .map(|(idx, _, _)| {
            let dk = gram_derivative(&spec, inputs, *idx);
            let quad = alpha.dot(&(&dk * &alpha));
            let trace = k_inv.iter().zip(dk.iter()).map(|(a, b)| a * b).sum::<f64>();
            0.5 * (quad - trace)
        })
        .collect();
    Some((lml, grad))
}

/// Derivative of the Gram matrix w.r.t. one transformed parameter.
fn gram_derivative(spec: &KernelSpec, inputs: &[Vec<f64>], idx: ParamIndex) -> DMatrix<f64> {
    let n = inputs.len();
    let d = spec.dim_out();
    let mut dk = DMatrix::zeros(n * d, n * d);
    match idx {
        ParamIndex::LogLengthscale { q, m } => {
            let a = spec.mixing.column(q);
            for i in 0..n {
                for j in 0..=i {
                    let g = spec.latents[q].d_log_lengthscale(&inputs[i], &inputs[j], m);
                    if g == 0.0 {
                        continue;
                    }
                    fill_outer(&mut dk, i, j, d, g, &a, &a);
                }
            }
        }
        ParamIndex::LogVariance { q } => {
            let a = spec.mixing.column(q);
            for i in 0..n {
                for j in 0..=i {
                    let g = spec.latents[q].eval(&inputs[i], &inputs[j]);
                    fill_outer(&mut dk, i, j, d, g, &a, &a);
                }
            }
        }
        ParamIndex::Mixing { q, row } => {
            let a = spec.mixing.column(q).clone_owned();
            for i in 0..n {
                for j in 0..=i {
                    let g = spec.latents[q].eval(&inputs[i], &inputs[j]);
                    // d(a a^T)/da_row = e_row a^T + a e_row^T
                    for o in 0..d {
                        let val = g * a[o];
                        dk[(i * d + row, j * d + o)] += val;
                        dk[(i * d + o, j * d + row)] += val;
                        if i != j {
                            dk[(j * d + row, i * d + o)] += val;
                            dk[(j * d + o, i * d + row)] += val;
                        }
                    }
                }
            }
        }
        ParamIndex::LogNugget { o } => {
            for i in 0..n {
                dk[(i * d + o, i * d + o)] = spec.nugget[o];
            }
        }
    }
    dk
}

fn fill_outer(
    dk: &mut DMatrix<f64>,
    i: usize,
    j: usize,
    d: usize,
    g: f64,
    a: &nalgebra::DVectorView<f64>,
    b: &nalgebra::DVectorView<f64>,
) {
    for r in 0..d {
        for c in 0..d {
            let val = g * a[r] * b[c];
            dk[(i * d + r, j * d + c)] += val;
            if i != j {
                dk[(j * d + c, i * d + r)] += val;
            }
        }
    }
}

/// Central finite-difference gradient (step 1e-5 in transformed space).
fn lml_gradient_fd(
    space: &ParamSpace,
    theta: &[f64],
    inputs: &[Vec<f64>],
    z_std: &DVector<f64>,
) -> Option<(f64, Vec<f64>)> {
    const H: f64 = 1e-5;
    let f0 = lml_value(&space.unpack(theta), inputs, z_std)?;
    let mut grad = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for k in 0..theta.len() {
        t[k] = theta[k] + H;
        let up = lml_value(&space.unpack(&t), inputs, z_std)?;
        t[k] = theta[k] - H;
        let dn = lml_value(&space.unpack(&t), inputs, z_std)?;
        t[k] = theta[k];
        grad.push((up - dn) / (2.0 * H));
    }
    Some((f0, grad))
}

/// Maximize the log-marginal likelihood over the bounded hyperparameter box.
///
/// The warm start `spec0` is always evaluated first, so the returned spec is
/// improved-or-equal relative to it (after clamping into the bounds).
pub fn fit_hyperparameters(
    spec0: &KernelSpec,
    inputs: &[Vec<f64>],
    outputs: &[DVector<f64>],
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    spec0.validate()?;
    if inputs.is_empty() {
        return Err(Error::Config("cannot fit hyperparameters with no data".into()));
    }
    let d = spec0.dim_out();
    let mean_const = match &cfg.mean {
        MeanPolicy::Empirical => super::empirical_mean(outputs, d),
        MeanPolicy::Fixed(v) => DVector::from_vec(v.clone()),
    };
    let scale = match &cfg.scale {
        ScalePolicy::Standardize => super::empirical_scale(outputs, d),
        ScalePolicy::One => DVector::from_element(d, 1.0),
        ScalePolicy::Fixed(v) => DVector::from_vec(v.clone()),
    };
    let z_std = super::standardized_outputs(outputs, &mean_const, &scale);

    let space = ParamSpace::new(spec0, &cfg.bounds)?;
    let theta0 = space.pack(spec0);
    let start_lml = lml_value(&space.unpack(&theta0), inputs, &z_std);

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut best: Option<(f64, Vec<f64>)> = start_lml.map(|v| (v, theta0.clone()));

    for restart in 0..=cfg.restarts {
        let mut theta = if restart == 0 {
            theta0.clone()
        } else {
            space.random(&mut rng)
        };
        adam_ascent(&space, &mut theta, inputs, &z_std, cfg, &mut best);
    }

    match best {
        Some((lml, theta)) => Ok(FitOutcome {
            spec: space.unpack(&theta),
            lml,
            lml_start: start_lml.unwrap_or(f64::NEG_INFINITY),
            degraded: false,
        }),
        None => Ok(FitOutcome {
            spec: space.unpack(&theta0),
            lml: f64::NEG_INFINITY,
            lml_start: f64::NEG_INFINITY,
            degraded: true,
        }),
    }
}

fn adam_ascent(
    space: &ParamSpace,
    theta: &mut Vec<f64>,
    inputs: &[Vec<f64>],
    z_std: &DVector<f64>,
    cfg: &FitConfig,
    best: &mut Option<(f64, Vec<f64>)>,
) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let m = space.len();
    let mut mom = vec![0.0; m];
    let mut vel = vec![0.0; m];
    for it in 1..=cfg.max_iters {
        let eval = match cfg.gradient {
            GradientMode::Analytic => lml_with_gradient_analytic(space, theta, inputs, z_std),
            GradientMode::FiniteDifference => lml_gradient_fd(space, theta, inputs, z_std),
        };
        let Some((lml, grad)) = eval else {
            // Singular Gram at this iterate: shrink toward the best point seen.
            if let Some((_, b)) = best {
                for (t, tb) in theta.iter_mut().zip(b.iter()) {
                    *t = 0.5 * (*t + *tb);
                }
                continue;
            } else {
                return;
            }
        };
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            *best = Some((lml, theta.clone()));
        }
        for k in 0..m {
            mom[k] = B1 * mom[k] + (1.0 - B1) * grad[k];
            vel[k] = B2 * vel[k] + (1.0 - B2) * grad[k] * grad[k];
            let mhat = mom[k] / (1.0 - B1.powi(it as i32));
            let vhat = vel[k] / (1.0 - B2.powi(it as i32));
            // Ascent step.
            theta[k] += cfg.learning_rate * mhat / (vhat.sqrt() + EPS);
        }
        space.clamp(theta);
    }
    // Final candidate.
    if let Some(lml) = lml_value(&space.unpack(theta), inputs, z_std) {
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            *best = Some((lml, theta.clone()));
        }
    }
}

/// Bounds that strictly enclose a spec's parameters, so finite differences
/// at the spec never hit a clamp.
fn enclosing_bounds(spec: &KernelSpec) -> FitBounds {
    let p = spec.dim_in();
    let lengthscales = (0..p)
        .map(|m| {
            let lo = spec
                .latents
                .iter()
                .map(|l| l.lengthscales[m])
                .fold(f64::INFINITY, f64::min);
            let hi = spec
                .latents
                .iter()
                .map(|l| l.lengthscales[m])
                .fold(0.0, f64::max);
            (lo / 100.0, hi * 100.0)
        })
        .collect();
    let var_lo = spec.latents.iter().map(|l| l.variance).fold(f64::INFINITY, f64::min);
    let var_hi = spec.latents.iter().map(|l| l.variance).fold(0.0, f64::max);
    let mix_hi = spec.mixing.abs().max() + 10.0;
    let nugget = if spec.nugget.iter().all(|v| *v == 0.0) {
        None
    } else {
        let lo = spec
            .nugget
            .iter()
            .filter(|v| **v > 0.0)
            .fold(f64::INFINITY, |a, b| a.min(*b));
        Some((lo / 100.0, spec.nugget.iter().fold(1e-12, |a, b| a.max(*b)) * 100.0))
    };
    FitBounds {
        lengthscales,
        variance: (var_lo / 100.0, var_hi * 100.0),
        mixing: (-mix_hi, mix_hi),
        nugget,
    }
}

/// Gradient-check helper exposed for tests and the oracle battery: returns
/// `(analytic, finite-difference)` gradients at `spec`'s parameters, with
/// bounds widened so the central difference never clips.
pub(crate) fn gradient_pair(
    spec: &KernelSpec,
    inputs: &[Vec<f64>],
    outputs: &[DVector<f64>],
    cfg: &FitConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = spec.dim_out();
    let mean_const = match &cfg.mean {
        MeanPolicy::Empirical => super::empirical_mean(outputs, d),
        MeanPolicy::Fixed(v) => DVector::from_vec(v.clone()),
    };
    let scale = match &cfg.scale {
        ScalePolicy::Standardize => super::empirical_scale(outputs, d),
        ScalePolicy::One => DVector::from_element(d, 1.0),
        ScalePolicy::Fixed(v) => DVector::from_vec(v.clone()),
    };
    let z_std = super::standardized_outputs(outputs, &mean_const, &scale);
    let space = ParamSpace::new(spec, &enclosing_bounds(spec)).ok()?;
    let theta = space.pack(spec);
    let (_, ga) = lml_with_gradient_analytic(&space, &theta, inputs, &z_std)?;
    let (_, gf) = lml_gradient_fd(&space, &theta, inputs, &z_std)?;
    Some((ga, gf))
}
