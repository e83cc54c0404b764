//! Bounded global minimization: simulated annealing with a log-decreasing
//! temperature `T_n = C / log(n + e)` plus a coordinate-wise golden-section
//! polish stage, in the style of dual annealing.
//!
//! The returned minimum is a best-seen guarantee: it is the smallest value
//! over every point the optimizer evaluated, including probes and polish.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};

/// Annealing configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// Cooling constant `C` in `T_n = C / log(n + e)`. `None` picks
    /// `5 x (objective range over the probe points)`, recorded in logs.
    pub cooling: Option<f64>,
    /// Total probe + annealing evaluations.
    pub max_evals: usize,
    /// Number of independent annealing runs sharing the budget.
    pub n_restarts: usize,
    /// Extra evaluations for the golden-section polish stage.
    pub polish_evals: usize,
    pub seed: u64,
}

impl AnnealConfig {
    pub fn with_budget(max_evals: usize) -> Self {
        Self {
            cooling: None,
            max_evals,
            n_restarts: 2,
            polish_evals: (max_evals / 10).max(32),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_evals < 100 {
            return Err(Error::Config("optimizer budget must be at least 100 evaluations".into()));
        }
        if let Some(c) = self.cooling {
            if !(c > 0.0) {
                return Err(Error::Config("cooling constant must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub evals_used: usize,
    pub nan_rejections: usize,
    /// Objective range observed over the probe phase; a near-zero range
    /// marks a degenerate (flat) criterion surface.
    pub probe_range: (f64, f64),
}

impl MinimizeOutcome {
    pub fn probe_span(&self) -> f64 {
        self.probe_range.1 - self.probe_range.0
    }
}

struct Walker<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    evals: usize,
    nan_rejections: usize,
    best: Option<(f64, Vec<f64>)>,
}

impl<'a, F: Fn(&[f64]) -> f64> Walker<'a, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            self.nan_rejections += 1;
            return f64::INFINITY;
        }
        if v.is_finite() && self.best.as_ref().is_none_or(|(b, _)| v < *b) {
            self.best = Some((v, x.to_vec()));
        }
        v
    }
}

/// Minimize `f` over `bounds`. Deterministic per `cfg.seed`.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &BoxDomain,
    cfg: &AnnealConfig,
) -> Result<MinimizeOutcome> {
    minimize_with_inits(f, bounds, cfg, &[])
}

/// Like [`minimize`], with caller-supplied points evaluated first in the
/// probe phase (they count toward the budget and toward the best-seen
/// result).
pub fn minimize_with_inits<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &BoxDomain,
    cfg: &AnnealConfig,
    inits: &[Vec<f64>],
) -> Result<MinimizeOutcome> {
    let p = bounds.dim();
    let widths = bounds.widths();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut w = Walker {
        f: &f,
        evals: 0,
        nan_rejections: 0,
        best: None,
    };

    // Probe phase: inits, box center, then uniform points.
    let n_probe = cfg.max_evals.min(50.max(inits.len() + 1));
    let mut probe_lo = f64::INFINITY;
    let mut probe_hi = f64::NEG_INFINITY;
    let mut probe_points: Vec<Vec<f64>> = Vec::with_capacity(n_probe);
    probe_points.extend(inits.iter().cloned());
    probe_points.push(bounds.center());
    while probe_points.len() < n_probe {
        probe_points.push(bounds.sample_uniform(&mut rng));
    }
    probe_points.truncate(n_probe);
    for x in &probe_points {
        let v = w.eval(x);
        if v.is_finite() {
            probe_lo = probe_lo.min(v);
            probe_hi = probe_hi.max(v);
        }
    }

    let span = if probe_hi > probe_lo { probe_hi - probe_lo } else { 0.0 };
    let cooling = cfg.cooling.unwrap_or_else(|| {
        let c = (5.0 * span).max(1e-12);
        log::debug!("annealer cooling constant auto-set to {c:.6e} from probe range {span:.6e}");
        c
    });

    // Annealing runs.
    let runs = cfg.n_restarts.max(1);
    let remaining = cfg.max_evals.saturating_sub(w.evals);
    let per_run = remaining / runs;
    let t0 = cooling / (1.0 + std::f64::consts::E).ln();
    for run in 0..runs {
        if per_run == 0 {
            break;
        }
        let mut current = if run == 0 {
            w.best.as_ref().map(|(_, x)| x.clone()).unwrap_or_else(|| bounds.center())
        } else {
            bounds.sample_uniform(&mut rng)
        };
        let mut f_current = w.eval(&current);
        let mut since_improvement = 0usize;
        let mut run_best = f_current;
        for n in 1..per_run {
            let temp = cooling / ((n as f64) + std::f64::consts::E).ln();
            let frac = (temp / t0).clamp(0.01, 0.5);
            let mut cand = current.clone();
            for i in 0..p {
                let g: f64 = StandardNormal.sample(&mut rng);
                cand[i] += g * frac * widths[i];
            }
            bounds.reflect(&mut cand);
            let f_cand = w.eval(&cand);
            if f_cand < run_best {
                run_best = f_cand;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            let accept = f_cand <= f_current
                || rng.random::<f64>() < ((f_current - f_cand) / temp).exp();
            if accept {
                current = cand;
                f_current = f_cand;
            }
            // Re-center on the incumbent after a long dry spell.
            if since_improvement > 150 {
                if let Some((fb, xb)) = &w.best {
                    current = xb.clone();
                    f_current = *fb;
                }
                since_improvement = 0;
            }
        }
    }

    // Polish stage: golden-section line searches per coordinate around the
    // incumbent, with a shrinking trust width.
    if let Some((_, seed_x)) = w.best.clone() {
        let mut budget = cfg.polish_evals;
        let mut trust: Vec<f64> = widths.iter().map(|v| 0.1 * v).collect();
        let mut center = seed_x;
        while budget >= 8 {
            for i in 0..p {
                if budget < 8 {
                    break;
                }
                let lo = (center[i] - trust[i]).max(bounds.lo[i]);
                let hi = (center[i] + trust[i]).min(bounds.hi[i]);
                let line_budget = budget.min(18);
                golden_section(&mut w, &center, i, lo, hi, line_budget);
                budget -= line_budget;
                if let Some((_, xb)) = &w.best {
                    center = xb.clone();
                }
            }
            for t in trust.iter_mut() {
                *t *= 0.33;
            }
            if trust.iter().zip(&widths).all(|(t, w)| *t < 1e-14 * w) {
                break;
            }
        }
    }

    match w.best {
        Some((f_min, x_min)) => Ok(MinimizeOutcome {
            x_min,
            f_min,
            evals_used: w.evals,
            nan_rejections: w.nan_rejections,
            probe_range: (probe_lo, probe_hi),
        }),
        None if w.nan_rejections == w.evals && w.evals > 0 => Err(Error::AllNan),
        None => Err(Error::Numerical("objective was never finite over the search".into())),
    }
}

/// Golden-section search along coordinate `i`; evaluates exactly `budget`
/// points. Updates the walker's global best as a side effect.
fn golden_section<F: Fn(&[f64]) -> f64>(
    w: &mut Walker<F>,
    base: &[f64],
    i: usize,
    mut a: f64,
    mut b: f64,
    budget: usize,
) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    if !(b > a) || budget < 4 {
        return;
    }
    let mut x = base.to_vec();
    let eval_at = |w: &mut Walker<F>, t: f64, x: &mut Vec<f64>| {
        x[i] = t;
        w.eval(x)
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval_at(w, c, &mut x);
    let mut fd = eval_at(w, d, &mut x);
    for _ in 0..budget.saturating_sub(2) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval_at(w, c, &mut x);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval_at(w, d, &mut x);
        }
    }
}
