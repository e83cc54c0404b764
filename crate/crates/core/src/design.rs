//! Sequential design strategies: IP-SUR, CSQ, D-optimal and I-optimal.
//!
//! IP-SUR minimizes the chain-average of updated-covariance determinants
//! `(1/L) sum_l |C_{n+1}(X_l | x)|`, the tractable form of the expected
//! posterior-weighted IMSPE after querying `x`. CSQ maximizes `|C_n(x)|`
//! inside the log-posterior ball of radius `h` around the MAP. D-/I-optimal
//! are the unconstrained baselines.

use std::cell::RefCell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{halton, mix_seed, BoxDomain};
use crate::error::{Error, Result};
use crate::gp::TrainedGP;
use crate::inverse::InverseProblem;
use crate::mcmc::PosteriorChain;
use crate::optim::{minimize, minimize_with_inits, AnnealConfig};

/// Chain samples per criterion evaluation (evenly strided; the stride is
/// logged once per evaluator).
pub const CRITERION_MAX_SAMPLES: usize = 2000;

/// Which acquisition strategy to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Csq { h: f64 },
    IpSur { beta: f64 },
    DOptimal,
    IOptimal { m_int: usize },
}

impl StrategyKind {
    pub fn label(&self) -> String {
        match self {
            StrategyKind::Csq { h } => format!("csq_h{h}"),
            StrategyKind::IpSur { beta } => {
                if (*beta - 1.0).abs() < 1e-12 {
                    "ipsur".to_string()
                } else {
                    format!("ipsur_beta{beta}")
                }
            }
            StrategyKind::DOptimal => "d_optimal".to_string(),
            StrategyKind::IOptimal { .. } => "i_optimal".to_string(),
        }
    }
}

/// A strategy plus its optimizer budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignStrategy {
    pub kind: StrategyKind,
    pub optim: AnnealConfig,
}

impl DesignStrategy {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            StrategyKind::Csq { h } => {
                if !(*h > 0.0) {
                    return Err(Error::Config("CSQ requires h > 0".into()));
                }
            }
            StrategyKind::IpSur { beta } => {
                if !(0.0..=1.0).contains(beta) {
                    return Err(Error::Config("IP-SUR tempering beta must lie in [0, 1]".into()));
                }
            }
            StrategyKind::IOptimal { m_int } => {
                if *m_int < 64 {
                    return Err(Error::Config("I-optimal needs at least 64 integration nodes".into()));
                }
            }
            StrategyKind::DOptimal => {}
        }
        self.optim.validate()
    }
}

/// Outcome of one acquisition.
#[derive(Debug, Clone)]
pub struct Selection {
    pub point: Vec<f64>,
    pub criterion_value: f64,
    pub evals_used: usize,
    /// Set when the criterion surface was flat over the probe phase
    /// (e.g. a stationary untrained GP under the D-optimal criterion).
    pub degenerate: bool,
}

/// Cached evaluator of `x -> sum_l w_l |C_{n+1}(X_l | x)|` over a fixed set
/// of points. Per-point predictive covariances and Gram cross-blocks are
/// precomputed so that each criterion evaluation costs one Gram solve plus
/// one d x d update per point.
pub struct VarianceReductionEvaluator<'a> {
    gp: &'a TrainedGP,
    points: Vec<Vec<f64>>,
    base_covs: Vec<DMatrix<f64>>,
    base_dets: Vec<f64>,
    cross_blocks: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

impl<'a> VarianceReductionEvaluator<'a> {
    /// Uniformly weighted evaluator over arbitrary points (I-optimal nodes).
    pub fn new_uniform(gp: &'a TrainedGP, points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyChain("variance-reduction evaluator needs points"));
        }
        Self::build(gp, points, vec![1.0 / n as f64; n])
    }

    /// Posterior-chain evaluator: strided subsample of at most
    /// [`CRITERION_MAX_SAMPLES`] samples, self-normalized importance weights
    /// `w_l ∝ L_n(y | X_l)^{beta - 1}` for the tempered criterion. `beta = 1`
    /// performs no reweighting.
    pub fn from_chain(gp: &'a TrainedGP, chain: &PosteriorChain, beta: f64) -> Result<Self> {
        if chain.is_empty() {
            return Err(Error::EmptyChain("IP-SUR criterion needs a posterior chain"));
        }
        let idx = chain.strided_indices(CRITERION_MAX_SAMPLES);
        if idx.len() < chain.len() {
            log::debug!(
                "criterion subsample: {} of {} chain samples (stride {:.1})",
                idx.len(),
                chain.len(),
                chain.len() as f64 / idx.len() as f64
            );
        }
        let points: Vec<Vec<f64>> = idx.iter().map(|&l| chain.samples()[l].clone()).collect();
        let weights = if (beta - 1.0).abs() == 0.0 {
            vec![1.0 / points.len() as f64; points.len()]
        } else {
            // Self-normalized importance weights to the tempered posterior;
            // the uniform prior contributes only a constant that cancels.
            let lps: Vec<f64> = idx.iter().map(|&l| chain.log_densities()[l]).collect();
            let max_lp = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = lps.iter().map(|lp| ((beta - 1.0) * (lp - max_lp)).exp()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|w| w / total).collect()
        };
        Self::build(gp, points, weights)
    }

    fn build(gp: &'a TrainedGP, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let base_covs: Vec<DMatrix<f64>> = points.iter().map(|x| gp.predict(x).cov).collect();
        let base_dets: Vec<f64> = base_covs.iter().map(|c| c.determinant().max(0.0)).collect();
        let cross_blocks = points.iter().map(|x| gp.cross_training(x)).collect();
        Ok(Self {
            gp,
            points,
            base_covs,
            base_dets,
            cross_blocks,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weighted average of the current determinants (no query): the IVAR
    /// estimate over the evaluator's points.
    pub fn baseline(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.base_dets)
            .map(|(w, d)| w * d)
            .sum()
    }

    /// Criterion value at a query point `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let scale = self.gp.output_scale();
        let kx = self.gp.cross_training(x);
        let v_x = self.gp.solve_gram(&kx.transpose());
        let c_x = self.gp.predict(x).cov;
        let Some(chol_x) = crate::gp::factorize_query_cov(&c_x) else {
            // Exhausted query point: conditioning there changes nothing.
            return self.baseline();
        };
        let spec = self.gp.spec();
        let d = spec.dim_out();
        let mut acc = 0.0;
        for l in 0..self.points.len() {
            let mut cross_std = spec.eval(&self.points[l], x);
            if self.gp.num_points() > 0 {
                cross_std -= &self.cross_blocks[l] * &v_x;
            }
            let mut cross = cross_std;
            for i in 0..d {
                for j in 0..d {
                    cross[(i, j)] *= scale[i] * scale[j];
                }
            }
            let sol = chol_x.solve(&cross.transpose());
            let reduced = &self.base_covs[l] - &cross * sol;
            let det = crate::gp::clamp_psd(reduced).determinant().max(0.0);
            acc += self.weights[l] * det;
        }
        acc
    }
}

/// IP-SUR acquisition criterion `F_n(x) / Z_n` estimated over the chain:
/// `sum_l w_l(beta) |C_{n+1}(X_l | x)|` with `w_l(1) = 1/L`.
pub fn ipsur_criterion(
    gp: &TrainedGP,
    chain: &PosteriorChain,
    x: &[f64],
    beta: f64,
) -> Result<f64> {
    Ok(VarianceReductionEvaluator::from_chain(gp, chain, beta)?.eval(x))
}

/// IP-SUR selection: minimize the criterion over the prior box.
pub fn ipsur_select(
    gp: &TrainedGP,
    ip: &InverseProblem,
    chain: &PosteriorChain,
    strategy: &DesignStrategy,
) -> Result<Selection> {
    let StrategyKind::IpSur { beta } = strategy.kind else {
        return Err(Error::Config("ipsur_select requires an IP-SUR strategy".into()));
    };
    let evaluator = VarianceReductionEvaluator::from_chain(gp, chain, beta)?;
    let out = minimize(|x| evaluator.eval(x), ip.bounds(), &strategy.optim)?;
    let degenerate = out.probe_span() <= 1e-14 * (1.0 + out.probe_range.1.abs());
    Ok(Selection {
        point: out.x_min,
        criterion_value: out.f_min,
        evals_used: out.evals_used,
        degenerate,
    })
}

fn floored_log_det(gp: &TrainedGP, x: &[f64]) -> f64 {
    gp.predict(x).cov.determinant().max(1e-300).ln()
}

/// Penalty for leaving the CSQ constraint set: zero inside, `1e6 x
/// violation` outside. Depends on the log-posterior gap only, so adding a
/// constant to the log-likelihood cannot change the constraint set.
fn csq_penalty(gap: f64, h: f64) -> f64 {
    if gap <= h {
        0.0
    } else {
        1e6 * (gap - h)
    }
}

pub(crate) fn csq_select_impl<F: Fn(&[f64]) -> f64>(
    gp: &TrainedGP,
    log_posterior: F,
    bounds: &BoxDomain,
    h: f64,
    optim: &AnnealConfig,
) -> Result<Selection> {
    let map_cfg = AnnealConfig {
        seed: mix_seed(optim.seed, 0x4d41_50),
        ..optim.clone()
    };
    let map_out = minimize(|x| -log_posterior(x), bounds, &map_cfg)?;
    let (x_map, lp_map) = (map_out.x_min, -map_out.f_min);

    // Track the best point that satisfies the constraint within tolerance;
    // the annealer itself only sees the penalized objective.
    let feasible_best: RefCell<Option<(f64, Vec<f64>)>> = RefCell::new(None);
    let objective = |x: &[f64]| {
        let neg_log_det = -floored_log_det(gp, x);
        let gap = lp_map - log_posterior(x);
        let value = neg_log_det + csq_penalty(gap, h);
        if gap <= h + 1e-6 {
            let mut best = feasible_best.borrow_mut();
            if best.as_ref().is_none_or(|(b, _)| neg_log_det < *b) {
                *best = Some((neg_log_det, x.to_vec()));
            }
        }
        value
    };
    let out = minimize_with_inits(objective, bounds, optim, std::slice::from_ref(&x_map))?;
    let (neg_log_det, point) = feasible_best
        .into_inner()
        .ok_or_else(|| Error::Numerical("CSQ found no feasible point (MAP itself was infeasible)".into()))?;
    let gap = lp_map - log_posterior(&point);
    debug_assert!(gap <= h + 1e-6, "CSQ membership violated: gap {gap} > h {h}");
    Ok(Selection {
        point,
        criterion_value: (-neg_log_det).exp(),
        evals_used: out.evals_used + map_out.evals_used,
        degenerate: false,
    })
}

/// CSQ selection: maximize `|C_n(x)|` on the set of points whose
/// log-posterior gap to the MAP is at most `h`. The MAP is recomputed for
/// every call.
pub fn csq_select(
    gp: &TrainedGP,
    ip: &InverseProblem,
    strategy: &DesignStrategy,
) -> Result<Selection> {
    let StrategyKind::Csq { h } = strategy.kind else {
        return Err(Error::Config("csq_select requires a CSQ strategy".into()));
    };
    csq_select_impl(gp, |x| ip.log_posterior(x), ip.bounds(), h, &strategy.optim)
}

/// D-optimal selection: maximize the predictive-covariance determinant over
/// the whole box.
pub fn d_optimal_select(
    gp: &TrainedGP,
    bounds: &BoxDomain,
    optim: &AnnealConfig,
) -> Result<Selection> {
    let out = minimize(|x| -floored_log_det(gp, x), bounds, optim)?;
    let degenerate = out.probe_span() <= 1e-9;
    if degenerate {
        log::warn!("D-optimal criterion is flat over the probe phase (untrained stationary GP?)");
    }
    Ok(Selection {
        point: out.x_min,
        criterion_value: (-out.f_min).exp(),
        evals_used: out.evals_used,
        degenerate,
    })
}

/// I-optimal selection: minimize the average updated-covariance determinant
/// over a fixed low-discrepancy node set (uniform-measure IMSPE reduction).
pub fn i_optimal_select(
    gp: &TrainedGP,
    bounds: &BoxDomain,
    optim: &AnnealConfig,
    m_int: usize,
) -> Result<Selection> {
    let nodes = halton(bounds, m_int.max(1));
    let evaluator = VarianceReductionEvaluator::new_uniform(gp, nodes)?;
    let out = minimize(|x| evaluator.eval(x), bounds, optim)?;
    let degenerate = out.probe_span() <= 1e-14 * (1.0 + out.probe_range.1.abs());
    Ok(Selection {
        point: out.x_min,
        criterion_value: out.f_min,
        evals_used: out.evals_used,
        degenerate,
    })
}

/// Dispatch a strategy. IP-SUR requires the posterior chain of the current
/// iteration; CSQ needs the inverse problem for its MAP search.
pub fn select_next(
    gp: &TrainedGP,
    ip: &InverseProblem,
    chain: Option<&PosteriorChain>,
    strategy: &DesignStrategy,
) -> Result<Selection> {
    strategy.validate()?;
    match strategy.kind {
        StrategyKind::IpSur { .. } => {
            let chain = chain.ok_or(Error::EmptyChain("IP-SUR selection needs a chain"))?;
            ipsur_select(gp, ip, chain, strategy)
        }
        StrategyKind::Csq { .. } => csq_select(gp, ip, strategy),
        StrategyKind::DOptimal => d_optimal_select(gp, ip.bounds(), &strategy.optim),
        StrategyKind::IOptimal { m_int } => i_optimal_select(gp, ip.bounds(), &strategy.optim, m_int),
    }
}

#[cfg(test)]
mod tests;
