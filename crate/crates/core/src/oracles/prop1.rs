//! Brute-force verification of the closed-form IP-SUR criterion.
//!
//! The closed form says the expected post-query uncertainty functional
//! `E_z[D_{n+1}(x, z)]` equals `int |C_{n+1}(u | x)| L_n(y | u) p(u) du`:
//! the expectation over the unknown new output can be replaced by the
//! *current* likelihood. The oracle here recomputes the left side the hard
//! way — draw `z ~ N(m_n(x), C_n(x))`, rebuild the updated likelihood
//! `L_{n+1}(y | u, x, z)` from scalar formulas, integrate on a grid — and
//! compares against the closed form evaluated through the production
//! `updated_cov` / `log_likelihood_full` path.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

use super::OracleCheck;
use crate::domain::BoxDomain;
use crate::gp::{KernelFamily, KernelSpec, LatentKernel, MeanPolicy, ScalePolicy, TrainedGP};
use crate::inverse::{InverseProblem, ObservationSet};
use crate::mcmc::PosteriorChain;

/// One probe point of the brute-force comparison.
#[derive(Debug, Clone)]
pub struct Prop1Probe {
    pub x: f64,
    /// Quadrature of the closed form through the production code path.
    pub closed_form: f64,
    /// Monte-Carlo mean of the re-conditioned brute force.
    pub mc_mean: f64,
    /// Standard error of the Monte-Carlo mean.
    pub mc_se: f64,
    /// Chain-average estimator route over an i.i.d. grid-posterior sample.
    pub estimator: f64,
    /// 1-sigma scale of the estimator route.
    pub estimator_se: f64,
}

#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub probes: Vec<Prop1Probe>,
}

impl Prop1Report {
    pub fn all_within(&self, k_sigma: f64) -> bool {
        self.probes
            .iter()
            .all(|p| (p.closed_form - p.mc_mean).abs() <= k_sigma * p.mc_se)
    }
}

/// The 1D toy problem: p = 1, d = 1, n = 4 training points, N = 2
/// observations, zero nugget.
pub fn toy_problem_1d() -> (Arc<TrainedGP>, InverseProblem) {
    let spec = KernelSpec {
        latents: vec![LatentKernel {
            family: KernelFamily::Rbf,
            lengthscales: vec![0.25],
            variance: 1.0,
        }],
        mixing: DMatrix::identity(1, 1),
        nugget: vec![0.0],
    };
    let target = |x: f64| (3.0 * x).sin();
    let inputs: Vec<Vec<f64>> = vec![vec![0.05], vec![0.35], vec![0.65], vec![0.95]];
    let outputs: Vec<DVector<f64>> = inputs
        .iter()
        .map(|x| DVector::from_vec(vec![target(x[0])]))
        .collect();
    let gp = Arc::new(
        TrainedGP::condition_with(
            spec,
            &inputs,
            &outputs,
            MeanPolicy::Fixed(vec![0.0]),
            ScalePolicy::One,
        )
        .unwrap(),
    );
    let obs = ObservationSet::new(
        vec![
            DVector::from_vec(vec![target(0.55) + 0.05]),
            DVector::from_vec(vec![target(0.55) - 0.08]),
        ],
        DMatrix::from_element(1, 1, 0.04),
    )
    .unwrap();
    let bounds = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
    let ip = InverseProblem::new(obs, gp.clone(), bounds).unwrap();
    (gp, ip)
}

/// Run the brute-force comparison at `n_probes` query points with `n_draws`
/// z-draws and trapezoid integration on a `grid_size`-point grid.
pub fn prop1_report(n_draws: usize, grid_size: usize, n_probes: usize, seed: u64) -> Prop1Report {
    let (gp, ip) = toy_problem_1d();
    let bounds = ip.bounds();
    let h = bounds.width(0) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|j| bounds.lo[0] + j as f64 * h).collect();
    let trapz_w: Vec<f64> = (0..grid_size)
        .map(|j| if j == 0 || j == grid_size - 1 { 0.5 * h } else { h })
        .collect();
    let prior = 1.0 / bounds.volume();

    // Current likelihood on the grid (full Kronecker form, production path)
    // and the oracle's own dense-route GP posterior at each node.
    let ln_grid: Vec<f64> = grid
        .iter()
        .map(|&u| ip.log_likelihood_full(&[u]).unwrap().exp())
        .collect();
    let z_n: f64 = grid
        .iter()
        .zip(&trapz_w)
        .zip(&ln_grid)
        .map(|((_, w), l)| w * l * prior)
        .sum();

    // Dense-route conditional moments for the oracle side.
    let spec = gp.spec().clone();
    let inputs = gp.inputs().to_vec();
    let outputs = gp.outputs().to_vec();
    let dense_moments: Vec<(f64, f64)> = grid
        .iter()
        .map(|&u| {
            let (m, c) = super::dense_predict(&spec, &inputs, &outputs, &[u]);
            (m[0], c[(0, 0)].max(0.0))
        })
        .collect();
    let c_obs = ip.observations().c_obs()[(0, 0)];
    let y: Vec<f64> = ip.observations().rows().iter().map(|r| r[0]).collect();
    let n_obs = y.len();
    assert_eq!(n_obs, 2, "the toy is built with N = 2");

    let probes: Vec<f64> = (0..n_probes)
        .map(|k| bounds.lo[0] + (k as f64 + 0.5) / n_probes as f64 * bounds.width(0))
        .collect();

    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_probes);
    for &xq in &probes {
        // Production closed form: |C_{n+1}(u | x)| from `updated_cov`.
        let updated_dets: Vec<f64> = grid
            .iter()
            .map(|&u| gp.updated_cov(&[u], &[xq]).unwrap().determinant().max(0.0))
            .collect();
        let closed_form: f64 = grid
            .iter()
            .enumerate()
            .map(|(j, _)| trapz_w[j] * updated_dets[j] * ln_grid[j] * prior)
            .sum::<f64>()
            / z_n;

        // Oracle side: scalar re-derivation of the updated quantities.
        let (m_x, c_x) = {
            let (m, c) = super::dense_predict(&spec, &inputs, &outputs, &[xq]);
            (m[0], c[(0, 0)].max(1e-300))
        };
        let cross: Vec<f64> = grid
            .iter()
            .map(|&u| dense_cross_cov_1d(&spec, &inputs, u, xq))
            .collect();
        // z-independent per-node pieces of L_{n+1}: the updated covariance
        // C_up = C_n(u) - cross^2 / C_n(x) enters a 2x2 total covariance
        // [[C_up + c_obs, C_up], [C_up, C_up + c_obs]].
        struct Node {
            c_up_det: f64,
            coef: f64,
            m_n: f64,
            inv: [[f64; 2]; 2],
            log_det: f64,
        }
        let nodes: Vec<Node> = (0..grid.len())
            .map(|j| {
                let (m_n, c_n) = dense_moments[j];
                let lam = cross[j] * cross[j] / c_x;
                let c_up = (c_n - lam).max(0.0);
                let a = c_up + c_obs;
                let b = c_up;
                let det = a * a - b * b;
                let inv = [[a / det, -b / det], [-b / det, a / det]];
                Node {
                    c_up_det: c_up,
                    coef: cross[j] / c_x,
                    m_n,
                    inv,
                    log_det: det.ln(),
                }
            })
            .collect();

        let two_pi = 2.0 * std::f64::consts::PI;
        let mut draws = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            let g: f64 = StandardNormal.sample(&mut rng);
            let z = m_x + c_x.sqrt() * g;
            let mut integral = 0.0;
            for (j, node) in nodes.iter().enumerate() {
                let m_up = node.m_n + node.coef * (z - m_x);
                let r0 = y[0] - m_up;
                let r1 = y[1] - m_up;
                let quad = node.inv[0][0] * r0 * r0
                    + 2.0 * node.inv[0][1] * r0 * r1
                    + node.inv[1][1] * r1 * r1;
                let l_next = (-0.5 * (2.0 * two_pi.ln() + node.log_det + quad)).exp();
                integral += trapz_w[j] * node.c_up_det * l_next * prior;
            }
            draws.push(integral / z_n);
        }
        let mc_mean = draws.iter().sum::<f64>() / n_draws as f64;
        let var = draws.iter().map(|v| (v - mc_mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64;
        let mc_se = (var / n_draws as f64).sqrt();

        // Third route: the chain-average estimator over an i.i.d. sample
        // from the grid-discretized posterior.
        let (estimator, estimator_se) =
            estimator_route(&gp, &ip, &grid, &trapz_w, &ln_grid, xq, &mut rng);

        out.push(Prop1Probe {
            x: xq,
            closed_form,
            mc_mean,
            mc_se,
            estimator,
            estimator_se,
        });
    }
    Prop1Report { probes: out }
}

/// Dense-route posterior cross-covariance for the 1D toy.
fn dense_cross_cov_1d(spec: &KernelSpec, inputs: &[Vec<f64>], u: f64, x: f64) -> f64 {
    let n = inputs.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = spec.eval(&inputs[i], &inputs[j])[(0, 0)];
        }
    }
    let k_inv = gram.try_inverse().expect("oracle gram invertible");
    let ku = DVector::from_iterator(n, inputs.iter().map(|xi| spec.eval(&[u], xi)[(0, 0)]));
    let kx = DVector::from_iterator(n, inputs.iter().map(|xi| spec.eval(&[x], xi)[(0, 0)]));
    spec.eval(&[u], &[x])[(0, 0)] - (ku.transpose() * k_inv * kx)[(0, 0)]
}

fn estimator_route(
    gp: &TrainedGP,
    ip: &InverseProblem,
    grid: &[f64],
    trapz_w: &[f64],
    ln_grid: &[f64],
    xq: f64,
    rng: &mut StdRng,
) -> (f64, f64) {
    let masses: Vec<f64> = trapz_w.iter().zip(ln_grid).map(|(w, l)| w * l).collect();
    let total: f64 = masses.iter().sum();
    let mut cdf = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &masses {
        acc += m / total;
        cdf.push(acc);
    }
    let n_samp = 2_000;
    let samples: Vec<Vec<f64>> = (0..n_samp)
        .map(|_| {
            let u: f64 = rng.random();
            let idx = cdf.partition_point(|c| *c < u).min(grid.len() - 1);
            vec![grid[idx]]
        })
        .collect();
    let lps: Vec<f64> = samples.iter().map(|s| ip.log_posterior(s)).collect();
    let chain = PosteriorChain::from_parts(samples, lps).unwrap();
    let value = crate::design::ipsur_criterion(gp, &chain, &[xq], 1.0).unwrap();
    // Spread of the per-sample determinants for the tolerance scale.
    let dets: Vec<f64> = chain
        .samples()
        .iter()
        .map(|s| gp.updated_cov(s, &[xq]).unwrap().determinant().max(0.0))
        .collect();
    let mean = dets.iter().sum::<f64>() / dets.len() as f64;
    let var = dets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (dets.len() - 1) as f64;
    (value, (var / dets.len() as f64).sqrt())
}

/// Supermartingale battery: `|C_{n+1}(x_star | x)| <= |C_n(x_star)| + 1e-12`
/// over `count` random instances.
pub fn supermartingale_max_violation(count: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let p = 1 + (rng.random::<u32>() % 3) as usize;
        let d = 1 + (rng.random::<u32>() % 3) as usize;
        let n = 2 + (rng.random::<u32>() % 9) as usize;
        let (spec, inputs, outputs) = super::random_gp_instance(&mut rng, p, d, n);
        let gp = TrainedGP::condition_with(
            spec,
            &inputs,
            &outputs,
            MeanPolicy::Fixed(vec![0.0; d]),
            ScalePolicy::One,
        )
        .unwrap();
        let bounds = BoxDomain::new(vec![0.0; p], vec![1.0; p]).unwrap();
        let x_star = bounds.sample_uniform(&mut rng);
        let x_new = bounds.sample_uniform(&mut rng);
        let up = gp.updated_cov(&x_star, &x_new).unwrap().determinant();
        let base = gp.predict(&x_star).cov.determinant();
        worst = worst.max(up - base);
    }
    worst
}

/// Design oracle battery for the CLI.
pub fn design_suite() -> Vec<OracleCheck> {
    let mut checks = Vec::new();

    let report = prop1_report(10_000, 2_000, 10, 0xBEEF);
    let worst_sigma = report
        .probes
        .iter()
        .map(|p| (p.closed_form - p.mc_mean).abs() / p.mc_se.max(1e-300))
        .fold(0f64, f64::max);
    checks.push(OracleCheck::new(
        "design/prop1-brute-force",
        report.all_within(3.0),
        format!("worst deviation {worst_sigma:.2} sigma over 10 probes (tol 3 sigma)"),
    ));

    let worst_est = report
        .probes
        .iter()
        .map(|p| (p.closed_form - p.estimator).abs() / (p.estimator_se * 4.0 + 1e-300))
        .fold(0f64, f64::max);
    checks.push(OracleCheck::new(
        "design/prop1-chain-estimator",
        report
            .probes
            .iter()
            .all(|p| (p.closed_form - p.estimator).abs() <= 4.0 * p.estimator_se),
        format!("worst estimator deviation {worst_est:.2} of its 4-sigma band"),
    ));

    let violation = supermartingale_max_violation(200, 0xCAFE);
    checks.push(OracleCheck::new(
        "design/supermartingale-200",
        violation <= 1e-12,
        format!("max |C_next| - |C| = {violation:.3e} (tol 1e-12)"),
    ));

    checks
}
