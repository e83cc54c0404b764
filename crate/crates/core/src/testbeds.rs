//! Benchmark direct models and observation generators.
//!
//! Three forward maps: the banana and bimodal 2D toys and the neutron-noise
//! point model (detection rate plus second/third asymptotic Feynman
//! moments), together with seeded Gaussian observation synthesis and a
//! Latin-hypercube initial design.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::inverse::ObservationSet;

/// Induced- and spontaneous-fission multiplicity data for the point model.
/// These are configuration inputs; the shipped defaults are placeholder
/// plumbing values, not measured constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearData {
    pub nu_bar: f64,
    pub d2: f64,
    pub d3: f64,
    pub nu_bar_s: f64,
    pub d2s: f64,
    pub d3s: f64,
}

impl Default for NuclearData {
    fn default() -> Self {
        Self {
            nu_bar: 2.4,
            d2: 0.8,
            d3: 0.5,
            nu_bar_s: 2.1,
            d2s: 0.9,
            d3s: 0.7,
        }
    }
}

impl NuclearData {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.nu_bar, self.d2, self.d3, self.nu_bar_s, self.d2s, self.d3s];
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("nuclear data must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Point-model inputs: prompt multiplication factor, detection efficiency,
/// source intensity and spontaneous-fission source fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointModelParams {
    pub k_p: f64,
    pub eps_f: f64,
    pub source: f64,
    pub x_s: f64,
}

impl PointModelParams {
    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            k_p: x[0],
            eps_f: x[1],
            source: x[2],
            x_s: x[3],
        }
    }

    /// Reactivity `rho = (k_p - 1) / k_p`, negative for subcritical systems.
    pub fn reactivity(&self) -> f64 {
        (self.k_p - 1.0) / self.k_p
    }
}

/// Detection rate and asymptotic Feynman moments `(R, Y_inf, X_inf)` of the
/// point model.
pub fn point_model(params: &PointModelParams, nd: &NuclearData) -> Result<DVector<f64>> {
    nd.validate()?;
    if !(params.k_p > 0.0 && params.k_p < 1.0) {
        return Err(Error::Config(format!(
            "prompt multiplication factor must lie in (0, 1); got {} (supercritical systems are not modeled)",
            params.k_p
        )));
    }
    if params.eps_f <= 0.0 || params.source <= 0.0 || !(0.0..=1.0).contains(&params.x_s) {
        return Err(Error::Config("point-model parameters out of range".into()));
    }
    let rho = params.reactivity();
    let (eps, s, xs) = (params.eps_f, params.source, params.x_s);
    let r = -(eps * s * nd.nu_bar_s) / (rho * nd.nu_bar * (nd.nu_bar_s + xs - nd.nu_bar_s * xs));
    let bracket2 = 1.0 - xs * rho * nd.nu_bar_s * nd.d2s / (nd.nu_bar * nd.d2);
    let y_inf = eps * nd.d2 / (rho * rho) * bracket2;
    let bracket3 = 1.0 - xs * rho * nd.nu_bar_s * nd.nu_bar_s * nd.d3s / (nd.nu_bar * nd.nu_bar * nd.d3);
    let x_inf = 3.0 * (eps * nd.d2 / (rho * rho)).powi(2) * bracket2
        - eps * eps * nd.d3 / (rho * rho * rho) * bracket3;
    Ok(DVector::from_vec(vec![r, y_inf, x_inf]))
}

/// Banana forward map `(x1, x2) -> (x1, x2 + 0.03 x1^2)`.
pub fn banana(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(vec![x[0], x[1] + 0.03 * x[0] * x[0]])
}

/// Bimodal forward map `(x1, x2) -> (x2 - x1^2, x2 - x1)`.
pub fn bimodal(x: &[f64]) -> DVector<f64> {
    DVector::from_vec(vec![x[1] - x[0] * x[0], x[1] - x[0]])
}

#[derive(Debug, Clone)]
enum ModelKind {
    Banana,
    Bimodal,
    PointModel(NuclearData),
}

/// A deterministic forward map with its input box and dimensions.
#[derive(Debug, Clone)]
pub struct DirectModel {
    name: String,
    bounds: BoxDomain,
    dim_in: usize,
    dim_out: usize,
    kind: ModelKind,
}

impl DirectModel {
    pub fn banana() -> Self {
        Self {
            name: "banana".into(),
            bounds: BoxDomain::new(vec![-20.0, -10.0], vec![20.0, 10.0]).unwrap(),
            dim_in: 2,
            dim_out: 2,
            kind: ModelKind::Banana,
        }
    }

    pub fn bimodal() -> Self {
        Self {
            name: "bimodal".into(),
            bounds: BoxDomain::new(vec![-6.0, -4.0], vec![6.0, 8.0]).unwrap(),
            dim_in: 2,
            dim_out: 2,
            kind: ModelKind::Bimodal,
        }
    }

    pub fn neutron(nd: NuclearData) -> Self {
        Self {
            name: "neutron".into(),
            bounds: BoxDomain::new(
                vec![0.7, 0.01, 1.0e5, 0.1],
                vec![0.9, 0.10, 2.0e5, 0.9],
            )
            .unwrap(),
            dim_in: 4,
            dim_out: 3,
            kind: ModelKind::PointModel(nd),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim_in {
            return Err(Error::Config("direct-model input has wrong dimension".into()));
        }
        match &self.kind {
            ModelKind::Banana => Ok(banana(x)),
            ModelKind::Bimodal => Ok(bimodal(x)),
            ModelKind::PointModel(nd) => point_model(&PointModelParams::from_slice(x), nd),
        }
    }
}

/// Draw `n_obs` i.i.d. observations `y = f(x_th) + eps`, `eps ~ N(0, c_obs)`.
pub fn make_observations(
    model: &DirectModel,
    x_th: &[f64],
    c_obs: &DMatrix<f64>,
    n_obs: usize,
    seed: u64,
) -> Result<ObservationSet> {
    if n_obs == 0 {
        return Err(Error::Config("need at least one observation".into()));
    }
    let noiseless = model.eval(x_th)?;
    let d = noiseless.len();
    if c_obs.nrows() != d || c_obs.ncols() != d {
        return Err(Error::Config("noise covariance does not match model output dim".into()));
    }
    let chol = c_obs
        .clone()
        .cholesky()
        .ok_or(Error::NotSpd("observation covariance must be SPD"))?;
    let l = chol.l();
    let mut rng = StdRng::seed_from_u64(seed);
    let rows = (0..n_obs)
        .map(|_| {
            let xi = DVector::from_iterator(d, (0..d).map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g
            }));
            &noiseless + &l * xi
        })
        .collect();
    ObservationSet::new(rows, c_obs.clone())
}

/// Latin-hypercube initial design: `n0` points, one per stratum per axis.
pub fn initial_design(bounds: &BoxDomain, n0: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n0 < 2 {
        return Err(Error::Config("initial design needs at least two points".into()));
    }
    let p = bounds.dim();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut order: Vec<usize> = (0..n0).collect();
        order.shuffle(&mut rng);
        strata.push(order);
    }
    Ok((0..n0)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let cell = strata[j][i] as f64;
                    bounds.lo[j] + (cell + rng.random::<f64>()) / n0 as f64 * bounds.width(j)
                })
                .collect()
        })
        .collect())
}
