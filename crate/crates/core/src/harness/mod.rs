//! Experiment orchestration: replicated sequential-design campaigns with
//! crash-safe CSV records, summaries and SVG plots.
//!
//! Replicates run concurrently (rayon;`RAYON_NUM_THREADS` caps the pool)
//! with isolated seeds. Within a replicate the design loop is sequential.
//! Rows are appended cell-by-cell in deterministic order, so two runs with
//! the same seeds produce identical record bytes up to the wall-time
//! column.

pub mod plots;
pub mod summary;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{select_next, DesignStrategy};
use crate::domain::mix_seed;
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparameters, FitBounds, FitConfig, KernelSpec, TrainedGP};
use crate::inverse::InverseProblem;
use crate::mcmc::{adaptive_metropolis, PosteriorChain};
use crate::metrics::{entropy_kde, ivar, kl_kde};
use crate::optim::AnnealConfig;
use crate::testbeds::{initial_design, make_observations, DirectModel, NuclearData};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

// Seed-stream tags.
const STREAM_OBS: u64 = 1;
const STREAM_DESIGN: u64 = 2;
const STREAM_FIT: u64 = 3;
const STREAM_CHAIN: u64 = 4;
const STREAM_SELECT: u64 = 5;
const STREAM_REF: u64 = 6;
const STREAM_METRICS_CHAIN: u64 = 7;

/// Which benchmark to run plus optional overrides of the observation setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestbedConfig {
    /// `banana`, `bimodal` or `neutron`.
    pub name: String,
    /// Noiseless center of the observations; defaults per testbed.
    #[serde(default)]
    pub x_th: Option<Vec<f64>>,
    /// Observation noise covariance (row-major); defaults per testbed.
    #[serde(default)]
    pub c_obs: Option<Vec<Vec<f64>>>,
    /// Number of observations; defaults per testbed.
    #[serde(default)]
    pub n_obs: Option<usize>,
    /// Multiplicity data for the neutron case.
    #[serde(default)]
    pub nuclear: Option<NuclearData>,
}

impl TestbedConfig {
    pub fn banana() -> Self {
        Self {
            name: "banana".into(),
            x_th: None,
            c_obs: None,
            n_obs: None,
            nuclear: None,
        }
    }

    /// Resolve to a model, observation center, noise covariance and count.
    pub fn build(&self) -> Result<(DirectModel, Vec<f64>, DMatrix<f64>, usize)> {
        let (model, default_xth, default_cobs, default_n): (DirectModel, Vec<f64>, DMatrix<f64>, usize) =
            match self.name.as_str() {
                "banana" => (
                    DirectModel::banana(),
                    vec![0.0, 3.0],
                    DMatrix::from_row_slice(2, 2, &[100.0, 0.0, 0.0, 1.0]),
                    5,
                ),
                "bimodal" => (
                    DirectModel::bimodal(),
                    vec![2.0, 4.0],
                    DMatrix::from_row_slice(
                        2,
                        2,
                        &[5.0 / 0.2f64.sqrt(), 0.0, 0.0, 5.0 / 0.75f64.sqrt()],
                    ),
                    10,
                ),
                "neutron" => {
                    let model = DirectModel::neutron(self.nuclear.clone().unwrap_or_default());
                    let x_th = self
                        .x_th
                        .clone()
                        .unwrap_or_else(|| model.bounds().center());
                    let f = model.eval(&x_th)?;
                    // Default noise: 5% relative per output, diagonal.
                    let c = DMatrix::from_diagonal(&DVector::from_iterator(
                        3,
                        f.iter().map(|v| (0.05 * v.abs()).powi(2).max(1e-12)),
                    ));
                    (model, x_th, c, 20)
                }
                other => return Err(Error::Config(format!("unknown testbed `{other}`"))),
            };
        let x_th = self.x_th.clone().unwrap_or(default_xth);
        if x_th.len() != model.dim_in() {
            return Err(Error::Config("x_th has the wrong dimension".into()));
        }
        let c_obs = match &self.c_obs {
            Some(rows) => {
                let d = model.dim_out();
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config("c_obs must be d x d".into()));
                }
                DMatrix::from_fn(d, d, |i, j| rows[i][j])
            }
            None => default_cobs,
        };
        let n_obs = self.n_obs.unwrap_or(default_n);
        Ok((model, x_th, c_obs, n_obs))
    }
}

fn default_iterations() -> usize {
    20
}
fn default_replicates() -> usize {
    10
}
fn default_chain_len() -> usize {
    20_000
}
fn default_reference_budget() -> usize {
    200
}
fn default_true() -> bool {
    true
}
fn default_metrics_points() -> usize {
    2_000
}
fn default_fit_iters() -> usize {
    100
}

/// Full experiment configuration (the `run` subcommand's JSON document).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub testbed: TestbedConfig,
    pub strategies: Vec<DesignStrategy>,
    pub n0: usize,
    #[serde(default = "default_iterations")]
    pub n_iterations: usize,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_chain_len")]
    pub chain_len: usize,
    pub seed: u64,
    pub outdir: PathBuf,
    #[serde(default = "default_reference_budget")]
    pub reference_budget: usize,
    #[serde(default = "default_true")]
    pub refit_every_iteration: bool,
    /// Draw a second, independent chain for the metrics (default: reuse the
    /// strategy chain).
    #[serde(default)]
    pub metrics_independent_chain: bool,
    /// Subsample size for the KDE-based metrics.
    #[serde(default = "default_metrics_points")]
    pub metrics_kde_points: usize,
    /// Adam iterations per hyperparameter refit.
    #[serde(default = "default_fit_iters")]
    pub fit_max_iters: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        let mut labels: Vec<String> = self.strategies.iter().map(|s| s.kind.label()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.strategies.len() {
            return Err(Error::Config("strategy labels must be unique (same kind and parameters listed twice)".into()));
        }
        if self.n_iterations < 1 && self.n_replicates == 0 {
            return Err(Error::Config("nothing to run".into()));
        }
        if self.n0 < 2 {
            return Err(Error::Config("initial design needs n0 >= 2".into()));
        }
        if self.chain_len < 1_000 {
            return Err(Error::Config("chain length below 1000 is not meaningful".into()));
        }
        self.testbed.build().map(|_| ())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of the experiment record CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordRow {
    pub strategy: String,
    pub replicate: usize,
    pub iteration: usize,
    pub h_n: f64,
    pub s_n: f64,
    pub kappa_n: f64,
    /// Space-separated coordinates of the point selected at this iteration;
    /// empty on the final (baseline-only) row.
    pub x_selected: String,
    pub criterion_value: f64,
    pub acceptance_rate: f64,
    pub wall_time_s: f64,
}

/// The in-memory record: all rows, in deterministic cell order.
#[derive(Debug, Clone, Default)]
pub struct ExperimentRecord {
    pub rows: Vec<RecordRow>,
}

impl ExperimentRecord {
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        let mut rdr = csv::Reader::from_path(path)?;
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        Ok(Self { rows })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        // Header written explicitly so an empty record still round-trips
        // (cell appends later skip headers).
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        wtr.write_record([
            "strategy",
            "replicate",
            "iteration",
            "h_n",
            "s_n",
            "kappa_n",
            "x_selected",
            "criterion_value",
            "acceptance_rate",
            "wall_time_s",
        ])?;
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-selection JSON record (one line per acquisition).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub strategy: String,
    pub replicate: usize,
    pub iteration: usize,
    pub point: Vec<f64>,
    pub criterion_value: f64,
    pub optimizer_evals: usize,
    pub wall_time_s: f64,
}

struct CellOutput {
    rows: Vec<RecordRow>,
    selections: Vec<SelectionRecord>,
    gp_state: crate::gp::GpState,
    error: Option<String>,
}

/// Reference posterior for the KL metric: a chain from a surrogate trained
/// on a space-filling design of `reference_budget` points.
struct Reference {
    chain: PosteriorChain,
}

fn build_reference(
    cfg: &ExperimentConfig,
    model: &DirectModel,
    x_th: &[f64],
    c_obs: &DMatrix<f64>,
    n_obs: usize,
    replicate: usize,
) -> Result<Reference> {
    let seed_r = mix_seed(cfg.seed, replicate as u64);
    let obs = make_observations(model, x_th, c_obs, n_obs, mix_seed(seed_r, STREAM_OBS))?;
    let design = initial_design(model.bounds(), cfg.reference_budget, mix_seed(seed_r, STREAM_REF))?;
    let outputs: Result<Vec<DVector<f64>>> = design.iter().map(|x| model.eval(x)).collect();
    let outputs = outputs?;
    let spec0 = KernelSpec::default_for(model.dim_in(), model.dim_out(), &model.bounds().widths());
    let mut fit_cfg = FitConfig::new(FitBounds::for_box(&model.bounds().widths()));
    fit_cfg.seed = mix_seed(seed_r, STREAM_REF + 100);
    fit_cfg.restarts = 1;
    fit_cfg.max_iters = cfg.fit_max_iters.min(60);
    let fitted = fit_hyperparameters(&spec0, &design, &outputs, &fit_cfg)?;
    let gp = Arc::new(TrainedGP::condition(fitted.spec, &design, &outputs)?);
    let ip = InverseProblem::new(obs, gp, model.bounds().clone())?;
    let map_cfg = AnnealConfig::with_budget(800).with_seed(mix_seed(seed_r, STREAM_REF + 200));
    let (x_map, _) = ip.find_map(&map_cfg)?;
    let chain = adaptive_metropolis(
        |x| ip.log_posterior(x),
        ip.bounds(),
        cfg.chain_len,
        mix_seed(seed_r, STREAM_REF + 300),
        &x_map,
    )?;
    Ok(Reference {
        chain: subsample_chain(&chain, cfg.metrics_kde_points),
    })
}

fn subsample_chain(chain: &PosteriorChain, max: usize) -> PosteriorChain {
    let idx = chain.strided_indices(max);
    let samples: Vec<Vec<f64>> = idx.iter().map(|&l| chain.samples()[l].clone()).collect();
    let lps: Vec<f64> = idx.iter().map(|&l| chain.log_densities()[l]).collect();
    PosteriorChain::from_parts(samples, lps).expect("subsample of a non-empty chain")
}

fn run_cell(
    cfg: &ExperimentConfig,
    strategy: &DesignStrategy,
    replicate: usize,
    reference: &Reference,
) -> Result<CellOutput> {
    let (model, x_th, c_obs, n_obs) = cfg.testbed.build()?;
    let seed_r = mix_seed(cfg.seed, replicate as u64);
    let label = strategy.kind.label();
    let bounds = model.bounds().clone();

    let obs = make_observations(&model, &x_th, &c_obs, n_obs, mix_seed(seed_r, STREAM_OBS))?;
    let mut inputs = initial_design(&bounds, cfg.n0, mix_seed(seed_r, STREAM_DESIGN))?;
    let mut outputs: Vec<DVector<f64>> = Vec::with_capacity(inputs.len());
    for x in &inputs {
        outputs.push(model.eval(x)?);
    }
    let mut model_evals = inputs.len();

    let spec0 = KernelSpec::default_for(model.dim_in(), model.dim_out(), &bounds.widths());
    let fit_bounds = FitBounds::for_box(&bounds.widths());
    let mut fit_cfg = FitConfig::new(fit_bounds);
    fit_cfg.restarts = 2;
    fit_cfg.max_iters = cfg.fit_max_iters;
    fit_cfg.seed = mix_seed(seed_r, STREAM_FIT);
    let mut spec = fit_hyperparameters(&spec0, &inputs, &outputs, &fit_cfg)?.spec;
    let mut gp = Arc::new(TrainedGP::condition(spec.clone(), &inputs, &outputs)?);
    let mut ip = InverseProblem::new(obs, gp.clone(), bounds.clone())?;

    let mut rows = Vec::with_capacity(cfg.n_iterations + 1);
    let mut selections = Vec::new();

    for iteration in 0..=cfg.n_iterations {
        let t0 = Instant::now();
        let iter_tag = iteration as u64;

        // Chain initialization at the current MAP.
        let map_cfg = AnnealConfig {
            seed: mix_seed(seed_r, mix_seed(STREAM_CHAIN, iter_tag)),
            ..strategy.optim.clone()
        };
        let (x_map, _) = ip.find_map(&map_cfg)?;
        let chain = adaptive_metropolis(
            |x| ip.log_posterior(x),
            &bounds,
            cfg.chain_len,
            mix_seed(seed_r, mix_seed(STREAM_CHAIN + 50, iter_tag)),
            &x_map,
        )?;
        let metrics_chain = if cfg.metrics_independent_chain {
            adaptive_metropolis(
                |x| ip.log_posterior(x),
                &bounds,
                cfg.chain_len,
                mix_seed(seed_r, mix_seed(STREAM_METRICS_CHAIN, iter_tag)),
                &x_map,
            )?
        } else {
            chain.clone()
        };

        let h_n = ivar(&gp, &metrics_chain)?;
        let metrics_sub = subsample_chain(&metrics_chain, cfg.metrics_kde_points);
        let s_n = entropy_kde(&metrics_sub)?;
        let kappa_n = kl_kde(&metrics_sub, &reference.chain)?;

        let (x_selected, criterion_value) = if iteration < cfg.n_iterations {
            let sel_strategy = DesignStrategy {
                kind: strategy.kind.clone(),
                optim: AnnealConfig {
                    seed: mix_seed(seed_r, mix_seed(STREAM_SELECT, iter_tag)),
                    ..strategy.optim.clone()
                },
            };
            let t_sel = Instant::now();
            let sel = select_next(&gp, &ip, Some(&chain), &sel_strategy)?;
            selections.push(SelectionRecord {
                strategy: label.clone(),
                replicate,
                iteration,
                point: sel.point.clone(),
                criterion_value: sel.criterion_value,
                optimizer_evals: sel.evals_used,
                wall_time_s: t_sel.elapsed().as_secs_f64(),
            });
            let z = model.eval(&sel.point)?;
            model_evals += 1;
            inputs.push(sel.point.clone());
            outputs.push(z);
            if cfg.refit_every_iteration {
                let mut refit = fit_cfg.clone();
                refit.seed = mix_seed(seed_r, mix_seed(STREAM_FIT + 50, iter_tag));
                spec = fit_hyperparameters(&spec, &inputs, &outputs, &refit)?.spec;
            }
            gp = Arc::new(TrainedGP::condition(spec.clone(), &inputs, &outputs)?);
            ip = ip.with_gp(gp.clone());
            (
                sel.point
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                sel.criterion_value,
            )
        } else {
            (String::new(), f64::NAN)
        };

        rows.push(RecordRow {
            strategy: label.clone(),
            replicate,
            iteration,
            h_n,
            s_n,
            kappa_n,
            x_selected,
            criterion_value,
            acceptance_rate: chain.acceptance_rate(),
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }

    debug_assert_eq!(model_evals, cfg.n0 + cfg.n_iterations, "direct-model budget");

    Ok(CellOutput {
        rows,
        selections,
        gp_state: gp.to_state(),
        error: None,
    })
}

/// Run (or resume) the configured experiment. Returns all rows, including
/// previously completed cells.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.outdir)?;
    let record_path = cfg.outdir.join("record.csv");
    let errors_path = cfg.outdir.join("errors.csv");
    let selections_path = cfg.outdir.join("selections.jsonl");

    write_metadata(cfg)?;

    // Resume: keep only complete (strategy, replicate) cells.
    let rows_per_cell = cfg.n_iterations + 1;
    let mut done_rows: Vec<RecordRow> = Vec::new();
    let mut complete: std::collections::HashSet<(String, usize)> = std::collections::HashSet::new();
    if record_path.exists() {
        let old = ExperimentRecord::load_csv(&record_path)?;
        let mut counts: std::collections::HashMap<(String, usize), usize> = Default::default();
        for row in &old.rows {
            *counts.entry((row.strategy.clone(), row.replicate)).or_default() += 1;
        }
        for (key, count) in &counts {
            if *count == rows_per_cell {
                complete.insert(key.clone());
            }
        }
        done_rows = old
            .rows
            .into_iter()
            .filter(|r| complete.contains(&(r.strategy.clone(), r.replicate)))
            .collect();
        if !complete.is_empty() {
            log::info!("resuming: {} complete cells kept", complete.len());
        }
    }

    // Deterministic cell order: strategy-major, then replicate.
    let cells: Vec<(usize, usize)> = (0..cfg.strategies.len())
        .flat_map(|s| (0..cfg.n_replicates).map(move |r| (s, r)))
        .collect();
    let pending: Vec<(usize, (usize, usize))> = cells
        .iter()
        .cloned()
        .enumerate()
        .filter(|(_, (s, r))| !complete.contains(&(cfg.strategies[*s].kind.label(), *r)))
        .collect();

    // Shared reference posterior per replicate, built once.
    let (model, x_th, c_obs, n_obs) = cfg.testbed.build()?;
    let references: Vec<OnceLock<std::result::Result<Arc<Reference>, String>>> =
        (0..cfg.n_replicates).map(|_| OnceLock::new()).collect();

    // Rewrite the compacted record, then append pending cells in order.
    {
        let rec = ExperimentRecord {
            rows: done_rows.clone(),
        };
        rec.save_csv(&record_path)?;
    }

    let (tx, rx) = mpsc::channel::<(usize, CellOutput)>();
    let cfg_ref = &cfg;
    let model_ref = &model;
    let pending_count = pending.len();

    let writer = std::thread::spawn({
        let record_path = record_path.clone();
        let errors_path = errors_path.clone();
        let selections_path = selections_path.clone();
        let outdir = cfg.outdir.clone();
        move || -> Result<Vec<RecordRow>> {
            let mut buffered: std::collections::BTreeMap<usize, CellOutput> = Default::default();
            let mut next = 0usize;
            let mut received = 0usize;
            let mut new_rows = Vec::new();
            let file = std::fs::OpenOptions::new()
                .append(true)
                .open(&record_path)?;
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            let mut sel_file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&selections_path)?;
            while received < pending_count {
                let (idx, out) = match rx.recv() {
                    Ok(v) => v,
                    Err(_) => break,
                };
                received += 1;
                buffered.insert(idx, out);
                while let Some(out) = buffered.remove(&next) {
                    if let Some(msg) = &out.error {
                        let mut ew = csv::WriterBuilder::new()
                            .has_headers(!errors_path.exists())
                            .from_writer(
                                std::fs::OpenOptions::new()
                                    .create(true)
                                    .append(true)
                                    .open(&errors_path)?,
                            );
                        let (strategy, replicate, iteration) = out
                            .rows
                            .last()
                            .map(|r| (r.strategy.clone(), r.replicate, r.iteration + 1))
                            .unwrap_or_else(|| ("?".into(), 0, 0));
                        ew.write_record([
                            strategy.as_str(),
                            &replicate.to_string(),
                            &iteration.to_string(),
                            msg,
                        ])?;
                        ew.flush()?;
                        log::error!("cell failed: {msg}");
                    } else {
                        for row in &out.rows {
                            wtr.serialize(row)?;
                        }
                        wtr.flush()?;
                        for sel in &out.selections {
                            writeln!(sel_file, "{}", serde_json::to_string(sel)?)?;
                        }
                        sel_file.flush()?;
                        if let Some(row) = out.rows.first() {
                            let gp_path = outdir
                                .join(format!("gp_{}_{}.json", row.strategy, row.replicate));
                            std::fs::write(&gp_path, serde_json::to_string(&out.gp_state)?)?;
                        }
                        new_rows.extend(out.rows);
                    }
                    next += 1;
                }
            }
            Ok(new_rows)
        }
    });

    pending
        .par_iter()
        .enumerate()
        .for_each_with(tx, |tx, (order, (_, (s_idx, replicate)))| {
            let strategy = &cfg_ref.strategies[*s_idx];
            let reference = references[*replicate].get_or_init(|| {
                build_reference(cfg_ref, model_ref, &x_th, &c_obs, n_obs, *replicate)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            });
            let out = match reference {
                Ok(reference) => match run_cell(cfg_ref, strategy, *replicate, reference) {
                    Ok(out) => out,
                    Err(e) => CellOutput {
                        rows: vec![RecordRow {
                            strategy: strategy.kind.label(),
                            replicate: *replicate,
                            iteration: 0,
                            h_n: f64::NAN,
                            s_n: f64::NAN,
                            kappa_n: f64::NAN,
                            x_selected: String::new(),
                            criterion_value: f64::NAN,
                            acceptance_rate: f64::NAN,
                            wall_time_s: 0.0,
                        }],
                        selections: Vec::new(),
                        gp_state: crate::gp::GpState {
                            format_version: crate::gp::GP_STATE_VERSION,
                            spec: KernelSpec::default_for(1, 1, &[1.0]),
                            num_points: 0,
                            dim_in: 1,
                            dim_out: 1,
                            inputs_row_major: vec![],
                            outputs_row_major: vec![],
                            mean_const: vec![0.0],
                            scale: vec![1.0],
                        },
                        error: Some(format!(
                            "strategy {} replicate {}: {e}",
                            strategy.kind.label(),
                            replicate
                        )),
                    },
                },
                Err(e) => CellOutput {
                    rows: Vec::new(),
                    selections: Vec::new(),
                    gp_state: crate::gp::GpState {
                        format_version: crate::gp::GP_STATE_VERSION,
                        spec: KernelSpec::default_for(1, 1, &[1.0]),
                        num_points: 0,
                        dim_in: 1,
                        dim_out: 1,
                        inputs_row_major: vec![],
                        outputs_row_major: vec![],
                        mean_const: vec![0.0],
                        scale: vec![1.0],
                    },
                    error: Some(format!("reference for replicate {replicate}: {e}")),
                },
            };
            // The writer thread only exits after receiving every cell.
            let _ = tx.send((order, out));
        });

    let new_rows = writer
        .join()
        .map_err(|_| Error::Numerical("record writer thread panicked".into()))??;

    let mut all = done_rows;
    all.extend(new_rows);
    Ok(ExperimentRecord { rows: all })
}

fn write_metadata(cfg: &ExperimentConfig) -> Result<()> {
    let meta = serde_json::json!({
        "schema_version": RECORD_SCHEMA_VERSION,
        "config": cfg,
        "kde": {"kernel": "gaussian", "bandwidth": "scott"},
        "criterion_subsample": crate::design::CRITERION_MAX_SAMPLES,
        "reference_label": "p_ref (space-filling surrogate, reference_budget points)",
        "notes": "wall_time_s columns are machine-dependent and never asserted",
    });
    std::fs::write(
        cfg.outdir.join("run_metadata.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}
