//! Per-iteration summaries: mean and empirical 95% confidence intervals of
//! every metric, per strategy, across replicates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentRecord, RecordRow};
use crate::error::Result;

pub const METRICS: [&str; 3] = ["h_n", "s_n", "kappa_n"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub metric: String,
    pub iteration: usize,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Number of replicates behind the mean; 1 flags a degenerate CI.
    pub n_replicates: usize,
}

fn metric_value(row: &RecordRow, metric: &str) -> f64 {
    match metric {
        "h_n" => row.h_n,
        "s_n" => row.s_n,
        "kappa_n" => row.kappa_n,
        _ => f64::NAN,
    }
}

/// Reduce the record to `mean ± 1.96 sd / sqrt(R)` rows, one per
/// (strategy, metric, iteration).
pub fn summarize(record: &ExperimentRecord) -> Vec<SummaryRow> {
    let mut strategies: Vec<String> = record.rows.iter().map(|r| r.strategy.clone()).collect();
    strategies.sort();
    strategies.dedup();
    let max_iter = record.rows.iter().map(|r| r.iteration).max().unwrap_or(0);

    let mut out = Vec::new();
    for strategy in &strategies {
        for metric in METRICS {
            for iteration in 0..=max_iter {
                let values: Vec<f64> = record
                    .rows
                    .iter()
                    .filter(|r| {
                        r.strategy == *strategy && r.iteration == iteration
                    })
                    .map(|r| metric_value(r, metric))
                    .filter(|v| v.is_finite())
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let half = if n >= 2 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    1.96 * (var / n as f64).sqrt()
                } else {
                    log::warn!(
                        "single replicate for {strategy}/{metric}: confidence interval degenerates to a point"
                    );
                    0.0
                };
                out.push(SummaryRow {
                    strategy: strategy.clone(),
                    metric: metric.to_string(),
                    iteration,
                    mean,
                    ci_lo: mean - half,
                    ci_hi: mean + half,
                    n_replicates: n,
                });
            }
        }
    }
    out
}

pub fn save_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
