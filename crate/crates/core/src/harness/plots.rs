//! Metric-evolution charts: one SVG per metric with a mean line and 95% CI
//! band per strategy, hand-rolled vector output.

use std::path::{Path, PathBuf};

use super::summary::{save_summary_csv, SummaryRow, METRICS};
use crate::error::{Error, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

/// Padded value range covering every mean and CI bound.
pub(crate) fn y_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = (hi - lo).max(1e-12 * (1.0 + hi.abs()));
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Write one SVG per metric plus the raw summary CSV. Returns the paths of
/// every file written.
pub fn emit_plots(summary: &[SummaryRow], outdir: &Path) -> Result<Vec<PathBuf>> {
    if summary.is_empty() {
        return Err(Error::Config("empty summary: nothing to plot".into()));
    }
    std::fs::create_dir_all(outdir)?;
    let mut written = Vec::new();

    let csv_path = outdir.join("summary.csv");
    save_summary_csv(summary, &csv_path)?;
    written.push(csv_path);

    for metric in METRICS {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.metric == metric).collect();
        if rows.is_empty() {
            continue;
        }
        let mut strategies: Vec<String> = rows.iter().map(|r| r.strategy.clone()).collect();
        strategies.sort();
        strategies.dedup();

        // Log-scale when everything is positive and spans decades (the
        // integrated-variance curves routinely do).
        let all_vals: Vec<f64> = rows
            .iter()
            .flat_map(|r| [r.mean, r.ci_lo, r.ci_hi])
            .filter(|v| v.is_finite())
            .collect();
        let positive = all_vals.iter().all(|v| *v > 0.0);
        let spread = if positive {
            let lo = all_vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            hi / lo
        } else {
            1.0
        };
        let log_scale = positive && spread > 50.0;
        let transform = |v: f64| if log_scale { v.log10() } else { v };
        let t_vals: Vec<f64> = all_vals.iter().map(|v| transform(*v)).collect();
        let (y_lo, y_hi) = y_range(&t_vals);
        let max_iter = rows.iter().map(|r| r.iteration).max().unwrap_or(0).max(1);

        let x_of = |it: usize| MARGIN_L + it as f64 / max_iter as f64 * (WIDTH - MARGIN_L - MARGIN_R);
        let y_of = |v: f64| {
            let t = (transform(v) - y_lo) / (y_hi - y_lo);
            HEIGHT - MARGIN_B - t * (HEIGHT - MARGIN_T - MARGIN_B)
        };

        let mut svg = String::new();
        svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        svg.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"18\">{} per iteration{}</text>\n",
            MARGIN_L,
            metric,
            if log_scale { " (log scale)" } else { "" }
        ));
        // Axes.
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_L,
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R,
            HEIGHT - MARGIN_B
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_L, MARGIN_T, MARGIN_L, HEIGHT - MARGIN_B
        ));
        // Ticks.
        for k in 0..=4 {
            let it = k * max_iter / 4;
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                x_of(it),
                HEIGHT - MARGIN_B + 20.0,
                it
            ));
            let tv = y_lo + k as f64 / 4.0 * (y_hi - y_lo);
            let label = if log_scale {
                format!("1e{tv:.1}")
            } else {
                format!("{tv:.3e}")
            };
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 8.0,
                HEIGHT - MARGIN_B - k as f64 / 4.0 * (HEIGHT - MARGIN_T - MARGIN_B) + 4.0,
                label
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">iteration</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 16.0
        ));

        for (si, strategy) in strategies.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut series: Vec<&&SummaryRow> =
                rows.iter().filter(|r| r.strategy == *strategy).collect();
            series.sort_by_key(|r| r.iteration);
            // CI band polygon: upper bound forward, lower bound backward.
            let mut band = String::new();
            for r in &series {
                band.push_str(&format!("{:.2},{:.2} ", x_of(r.iteration), y_of(r.ci_hi)));
            }
            for r in series.iter().rev() {
                band.push_str(&format!("{:.2},{:.2} ", x_of(r.iteration), y_of(r.ci_lo)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                band.trim(),
                color
            ));
            let line: String = series
                .iter()
                .map(|r| format!("{:.2},{:.2}", x_of(r.iteration), y_of(r.mean)))
                .collect::<Vec<_>>()
                .join(" ");
            svg.push_str(&format!(
                "<polyline points=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
            ));
            // Legend entry.
            let ly = MARGIN_T + 20.0 * si as f64;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
                WIDTH - MARGIN_R + 16.0,
                ly
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
                WIDTH - MARGIN_R + 34.0,
                ly + 11.0,
                strategy
            ));
        }
        svg.push_str("</svg>\n");

        let path = outdir.join(format!("metric_{metric}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srow(strategy: &str, metric: &str, iteration: usize, mean: f64) -> SummaryRow {
        SummaryRow {
            strategy: strategy.into(),
            metric: metric.into(),
            iteration,
            mean,
            ci_lo: mean - 0.1 * mean.abs() - 0.01,
            ci_hi: mean + 0.1 * mean.abs() + 0.01,
            n_replicates: 5,
        }
    }

    #[test]
    fn empty_summary_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_plots(&[], dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_series_chart_is_nonempty_xml() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<SummaryRow> = (0..=5).map(|i| srow("ipsur", "h_n", i, 1.0 / (i + 1) as f64)).collect();
        let written = emit_plots(&rows, dir.path()).unwrap();
        let svg_path = written.iter().find(|p| p.extension().is_some_and(|e| e == "svg")).unwrap();
        let body = std::fs::read_to_string(svg_path).unwrap();
        assert!(body.starts_with("<svg"));
        assert!(body.trim_end().ends_with("</svg>"));
        assert!(body.contains("polyline"));
        assert!(body.len() > 500);
    }

    #[test]
    fn y_range_contains_all_plotted_values() {
        let values = [0.3, 1.7, -2.0, 0.9];
        let (lo, hi) = y_range(&values);
        assert!(values.iter().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn multi_strategy_plot_includes_every_label() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for s in ["ipsur", "d_optimal", "csq_h3"] {
            for i in 0..=3 {
                rows.push(srow(s, "h_n", i, (i + 1) as f64));
                rows.push(srow(s, "kappa_n", i, 0.1 * (i + 1) as f64));
            }
        }
        let written = emit_plots(&rows, dir.path()).unwrap();
        // summary.csv + two metric SVGs (s_n absent from the input).
        assert_eq!(written.len(), 3);
        let body = std::fs::read_to_string(dir.path().join("metric_h_n.svg")).unwrap();
        for s in ["ipsur", "d_optimal", "csq_h3"] {
            assert!(body.contains(s));
        }
    }
}
