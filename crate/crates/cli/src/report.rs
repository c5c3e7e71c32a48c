//! Report rows `(flavor, n, m, R, metric, value, stderr, bound, slope)` and
//! the per-metric plot series.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use compromise_core::model::StochasticProgram;
use compromise_core::reliability::{
    fit_rate, mean_variance_objective, non_dominated, summarize, theoretical_bounds, BoundConstants, BoundFlavor,
    BoundInputs, BoundRecord,
};
use compromise_core::sd::lipschitz_constant;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Flavor};
use crate::record::{write_atomic, CellRecord};

/// Metrics in report order.
pub const METRICS: &[&str] = &[
    "delta_mean",
    "delta_variance",
    "cost_error_mean",
    "cost_error_variance",
    "compromise_error_mean",
    "replication_error_mean",
    "replication_sq_error_mean",
    "margin_of_error",
    "stopping_gap_mean",
    "mean_variance_objective",
    "non_dominated",
    "event_frequency",
    "model_audit_slack",
    "certificate_rate",
    "k_rate",
];

/// Metrics whose log-log slope over n is meaningful.
const SLOPED: &[&str] = &[
    "delta_mean",
    "delta_variance",
    "cost_error_mean",
    "cost_error_variance",
    "compromise_error_mean",
    "replication_error_mean",
    "replication_sq_error_mean",
    "margin_of_error",
    "stopping_gap_mean",
    "mean_variance_objective",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub flavor: String,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn get(&self, metric: &str, n: usize, m: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric && r.n == n && r.m == m)
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join("report.csv");
        let json_path = dir.join("report.json");
        write_atomic(&csv_path, self.to_csv()?.as_bytes())?;
        write_atomic(&json_path, self.to_json()?.as_bytes())?;
        Ok((csv_path, json_path))
    }
}

fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bound_flavor(f: Flavor) -> BoundFlavor {
    match f {
        Flavor::Saa => BoundFlavor::SaaSolution,
        Flavor::Cutplane => BoundFlavor::CutPlane,
        Flavor::Sd => BoundFlavor::Sd,
    }
}

struct CellStats {
    n: usize,
    m: usize,
    r: usize,
    rows: Vec<(&'static str, f64, Option<f64>, Option<f64>)>,
    delta: (f64, f64),
}

/// `K̂ = max_n n · E‖x̂_n − x*‖` over the replications of the run.
fn calibrate_k(cells: &[CellRecord]) -> Option<f64> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for c in cells {
        if let Some(o) = &c.outcome {
            by_n.entry(c.n).or_default().extend(&o.replication_errors);
        }
    }
    by_n.iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&n, v)| n as f64 * mean(v))
        .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))))
}

pub fn build_report(
    cfg: &ExperimentConfig,
    prob: &StochasticProgram,
    cells: &[CellRecord],
) -> Result<Report> {
    let bc = BoundConstants::from_program(prob, cfg.lambda);
    let k_rate = if cfg.flavor == Flavor::Sd {
        cfg.k_rate.or_else(|| calibrate_k(cells))
    } else {
        None
    };
    let lf = if cfg.flavor == Flavor::Sd { lipschitz_constant(prob).ok() } else { None };

    let mut stats: Vec<CellStats> = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            let group: Vec<&CellRecord> = cells.iter().filter(|c| c.n == n && c.m == m && c.outcome.is_some()).collect();
            if group.is_empty() {
                continue;
            }
            let outcomes: Vec<_> = group.iter().map(|c| c.outcome.as_ref().expect("filtered")).collect();
            let r = outcomes.len();
            let rho = outcomes[0].rho;
            let bounds: BoundRecord = theoretical_bounds(
                &bc,
                &BoundInputs {
                    n,
                    m,
                    eps: cfg.eps,
                    rho,
                    eps1: Some(cfg.eps1()),
                    eps2: Some(cfg.eps2()),
                    eps_prime: Some(cfg.eps_prime()),
                    t: cfg.event_t,
                    k_rate,
                    lf_objective: lf,
                },
                bound_flavor(cfg.flavor),
            )
            .unwrap_or_default();

            let mut rows = Vec::new();
            let deltas: Vec<f64> = outcomes.iter().map(|o| o.delta).collect();
            let d = summarize(&deltas)?;
            rows.push(("delta_mean", d.mean, Some(d.stderr), bounds.delta_mean()));
            rows.push(("delta_variance", d.variance, None, bounds.delta_variance()));
            let costs: Vec<f64> = outcomes.iter().map(|o| o.cost_error).collect();
            let c = summarize(&costs)?;
            rows.push(("cost_error_mean", c.mean, Some(c.stderr), bounds.cost_mean));
            let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
            rows.push(("cost_error_variance", summarize(&values)?.variance, None, bounds.cost_variance));
            let ce: Vec<f64> = outcomes.iter().map(|o| o.compromise_error).collect();
            let ce = summarize(&ce)?;
            rows.push(("compromise_error_mean", ce.mean, Some(ce.stderr), None));
            let re: Vec<f64> = outcomes.iter().map(|o| mean(&o.replication_errors)).collect();
            let re = summarize(&re)?;
            rows.push(("replication_error_mean", re.mean, Some(re.stderr), None));
            let rs: Vec<f64> = outcomes
                .iter()
                .map(|o| o.replication_errors.iter().map(|e| e * e).sum::<f64>() / o.replication_errors.len() as f64)
                .collect();
            let rs = summarize(&rs)?;
            rows.push(("replication_sq_error_mean", rs.mean, Some(rs.stderr), None));
            let margins: Vec<f64> = outcomes.iter().filter_map(|o| o.margin).collect();
            if margins.len() >= 2 {
                let mo = summarize(&margins)?;
                rows.push(("margin_of_error", mo.mean, Some(mo.stderr), None));
            }
            let gaps: Vec<f64> = outcomes.iter().map(|o| o.stopping_gap).collect();
            let g = summarize(&gaps)?;
            rows.push(("stopping_gap_mean", g.mean, Some(g.stderr), None));
            rows.push(("mean_variance_objective", mean_variance_objective(d.mean, d.variance, cfg.theta)?, None, None));
            if let (Some(radius), Some(p)) = (bounds.sd_event_radius, bounds.sd_event_probability) {
                let hits = deltas.iter().filter(|&&x| x <= radius).count() as f64 / r as f64;
                rows.push(("event_frequency", hits, None, Some(p)));
            }
            let audits: Vec<_> = group.iter().flat_map(|c| c.replications.iter().filter_map(|x| x.audit.as_ref())).collect();
            if !audits.is_empty() {
                let slack = audits.iter().map(|a| a.slack).fold(f64::INFINITY, f64::min);
                let rate = audits.iter().filter(|a| a.certificate).count() as f64 / audits.len() as f64;
                rows.push(("model_audit_slack", slack, None, None));
                rows.push(("certificate_rate", rate, None, None));
            }
            if let Some(k) = k_rate {
                rows.push(("k_rate", k, None, None));
            }
            stats.push(CellStats {
                n,
                m,
                r,
                rows,
                delta: (d.mean, d.variance),
            });
        }
    }

    let pairs: Vec<(f64, f64)> = stats.iter().map(|s| s.delta).collect();
    let front = non_dominated(&pairs);
    let mut rows = Vec::new();
    for (s, nd) in stats.iter().zip(front) {
        let mut cell_rows = s.rows.clone();
        let at = cell_rows.iter().position(|r| r.0 == "mean_variance_objective").map_or(cell_rows.len(), |i| i + 1);
        cell_rows.insert(at, ("non_dominated", if nd { 1.0 } else { 0.0 }, None, None));
        for (metric, value, stderr, bound) in cell_rows {
            rows.push(ReportRow {
                flavor: cfg.flavor.to_string(),
                n: s.n,
                m: s.m,
                r: s.r,
                metric: metric.to_string(),
                value,
                stderr,
                bound,
                slope: None,
            });
        }
    }
    attach_slopes(&mut rows);
    Ok(Report { rows })
}

/// Slope of log value on log n for every `(metric, m)` series with at least
/// three sample sizes and positive values.
fn attach_slopes(rows: &mut [ReportRow]) {
    let mut series: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if SLOPED.contains(&r.metric.as_str()) {
            series.entry((r.metric.clone(), r.m)).or_default().push(i);
        }
    }
    for idx in series.values() {
        let xs: Vec<f64> = idx.iter().map(|&i| rows[i].n as f64).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| rows[i].value).collect();
        if idx.len() < 3 {
            continue;
        }
        if let Ok(fit) = fit_rate(&xs, &ys) {
            for &i in idx {
                rows[i].slope = Some(fit.slope);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PlotRow<'a> {
    flavor: &'a str,
    m: usize,
    n: usize,
    value: f64,
    stderr: Option<f64>,
    slope: Option<f64>,
}

/// One `plot/<metric>.csv` (and `.json`) per metric with the `n → value`
/// series and fitted slopes; metrics absent from the report get header-only
/// files.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    let plot = dir.join("plot");
    fs::create_dir_all(&plot)?;
    let mut written = Vec::new();
    for metric in METRICS {
        let rows: Vec<PlotRow> = report
            .rows
            .iter()
            .filter(|r| r.metric == *metric)
            .map(|r| PlotRow {
                flavor: &r.flavor,
                m: r.m,
                n: r.n,
                value: r.value,
                stderr: r.stderr,
                slope: r.slope,
            })
            .collect();
        let text = if rows.is_empty() {
            "flavor,m,n,value,stderr,slope\n".to_string()
        } else {
            rows_to_csv(&rows)?
        };
        let csv_path = plot.join(format!("{metric}.csv"));
        write_atomic(&csv_path, text.as_bytes())?;
        let json_path = plot.join(format!("{metric}.json"));
        write_atomic(&json_path, serde_json::to_string_pretty(&rows)?.as_bytes())?;
        written.push(csv_path);
        written.push(json_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, n: usize, value: f64) -> ReportRow {
        ReportRow {
            flavor: "saa".into(),
            n,
            m: 1,
            r: 10,
            metric: metric.into(),
            value,
            stderr: None,
            bound: None,
            slope: None,
        }
    }

    #[test]
    fn slopes_attached_per_series() {
        let mut rows: Vec<ReportRow> = [10, 100, 1000].iter().map(|&n| row("delta_mean", n, 1.0 / n as f64)).collect();
        rows.push(row("non_dominated", 10, 1.0));
        attach_slopes(&mut rows);
        for r in &rows[..3] {
            assert!((r.slope.unwrap() + 1.0).abs() < 1e-12);
        }
        assert_eq!(rows[3].slope, None);
    }

    #[test]
    fn empty_report_gives_header_only_plot_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&Report::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 2 * METRICS.len());
        let text = fs::read_to_string(dir.path().join("plot/delta_mean.csv")).unwrap();
        assert_eq!(text, "flavor,m,n,value,stderr,slope\n");
    }

    #[test]
    fn csv_columns() {
        let report = Report {
            rows: vec![row("delta_mean", 25, 0.5)],
        };
        let text = report.to_csv().unwrap();
        assert_eq!(text.lines().next().unwrap(), "flavor,n,m,R,metric,value,stderr,bound,slope");
        assert_eq!(text.lines().nth(1).unwrap(), "saa,25,1,10,delta_mean,0.5,,,");
    }
}
