//! Agreement between measured and estimated series: Pearson correlation and
//! absolute error reported as mean ± sample standard deviation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;

use super::{check_exists, path_json, process_all, resolve_inputs, CsvData};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{Analysis, Cell, Report, Table};

pub const MEASURED_SUFFIX: &str = "_measured";
pub const ESTIMATED_SUFFIX: &str = "_estimated";

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// CSVs with `<metric>_measured` and `<metric>_estimated` column pairs.
    pub inputs: Vec<PathBuf>,
    /// Reference statistics (`metric,correlation,abs_error_mean,abs_error_sd`) to report against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Decimals in the formatted `mean ± sd` column (default: two significant digits of the SD).
    #[arg(long)]
    pub decimals: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub n: usize,
    /// `NaN` when either series is constant.
    pub correlation: f64,
    pub abs_error_mean: f64,
    pub abs_error_sd: f64,
}

pub fn agreement(measured: &[f64], estimated: &[f64]) -> Agreement {
    let n = measured.len();
    let nf = n as f64;
    let mx = measured.iter().sum::<f64>() / nf;
    let my = estimated.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in measured.iter().zip(estimated) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let correlation = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        f64::NAN
    };
    let err: Vec<f64> = measured
        .iter()
        .zip(estimated)
        .map(|(x, y)| (y - x).abs())
        .collect();
    let mean = err.iter().sum::<f64>() / nf;
    let sd = if n > 1 {
        (err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    Agreement {
        n,
        correlation,
        abs_error_mean: mean,
        abs_error_sd: sd,
    }
}

/// `mean ± sd` with the SD to two significant digits unless `decimals` is given.
pub fn format_mean_sd(mean: f64, sd: f64, decimals: Option<usize>) -> String {
    let d = decimals.unwrap_or_else(|| {
        // rounding noise in the SD should not dictate the precision
        let lead = if sd > 1e-9 * mean.abs() {
            sd
        } else {
            mean.abs()
        };
        if lead > 0.0 && lead.is_finite() {
            (1 - lead.log10().floor() as i64).clamp(0, 6) as usize
        } else {
            1
        }
    });
    format!("{mean:.d$} ± {sd:.d$}")
}

/// Metric names with both a measured and an estimated column, in column order.
fn metric_pairs(data: &CsvData) -> Vec<(String, usize, usize)> {
    data.header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let metric = h.strip_suffix(MEASURED_SUFFIX)?;
            let j = data.index(&format!("{metric}{ESTIMATED_SUFFIX}")).ok()?;
            Some((metric.to_string(), i, j))
        })
        .collect()
}

fn read_reference(path: &Path) -> CliResult<BTreeMap<String, [f64; 3]>> {
    let data = CsvData::read(path)?;
    let m = data.index("metric")?;
    let r = data.column("correlation")?;
    let mean = data.column("abs_error_mean")?;
    let sd = data.column("abs_error_sd")?;
    Ok(data
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| (row.get(m).unwrap_or("").to_string(), [r[i], mean[i], sd[i]]))
        .collect())
}

pub fn run(args: &CompareArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let reference_path = args
        .reference
        .clone()
        .or_else(|| cfg.compare.reference.clone());
    check_exists(reference_path.iter())?;
    let reference = reference_path.as_deref().map(read_reference).transpose()?;
    let decimals = args.decimals.or(cfg.compare.decimals);
    let mut report = Report::new(
        "compare",
        json!({"reference": path_json(&reference_path), "decimals": decimals}),
    );
    report.outcomes = process_all(&inputs, |path, stem| {
        let data = CsvData::read(path)?;
        let pairs = metric_pairs(&data);
        if pairs.is_empty() {
            return Err(CliError::table(
                path,
                format!(
                    "no `<metric>{MEASURED_SUFFIX}` / `<metric>{ESTIMATED_SUFFIX}` column pairs"
                ),
            ));
        }
        if data.rows.len() < 2 {
            return Err(spine_core::Error::InsufficientData {
                needed: 2,
                got: data.rows.len(),
            }
            .into());
        }
        let mut table = Table::new([
            "metric",
            "n",
            "correlation",
            "abs_error_mean",
            "abs_error_sd",
            "formatted",
        ]);
        let mut metrics = serde_json::Map::new();
        let mut a = Analysis::new(serde_json::Value::Null);
        for (name, i, j) in pairs {
            let m = data.column_at(i)?;
            let e = data.column_at(j)?;
            let g = agreement(&m, &e);
            let formatted = format_mean_sd(g.abs_error_mean, g.abs_error_sd, decimals);
            if g.correlation.is_nan() {
                a.warn(
                    "W_UNDEFINED_CORRELATION",
                    format!("{name}: a series is constant"),
                );
            }
            table.push(vec![
                Cell::from(name.as_str()),
                Cell::from(g.n),
                Cell::Num(g.correlation),
                Cell::Num(g.abs_error_mean),
                Cell::Num(g.abs_error_sd),
                Cell::from(formatted.clone()),
            ]);
            let mut entry = json!({
                "n": g.n,
                "correlation": g.correlation,
                "abs_error_mean": g.abs_error_mean,
                "abs_error_sd": g.abs_error_sd,
                "formatted": formatted,
            });
            if let Some(r) = reference.as_ref().and_then(|r| r.get(&name)) {
                entry["reference"] = json!({
                    "correlation": r[0],
                    "abs_error_mean": r[1],
                    "abs_error_sd": r[2],
                    "delta_correlation": g.correlation - r[0],
                    "delta_abs_error_mean": g.abs_error_mean - r[1],
                    "delta_abs_error_sd": g.abs_error_sd - r[2],
                });
            } else if reference.is_some() {
                a.warn("W_NO_REFERENCE", format!("{name}: no reference row"));
            }
            metrics.insert(name, entry);
        }
        a.metrics = serde_json::Value::Object(metrics);
        Ok(a.table(format!("{stem}.compare.csv"), &table))
    });
    Ok(report)
}
