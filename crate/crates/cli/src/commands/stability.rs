use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use spine_core::kinematics::{metric_trace, Metric};
use spine_core::signal::{uniform_rate, TimeSeries};
use spine_core::stability::{lyapunov_analysis, EmbeddingSpec, FitConfig};

use super::{parse_pair, process_all, resolve_inputs, CsvData, PoseArgs, PoseSettings};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{Analysis, Cell, Report, Table};

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// CSV series (`t` plus value columns) or keypoint JSONL files.
    pub inputs: Vec<PathBuf>,
    /// CSV column to analyse (default: first after `t`).
    #[arg(long)]
    pub column: Option<String>,
    /// Posture metric for JSONL inputs (default trunk_flexion).
    #[arg(long)]
    pub metric: Option<String>,
    /// Embedding delay in samples (default: 0.6 s worth).
    #[arg(long)]
    pub delay: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Short-term fit window `start,end` in seconds.
    #[arg(long, value_parser = parse_pair)]
    pub short_window: Option<(f64, f64)>,
    /// Long-term fit window `start,end` in seconds.
    #[arg(long, value_parser = parse_pair)]
    pub long_window: Option<(f64, f64)>,
    /// Theiler exclusion in seconds (default: mean period of the series).
    #[arg(long)]
    pub mean_period: Option<f64>,
    /// Divergence horizon in seconds (default: end of the long window).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub pose: PoseArgs,
}

fn window(flag: &Option<(f64, f64)>, cfg: Option<(f64, f64)>, default: (f64, f64)) -> (f64, f64) {
    flag.or(cfg).unwrap_or(default)
}

fn read_series(
    path: &Path,
    column: Option<&str>,
    metric: Metric,
    pose: &PoseSettings,
) -> CliResult<TimeSeries> {
    let is_jsonl = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    if is_jsonl {
        let seq = pose.load(path)?;
        return Ok(metric_trace(&seq, metric, None, pose.confidence_floor)?.series);
    }
    let data = CsvData::read(path)?;
    let times = data.column("t")?;
    let c = match column {
        Some(name) => data.index(name)?,
        None => (0..data.header.len())
            .find(|&i| data.header[i] != "t")
            .ok_or_else(|| CliError::table(path, "no value column"))?,
    };
    let values = data.column_at(c)?;
    let rate = uniform_rate(&times)?;
    Ok(TimeSeries::from_scalar(values, rate, times[0])?.with_channels([data.header[c].clone()]))
}

pub fn run(args: &StabilityArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let pose = args.pose.settings(cfg)?;
    let sc = &cfg.stability;
    let column = args.column.clone().or_else(|| sc.column.clone());
    let metric: Metric = args
        .metric
        .as_deref()
        .or(sc.metric.as_deref())
        .unwrap_or("trunk_flexion")
        .parse()?;
    let d = FitConfig::default();
    let fit = FitConfig {
        short_window_s: window(&args.short_window, sc.short_window_s, d.short_window_s),
        long_window_s: window(&args.long_window, sc.long_window_s, d.long_window_s),
        mean_period_s: args.mean_period.or(sc.mean_period_s),
        max_horizon_s: args.horizon.or(sc.max_horizon_s),
    };
    let delay = args.delay.or(sc.delay_samples);
    let dimension = args.dimension.or(sc.dimension);
    let mut report = Report::new(
        "stability",
        json!({
            "column": column,
            "metric": metric.name(),
            "delay_samples": delay,
            "dimension": dimension,
            "short_window_s": fit.short_window_s,
            "long_window_s": fit.long_window_s,
            "mean_period_s": fit.mean_period_s,
            "max_horizon_s": fit.max_horizon_s,
        }),
    );
    report.outcomes = process_all(&inputs, |path, stem| {
        let series = read_series(path, column.as_deref(), metric, &pose)?;
        let auto = EmbeddingSpec::default_for_rate(series.sample_rate_hz());
        let embedding = EmbeddingSpec::new(
            delay.unwrap_or(auto.delay_samples),
            dimension.unwrap_or(auto.dimension),
        );
        let a = lyapunov_analysis(&series, embedding, &fit)?;
        let curve = &a.curve;
        let mut table = Table::new(["t", "mean_log_div", "pair_count"]);
        for (i, v) in curve.mean_log_divergence.as_flat().iter().enumerate() {
            table.push(vec![
                Cell::Num(curve.mean_log_divergence.time(i)),
                Cell::Num(*v),
                Cell::from(curve.pair_counts[i]),
            ]);
        }
        let r = &a.result;
        let mut out = Analysis::new(json!({
            "samples": series.len(),
            "rate_hz": series.sample_rate_hz(),
            "embedding": {"delay_samples": embedding.delay_samples, "dimension": embedding.dimension},
            "mean_period_s": a.mean_period_s,
            "lambda_short": r.lambda_short,
            "lambda_long": r.lambda_long,
            "fit_windows_s": r.fit_windows,
            "fit_residuals": r.fit_residuals,
        }))
        .table(format!("{stem}.divergence.csv"), &table);
        if let Some(min) = curve.pair_counts.iter().min() {
            if *min < 10 {
                out.warn(
                    "W_FEW_PAIRS",
                    format!("divergence curve has steps with only {min} neighbour pairs"),
                );
            }
        }
        Ok(out)
    });
    Ok(report)
}
