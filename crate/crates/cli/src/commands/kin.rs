use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Map, Value};
use spine_core::kinematics::{metric_trace, Metric};

use super::{process_all, resolve_inputs, FilterArgs, PoseArgs};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::report::{describe, Analysis, Cell, Report, Table};

#[derive(Debug, Args)]
pub struct KinArgs {
    /// Keypoint JSONL files.
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub pose: PoseArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Comma-separated metrics (default: all).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
}

pub fn run(args: &KinArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let pose = args.pose.settings(cfg)?;
    let filter = args.filter.optional(cfg);
    let names = if !args.metrics.is_empty() {
        args.metrics.clone()
    } else {
        cfg.pose.metrics.clone().unwrap_or_default()
    };
    let metrics: Vec<Metric> = if names.is_empty() {
        Metric::ALL.to_vec()
    } else {
        names.iter().map(|n| n.parse()).collect::<Result<_, _>>()?
    };
    let mut report = Report::new(
        "kin",
        json!({
            "pose": pose.to_json(),
            "filter": filter,
            "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
        }),
    );
    report.outcomes = process_all(&inputs, |path, stem| {
        let seq = pose.load(path)?;
        let n = seq.len();
        let rate = seq.nominal_rate_hz;
        let t0 = seq.start_time_s();
        let mut header = vec!["t".to_string()];
        let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
        let mut interpolated = vec![false; n];
        let mut summary = Map::new();
        let mut warnings = Vec::new();
        for m in &metrics {
            let trace = metric_trace(&seq, *m, filter, pose.confidence_floor)?;
            let mut col = vec![None; n];
            for (i, v) in trace.series.as_flat().iter().enumerate() {
                let frame = trace.trimmed_leading + i;
                col[frame] = Some(*v);
                interpolated[frame] |= trace.interpolated[i];
            }
            let values = trace.series.as_flat();
            let mut stats = describe(values);
            let peak = stats["argmax"]
                .as_u64()
                .map(|i| i as usize + trace.trimmed_leading);
            stats["peak_frame"] = json!(peak);
            stats["peak_time_s"] = json!(peak.map(|f| t0 + f as f64 / rate));
            stats["units"] = json!(trace.series.units());
            let filled = trace.interpolated.iter().filter(|f| **f).count();
            stats["interpolated_frames"] = json!(filled);
            stats["trimmed_leading"] = json!(trace.trimmed_leading);
            stats["trimmed_trailing"] = json!(trace.trimmed_trailing);
            if let Some(o) = stats.as_object_mut() {
                o.remove("argmax");
            }
            if filled > 0 {
                warnings.push((
                    "W_INTERPOLATED",
                    format!("{}: {filled} low-confidence frames interpolated", m.name()),
                ));
            }
            if trace.trimmed_leading + trace.trimmed_trailing > 0 {
                warnings.push((
                    "W_TRIMMED",
                    format!(
                        "{}: {} leading and {} trailing low-confidence frames dropped",
                        m.name(),
                        trace.trimmed_leading,
                        trace.trimmed_trailing
                    ),
                ));
            }
            summary.insert(m.name().to_string(), stats);
            header.push(m.name().to_string());
            columns.push(col);
        }
        header.push("interpolated".into());
        let mut table = Table::new(header);
        for i in 0..n {
            let mut row = vec![Cell::Num(t0 + i as f64 / rate)];
            row.extend(columns.iter().map(|c| Cell::from(c[i])));
            row.push(Cell::Flag(interpolated[i]));
            table.push(row);
        }
        let mut a = Analysis::new(json!({
            "frames": n,
            "rate_hz": rate,
            "metrics": Value::Object(summary),
        }))
        .table(format!("{stem}.kinematics.csv"), &table);
        if seq.calibration_scale_m_per_unit.is_none() && metrics.contains(&Metric::HipDisplacement)
        {
            a.warn(
                "W_UNCALIBRATED",
                "no length scale given; hip displacement is in input units",
            );
        }
        for (code, msg) in warnings {
            a.warn(code, msg);
        }
        Ok(a)
    });
    Ok(report)
}
