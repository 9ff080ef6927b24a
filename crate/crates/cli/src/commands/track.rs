use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use spine_core::signal::FilterSpec;
use spine_core::track::{
    head_acceleration_pipeline, read_pgm, read_pgm_dir, Template, TrackOptions,
};

use super::{check_exists, parse_roi, path_json, process_all, resolve_inputs, FilterArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{describe, Analysis, Cell, Report, Table};

/// Cutoff in cycles per frame used when no frame rate is known.
pub const FRAME_CUTOFF_DEFAULT: f64 = 0.1;

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Directories of PGM frames (lexicographic order is temporal order).
    pub inputs: Vec<PathBuf>,
    /// Template PGM file.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Template cut from the first frame: `x,y,width,height`.
    #[arg(long, value_parser = parse_roi)]
    pub roi: Option<[usize; 4]>,
    /// Minimum NCC score for a valid match.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    /// Search only this many pixels around the last valid match.
    #[arg(long)]
    pub search_radius: Option<usize>,
    /// Metres per pixel.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Frame rate in Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    #[command(flatten)]
    pub filter: FilterArgs,
}

pub fn run(args: &TrackArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let tc = &cfg.track;
    let template_path = args.template.clone().or_else(|| tc.template.clone());
    check_exists(template_path.iter())?;
    let roi = args.roi.or(tc.roi);
    if template_path.is_none() && roi.is_none() {
        return Err(CliError::Config(
            "tracking needs --template or --roi".into(),
        ));
    }
    let template = match &template_path {
        Some(p) => Some(Template::new(read_pgm(p, 0)?)?),
        None => None,
    };
    let options = TrackOptions {
        threshold: args
            .threshold
            .or(tc.threshold)
            .unwrap_or(TrackOptions::default().threshold),
        search_radius: args.search_radius.or(tc.search_radius),
    };
    let scale = args.scale.or(tc.scale_m_per_px);
    let rate = args.rate.or(tc.rate_hz);
    let default_filter = match rate {
        Some(_) => FilterSpec::default(),
        None => FilterSpec::new(FilterSpec::default().order, FRAME_CUTOFF_DEFAULT),
    };
    let filter = args.filter.with_default(cfg, default_filter);
    let mut report = Report::new(
        "track",
        json!({
            "template": path_json(&template_path),
            "roi": roi,
            "threshold": options.threshold,
            "search_radius": options.search_radius,
            "scale_m_per_px": scale,
            "rate_hz": rate,
            "filter": filter,
        }),
    );
    report.outcomes = process_all(&inputs, |path, stem| {
        let frames = read_pgm_dir(path)?;
        let template = match (&template, roi) {
            (Some(t), _) => t.clone(),
            (None, Some([x, y, w, h])) => Template::new(frames[0].crop(x, y, w, h)?)?,
            (None, None) => unreachable!("checked above"),
        };
        let out = head_acceleration_pipeline(&frames, &template, filter, scale, rate, options)?;
        let track = &out.track;
        let dt = track.positions.dt();
        let t_of = |frame: usize| {
            track.positions.start_time_s() + (frame as f64 - track.trimmed_leading as f64) * dt
        };
        let mut positions = Table::new(["frame", "t", "x", "y", "score", "valid", "interpolated"]);
        for r in &track.results {
            let k = r
                .frame_index
                .checked_sub(track.trimmed_leading)
                .filter(|k| *k < track.positions.len());
            let (x, y, interp) = match k {
                Some(k) => {
                    let s = track.positions.sample(k);
                    (
                        Cell::Num(s[0]),
                        Cell::Num(s[1]),
                        Cell::Flag(track.interpolated[k]),
                    )
                }
                None => (Cell::Empty, Cell::Empty, Cell::Empty),
            };
            positions.push(vec![
                Cell::from(r.frame_index),
                Cell::Num(t_of(r.frame_index)),
                x,
                y,
                Cell::Num(r.score),
                Cell::Flag(r.valid),
                interp,
            ]);
        }
        let acc = out.acceleration.clone().with_channels(["ax", "ay"]);
        let rejected: Vec<usize> = track
            .results
            .iter()
            .filter(|r| !r.valid)
            .map(|r| r.frame_index)
            .collect();
        let mut a = Analysis::new(json!({
            "frames": frames.len(),
            "template_size": [template.width(), template.height()],
            "rejected_frames": rejected,
            "interpolated_frames": track.interpolated.iter().filter(|f| **f).count(),
            "trimmed_leading": track.trimmed_leading,
            "trimmed_trailing": track.trimmed_trailing,
            "min_score": track.results.iter().map(|r| r.score).fold(f64::INFINITY, f64::min),
            "acceleration_units": acc.units(),
            "ax": describe(&acc.channel(0)),
            "ay": describe(&acc.channel(1)),
        }))
        .table(format!("{stem}.track.csv"), &positions)
        .table(
            format!("{stem}.acceleration.csv"),
            &Table::from_series(&acc),
        );
        if !rejected.is_empty() {
            a.warn(
                "W_LOW_SCORE",
                format!(
                    "{} frames below threshold {}: {rejected:?}",
                    rejected.len(),
                    options.threshold
                ),
            );
        }
        if track.trimmed_leading + track.trimmed_trailing > 0 {
            a.warn(
                "W_TRIMMED",
                format!(
                    "{} leading and {} trailing frames without a valid match dropped",
                    track.trimmed_leading, track.trimmed_trailing
                ),
            );
        }
        if rate.is_none() {
            a.warn(
                "W_RATE_UNSET",
                "no frame rate; time is in frames and acceleration in arbitrary units",
            );
        }
        Ok(a)
    });
    Ok(report)
}
