//! Subcommand implementations and the argument groups they share.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use spine_core::kinematics::{Sex, SubjectAnthropometry, UpAxis};
use spine_core::signal::FilterSpec;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{output_stems, Analysis, InputOutcome};

pub mod anthro;
pub mod compare;
pub mod kin;
pub mod loads;
pub mod msk;
pub mod stability;
pub mod track;

/// Positional inputs, falling back to the config's `inputs`. All must exist.
pub fn resolve_inputs(given: &[PathBuf], cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let inputs = if given.is_empty() {
        cfg.inputs.clone()
    } else {
        given.to_vec()
    };
    if inputs.is_empty() {
        return Err(CliError::Usage("no input files given".into()));
    }
    check_exists(&inputs)?;
    Ok(inputs)
}

fn parse_list<T: std::str::FromStr>(s: &str, n: usize) -> Result<Vec<T>, String> {
    let v: Vec<T> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| format!("invalid number `{}`", p.trim()))
        })
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!(
            "expected {n} comma-separated values, got {}",
            v.len()
        ));
    }
    Ok(v)
}

/// `a,b` flag values.
pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_list::<f64>(s, 2)?;
    Ok((v[0], v[1]))
}

/// `x,y,w,h` flag values.
pub fn parse_roi(s: &str) -> Result<[usize; 4], String> {
    let v = parse_list::<usize>(s, 4)?;
    Ok([v[0], v[1], v[2], v[3]])
}

pub fn check_exists<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
            ));
        }
    }
    Ok(())
}

/// Run `f` on every input in parallel; results keep input order.
pub fn process_all<F>(inputs: &[PathBuf], f: F) -> Vec<InputOutcome>
where
    F: Fn(&Path, &str) -> CliResult<Analysis> + Sync,
{
    let stems = output_stems(inputs);
    inputs
        .par_iter()
        .zip(stems.par_iter())
        .map(|(p, stem)| {
            log::debug!("processing {}", p.display());
            InputOutcome {
                input: p.display().to_string(),
                result: f(p, stem),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, Args)]
pub struct PoseArgs {
    /// Landmark names: `default`, `coco17`, or a JSON mapping file.
    #[arg(long)]
    pub mapping: Option<String>,
    /// Vertical axis of the keypoint coordinates (±x, ±y, ±z).
    #[arg(long, allow_hyphen_values = true)]
    pub up_axis: Option<String>,
    /// Metres per coordinate unit.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Landmarks below this confidence are treated as unreliable.
    #[arg(long)]
    pub confidence_floor: Option<f64>,
}

/// Keypoint ingestion settings after merging flags and config.
#[derive(Debug, Clone)]
pub struct PoseSettings {
    pub mapping: Option<String>,
    pub up_axis: UpAxis,
    pub scale: Option<f64>,
    pub confidence_floor: f64,
}

impl PoseArgs {
    pub fn settings(&self, cfg: &RunConfig) -> CliResult<PoseSettings> {
        let up = self.up_axis.as_deref().or(cfg.pose.up_axis.as_deref());
        let up_axis = match up {
            Some(s) => s.parse()?,
            None => UpAxis::Z,
        };
        let scale = self.scale.or(cfg.pose.scale_m_per_unit);
        if let Some(s) = scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Config(format!(
                    "--scale must be positive, got {s}"
                )));
            }
        }
        Ok(PoseSettings {
            mapping: self.mapping.clone().or_else(|| cfg.pose.mapping.clone()),
            up_axis,
            scale,
            confidence_floor: self
                .confidence_floor
                .or(cfg.pose.confidence_floor)
                .unwrap_or(spine_core::kinematics::DEFAULT_CONFIDENCE_FLOOR),
        })
    }
}

impl PoseSettings {
    pub fn load(&self, path: &Path) -> CliResult<spine_core::kinematics::PoseSequence> {
        let mapping = crate::config::landmark_mapping(self.mapping.as_deref())?;
        Ok(spine_core::kinematics::load_pose_jsonl(
            path,
            &mapping,
            self.up_axis,
            self.scale,
        )?)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "mapping": self.mapping.as_deref().unwrap_or("default"),
            "up_axis": self.up_axis.to_string(),
            "scale_m_per_unit": self.scale,
            "confidence_floor": self.confidence_floor,
        })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct FilterArgs {
    /// Butterworth order.
    #[arg(long)]
    pub filter_order: Option<usize>,
    /// Low-pass cutoff (Hz, or cycles per frame without a rate).
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
}

impl FilterArgs {
    /// The filter when any filter setting is present.
    pub fn optional(&self, cfg: &RunConfig) -> Option<FilterSpec> {
        let order = self.filter_order.or(cfg.filter.order);
        let cutoff = self.cutoff_hz.or(cfg.filter.cutoff_hz);
        if order.is_none() && cutoff.is_none() {
            return None;
        }
        let d = FilterSpec::default();
        Some(FilterSpec::new(
            order.unwrap_or(d.order),
            cutoff.unwrap_or(d.cutoff_hz),
        ))
    }

    pub fn with_default(&self, cfg: &RunConfig, default: FilterSpec) -> FilterSpec {
        FilterSpec::new(
            self.filter_order
                .or(cfg.filter.order)
                .unwrap_or(default.order),
            self.cutoff_hz
                .or(cfg.filter.cutoff_hz)
                .unwrap_or(default.cutoff_hz),
        )
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SexArg {
    Male,
    Female,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SubjectArgs {
    #[arg(long, value_enum)]
    pub sex: Option<SexArg>,
    #[arg(long)]
    pub age: Option<f64>,
    /// Stature in metres.
    #[arg(long)]
    pub height: Option<f64>,
    /// Body mass in kilograms.
    #[arg(long)]
    pub weight: Option<f64>,
    /// Waist circumference in metres.
    #[arg(long)]
    pub waist: Option<f64>,
}

impl SubjectArgs {
    fn any(&self) -> bool {
        self.sex.is_some()
            || self.age.is_some()
            || self.height.is_some()
            || self.weight.is_some()
            || self.waist.is_some()
    }

    /// Subject from config overridden by flags; `None` when neither gives one.
    /// Without a config subject, height and weight flags are required and
    /// sex and age fall back to `fallback`.
    pub fn merge(
        &self,
        cfg: &RunConfig,
        fallback: &SubjectAnthropometry,
    ) -> CliResult<Option<(SubjectAnthropometry, bool)>> {
        if cfg.subject.is_none() && !self.any() {
            return Ok(None);
        }
        let mut defaulted = false;
        let base = match cfg.subject {
            Some(s) => s,
            None => {
                let (Some(h), Some(w)) = (self.height, self.weight) else {
                    return Err(CliError::Config(
                        "a subject needs --height and --weight (or a [subject] table)".into(),
                    ));
                };
                defaulted = self.sex.is_none() || self.age.is_none();
                SubjectAnthropometry {
                    height_m: h,
                    weight_kg: w,
                    waist_circumference_m: None,
                    ..*fallback
                }
            }
        };
        let s = SubjectAnthropometry {
            sex: match self.sex {
                Some(SexArg::Male) => Sex::Male,
                Some(SexArg::Female) => Sex::Female,
                None => base.sex,
            },
            age_years: self.age.unwrap_or(base.age_years),
            height_m: self.height.unwrap_or(base.height_m),
            weight_kg: self.weight.unwrap_or(base.weight_kg),
            waist_circumference_m: self.waist.or(base.waist_circumference_m),
        };
        s.validate()?;
        Ok(Some((s, defaulted)))
    }
}

/// A parsed CSV file with a header row.
pub struct CsvData {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl CsvData {
    pub fn read(path: &Path) -> CliResult<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn index(&self, name: &str) -> CliResult<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::table(
                &self.path,
                format!("no column {name:?} (columns: {})", self.header.join(", ")),
            )
        })
    }

    pub fn column_at(&self, c: usize) -> CliResult<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(c).unwrap_or("");
                cell.parse::<f64>().map_err(|_| {
                    CliError::table(
                        &self.path,
                        format!(
                            "line {}: column {:?}: not a number: {cell:?}",
                            i + 2,
                            self.header[c]
                        ),
                    )
                })
            })
            .collect()
    }

    pub fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        self.column_at(self.index(name)?)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let csv::ErrorKind::Io(io) = e.into_kind() else {
                unreachable!()
            };
            CliError::io(path, io)
        }
        _ => {
            let line = e
                .position()
                .map(|p| format!("line {}: ", p.line()))
                .unwrap_or_default();
            CliError::table(path, format!("{line}{e}"))
        }
    }
}

pub fn path_json(p: &Option<PathBuf>) -> Value {
    p.as_ref()
        .map_or(Value::Null, |p| json!(p.display().to_string()))
}
