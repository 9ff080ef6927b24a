//! TOML run configuration. Every field is optional; command-line flags
//! override the file and built-in defaults fill the rest.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spine_core::kinematics::{LandmarkMapping, LumbopelvicRhythm, SubjectAnthropometry};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Used when the subcommand is given no input paths.
    pub inputs: Vec<PathBuf>,
    pub pose: PoseConfig,
    pub filter: FilterConfig,
    pub rhythm: Option<RhythmConfig>,
    pub subject: Option<SubjectAnthropometry>,
    pub stability: StabilityConfig,
    pub anthro: AnthroConfig,
    pub track: TrackConfig,
    pub msk: MskConfig,
    pub loads: LoadsConfig,
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    /// `default`, `coco17`, or a JSON file mapping raw names to canonical ones.
    pub mapping: Option<String>,
    pub up_axis: Option<String>,
    pub scale_m_per_unit: Option<f64>,
    pub confidence_floor: Option<f64>,
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub order: Option<usize>,
    pub cutoff_hz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhythmConfig {
    /// `(trunk flexion deg, pelvic share)` knots.
    pub knots: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub column: Option<String>,
    pub metric: Option<String>,
    pub delay_samples: Option<usize>,
    pub dimension: Option<usize>,
    pub short_window_s: Option<(f64, f64)>,
    pub long_window_s: Option<(f64, f64)>,
    pub mean_period_s: Option<f64>,
    pub max_horizon_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnthroConfig {
    pub up_axis: Option<String>,
    pub density_kg_m3: Option<f64>,
    /// Waist plane as a fraction of the mesh height range.
    pub waist_fraction: Option<f64>,
    pub waist_height_m: Option<f64>,
    pub trunk_fractions: Option<(f64, f64)>,
    pub profile_slices: Option<usize>,
    pub regression: Option<PathBuf>,
    /// CSV with `measured` and `estimated` columns.
    pub measured_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub template: Option<PathBuf>,
    /// `[x, y, width, height]` cut from the first frame when no template file is given.
    pub roi: Option<[usize; 4]>,
    pub threshold: Option<f64>,
    pub search_radius: Option<usize>,
    pub scale_m_per_px: Option<f64>,
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MskConfig {
    pub model: Option<PathBuf>,
    /// `default` or `weightlifter`.
    pub preset: Option<String>,
    pub sigma_max_pa: Option<f64>,
    pub compliance_per_n: Option<f64>,
    pub load_kg: Option<f64>,
    /// Scale the model to `[subject]` when one is given (default true).
    pub scale_to_subject: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadsConfig {
    pub regression: Option<PathBuf>,
    pub load_kg: Option<f64>,
    pub oracle_check: Option<bool>,
    pub degree: Option<usize>,
    pub output: Option<PathBuf>,
    pub axes: Option<AxesConfig>,
}

/// Training grid as `[lo, hi, count]` per input.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxesConfig {
    pub flexion_deg: (f64, f64, usize),
    pub lever: (f64, f64, usize),
    pub asymmetry_deg: (f64, f64, usize),
    pub load_kg: (f64, f64, usize),
    pub height_m: (f64, f64, usize),
    pub weight_kg: (f64, f64, usize),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub reference: Option<PathBuf>,
    pub decimals: Option<usize>,
}

impl RunConfig {
    /// Parse a config file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix_opt(&mut self.out_dir);
        self.inputs.iter_mut().for_each(fix);
        fix_opt(&mut self.anthro.regression);
        fix_opt(&mut self.anthro.measured_table);
        fix_opt(&mut self.track.template);
        fix_opt(&mut self.msk.model);
        fix_opt(&mut self.loads.regression);
        fix_opt(&mut self.loads.output);
        fix_opt(&mut self.compare.reference);
        if let Some(m) = &self.pose.mapping {
            if m != "default" && m != "coco17" && Path::new(m).is_relative() {
                self.pose.mapping = Some(base.join(m).to_string_lossy().into_owned());
            }
        }
    }

    fn validate(&self) -> CliResult<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Config(format!(
                "{name} must be positive, got {x}"
            ))),
            _ => Ok(()),
        };
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        positive("pose.scale_m_per_unit", self.pose.scale_m_per_unit)?;
        positive("filter.cutoff_hz", self.filter.cutoff_hz)?;
        positive("anthro.density_kg_m3", self.anthro.density_kg_m3)?;
        positive("track.scale_m_per_px", self.track.scale_m_per_px)?;
        positive("track.rate_hz", self.track.rate_hz)?;
        positive("msk.sigma_max_pa", self.msk.sigma_max_pa)?;
        if let Some(f) = self.anthro.waist_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(CliError::Config(format!(
                    "anthro.waist_fraction must lie in [0, 1], got {f}"
                )));
            }
        }
        if let Some(t) = self.track.threshold {
            if !(-1.0..=1.0).contains(&t) {
                return Err(CliError::Config(format!(
                    "track.threshold must lie in [-1, 1], got {t}"
                )));
            }
        }
        if let Some(c) = self.pose.confidence_floor {
            if !(0.0..=1.0).contains(&c) {
                return Err(CliError::Config(format!(
                    "pose.confidence_floor must lie in [0, 1], got {c}"
                )));
            }
        }
        if let Some(s) = &self.subject {
            s.validate()?;
        }
        if let Some(r) = &self.rhythm {
            LumbopelvicRhythm::new(r.knots.clone())?;
        }
        Ok(())
    }

    pub fn rhythm(&self) -> CliResult<LumbopelvicRhythm> {
        match &self.rhythm {
            Some(r) => Ok(LumbopelvicRhythm::new(r.knots.clone())?),
            None => Ok(LumbopelvicRhythm::default()),
        }
    }
}

pub fn landmark_mapping(spec: Option<&str>) -> CliResult<LandmarkMapping> {
    match spec {
        None | Some("default") => Ok(LandmarkMapping::default()),
        Some("coco17") => Ok(LandmarkMapping::coco17()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let names = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{path}: landmark mapping: {e}")))?;
            Ok(LandmarkMapping { names })
        }
    }
}
