use std::path::PathBuf;

use clap::Args;
use serde_json::{json, Value};
use spine_core::anthro::{
    default_trunk_bounds, estimate_error_stats, load_obj, mesh_volume, plane_section_perimeter,
    segment_mass, slab_volume, trunk_mass_regression_eval, BodyDensity, TrunkMassRegression,
    DEFAULT_TRUNK_FRACTIONS,
};
use spine_core::kinematics::{Sex, SubjectAnthropometry, UpAxis};

use super::{check_exists, path_json, process_all, resolve_inputs, CsvData, SubjectArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{output_stems, Analysis, Cell, InputOutcome, Provenance, Report, Table};

pub const DEFAULT_WAIST_FRACTION: f64 = 0.6;
pub const DEFAULT_PROFILE_SLICES: usize = 50;

#[derive(Debug, Args)]
pub struct AnthroArgs {
    /// OBJ body meshes.
    pub inputs: Vec<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub up_axis: Option<String>,
    /// Body density in kg/m³.
    #[arg(long)]
    pub density: Option<f64>,
    /// Waist plane as a fraction of the mesh height range.
    #[arg(long)]
    pub waist_fraction: Option<f64>,
    /// Absolute waist plane height in mesh units.
    #[arg(long)]
    pub waist_height: Option<f64>,
    /// Number of planes in the circumference profile.
    #[arg(long)]
    pub profile_slices: Option<usize>,
    /// Trunk-mass regression coefficient file (default: shipped).
    #[arg(long)]
    pub regression: Option<PathBuf>,
    /// CSV of `measured`,`estimated` pairs for error statistics.
    #[arg(long)]
    pub measured_table: Option<PathBuf>,
    #[command(flatten)]
    pub subject: SubjectArgs,
}

pub fn run(args: &AnthroArgs, cfg: &RunConfig) -> CliResult<Report> {
    let ac = &cfg.anthro;
    let table_path = args
        .measured_table
        .clone()
        .or_else(|| ac.measured_table.clone());
    let inputs = if args.inputs.is_empty() && cfg.inputs.is_empty() && table_path.is_some() {
        Vec::new()
    } else {
        resolve_inputs(&args.inputs, cfg)?
    };
    check_exists(table_path.iter())?;
    let up: UpAxis = match args.up_axis.as_deref().or(ac.up_axis.as_deref()) {
        Some(s) => s.parse()?,
        None => UpAxis::Z,
    };
    let density = match args.density.or(ac.density_kg_m3) {
        Some(r) => BodyDensity::new(r)?,
        None => BodyDensity::default(),
    };
    let waist_fraction = args
        .waist_fraction
        .or(ac.waist_fraction)
        .unwrap_or(DEFAULT_WAIST_FRACTION);
    if !(0.0..=1.0).contains(&waist_fraction) {
        return Err(CliError::Config(format!(
            "waist fraction must lie in [0, 1], got {waist_fraction}"
        )));
    }
    let waist_height = args.waist_height.or(ac.waist_height_m);
    let trunk_fractions = ac.trunk_fractions.unwrap_or(DEFAULT_TRUNK_FRACTIONS);
    let slices = args
        .profile_slices
        .or(ac.profile_slices)
        .unwrap_or(DEFAULT_PROFILE_SLICES);
    let reg_path = args.regression.clone().or_else(|| ac.regression.clone());
    check_exists(reg_path.iter())?;
    let regression = match &reg_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            TrunkMassRegression::from_json(&text)?
        }
        None => TrunkMassRegression::shipped(),
    };
    // sex and age do not enter the trunk regression
    let fallback = SubjectAnthropometry {
        sex: Sex::Male,
        age_years: 40.0,
        height_m: 1.75,
        weight_kg: 75.0,
        waist_circumference_m: None,
    };
    let subject = args.subject.merge(cfg, &fallback)?.map(|s| s.0);

    let mut report = Report::new(
        "anthro",
        json!({
            "up_axis": up.to_string(),
            "density_kg_m3": density.kg_per_m3(),
            "waist_fraction": waist_fraction,
            "waist_height": waist_height,
            "trunk_fractions": trunk_fractions,
            "profile_slices": slices,
            "regression": path_json(&reg_path),
            "measured_table": path_json(&table_path),
            "subject": subject,
        }),
    );
    if !inputs.is_empty() {
        report.provenance.push(Provenance::new(
            "trunk_mass_regression",
            reg_path.as_deref(),
            &regression.provenance,
        ));
    }
    report.outcomes = process_all(&inputs, |path, stem| {
        let mesh = load_obj(path, up)?;
        let (lo, hi) = mesh.height_range();
        let stature = hi - lo;
        let waist_h = waist_height.unwrap_or(lo + waist_fraction * stature);
        let waist = plane_section_perimeter(&mesh, waist_h)?;
        let mut a = Analysis::new(Value::Null);

        let mut profile = Table::new(["height", "perimeter"]);
        for i in 0..slices {
            let h = lo + (i as f64 + 0.5) / slices as f64 * stature;
            let p = match plane_section_perimeter(&mesh, h) {
                Ok(p) => Some(p),
                Err(
                    e @ (spine_core::Error::EmptySection(_)
                    | spine_core::Error::NonManifoldSection(_)),
                ) => {
                    a.warn("W_PROFILE_GAP", format!("profile plane {h}: {e}"));
                    None
                }
                Err(e) => return Err(e.into()),
            };
            profile.push(vec![Cell::Num(h), Cell::from(p)]);
        }

        let (t_lo, t_hi) = default_trunk_bounds(&mesh, trunk_fractions);
        let (volume, mass, trunk_volume, trunk_mass) = if mesh.is_closed() {
            let v = mesh_volume(&mesh)?;
            let tv = slab_volume(&mesh, t_lo, t_hi)?;
            (
                Some(v),
                Some(segment_mass(v, density)?),
                Some(tv),
                Some(segment_mass(tv, density)?),
            )
        } else {
            a.warn(
                "W_OPEN_MESH",
                "mesh is not closed; volume and mass are not reported",
            );
            (None, None, None, None)
        };

        let height_m = match subject {
            Some(s) => s.height_m,
            None => {
                a.warn(
                    "W_HEIGHT_FROM_MESH",
                    "no subject height; using the mesh height range",
                );
                stature
            }
        };
        let weight_kg = match (subject, mass) {
            (Some(s), _) => Some(s.weight_kg),
            (None, Some(m)) => {
                a.warn(
                    "W_WEIGHT_FROM_MESH",
                    "no subject weight; using the mesh mass",
                );
                Some(m)
            }
            (None, None) => None,
        };
        let estimate = match weight_kg {
            Some(w) => {
                let s = SubjectAnthropometry {
                    height_m,
                    weight_kg: w,
                    waist_circumference_m: Some(waist),
                    ..subject.unwrap_or(fallback)
                };
                let e = trunk_mass_regression_eval(&regression, &s)?;
                if e.out_of_domain {
                    a.warn(
                        "W_OUT_OF_DOMAIN",
                        format!("trunk-mass regression predicts {} kg", e.mass_kg),
                    );
                }
                Some(e.mass_kg)
            }
            None => None,
        };
        let mesh_vs_regression = match (trunk_mass, estimate) {
            (Some(m), Some(e)) if m > 0.0 => Some((e - m) / m * 100.0),
            _ => None,
        };
        a.metrics = json!({
            "vertices": mesh.vertices().len(),
            "triangles": mesh.triangles().len(),
            "closed": mesh.is_closed(),
            "height_range": [lo, hi],
            "stature": stature,
            "waist_height": waist_h,
            "waist_circumference": waist,
            "volume_m3": volume,
            "mass_kg": mass,
            "trunk_bounds": [t_lo, t_hi],
            "trunk_volume_m3": trunk_volume,
            "trunk_mass_kg": trunk_mass,
            "regression_trunk_mass_kg": estimate,
            "regression_vs_mesh_pct": mesh_vs_regression,
        });
        Ok(a.table(format!("{stem}.profile.csv"), &profile))
    });
    if let Some(tp) = &table_path {
        let stem = output_stems(std::slice::from_ref(tp)).remove(0);
        report.outcomes.push(InputOutcome {
            input: tp.display().to_string(),
            result: error_table(tp, &stem),
        });
    }
    Ok(report)
}

/// Percent differences between measured and estimated values in a table.
fn error_table(path: &std::path::Path, stem: &str) -> CliResult<Analysis> {
    let data = CsvData::read(path)?;
    let measured = data.column("measured")?;
    let estimated = data.column("estimated")?;
    let labels: Vec<String> = match data.index("subject") {
        Ok(c) => data
            .rows
            .iter()
            .map(|r| r.get(c).unwrap_or("").to_string())
            .collect(),
        Err(_) => (1..=measured.len()).map(|i| i.to_string()).collect(),
    };
    let stats = estimate_error_stats(&measured, &estimated)?;
    let mut t = Table::new(["subject", "measured", "estimated", "percent_diff"]);
    for (((l, m), e), p) in labels
        .iter()
        .zip(&measured)
        .zip(&estimated)
        .zip(&stats.percent_diffs)
    {
        t.push(vec![
            Cell::from(l.as_str()),
            Cell::Num(*m),
            Cell::Num(*e),
            Cell::Num(*p),
        ]);
    }
    let abs: Vec<f64> = stats.percent_diffs.iter().map(|p| p.abs()).collect();
    let mean_abs = abs.iter().sum::<f64>() / abs.len() as f64;
    Ok(Analysis::new(json!({
        "rows": measured.len(),
        "percent_diffs": stats.percent_diffs,
        "mean_pct": stats.mean_pct,
        "min_pct": stats.min_pct,
        "max_pct": stats.max_pct,
        "mean_abs_pct": mean_abs,
        "min_abs_pct": abs.iter().copied().fold(f64::INFINITY, f64::min),
        "max_abs_pct": abs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
    .table(format!("{stem}.errors.csv"), &t))
}
