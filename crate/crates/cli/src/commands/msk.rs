use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;
use serde_json::json;
use spine_core::kinematics::LumbopelvicRhythm;
use spine_core::msk::{
    dynamic_drive, joint_reaction, scale_model, solve_muscle_forces, static_analysis, DriveFrame,
    ExternalLoad, MuscleSolution, Posture, SpineModel, GRAVITY, SIGMA_MAX_DEFAULT_PA,
    SIGMA_MAX_WEIGHTLIFTER_PA,
};
use spine_core::signal::{uniform_rate, TimeSeries};

use super::{check_exists, path_json, process_all, resolve_inputs, CsvData, SubjectArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{describe, Analysis, Cell, Provenance, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Weightlifter,
}

#[derive(Debug, Args)]
pub struct MskArgs {
    /// Drive CSVs (`t,flexion_deg,arm_angle_deg,hip_displacement_m`) or
    /// static case JSON files.
    pub inputs: Vec<PathBuf>,
    /// Model JSON (default: built-in reduced model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Maximum muscle stress preset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Maximum muscle stress in Pa; overrides the preset.
    #[arg(long)]
    pub sigma_max: Option<f64>,
    /// Lever compliance per newton of total muscle force.
    #[arg(long)]
    pub compliance: Option<f64>,
    /// Hand load for drive inputs, kg.
    #[arg(long)]
    pub load_kg: Option<f64>,
    /// Use the model's reference anthropometry even when a subject is given.
    #[arg(long)]
    pub no_scale: bool,
    #[command(flatten)]
    pub subject: SubjectArgs,
}

/// One quasi-static case. Either `moments_nm` (solve muscles only) or a posture.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticCase {
    #[serde(default)]
    pub flexion_deg: f64,
    /// Overrides the rhythm.
    pub sacral_rotation_deg: Option<f64>,
    /// Straight-arm hand position, degrees from vertical-up.
    pub arm_angle_deg: Option<f64>,
    /// Hand position relative to the most inferior joint, `[anterior, up]`.
    pub load_position_m: Option<[f64; 2]>,
    #[serde(default)]
    pub load_kg: f64,
    pub moments_nm: Option<Vec<f64>>,
}

struct Settings {
    model: SpineModel,
    rhythm: LumbopelvicRhythm,
    load_kg: f64,
}

pub fn load_model(path: Option<&Path>) -> CliResult<SpineModel> {
    Ok(match path {
        Some(p) => SpineModel::load(p)?,
        None => SpineModel::reduced_default(),
    })
}

pub fn run(args: &MskArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let mc = &cfg.msk;
    let model_path = args.model.clone().or_else(|| mc.model.clone());
    check_exists(model_path.iter())?;
    let reference = load_model(model_path.as_deref())?;
    let preset = match (args.preset, mc.preset.as_deref()) {
        (Some(p), _) => Some(p),
        (None, Some(s)) => Some(
            Preset::from_str(s, true)
                .map_err(|_| CliError::Config(format!("unknown msk preset {s:?}")))?,
        ),
        (None, None) => None,
    };
    let sigma = args.sigma_max.or(mc.sigma_max_pa).or(match preset {
        Some(Preset::Weightlifter) => Some(SIGMA_MAX_WEIGHTLIFTER_PA),
        Some(Preset::Default) => Some(SIGMA_MAX_DEFAULT_PA),
        None => None,
    });
    let mut model = reference.clone();
    if let Some(s) = sigma {
        model = model.with_sigma_max(s)?;
    }
    if let Some(c) = args.compliance.or(mc.compliance_per_n) {
        model = model.with_compliance(c)?;
    }
    let subject = args.subject.merge(cfg, &reference.reference)?;
    let scale = !args.no_scale && mc.scale_to_subject.unwrap_or(true);
    if let (Some((s, _)), true) = (&subject, scale) {
        model = scale_model(&model, s)?;
    }
    let settings = Settings {
        rhythm: cfg.rhythm()?,
        load_kg: args.load_kg.or(mc.load_kg).unwrap_or(0.0),
        model,
    };
    let mut report = Report::new(
        "msk",
        json!({
            "model": path_json(&model_path),
            "sigma_max_pa": settings.model.sigma_max_pa,
            "compliance_per_n": settings.model.compliance_per_n,
            "load_kg": settings.load_kg,
            "rhythm": settings.rhythm.knots,
            "subject": subject.map(|s| s.0),
            "scaled": scale && subject.is_some(),
            "reaction_level": settings.model.levels[settings.model.reaction_level()],
        }),
    );
    report.provenance.push(Provenance::new(
        "spine_model",
        model_path.as_deref(),
        &reference.provenance,
    ));
    if let Some((_, true)) = subject {
        report.warnings.push(crate::report::Warning::new(
            "W_SUBJECT_DEFAULTS",
            "subject sex or age not given; the model reference values are used",
        ));
    }
    report.outcomes = process_all(&inputs, |path, stem| {
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            run_static(path, stem, &settings)
        } else {
            run_drive(path, stem, &settings)
        }
    });
    Ok(report)
}

fn frame_header(model: &SpineModel) -> Vec<String> {
    let mut h: Vec<String> = [
        "frame",
        "t",
        "flexion_deg",
        "compression_n",
        "shear_n",
        "converged",
        "coupling_iterations",
        "max_residual_nm",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(model.fascicles.iter().map(|f| format!("force_{}", f.name)));
    h.extend(model.levels.iter().map(|l| format!("residual_{l}")));
    h
}

fn frame_row(model: &SpineModel, f: &DriveFrame) -> Vec<Cell> {
    let mut row = vec![
        Cell::from(f.frame),
        Cell::Num(f.time_s),
        Cell::Num(f.posture.trunk_flexion_deg),
        Cell::from(f.reaction.map(|r| r.compression_n)),
        Cell::from(f.reaction.map(|r| r.shear_n)),
    ];
    match &f.solution {
        Some(s) => {
            row.push(Cell::Flag(s.converged));
            row.push(Cell::from(s.iteration_count));
            row.push(Cell::Num(s.max_residual_nm()));
            row.push(Cell::Empty);
            row.extend(s.forces_n.iter().map(|v| Cell::Num(*v)));
            row.extend(s.residuals_nm.iter().map(|v| Cell::Num(*v)));
        }
        None => {
            row.extend([Cell::Flag(false), Cell::Empty, Cell::Empty]);
            row.push(Cell::from(
                f.error.as_ref().map(|e| e.0.clone()).unwrap_or_default(),
            ));
            row.extend((0..model.fascicles.len() + model.level_count()).map(|_| Cell::Empty));
        }
    }
    row
}

fn solution_json(model: &SpineModel, s: &MuscleSolution) -> serde_json::Value {
    let forces: serde_json::Map<String, serde_json::Value> = model
        .fascicles
        .iter()
        .zip(&s.forces_n)
        .map(|(f, v)| (f.name.clone(), json!(v)))
        .collect();
    json!({
        "forces_n": forces,
        "converged": s.converged,
        "coupling_iterations": s.iteration_count,
        "newton_iterations": s.newton_iterations,
        "max_residual_nm": s.max_residual_nm(),
        "objective": s.objective,
    })
}

fn run_static(path: &Path, stem: &str, st: &Settings) -> CliResult<Analysis> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let case: StaticCase = serde_json::from_str(&text)
        .map_err(|e| CliError::table(path, format!("static case: {e}")))?;
    let model = &st.model;
    if let Some(m) = &case.moments_nm {
        let sol = solve_muscle_forces(model, m)?;
        let mut a = Analysis::new(json!({"moments_nm": m, "solution": solution_json(model, &sol)}));
        if !sol.converged {
            a.warn("W_NOT_CONVERGED", "muscle solve did not converge");
        }
        let mut t = Table::new(["fascicle", "force_n"]);
        for (f, v) in model.fascicles.iter().zip(&sol.forces_n) {
            t.push(vec![Cell::from(f.name.as_str()), Cell::Num(*v)]);
        }
        return Ok(a.table(format!("{stem}.forces.csv"), &t));
    }
    let posture = match (
        case.arm_angle_deg,
        case.load_position_m,
        case.sacral_rotation_deg,
    ) {
        (Some(_), Some(_), _) => {
            return Err(CliError::table(
                path,
                "give arm_angle_deg or load_position_m, not both",
            ));
        }
        (Some(arm), None, None) => Posture::with_arm(model, case.flexion_deg, &st.rhythm, arm)?,
        (Some(arm), None, Some(sacral)) => {
            let mut p = Posture::from_flexion(model, case.flexion_deg, sacral, [0.0, 0.0])?;
            let geo = spine_core::msk::Geometry::new(model, &p)?;
            let th = arm.to_radians();
            p.load_position_m = [
                geo.shoulder[0] + model.arm_length_m * th.sin(),
                geo.shoulder[1] + model.arm_length_m * th.cos(),
            ];
            p
        }
        (None, pos, sacral) => {
            let pos = pos.unwrap_or([0.0, 0.0]);
            match sacral {
                Some(s) => Posture::from_flexion(model, case.flexion_deg, s, pos)?,
                None => Posture::from_rhythm(model, case.flexion_deg, &st.rhythm, pos)?,
            }
        }
    };
    let load = ExternalLoad::statics(case.load_kg);
    let (sol, reaction) = static_analysis(model, &posture, &load, GRAVITY)?;
    let mut levels = Table::new(["level", "compression_n", "shear_n", "residual_nm"]);
    for (l, name) in model.levels.iter().enumerate() {
        let r = joint_reaction(model, &posture, &sol, &load, l, GRAVITY)?;
        levels.push(vec![
            Cell::from(name.as_str()),
            Cell::Num(r.compression_n),
            Cell::Num(r.shear_n),
            Cell::Num(sol.residuals_nm[l]),
        ]);
    }
    let frame = DriveFrame {
        frame: 0,
        time_s: 0.0,
        posture: posture.clone(),
        load,
        solution: Some(sol.clone()),
        reaction: Some(reaction),
        error: None,
    };
    let mut t = Table::new(frame_header(model));
    t.push(frame_row(model, &frame));
    let mut a = Analysis::new(json!({
        "posture": posture,
        "load_kg": case.load_kg,
        "compression_n": reaction.compression_n,
        "shear_n": reaction.shear_n,
        "solution": solution_json(model, &sol),
    }));
    if !sol.converged {
        a.warn(
            "W_NOT_CONVERGED",
            "muscle solve or coupling loop did not converge",
        );
    }
    Ok(a.table(format!("{stem}.msk.csv"), &t)
        .table(format!("{stem}.levels.csv"), &levels))
}

fn run_drive(path: &Path, stem: &str, st: &Settings) -> CliResult<Analysis> {
    let data = CsvData::read(path)?;
    let times = data.column("t")?;
    let cols = ["flexion_deg", "arm_angle_deg", "hip_displacement_m"]
        .iter()
        .map(|c| data.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..times.len())
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    let rate = uniform_rate(&times)?;
    let params = TimeSeries::new(rows, rate, times[0])?;
    let model = &st.model;
    let frames = dynamic_drive(model, &params, st.load_kg, &st.rhythm, GRAVITY)?;
    let mut t = Table::new(frame_header(model));
    for f in &frames {
        t.push(frame_row(model, f));
    }
    let compression: Vec<f64> = frames
        .iter()
        .map(|f| f.reaction.map_or(f64::NAN, |r| r.compression_n))
        .collect();
    let shear: Vec<f64> = frames
        .iter()
        .map(|f| f.reaction.map_or(f64::NAN, |r| r.shear_n))
        .collect();
    let failed: Vec<&DriveFrame> = frames.iter().filter(|f| f.error.is_some()).collect();
    let unconverged = frames
        .iter()
        .filter(|f| f.solution.as_ref().is_some_and(|s| !s.converged))
        .count();
    let peak = describe(&compression);
    let peak_frame = peak["argmax"].as_u64().map(|i| i as usize);
    let mut a = Analysis::new(json!({
        "frames": frames.len(),
        "rate_hz": rate,
        "load_kg": st.load_kg,
        "compression_n": peak,
        "shear_n": describe(&shear),
        "peak_compression_n": peak["max"],
        "peak_frame": peak_frame,
        "peak_time_s": peak_frame.map(|i| frames[i].time_s),
        "failed_frames": failed.iter().map(|f| f.frame).collect::<Vec<_>>(),
        "unconverged_frames": unconverged,
    }));
    if let Some(first) = failed.first() {
        let (code, msg) = first.error.clone().unwrap_or_default();
        a.warn(
            "W_FRAME_FAILED",
            format!(
                "{} frames could not be solved; first at frame {} [{code}]: {msg}",
                failed.len(),
                first.frame
            ),
        );
    }
    if unconverged > 0 {
        a.warn(
            "W_NOT_CONVERGED",
            format!("{unconverged} frames did not converge"),
        );
    }
    Ok(a.table(format!("{stem}.msk.csv"), &t))
}
