use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use spine_core::loads::{
    default_training_axes, eval_loads, fit_from_oracle, input_grid, lift_assessment, linspace,
    midpoint_axes, oracle_loads, oracle_samples, FeatureRecipe, LoadInputs, OracleSettings,
    RegressionModel,
};

use super::msk::load_model;
use super::{
    check_exists, path_json, process_all, resolve_inputs, FilterArgs, PoseArgs, SubjectArgs,
};
use crate::config::{AxesConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{Analysis, Cell, InputOutcome, Provenance, Report, Table, Warning};

pub const DEFAULT_MODEL_FILE: &str = "load_regression.json";

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Muscle model used as the oracle (default: built-in reduced model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Polynomial degree.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Keypoint JSONL files.
    pub inputs: Vec<PathBuf>,
    /// Regression model JSON (default: shipped coefficients).
    #[arg(long)]
    pub regression: Option<PathBuf>,
    /// Hand load, kg.
    #[arg(long)]
    pub load_kg: Option<f64>,
    /// Also run the muscle model on every frame and report the agreement.
    #[arg(long)]
    pub oracle_check: bool,
    /// Muscle model for the oracle check.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub pose: PoseArgs,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub subject: SubjectArgs,
}

fn axes_from(cfg: &Option<AxesConfig>) -> CliResult<[Vec<f64>; 6]> {
    let Some(a) = cfg else {
        return Ok(default_training_axes());
    };
    let axis = |name: &str, (lo, hi, n): (f64, f64, usize)| {
        if n == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(CliError::Config(format!(
                "loads.axes.{name}: need lo <= hi and count >= 1"
            )));
        }
        Ok(linspace(lo, hi, n))
    };
    Ok([
        axis("flexion_deg", a.flexion_deg)?,
        axis("lever", a.lever)?,
        axis("asymmetry_deg", a.asymmetry_deg)?,
        axis("load_kg", a.load_kg)?,
        axis("height_m", a.height_m)?,
        axis("weight_kg", a.weight_kg)?,
    ])
}

/// R² and RMS of predictions against targets.
fn agreement(pred: &[f64], truth: &[f64]) -> serde_json::Value {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let rms = (ss_res / n).sqrt();
    let rms_truth = (truth.iter().map(|t| t * t).sum::<f64>() / n).sqrt();
    json!({
        "samples": truth.len(),
        "r_squared": 1.0 - ss_res / ss_tot,
        "rms_n": rms,
        "relative_rms": rms / rms_truth,
    })
}

pub fn run_fit(args: &FitArgs, cfg: &RunConfig) -> CliResult<Report> {
    let lc = &cfg.loads;
    let model_path = args.model.clone().or_else(|| cfg.msk.model.clone());
    check_exists(model_path.iter())?;
    let model = load_model(model_path.as_deref())?;
    let degree = args.degree.or(lc.degree).unwrap_or(2);
    let axes = axes_from(&lc.axes)?;
    let output = args
        .output
        .clone()
        .or_else(|| lc.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MODEL_FILE));
    let name = output
        .file_name()
        .ok_or_else(|| CliError::Config(format!("invalid output name {}", output.display())))?
        .to_string_lossy()
        .into_owned();
    let mut settings = OracleSettings::new(model.clone());
    settings.rhythm = cfg.rhythm()?;
    let mut report = Report::new(
        "loads fit",
        json!({
            "model": path_json(&model_path),
            "degree": degree,
            "axes": axes,
            "rhythm": settings.rhythm.knots,
            "shear_coupling": settings.surrogate.shear_coupling,
            "output": name,
        }),
    );
    report.provenance.push(Provenance::new(
        "spine_model",
        model_path.as_deref(),
        &model.provenance,
    ));
    let result = (|| -> CliResult<Analysis> {
        let reg = fit_from_oracle(&settings, &axes, &FeatureRecipe::polynomial(degree))?;
        let (held, skipped_held) = oracle_samples(&settings, &input_grid(&midpoint_axes(&axes)));
        let mut metrics = json!({
            "fit": reg.fit,
            "terms": reg.recipe.term_names()?,
            "domain": reg.domain,
            "provenance": reg.provenance,
        });
        let mut a = Analysis::new(serde_json::Value::Null);
        if held.len() >= 2 {
            let mut pc = Vec::with_capacity(held.len());
            let mut ps = Vec::with_capacity(held.len());
            for s in &held {
                let e = eval_loads(&reg, &s.inputs)?;
                pc.push(e.compression_n);
                ps.push(e.shear_n);
            }
            let tc: Vec<f64> = held.iter().map(|s| s.compression_n).collect();
            let ts: Vec<f64> = held.iter().map(|s| s.shear_n).collect();
            metrics["held_out"] = json!({
                "skipped": skipped_held,
                "compression": agreement(&pc, &tc),
                "shear": agreement(&ps, &ts),
            });
        } else {
            a.warn(
                "W_NO_HELD_OUT",
                "grid too coarse for midpoint held-out checks",
            );
        }
        if let Some(fit) = &reg.fit {
            if fit.compression.r_squared < 0.95 {
                a.warn(
                    "W_POOR_FIT",
                    format!("compression R² {} below 0.95", fit.compression.r_squared),
                );
            }
        }
        a.metrics = metrics;
        Ok(a.file(name.clone(), reg.to_json().into_bytes()))
    })();
    report.outcomes.push(InputOutcome {
        input: "oracle grid".into(),
        result,
    });
    Ok(report)
}

pub fn run_eval(args: &EvalArgs, cfg: &RunConfig) -> CliResult<Report> {
    let inputs = resolve_inputs(&args.inputs, cfg)?;
    let lc = &cfg.loads;
    let reg_path = args.regression.clone().or_else(|| lc.regression.clone());
    let model_path = args.model.clone().or_else(|| cfg.msk.model.clone());
    check_exists(reg_path.iter().chain(model_path.iter()))?;
    let reg = match &reg_path {
        Some(p) => RegressionModel::load(p)?,
        None => RegressionModel::shipped(),
    };
    let pose = args.pose.settings(cfg)?;
    let filter = args.filter.optional(cfg);
    let load_kg = args.load_kg.or(lc.load_kg).unwrap_or(0.0);
    let oracle = args.oracle_check || lc.oracle_check.unwrap_or(false);
    let model = load_model(model_path.as_deref())?;
    let (subject, defaulted) = args.subject.merge(cfg, &model.reference)?.ok_or_else(|| {
        CliError::Config("loads eval needs a subject (--height and --weight, or [subject])".into())
    })?;
    let mut settings = OracleSettings::new(model.clone());
    settings.rhythm = cfg.rhythm()?;
    settings.subject = subject;
    if let Some(s) = reg.asymmetry_surrogate {
        settings.surrogate = s;
    }
    let mut report = Report::new(
        "loads eval",
        json!({
            "regression": path_json(&reg_path),
            "load_kg": load_kg,
            "subject": subject,
            "pose": pose.to_json(),
            "filter": filter,
            "oracle_check": oracle,
            "model": if oracle { path_json(&model_path) } else { serde_json::Value::Null },
        }),
    );
    report.provenance.push(Provenance::new(
        "load_regression",
        reg_path.as_deref(),
        &reg.provenance,
    ));
    if oracle {
        report.provenance.push(Provenance::new(
            "spine_model",
            model_path.as_deref(),
            &model.provenance,
        ));
    }
    if defaulted {
        report.warnings.push(Warning::new(
            "W_SUBJECT_DEFAULTS",
            "subject sex or age not given; the model reference values are used",
        ));
    }
    report.outcomes = process_all(&inputs, |path, stem| {
        let seq = pose.load(path)?;
        let lift = lift_assessment(&seq, &subject, load_kg, &reg, filter)?;
        let s = &lift.series;
        let mut header = vec![
            "t",
            "compression_n",
            "shear_n",
            "flexion_deg",
            "lever",
            "asymmetry_deg",
            "extrapolated",
        ];
        if oracle {
            header.extend(["oracle_compression_n", "oracle_shear_n"]);
        }
        let mut table = Table::new(header);
        let mut oracle_c = Vec::new();
        let mut oracle_s = Vec::new();
        let mut inside_pred = Vec::new();
        let mut inside_truth = Vec::new();
        let mut oracle_failures = 0;
        for (i, m) in s.samples().enumerate() {
            let mut row = vec![
                Cell::Num(s.time(i)),
                Cell::Num(m[0]),
                Cell::Num(m[1]),
                Cell::Num(m[2]),
                Cell::Num(m[3]),
                Cell::Num(m[4]),
                Cell::Flag(lift.extrapolated[i]),
            ];
            if oracle {
                let x = LoadInputs {
                    flexion_deg: m[2],
                    lever: m[3],
                    asymmetry_deg: m[4],
                    load_kg,
                    height_m: subject.height_m,
                    weight_kg: subject.weight_kg,
                };
                match oracle_loads(&settings, &x) {
                    Ok(o) => {
                        row.extend([Cell::Num(o.compression_n), Cell::Num(o.shear_n)]);
                        oracle_c.push(o.compression_n);
                        oracle_s.push(o.shear_n);
                        if !lift.extrapolated[i] {
                            inside_pred.push(m[0]);
                            inside_truth.push(o.compression_n);
                        }
                    }
                    Err(_) => {
                        oracle_failures += 1;
                        row.extend([Cell::Empty, Cell::Empty]);
                    }
                }
            }
            table.push(row);
        }
        let mut metrics = serde_json::to_value(&lift.summary).expect("summary serializes");
        metrics["frames"] = json!(s.len());
        let mut a = Analysis::new(serde_json::Value::Null);
        if oracle {
            metrics["oracle"] = json!({
                "failed_frames": oracle_failures,
                "inside_domain": if inside_truth.len() >= 2 { agreement(&inside_pred, &inside_truth) } else { serde_json::Value::Null },
                "peak_compression_n": oracle_c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "peak_shear_n": oracle_s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
            if oracle_failures > 0 {
                a.warn(
                    "W_ORACLE_FAILED",
                    format!("muscle model failed on {oracle_failures} frames"),
                );
            }
        }
        if lift.summary.percent_extrapolated > 0.0 {
            a.warn(
                "W_EXTRAPOLATED",
                format!(
                    "{:.1}% of frames lie outside the training domain",
                    lift.summary.percent_extrapolated
                ),
            );
        }
        if lift.summary.asymmetry_defaulted > 0 {
            a.warn(
                "W_ASYMMETRY_DEFAULTED",
                format!(
                    "asymmetry undefined on {} frames; 0° used",
                    lift.summary.asymmetry_defaulted
                ),
            );
        }
        a.metrics = metrics;
        Ok(a.table(format!("{stem}.loads.csv"), &table))
    });
    Ok(report)
}
