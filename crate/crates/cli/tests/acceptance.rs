//! Acceptance criteria. Runs as a plain binary: one PASS/FAIL line per
//! criterion, nonzero exit when any fails or exceeds its time limit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spine_core::kinematics::{asymmetry_angle, trunk_flexion, LandmarkName, PoseFrame, UpAxis};
use spine_core::loads::{fit_regression, FeatureRecipe, LoadInputs, LoadSample};
use spine_core::msk::{
    external_moments, iterate_posture_coupling, solve_muscle_forces, ExternalLoad, MuscleFascicle,
    Posture, Segment, SpineModel, GRAVITY,
};
use spine_core::signal::{butterworth_zero_lag, central_diff, FilterSpec, TimeSeries};
use spine_core::track::{ncc_match, read_pgm, read_pgm_dir, Template};
use tempfile::tempdir;

use common::{data_files, fixture, fx, spinekit, Csv};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("geometry exactness", 1, geometry),
        ("differentiation and filtering", 5, filtering),
        ("Lyapunov exponents", 30, lyapunov),
        ("anthropometrics", 10, anthropometrics),
        ("tracking", 30, tracking),
        ("muscle-force QP", 60, muscle_qp),
        ("convergence loop", 5, convergence),
        ("regression consistency", 60, regression),
        ("snatch sanity band", 10, snatch),
        ("determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit_s, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(*limit_s) => Err(format!(
                "took {:.2} s, limit {limit_s} s",
                elapsed.as_secs_f64()
            )),
            r => r,
        };
        let t = elapsed.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({t:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({t:.2} s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// 1

fn trunk_frame(sh: [f64; 3], hip: [f64; 3]) -> PoseFrame {
    PoseFrame::new(0.0)
        .with(LandmarkName::LShoulder, [sh[0], sh[1] + 0.2, sh[2]])
        .with(LandmarkName::RShoulder, [sh[0], sh[1] - 0.2, sh[2]])
        .with(LandmarkName::LHip, [hip[0], hip[1] + 0.15, hip[2]])
        .with(LandmarkName::RHip, [hip[0], hip[1] - 0.15, hip[2]])
}

fn geometry() -> Outcome {
    let up = UpAxis::Z;
    let mut worst = 0.0f64;
    // shoulders above, diagonal from and level with the hips
    for (sh, want) in [
        ([0.0, 0.0, 1.5], 0.0),
        ([0.5, 0.0, 1.5], 45.0),
        ([0.5, 0.0, 1.0], 90.0),
    ] {
        let got =
            trunk_flexion(&trunk_frame(sh, [0.0, 0.0, 1.0]), up).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() < 1e-9, "flexion {got} for {want}");
        worst = worst.max((got - want).abs());
    }
    // hands straight ahead, diagonal and to the side of a subject facing +x
    for (hand, want) in [
        ([0.4, 0.0, 1.0], 0.0),
        ([0.3, 0.3, 1.0], 45.0),
        ([0.0, 0.4, 1.0], 90.0),
    ] {
        let frame = trunk_frame([0.0, 0.0, 1.5], [0.0, 0.0, 1.0])
            .with(LandmarkName::LWrist, [hand[0], hand[1] + 0.1, hand[2]])
            .with(LandmarkName::RWrist, [hand[0], hand[1] - 0.1, hand[2]]);
        let got = asymmetry_angle(&frame, up).map_err(|e| e.to_string())?;
        ensure!((got - want).abs() < 1e-9, "asymmetry {got} for {want}");
        worst = worst.max((got - want).abs());
    }
    Ok(format!("max angle error {worst:.1e} deg"))
}

// 2

fn filtering() -> Outcome {
    let rate = 100.0;
    let q: Vec<f64> = (0..200)
        .map(|i| {
            let t = i as f64 / rate;
            3.0 * t * t - 2.0 * t + 0.5
        })
        .collect();
    let s = TimeSeries::from_scalar(q, rate, 0.0).map_err(|e| e.to_string())?;
    let d1 = central_diff(&s, 1).map_err(|e| e.to_string())?;
    let d2 = central_diff(&s, 2).map_err(|e| e.to_string())?;
    let mut diff_err = 0.0f64;
    for i in 0..s.len() {
        let t = i as f64 / rate;
        diff_err = diff_err.max((d1.as_flat()[i] - (6.0 * t - 2.0)).abs());
        diff_err = diff_err.max((d2.as_flat()[i] - 6.0).abs());
    }
    ensure!(diff_err < 1e-9, "quadratic derivative error {diff_err}");

    let dc = TimeSeries::from_scalar(vec![4.2; 300], rate, 0.0).map_err(|e| e.to_string())?;
    let f = butterworth_zero_lag(&dc, FilterSpec::new(5, 2.0)).map_err(|e| e.to_string())?;
    let dc_err = f
        .as_flat()
        .iter()
        .fold(0.0f64, |m, v| m.max((v / 4.2 - 1.0).abs()));
    ensure!(dc_err < 1e-9, "DC gain off by {dc_err}");

    let (rate, cutoff, n) = (200.0, 2.0, 2000);
    let sine = |freq: f64| -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate).sin())
            .collect()
    };
    let hi = TimeSeries::from_scalar(sine(10.0 * cutoff), rate, 0.0).map_err(|e| e.to_string())?;
    let y = butterworth_zero_lag(&hi, FilterSpec::new(5, cutoff)).map_err(|e| e.to_string())?;
    let residual = y.as_flat()[n / 4..3 * n / 4]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    ensure!(
        residual <= 0.01,
        "10x cutoff keeps {:.3}% amplitude",
        residual * 100.0
    );

    let x = sine(cutoff / 10.0);
    let lo = TimeSeries::from_scalar(x.clone(), rate, 0.0).map_err(|e| e.to_string())?;
    let y = butterworth_zero_lag(&lo, FilterSpec::new(5, cutoff)).map_err(|e| e.to_string())?;
    let y = y.as_flat();
    let xc = |lag: i64| -> f64 {
        (300..n - 300)
            .map(|i| x[i] * y[(i as i64 + lag) as usize])
            .sum()
    };
    let best = (-30..=30).max_by(|a, b| xc(*a).total_cmp(&xc(*b))).unwrap();
    ensure!(best == 0, "cross-correlation peaks at lag {best}");
    Ok(format!(
        "derivative error {diff_err:.1e}, DC error {dc_err:.1e}, attenuation {:.4}%, lag 0",
        100.0 * (1.0 - residual)
    ))
}

// 3

fn lyapunov_of(run: &common::Run) -> Result<f64, String> {
    ensure!(run.code == 0, "stability failed: {}", run.stderr);
    run.metrics(0)["lambda_short"]
        .as_f64()
        .ok_or_else(|| "no lambda_short".to_string())
}

fn lyapunov() -> Outcome {
    // oracle first: mean log-derivative of the map along the fixture orbit
    let orbit = Csv::read(&fixture("series/logistic.csv")).column("x");
    let oracle = orbit
        .iter()
        .map(|x| (4.0 * (1.0 - 2.0 * x)).abs().ln())
        .sum::<f64>()
        / orbit.len() as f64;
    ensure!(
        (oracle - 2f64.ln()).abs() / 2f64.ln() < 0.05,
        "orbit oracle {oracle} is not near ln 2"
    );

    let dir = tempdir().map_err(|e| e.to_string())?;
    let cfg = fx("series/logistic.toml");
    let lambda = lyapunov_of(&spinekit(
        &dir.path().join("a"),
        &["--config", &cfg, "stability"],
    ))?;
    let rel = (lambda - 2f64.ln()).abs() / 2f64.ln();
    ensure!(
        rel <= 0.15,
        "logistic lambda {lambda}, {:.1}% from ln 2",
        rel * 100.0
    );

    // affine copy of the same orbit
    let scaled = dir.path().join("scaled.csv");
    let mut text = String::from("t,x\n");
    for (i, x) in orbit.iter().enumerate() {
        text.push_str(&format!("{i},{:?}\n", 37.5 * x - 12.25));
    }
    fs::write(&scaled, text).map_err(|e| e.to_string())?;
    let rescaled = lyapunov_of(&spinekit(
        &dir.path().join("b"),
        &["--config", &cfg, "stability", scaled.to_str().unwrap()],
    ))?;
    ensure!(
        (rescaled - lambda).abs() < 1e-6,
        "affine copy gives {rescaled} vs {lambda}"
    );

    let periodic = spinekit(
        &dir.path().join("c"),
        &["stability", &fx("series/periodic.csv")],
    );
    ensure!(periodic.code == 0, "periodic failed: {}", periodic.stderr);
    let m = periodic.metrics(0);
    let (short, long) = (
        m["lambda_short"].as_f64().unwrap(),
        m["lambda_long"].as_f64().unwrap(),
    );
    ensure!(
        short.abs() < 0.02 && long.abs() < 0.02,
        "periodic lambdas {short} / {long} per s"
    );
    Ok(format!(
        "logistic {lambda:.4} (oracle {oracle:.4}, ln 2 = 0.6931), affine delta {:.1e}, periodic {short:.4}/{long:.5} per s",
        (rescaled - lambda).abs()
    ))
}

// 4

fn anthropometrics() -> Outcome {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let cube = spinekit(
        &dir.path().join("c"),
        &["anthro", &fx("mesh/cube.obj"), "--waist-height", "0.2"],
    );
    ensure!(cube.code == 0, "cube: {}", cube.stderr);
    let m = cube.metrics(0);
    let p = m["waist_circumference"].as_f64().unwrap();
    ensure!((p - 1.6).abs() < 1e-12, "cube perimeter {p}");

    let prism = spinekit(
        &dir.path().join("p"),
        &["anthro", &fx("mesh/prism64.obj"), "--waist-height", "0.5"],
    );
    ensure!(prism.code == 0, "prism: {}", prism.stderr);
    let pp = prism.metrics(0)["waist_circumference"].as_f64().unwrap();
    let closed = 2.0 * 64.0 * 0.15 * (PI / 64.0).sin();
    ensure!(
        (pp - closed).abs() < 1e-9,
        "prism perimeter {pp} vs {closed}"
    );

    let sphere = spinekit(
        &dir.path().join("s"),
        &["anthro", &fx("mesh/icosphere.obj")],
    );
    ensure!(sphere.code == 0, "icosphere: {}", sphere.stderr);
    let sm = sphere.metrics(0);
    let v = sm["volume_m3"].as_f64().unwrap();
    let ball = 4.0 / 3.0 * PI * 0.15f64.powi(3);
    let vrel = (v - ball).abs() / ball;
    ensure!(vrel < 0.005, "icosphere volume {:.3}% off", vrel * 100.0);
    let mass = sm["mass_kg"].as_f64().unwrap();
    ensure!(
        (mass - 1071.0 * v).abs() <= 1e-12 * mass,
        "mass {mass} vs {}",
        1071.0 * v
    );

    let table = spinekit(
        &dir.path().join("t"),
        &["anthro", "--measured-table", &fx("tables/waist_errors.csv")],
    );
    ensure!(table.code == 0, "table: {}", table.stderr);
    let t = table.metrics(0);
    let (mean, lo, hi) = (
        t["mean_pct"].as_f64().unwrap(),
        t["min_pct"].as_f64().unwrap(),
        t["max_pct"].as_f64().unwrap(),
    );
    ensure!(mean.round() == 10.0, "mean error {mean}%");
    ensure!(lo.round() == 1.0 && hi.round() == 15.0, "range {lo}-{hi}%");
    Ok(format!(
        "cube 1.6 m, prism error {:.1e}, sphere volume {:.3}% off, table mean {mean:.1}% range {lo:.1}-{hi:.1}%",
        (pp - closed).abs(),
        vrel * 100.0
    ))
}

// 5

fn tracking() -> Outcome {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let run = spinekit(
        &dir.path().join("t"),
        &[
            "track",
            &fx("frames/translation"),
            "--template",
            &fx("frames/translation_template.pgm"),
            "--threshold",
            "0.8",
        ],
    );
    ensure!(run.code == 0, "translation: {}", run.stderr);
    let x = run.csv("translation.track.csv").column("x");
    ensure!(
        x.windows(2).all(|w| w[1] - w[0] == 3.0),
        "steps {:?}",
        x.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
    );

    let frames = read_pgm_dir(fixture("frames/translation")).map_err(|e| e.to_string())?;
    let template = Template::new(
        read_pgm(fixture("frames/translation_template.pgm"), 0).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let m = ncc_match(&frames[0], &template).map_err(|e| e.to_string())?;
    ensure!((m.score - 1.0).abs() < 1e-9, "self-match score {}", m.score);

    let occ = spinekit(
        &dir.path().join("o"),
        &[
            "track",
            &fx("frames/occlusion"),
            "--template",
            &fx("frames/occlusion_template.pgm"),
            "--threshold",
            "0.8",
        ],
    );
    ensure!(occ.code == 0, "occlusion: {}", occ.stderr);
    let rejected = occ.metrics(0)["rejected_frames"].clone();
    ensure!(rejected == serde_json::json!([10]), "rejected {rejected}");

    let par = spinekit(
        &dir.path().join("p"),
        &[
            "track",
            &fx("frames/parabola"),
            "--template",
            &fx("frames/parabola_template.pgm"),
        ],
    );
    ensure!(par.code == 0, "parabola: {}", par.stderr);
    let ay = par.csv("parabola.acceleration.csv").column("ay");
    let n = ay.len();
    let interior = &ay[n / 4..3 * n / 4];
    let worst = interior
        .iter()
        .fold(0.0f64, |m, a| m.max((a - 2.0).abs() / 2.0));
    ensure!(
        worst < 0.02,
        "parabola acceleration off by {:.2}%",
        worst * 100.0
    );
    Ok(format!(
        "3 px/frame exact, self-match {:.12}, frame 10 rejected, parabola error {:.2e}",
        m.score, worst
    ))
}

// 6

fn custom_model(
    levels: usize,
    fascicles: &[(Vec<usize>, Vec<f64>, f64)],
    sigma: f64,
) -> SpineModel {
    let mut m = SpineModel::single_level(&[(0.05, 1e-4)], sigma).unwrap();
    m.levels = (0..levels).map(|l| format!("J{l}")).collect();
    m.segments = (0..levels)
        .map(|s| Segment {
            name: format!("S{s}"),
            mass_kg: 0.0,
            length_m: 0.04,
            com_along_m: 0.02,
            com_anterior_m: 0.0,
        })
        .collect();
    m.rotation_fractions = vec![1.0 / levels as f64; levels];
    m.fascicles = fascicles
        .iter()
        .enumerate()
        .map(|(i, (lv, r, a))| MuscleFascicle {
            name: format!("f{i}"),
            levels: lv.clone(),
            moment_arms_m: r.clone(),
            pcsa_m2: *a,
            lines_of_action: vec![[0.0, -1.0]; lv.len()],
        })
        .collect();
    m.validate().unwrap();
    m
}

fn arm_matrix(m: &SpineModel) -> Vec<Vec<f64>> {
    let mut r = vec![vec![0.0; m.fascicles.len()]; m.level_count()];
    for (i, f) in m.fascicles.iter().enumerate() {
        for (&l, &a) in f.levels.iter().zip(&f.moment_arms_m) {
            r[l][i] += a;
        }
    }
    r
}

fn objective(m: &SpineModel, f: &[f64]) -> f64 {
    f.iter()
        .zip(&m.fascicles)
        .map(|(f, fa)| (f / fa.pcsa_m2).powi(2))
        .sum()
}

/// 1 N grid over all but `levels` fascicles, the rest from equilibrium, for
/// every choice of dependent set.
fn brute_force(m: &SpineModel, moments: &[f64]) -> f64 {
    let nl = m.level_count();
    let nf = m.fascicles.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << nf) {
        if mask.count_ones() as usize == nl {
            let dep: Vec<usize> = (0..nf).filter(|i| mask & (1 << i) != 0).collect();
            best = best.min(brute_force_with(m, moments, &dep));
        }
    }
    best
}

fn brute_force_with(m: &SpineModel, moments: &[f64], dep: &[usize]) -> f64 {
    let r = arm_matrix(m);
    let nl = m.level_count();
    let nf = m.fascicles.len();
    let grid_set: Vec<usize> = (0..nf).filter(|i| !dep.contains(i)).collect();
    let caps: Vec<f64> = m
        .fascicles
        .iter()
        .map(|f| f.pcsa_m2 * m.sigma_max_pa)
        .collect();
    let a: Vec<Vec<f64>> = (0..nl)
        .map(|l| dep.iter().map(|&k| r[l][k]).collect())
        .collect();
    let det = if nl == 1 {
        a[0][0]
    } else {
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    };
    if det.abs() < 1e-12 {
        return f64::INFINITY;
    }
    let grids: Vec<Vec<f64>> = grid_set
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = (0..=caps[k].floor() as usize).map(|x| x as f64).collect();
            v.push(caps[k]);
            v
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; grid_set.len()];
    loop {
        let mut forces = vec![0.0; nf];
        for (g, &k) in grid_set.iter().enumerate() {
            forces[k] = grids[g][idx[g]];
        }
        let rhs: Vec<f64> = (0..nl)
            .map(|l| moments[l] - grid_set.iter().map(|&k| r[l][k] * forces[k]).sum::<f64>())
            .collect();
        let sol = match nl {
            1 => vec![rhs[0] / a[0][0]],
            _ => vec![
                (rhs[0] * a[1][1] - a[0][1] * rhs[1]) / det,
                (a[0][0] * rhs[1] - a[1][0] * rhs[0]) / det,
            ],
        };
        if sol
            .iter()
            .zip(dep)
            .all(|(v, &k)| *v >= -1e-9 && *v <= caps[k] + 1e-9)
        {
            for (v, &k) in sol.iter().zip(dep) {
                forces[k] = *v;
            }
            best = best.min(objective(m, &forces));
        }
        let mut g = 0;
        loop {
            if g == grid_set.len() {
                return best;
            }
            idx[g] += 1;
            if idx[g] < grids[g].len() {
                break;
            }
            idx[g] = 0;
            g += 1;
        }
    }
}

fn feasible_moments(
    fs: &[(Vec<usize>, Vec<f64>, f64)],
    t: &[f64],
    sigma: f64,
    levels: usize,
) -> Vec<f64> {
    let mut m = vec![0.0; levels];
    for ((lv, r, a), t) in fs.iter().zip(t) {
        for (&l, &r) in lv.iter().zip(r) {
            m[l] += r * a * sigma * t;
        }
    }
    m
}

fn muscle_qp() -> Outcome {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let run = spinekit(
        dir.path(),
        &[
            "msk",
            &fx("msk/single_fascicle_case.json"),
            "--model",
            &fx("msk/single_fascicle_model.json"),
        ],
    );
    ensure!(run.code == 0, "single fascicle: {}", run.stderr);
    let f = run.metrics(0)["solution"]["forces_n"]["m0"]
        .as_f64()
        .unwrap();
    ensure!(f == 2000.0, "single fascicle force {f}");

    // equal arms, PCSA 1:2, 100 N·m at 5 cm: F_i = S·A_i²/ΣA² gives 400 / 1600 N
    let m = SpineModel::single_level(&[(0.05, 1e-4), (0.05, 2e-4)], 1e7).unwrap();
    let sol = solve_muscle_forces(&m, &[100.0]).map_err(|e| e.to_string())?;
    for (got, want) in sol.forces_n.iter().zip([400.0, 1600.0]) {
        ensure!(
            (got - want).abs() / want < 1e-3,
            "two-fascicle force {got} vs {want}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_gap = 0.0f64;
    for case in 0..12 {
        let (m, moments) = if case % 3 == 2 {
            let nf = 3 + case % 2;
            let mut fs: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::new();
            fs.push((
                vec![0, 1],
                vec![rng.gen_range(0.04..0.07), rng.gen_range(0.04..0.07)],
                rng.gen_range(1.0..2.0) * 1e-4,
            ));
            if nf == 4 {
                fs.push((
                    vec![0],
                    vec![rng.gen_range(0.04..0.07)],
                    rng.gen_range(1.0..2.0) * 1e-4,
                ));
            }
            fs.push((
                vec![0, 1],
                vec![-rng.gen_range(0.05..0.09), -rng.gen_range(0.05..0.09)],
                rng.gen_range(1.0..2.0) * 1e-4,
            ));
            fs.push((
                vec![1],
                vec![rng.gen_range(0.04..0.07)],
                rng.gen_range(1.0..2.0) * 1e-4,
            ));
            let t: Vec<f64> = (0..nf).map(|_| rng.gen_range(0.1..0.9)).collect();
            (custom_model(2, &fs, 1e6), feasible_moments(&fs, &t, 1e6, 2))
        } else {
            let nf = 2 + case % 3;
            let fs: Vec<_> = (0..nf)
                .map(|_| {
                    (
                        vec![0],
                        vec![rng.gen_range(0.03..0.08)],
                        rng.gen_range(1.0..2.0) * 1e-4,
                    )
                })
                .collect();
            let t: Vec<f64> = (0..nf).map(|_| rng.gen_range(0.1..0.9)).collect();
            (custom_model(1, &fs, 1e6), feasible_moments(&fs, &t, 1e6, 1))
        };
        let sol =
            solve_muscle_forces(&m, &moments).map_err(|e| format!("grid case {case}: {e}"))?;
        let grid = brute_force(&m, &moments);
        let gap = (sol.objective - grid).abs() / grid;
        ensure!(
            gap < 1e-3,
            "grid case {case}: objective {} vs brute force {grid}",
            sol.objective
        );
        worst_gap = worst_gap.max(gap);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_residual = 0.0f64;
    for case in 0..1000 {
        let levels = rng.gen_range(1..=4);
        let nf = rng.gen_range(levels..=levels + 6).max(2);
        let sigma = rng.gen_range(0.3e6..5e6);
        let mut fs: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..nf)
            .map(|_| {
                let lo = rng.gen_range(0..levels);
                let hi = rng.gen_range(lo..levels);
                let sign = if rng.gen_bool(0.75) { 1.0 } else { -1.0 };
                let lv: Vec<usize> = (lo..=hi).collect();
                let r = lv.iter().map(|_| sign * rng.gen_range(0.01..0.1)).collect();
                (lv, r, rng.gen_range(1e-4..2e-3))
            })
            .collect();
        fs.push(((0..levels).collect(), vec![0.06; levels], 1e-3));
        let m = custom_model(levels, &fs, sigma);
        let t: Vec<f64> = fs.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
        let moments = feasible_moments(&fs, &t, sigma, levels);
        let sol =
            solve_muscle_forces(&m, &moments).map_err(|e| format!("random case {case}: {e}"))?;
        ensure!(
            sol.max_residual_nm() < 1e-6,
            "random case {case}: residuals {:?}",
            sol.residuals_nm
        );
        for (f, fa) in sol.forces_n.iter().zip(&m.fascicles) {
            ensure!(
                *f >= 0.0 && *f <= sigma * fa.pcsa_m2,
                "random case {case}: force {f} out of bounds"
            );
        }
        worst_residual = worst_residual.max(sol.max_residual_nm());
    }
    Ok(format!(
        "2000 N exact, 400/1600 N split, brute-force gap {worst_gap:.1e}, max residual {worst_residual:.1e} N·m over 1000 instances"
    ))
}

// 7

fn convergence() -> Outcome {
    let m = SpineModel::reduced_default();
    let rhythm = Default::default();
    let p = Posture::from_rhythm(&m, 40.0, &rhythm, [0.35, 0.1]).map_err(|e| e.to_string())?;
    let load = ExternalLoad::statics(10.0);
    let sol = iterate_posture_coupling(&m, &p, &load, GRAVITY).map_err(|e| e.to_string())?;
    ensure!(
        sol.iteration_count == 1,
        "coupling off took {} iterations",
        sol.iteration_count
    );
    let direct = solve_muscle_forces(
        &m,
        &external_moments(&m, &p, &load, GRAVITY).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        sol.forces_n == direct.forces_n,
        "coupling-off forces differ from a direct solve"
    );

    // 10 kg at 0.4 m on a 5 cm extensor with compliance c·F0 = 0.1
    let (w, d, r) = (10.0 * GRAVITY, 0.4, 0.05);
    let f0 = w * d / r;
    let c = 0.1 / f0;
    let toy = SpineModel::single_level(&[(r, 5e-3)], 1e6)
        .and_then(|m| m.with_compliance(c))
        .map_err(|e| e.to_string())?;
    let p = Posture::from_flexion(&toy, 0.0, 0.0, [d, 0.3]).map_err(|e| e.to_string())?;
    let sol = iterate_posture_coupling(&toy, &p, &load, GRAVITY).map_err(|e| e.to_string())?;
    let mut iterates = vec![f0];
    loop {
        let prev = *iterates.last().unwrap();
        let next = f0 / (1.0 + c * prev);
        iterates.push(next);
        if (next - prev).abs() / prev < 0.05 {
            break;
        }
    }
    ensure!(sol.converged, "coupled solve did not converge");
    ensure!(
        sol.iteration_count == iterates.len(),
        "{} iterations, hand iteration needs {}",
        sol.iteration_count,
        iterates.len()
    );
    let (last, before) = (iterates[iterates.len() - 1], iterates[iterates.len() - 2]);
    ensure!(
        (sol.forces_n[0] - last).abs() < 1e-9 * last,
        "final force {} vs {last}",
        sol.forces_n[0]
    );
    let change = (last - before).abs() / before;
    ensure!(change < 0.05, "last change {:.2}%", change * 100.0);
    Ok(format!(
        "coupling off: 1 iteration; toy compliance: {} iterations, last change {:.2}%",
        sol.iteration_count,
        change * 100.0
    ))
}

// 8

fn regression() -> Outcome {
    let recipe = FeatureRecipe::polynomial(2);
    let terms = recipe.terms().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cc: Vec<f64> = terms.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
    let cs: Vec<f64> = terms.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
    let poly = |coef: &[f64], x: &LoadInputs| -> f64 {
        let a = x.as_array();
        terms
            .iter()
            .zip(coef)
            .map(|(t, c)| c * t.iter().map(|&i| a[i]).product::<f64>())
            .sum()
    };
    let samples: Vec<LoadSample> = (0..600)
        .map(|_| {
            let x = LoadInputs {
                flexion_deg: rng.gen_range(0.0..60.0),
                lever: rng.gen_range(0.0..1.0),
                asymmetry_deg: rng.gen_range(0.0..45.0),
                load_kg: rng.gen_range(0.0..20.0),
                height_m: rng.gen_range(1.6..1.9),
                weight_kg: rng.gen_range(60.0..90.0),
            };
            LoadSample {
                inputs: x,
                compression_n: poly(&cc, &x),
                shear_n: poly(&cs, &x),
            }
        })
        .collect();
    let exact = fit_regression(&samples, &recipe, "exact").map_err(|e| e.to_string())?;
    let fit = exact.fit.ok_or("no fit statistics")?;
    ensure!(
        (fit.compression.r_squared - 1.0).abs() < 1e-9 && (fit.shear.r_squared - 1.0).abs() < 1e-9,
        "exact polynomial R² {} / {}",
        fit.compression.r_squared,
        fit.shear.r_squared
    );

    let dir = tempdir().map_err(|e| e.to_string())?;
    let run = spinekit(dir.path(), &["loads", "fit"]);
    ensure!(run.code == 0, "loads fit: {}", run.stderr);
    let m = run.metrics(0);
    let held = m["held_out"]["compression"]["r_squared"]
        .as_f64()
        .ok_or("no held-out R²")?;
    ensure!(held >= 0.95, "held-out compression R² {held}");
    let rel = m["held_out"]["compression"]["relative_rms"]
        .as_f64()
        .unwrap();
    ensure!(rel <= 0.10, "held-out relative RMS {rel}");
    Ok(format!(
        "exact recovery R² 1 - {:.1e}; oracle grid held-out R² {held:.4}, relative RMS {:.2}%",
        1.0 - fit.compression.r_squared,
        rel * 100.0
    ))
}

// 9

fn snatch() -> Outcome {
    let dir = tempdir().map_err(|e| e.to_string())?;
    let run = spinekit(dir.path(), &["--config", &fx("msk/snatch.toml"), "msk"]);
    ensure!(run.code == 0, "snatch: {}", run.stderr);
    let m = run.metrics(0);
    let c = m["compression_n"].as_f64().ok_or("no compression")?;
    ensure!(m["solution"]["converged"] == true, "not converged");
    ensure!(
        (5000.0..=15000.0).contains(&c),
        "compression {c} N outside 5-15 kN"
    );
    Ok(format!("L4-L5 compression {:.2} kN", c / 1000.0))
}

// 10

fn determinism() -> Outcome {
    let runs: Vec<Vec<String>> = vec![
        vec![
            "kin".into(),
            fx("pose/bow.jsonl"),
            fx("pose/asymmetric_lift.jsonl"),
        ],
        vec![
            "--config".into(),
            fx("series/logistic.toml"),
            "stability".into(),
        ],
        vec![
            "anthro".into(),
            fx("mesh/icosphere.obj"),
            fx("mesh/prism64.obj"),
            "--height".into(),
            "1.76".into(),
            "--weight".into(),
            "72".into(),
        ],
        vec![
            "anthro".into(),
            "--measured-table".into(),
            fx("tables/waist_errors.csv"),
        ],
        vec![
            "track".into(),
            fx("frames/parabola"),
            "--template".into(),
            fx("frames/parabola_template.pgm"),
        ],
        vec![
            "msk".into(),
            fx("msk/snatch_static.json"),
            fx("msk/snatch_drive.csv"),
            "--preset".into(),
            "weightlifter".into(),
            "--load-kg".into(),
            "75".into(),
        ],
        vec!["loads".into(), "fit".into()],
        vec![
            "loads".into(),
            "eval".into(),
            fx("pose/asymmetric_lift.jsonl"),
            "--height".into(),
            "1.76".into(),
            "--weight".into(),
            "72".into(),
            "--load-kg".into(),
            "10".into(),
            "--oracle-check".into(),
        ],
        vec![
            "compare".into(),
            fx("compare/asymmetric_lifts.csv"),
            "--reference".into(),
            fx("tables/lifting_reference.csv"),
        ],
    ];
    let dir = tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("{i}-{rep}"));
            let run = spinekit(&out, &args);
            ensure!(run.code == 0, "{}: {}", args.join(" "), run.stderr);
            outputs.push(data_files(&out));
        }
        ensure!(
            outputs[0] == outputs[1],
            "{}: outputs differ between runs",
            args.join(" ")
        );
        ensure!(
            Path::new(&dir.path().join(format!("{i}-0/run_metadata.json"))).exists(),
            "no run metadata"
        );
        files += outputs[0].len();
    }
    Ok(format!(
        "{} subcommand runs, {files} data files byte-identical",
        runs.len()
    ))
}
