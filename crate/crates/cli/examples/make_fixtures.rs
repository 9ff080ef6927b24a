//! Regenerate the deterministic fixture corpus under `crates/cli/fixtures`.
//!
//! `cargo run -p spine-cli --example make_fixtures`

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spine_core::anthro::to_obj;
use spine_core::kinematics::{
    asymmetry_angle, shoulder_to_hand_distance, to_pose_jsonl, trunk_flexion, LandmarkName, UpAxis,
};
use spine_core::msk::SpineModel;
use spine_core::synth::{
    asymmetric_lift_sequence, bowing_sequence, cube, icosphere, parabolic_patch, patch_sequence,
    pose_sequence, prism, translating_patch, PatchSequence,
};
use spine_core::track::write_pgm;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn write(rel: &str, text: impl AsRef<[u8]>) {
    let p = root().join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(&p, text).unwrap();
}

/// Full-precision float for fixture files.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn frames_dir(rel: &str, seq: &PatchSequence) {
    let dir = root().join(rel);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    for (i, f) in seq.frames.iter().enumerate() {
        write_pgm(dir.join(format!("frame_{i:03}.pgm")), f).unwrap();
    }
    write_pgm(root().join(format!("{rel}_template.pgm")), &seq.patch).unwrap();
}

fn logistic_orbit(x0: f64, n: usize) -> Vec<f64> {
    let mut x = x0;
    for _ in 0..100 {
        x = 4.0 * x * (1.0 - x);
    }
    (0..n)
        .map(|_| {
            let v = x;
            x = 4.0 * x * (1.0 - x);
            v
        })
        .collect()
}

fn series_csv(name: &str, rate: f64, values: &[f64]) -> String {
    let mut s = format!("t,{name}\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{},{}", num(i as f64 / rate), num(*v)).unwrap();
    }
    s
}

fn smoothstep(t: f64, t0: f64, t1: f64) -> f64 {
    let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * u).cos())
}

fn main() {
    // keypoints
    let upright = pose_sequence(30.0, (0..30).map(|_| (0.0, 0.15, 0.0))).unwrap();
    write("pose/upright.jsonl", to_pose_jsonl(&upright));
    write(
        "pose/bow.jsonl",
        to_pose_jsonl(&bowing_sequence(120, 30.0, 60.0, 2.0).unwrap()),
    );
    let lift = asymmetric_lift_sequence(41, 20.0).unwrap();
    write("pose/asymmetric_lift.jsonl", to_pose_jsonl(&lift));
    let mut broken = lift.clone();
    broken.frames[3].landmarks.remove(&LandmarkName::LHip);
    write("pose/missing_landmark.jsonl", to_pose_jsonl(&broken));

    // scalar series
    write(
        "series/logistic.csv",
        series_csv("x", 1.0, &logistic_orbit(0.3141, 2000)),
    );
    write(
        "series/logistic.toml",
        "inputs = [\"logistic.csv\"]\n\n[stability]\ndelay_samples = 1\ndimension = 2\n\
         short_window_s = [0.0, 4.0]\nlong_window_s = [5.0, 12.0]\nmean_period_s = 2.0\nmax_horizon_s = 12.0\n",
    );
    let rate = 60.0;
    let sway: Vec<f64> = (0..(rate * 210.0) as usize)
        .map(|i| 30.0 + 25.0 * (2.0 * PI * i as f64 / rate / 6.0).sin())
        .collect();
    write(
        "series/periodic.csv",
        series_csv("flexion_deg", rate, &sway),
    );

    // meshes
    write("mesh/cube.obj", to_obj(&cube(0.4, [0.0, 0.0, 0.0].into())));
    write("mesh/prism64.obj", to_obj(&prism(64, 0.15, 0.0, 1.0)));
    write("mesh/icosphere.obj", to_obj(&icosphere(0.15, 4)));

    // image sequences
    frames_dir("frames/translation", &translating_patch(30, 3));
    frames_dir("frames/static", &patch_sequence(40, 40, &[(9, 7); 20], 5));
    let mut occluded = translating_patch(24, 3);
    occluded.occlude(10);
    frames_dir("frames/occlusion", &occluded);
    frames_dir("frames/parabola", &parabolic_patch(25));

    // muscle model cases
    let single = SpineModel::single_level(&[(0.05, 0.004)], 1.0e6).unwrap();
    write(
        "msk/single_fascicle_model.json",
        serde_json::to_string_pretty(&single).unwrap() + "\n",
    );
    write(
        "msk/single_fascicle_case.json",
        "{\"moments_nm\": [100.0]}\n",
    );
    write(
        "msk/snatch_static.json",
        "{\"flexion_deg\": 60.0, \"arm_angle_deg\": 180.0, \"load_kg\": 75.0}\n",
    );
    // pull from deep flexion with hanging arms while the hips rise, then hold
    let drive_rate = 50.0;
    let mut drive = String::from("t,flexion_deg,arm_angle_deg,hip_displacement_m\n");
    for i in 0..=70 {
        let t = i as f64 / drive_rate;
        let flex = 60.0 - 50.0 * smoothstep(t, 0.0, 1.2);
        let hip = 0.3 * smoothstep(t, 0.0, 1.2);
        writeln!(
            drive,
            "{},{},{},{}",
            num(t),
            num(flex),
            num(180.0),
            num(hip)
        )
        .unwrap();
    }
    write("msk/snatch_drive.csv", drive);
    write(
        "msk/snatch.toml",
        "inputs = [\"snatch_static.json\"]\n\n[msk]\npreset = \"weightlifter\"\nload_kg = 75.0\n",
    );

    // reference error tables
    write(
        "tables/waist_errors.csv",
        "subject,measured,estimated\n1,85,86\n2,89,102\n3,90,100\n4,84,96\n",
    );
    write(
        "tables/flexion_reference.csv",
        "metric,correlation,abs_error_mean,abs_error_sd\nmetrabs,0.96,7.2,4.1\nicon,0.92,9.8,7.3\n",
    );
    write(
        "tables/lifting_reference.csv",
        "metric,correlation,abs_error_mean,abs_error_sd\nflexion_deg,0.95,8.8,5.7\nshoulder_to_hand,0.16,0.19,0.11\nasymmetry_deg,0.50,7.8,6.5\n",
    );

    // measured series from five asymmetric lifts and a degraded estimate
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut csv = String::from(
        "t,flexion_deg_measured,flexion_deg_estimated,shoulder_to_hand_measured,shoulder_to_hand_estimated,asymmetry_deg_measured,asymmetry_deg_estimated\n",
    );
    let noise = |sd: f64| Normal::new(0.0, sd).unwrap();
    let (nf, ns, na) = (noise(6.0), noise(0.2), noise(9.0));
    let mut k = 0;
    for lift in 0..5 {
        let gain = 0.8 + 0.1 * lift as f64;
        let seq = pose_sequence(
            20.0,
            (0..41).map(|i| {
                let s = (PI * i as f64 / 40.0).sin().powi(2);
                (
                    gain * (10.0 + 40.0 * s),
                    0.2 + 0.3 * s,
                    gain * (5.0 + 25.0 * s),
                )
            }),
        )
        .unwrap();
        for f in &seq.frames {
            let flex = trunk_flexion(f, UpAxis::Z).unwrap();
            let lever = shoulder_to_hand_distance(f, UpAxis::Z).unwrap();
            let asym = asymmetry_angle(f, UpAxis::Z).unwrap();
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                num(k as f64 / 20.0),
                num(flex),
                num(flex + 4.0 + nf.sample(&mut rng)),
                num(lever),
                num(lever + ns.sample(&mut rng)),
                num(asym),
                num(asym + na.sample(&mut rng)),
            )
            .unwrap();
            k += 1;
        }
    }
    write("compare/asymmetric_lifts.csv", csv);
    let mut exact = String::from("t,flexion_deg_measured,flexion_deg_estimated\n");
    for i in 0..50 {
        let m = 20.0 + 15.0 * (i as f64 * 0.3).sin();
        writeln!(
            exact,
            "{},{},{}",
            num(i as f64 / 10.0),
            num(m),
            num(m + 5.0)
        )
        .unwrap();
    }
    write("compare/offset.csv", exact);
    println!("fixtures written to {}", root().display());
}
