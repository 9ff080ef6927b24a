use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spine_core::kinematics::{Sex, SubjectAnthropometry};
use spine_core::loads::{
    default_training_axes, eval_loads, fit_from_oracle, fit_regression, input_grid,
    lift_assessment, midpoint_axes, oracle_loads, oracle_samples, FeatureRecipe, LoadInputs,
    LoadSample, OracleSettings, RegressionModel,
};
use spine_core::msk::SpineModel;
use spine_core::synth::{asymmetric_lift_sequence, pose_sequence};
use spine_core::Error;

fn random_inputs(rng: &mut ChaCha8Rng) -> LoadInputs {
    LoadInputs {
        flexion_deg: rng.gen_range(0.0..60.0),
        lever: rng.gen_range(0.0..1.0),
        asymmetry_deg: rng.gen_range(0.0..45.0),
        load_kg: rng.gen_range(0.0..20.0),
        height_m: rng.gen_range(1.6..1.9),
        weight_kg: rng.gen_range(60.0..90.0),
    }
}

/// Evaluate a raw-coefficient polynomial term by term.
fn poly(terms: &[Vec<usize>], coef: &[f64], x: &LoadInputs) -> f64 {
    let a = x.as_array();
    terms
        .iter()
        .zip(coef)
        .map(|(t, c)| c * t.iter().map(|&i| a[i]).product::<f64>())
        .sum()
}

fn subject_176_72() -> SubjectAnthropometry {
    SubjectAnthropometry {
        sex: Sex::Male,
        age_years: 30.0,
        height_m: 1.76,
        weight_kg: 72.0,
        waist_circumference_m: None,
    }
}

#[test]
fn exact_polynomial_is_recovered() {
    let recipe = FeatureRecipe::polynomial(2);
    let terms = recipe.terms().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cc: Vec<f64> = terms.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
    let cs: Vec<f64> = terms.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
    let samples: Vec<LoadSample> = (0..600)
        .map(|_| {
            let x = random_inputs(&mut rng);
            LoadSample {
                inputs: x,
                compression_n: poly(&terms, &cc, &x),
                shear_n: poly(&terms, &cs, &x),
            }
        })
        .collect();
    let reg = fit_regression(&samples, &recipe, "exact").unwrap();
    let fit = reg.fit.unwrap();
    assert!((fit.compression.r_squared - 1.0).abs() < 1e-9);
    assert!((fit.shear.r_squared - 1.0).abs() < 1e-9);
    for (got, want) in reg
        .compression
        .iter()
        .zip(&cc)
        .chain(reg.shear.iter().zip(&cs))
    {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn conflicting_duplicates_average_out() {
    let recipe = FeatureRecipe::with_inputs(1, &["load_kg"]).unwrap();
    let base = LoadInputs {
        flexion_deg: 20.0,
        lever: 0.5,
        asymmetry_deg: 0.0,
        load_kg: 0.0,
        height_m: 1.75,
        weight_kg: 75.0,
    };
    let mut samples = Vec::new();
    for k in 0..10 {
        for sign in [-1.0, 1.0] {
            let inputs = LoadInputs {
                load_kg: k as f64,
                ..base
            };
            samples.push(LoadSample {
                inputs,
                compression_n: 100.0 + 10.0 * k as f64 + sign,
                shear_n: 5.0 * k as f64 - sign,
            });
        }
    }
    let reg = fit_regression(&samples, &recipe, "dup").unwrap();
    assert!((reg.compression[0] - 100.0).abs() < 1e-9);
    assert!((reg.compression[1] - 10.0).abs() < 1e-9);
    assert!((reg.shear[1] - 5.0).abs() < 1e-9);
    let fit = reg.fit.unwrap();
    assert!((fit.compression.rms_n - 1.0).abs() < 1e-9);
    assert!((fit.shear.rms_n - 1.0).abs() < 1e-9);
}

#[test]
fn rank_deficient_designs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // height tied to weight makes their columns collinear
    let samples: Vec<LoadSample> = (0..400)
        .map(|_| {
            let mut x = random_inputs(&mut rng);
            x.height_m = x.weight_kg / 40.0;
            LoadSample {
                inputs: x,
                compression_n: x.load_kg,
                shear_n: 0.0,
            }
        })
        .collect();
    let err = fit_regression(&samples, &FeatureRecipe::polynomial(1), "collinear").unwrap_err();
    assert_eq!(err.code(), "E_DEGENERATE_DESIGN");
    let constant: Vec<LoadSample> = samples
        .iter()
        .map(|s| LoadSample {
            inputs: LoadInputs {
                asymmetry_deg: 0.0,
                ..s.inputs
            },
            ..*s
        })
        .collect();
    let err = fit_regression(
        &constant,
        &FeatureRecipe::with_inputs(1, &["asymmetry_deg", "load_kg"]).unwrap(),
        "constant",
    )
    .unwrap_err();
    assert!(matches!(err, Error::DegenerateDesign(_)));
}

#[test]
fn oracle_grid_fit_generalizes_to_held_out_points() {
    let settings = OracleSettings::new(SpineModel::reduced_default());
    let reg = fit_from_oracle(
        &settings,
        &default_training_axes(),
        &FeatureRecipe::polynomial(2),
    )
    .unwrap();
    let (held_out, skipped) = oracle_samples(
        &settings,
        &input_grid(&midpoint_axes(&default_training_axes())),
    );
    assert_eq!(skipped, 0);
    let pred: Vec<f64> = held_out
        .iter()
        .map(|s| {
            let e = eval_loads(&reg, &s.inputs).unwrap();
            assert!(!e.extrapolated);
            e.compression_n
        })
        .collect();
    let truth: Vec<f64> = held_out.iter().map(|s| s.compression_n).collect();
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    assert!(r2 >= 0.95, "held-out R² {r2}");
    // relative RMS gate inside the box
    let rms = (ss_res / truth.len() as f64).sqrt();
    let rms_truth = (truth.iter().map(|t| t * t).sum::<f64>() / truth.len() as f64).sqrt();
    assert!(rms / rms_truth <= 0.10, "relative RMS {}", rms / rms_truth);
    // the shipped file is this fit
    let shipped = RegressionModel::shipped();
    for (a, b) in shipped.compression.iter().zip(&reg.compression) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
    }
}

#[test]
fn training_rms_matches_report() {
    let settings = OracleSettings::new(SpineModel::reduced_default());
    let axes = default_training_axes();
    let reg = fit_from_oracle(&settings, &axes, &FeatureRecipe::polynomial(2)).unwrap();
    let (train, _) = oracle_samples(&settings, &input_grid(&axes));
    let sq: f64 = train
        .iter()
        .map(|s| (eval_loads(&reg, &s.inputs).unwrap().compression_n - s.compression_n).powi(2))
        .sum();
    let rms = (sq / train.len() as f64).sqrt();
    assert!(rms <= reg.fit.as_ref().unwrap().compression.rms_n * (1.0 + 1e-9));
}

#[test]
fn asymmetric_lift_tracks_oracle() {
    let reg = RegressionModel::shipped();
    let subject = subject_176_72();
    let seq = asymmetric_lift_sequence(41, 20.0).unwrap();
    let a = lift_assessment(&seq, &subject, 10.0, &reg, None).unwrap();
    let settings = OracleSettings::new(SpineModel::reduced_default());
    let mut sq = 0.0;
    let mut norm = 0.0;
    let mut oracle_peak = (0, f64::NEG_INFINITY);
    for (i, m) in a.series.samples().enumerate() {
        let x = LoadInputs {
            flexion_deg: m[2],
            lever: m[3],
            asymmetry_deg: m[4],
            load_kg: 10.0,
            height_m: 1.76,
            weight_kg: 72.0,
        };
        let truth = oracle_loads(&settings, &x).unwrap();
        sq += (m[0] - truth.compression_n).powi(2);
        norm += truth.compression_n.powi(2);
        if truth.compression_n > oracle_peak.1 {
            oracle_peak = (i, truth.compression_n);
        }
    }
    assert!(
        (sq / norm).sqrt() <= 0.10,
        "relative RMS {}",
        (sq / norm).sqrt()
    );
    // peak flexion is the middle frame, and both estimates peak there
    assert_eq!(a.summary.peak_frame, 20);
    assert_eq!(oracle_peak.0, 20);
    assert_eq!(a.summary.percent_extrapolated, 0.0);
}

#[test]
fn upright_static_lift_is_constant() {
    let reg = RegressionModel::shipped();
    let seq = pose_sequence(30.0, (0..15).map(|_| (0.0, 0.15, 0.0))).unwrap();
    let a = lift_assessment(&seq, &subject_176_72(), 0.0, &reg, None).unwrap();
    let c = a.series.channel(0);
    assert!(c.iter().all(|v| (v - c[0]).abs() < 1e-9));
    let direct = eval_loads(
        &reg,
        &LoadInputs {
            flexion_deg: 0.0,
            lever: a.series.sample(0)[3],
            asymmetry_deg: 0.0,
            load_kg: 0.0,
            height_m: 1.76,
            weight_kg: 72.0,
        },
    )
    .unwrap();
    assert!((c[0] - direct.compression_n).abs() < 1e-6);
    assert!((a.summary.mean_compression_n - c[0]).abs() < 1e-6);
}

#[test]
fn far_load_is_heavier_than_close_load() {
    let reg = RegressionModel::shipped();
    let settings = OracleSettings::new(SpineModel::reduced_default());
    for flex in [10.0, 30.0, 50.0] {
        let close = pose_sequence(10.0, (0..5).map(|_| (flex, 0.25, 0.0))).unwrap();
        let far = pose_sequence(10.0, (0..5).map(|_| (flex, 0.55, 0.0))).unwrap();
        let s = subject_176_72();
        let c = lift_assessment(&close, &s, 10.0, &reg, None).unwrap();
        let f = lift_assessment(&far, &s, 10.0, &reg, None).unwrap();
        assert!(f.summary.peak_compression_n > c.summary.peak_compression_n);
        // the oracle agrees on the ordering
        let load = |a: &spine_core::loads::LiftAssessment| {
            let m = a.series.sample(0);
            oracle_loads(
                &settings,
                &LoadInputs {
                    flexion_deg: m[2],
                    lever: m[3],
                    asymmetry_deg: m[4],
                    load_kg: 10.0,
                    height_m: 1.76,
                    weight_kg: 72.0,
                },
            )
            .unwrap()
            .compression_n
        };
        assert!(load(&f) > load(&c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_coefficients_doubles_outputs(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = RegressionModel::shipped();
        let x = random_inputs(&mut rng);
        let e1 = eval_loads(&reg, &x).unwrap();
        reg.compression.iter_mut().for_each(|c| *c *= 2.0);
        reg.shear.iter_mut().for_each(|c| *c *= 2.0);
        let e2 = eval_loads(&reg, &x).unwrap();
        prop_assert_eq!(e2.compression_n, 2.0 * e1.compression_n);
        prop_assert_eq!(e2.shear_n, 2.0 * e1.shear_n);
    }

    #[test]
    fn extrapolation_flag_tracks_domain(load in -10.0..40.0f64, flex in -20.0..90.0f64) {
        let reg = RegressionModel::shipped();
        let x = LoadInputs { flexion_deg: flex, lever: 0.5, asymmetry_deg: 10.0, load_kg: load, height_m: 1.7, weight_kg: 70.0 };
        let inside = (0.0..=20.0).contains(&load) && (0.0..=60.0).contains(&flex);
        prop_assert_eq!(eval_loads(&reg, &x).unwrap().extrapolated, !inside);
    }
}
