use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

use spine_core::kinematics::{
    asymmetry_angle, load_pose_jsonl, metric_series, parse_pose_jsonl, point_kinematics,
    sacral_rotation, shoulder_to_hand_distance, to_pose_jsonl, trunk_flexion, upper_arm_angle,
    LandmarkMapping, LandmarkName, LumbopelvicRhythm, Metric, PoseFrame, PoseSequence, UpAxis,
};
use spine_core::signal::FilterSpec;
use spine_core::synth::{bowing_sequence, lifting_pose, pose_sequence};

fn arb_pose() -> impl Strategy<Value = PoseFrame> {
    (0.0..80.0f64, 0.1..0.7f64, 0.0..60.0f64).prop_map(|(f, r, a)| lifting_pose(0.0, f, r, a))
}

#[test]
fn lever_matches_raw_coordinate_recomputation() {
    for (f, r, a) in [(0.0, 0.3, 0.0), (35.0, 0.55, 20.0), (70.0, 0.2, 45.0)] {
        let frame = lifting_pose(0.0, f, r, a);
        let p = |n: LandmarkName| frame.landmarks[&n].position;
        let ls = p(LandmarkName::LShoulder);
        let rs = p(LandmarkName::RShoulder);
        let lw = p(LandmarkName::LWrist);
        let rw = p(LandmarkName::RWrist);
        let dx = (lw.x + rw.x) / 2.0 - (ls.x + rs.x) / 2.0;
        let dy = (lw.y + rw.y) / 2.0 - (ls.y + rs.y) / 2.0;
        let width = ((ls.x - rs.x).powi(2) + (ls.y - rs.y).powi(2) + (ls.z - rs.z).powi(2)).sqrt();
        let want = (dx * dx + dy * dy).sqrt() / width;
        assert!((shoulder_to_hand_distance(&frame, UpAxis::Z).unwrap() - want).abs() < 1e-12);
        assert!((trunk_flexion(&frame, UpAxis::Z).unwrap() - f).abs() < 1e-9);
        assert!((asymmetry_angle(&frame, UpAxis::Z).unwrap() - a).abs() < 1e-9);
    }
}

#[test]
fn bowing_flexion_is_the_generator_sinusoid() {
    let (rate, peak, period) = (30.0, 60.0, 2.0);
    let seq = bowing_sequence(120, rate, peak, period).unwrap();
    let s = metric_series(&seq, Metric::TrunkFlexion, None).unwrap();
    assert_eq!(s.len(), 120);
    for (i, v) in s.as_flat().iter().enumerate() {
        let t = i as f64 / rate;
        let want = 0.5 * peak * (1.0 - (2.0 * PI * t / period).cos());
        assert!((v - want).abs() < 1e-9);
    }
}

#[test]
fn jsonl_round_trip_and_mapping() {
    let seq = bowing_sequence(10, 30.0, 40.0, 1.0).unwrap();
    let text = to_pose_jsonl(&seq);
    let back = parse_pose_jsonl(
        &text,
        Path::new("mem"),
        &LandmarkMapping::default(),
        UpAxis::Z,
        Some(1.0),
    )
    .unwrap();
    assert_eq!(back, seq);

    // COCO names through the mapping, confidence optional
    let line = r#"{"t": 0.0, "landmarks": {"left_shoulder": {"p": [0, 0.2, 1.5]}, "right_shoulder": {"p": [0, -0.2, 1.5], "c": 0.9}, "left_hip": {"p": [0, 0.15, 1.0]}, "right_hip": {"p": [0, -0.15, 1.0]}}}"#;
    let text = format!("{line}\n\n{}\n", line.replace("\"t\": 0.0", "\"t\": 0.1"));
    let seq = parse_pose_jsonl(
        &text,
        Path::new("mem"),
        &LandmarkMapping::coco17(),
        UpAxis::Z,
        None,
    )
    .unwrap();
    assert_eq!(seq.len(), 2);
    assert!((seq.nominal_rate_hz - 10.0).abs() < 1e-9);
    assert_eq!(trunk_flexion(&seq.frames[0], UpAxis::Z).unwrap(), 0.0);
    assert_eq!(
        seq.frames[0].landmarks[&LandmarkName::RShoulder].confidence,
        0.9
    );
}

#[test]
fn jsonl_errors_carry_line_numbers() {
    let bad = "{\"t\": 0.0, \"landmarks\": {}}\n{\"t\": 0.1, \"landmarks\": {\"LHip\": {\"p\": [1, 2]}}}\n";
    let err = parse_pose_jsonl(
        bad,
        Path::new("x.jsonl"),
        &LandmarkMapping::default(),
        UpAxis::Z,
        None,
    )
    .unwrap_err();
    assert_eq!(err.code(), "E_PARSE");
    assert!(err.to_string().starts_with("x.jsonl:2:"));
    let dup = "{\"t\": 0.0, \"landmarks\": {\"left_hip\": {\"p\": [0,0,0]}, \"LHip\": {\"p\": [0,0,0]}}}\n";
    assert!(parse_pose_jsonl(
        dup,
        Path::new("d"),
        &LandmarkMapping::coco17(),
        UpAxis::Z,
        None
    )
    .is_err());
    let missing = load_pose_jsonl(
        "/nonexistent/pose.jsonl",
        &LandmarkMapping::default(),
        UpAxis::Z,
        None,
    )
    .unwrap_err();
    assert_eq!(missing.code(), "E_IO");
}

#[test]
fn missing_landmark_names_frame() {
    let mut frames: Vec<PoseFrame> = (0..6)
        .map(|i| lifting_pose(i as f64 / 10.0, 20.0, 0.3, 0.0))
        .collect();
    frames[3].landmarks.remove(&LandmarkName::LHip);
    let seq = PoseSequence::new(frames, UpAxis::Z, None).unwrap();
    let err = metric_series(&seq, Metric::TrunkFlexion, None).unwrap_err();
    assert_eq!(err.code(), "E_MISSING_LANDMARK");
    assert!(err.to_string().contains("LHip"));
    assert!(err.to_string().contains('3'));
}

#[test]
fn falling_landmark_accelerates_at_g() {
    let (rate, g) = (100.0, 9.81);
    let frames = (0..200)
        .map(|i| {
            let t = i as f64 / rate;
            PoseFrame::new(t).with(LandmarkName::Head, [0.0, 0.0, 0.5 * g * t * t])
        })
        .collect();
    let seq = PoseSequence::new(frames, UpAxis::Z, Some(1.0)).unwrap();
    let k = point_kinematics(&seq, &LandmarkName::Head, FilterSpec::new(5, 10.0)).unwrap();
    let az = k.acceleration.channel(2);
    for a in &az[40..160] {
        assert!((a - g).abs() / g < 0.01);
    }
    assert_eq!(k.acceleration.units(), "m/s^2");
}

#[test]
fn sinusoidal_landmark_acceleration_amplitude() {
    let (rate, f, amp) = (100.0, 0.5, 0.2);
    let frames = (0..800)
        .map(|i| {
            let t = i as f64 / rate;
            PoseFrame::new(t).with(
                LandmarkName::Head,
                [amp * (2.0 * PI * f * t).sin(), 0.0, 1.0],
            )
        })
        .collect();
    let seq = PoseSequence::new(frames, UpAxis::Z, Some(1.0)).unwrap();
    let k = point_kinematics(&seq, &LandmarkName::Head, FilterSpec::new(5, 6.0)).unwrap();
    let ax = k.acceleration.channel(0);
    let peak = ax[200..600].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let want = (2.0 * PI * f).powi(2) * amp;
    assert!((peak - want).abs() / want < 0.02, "{peak} vs {want}");
}

#[test]
fn hip_displacement_starts_at_zero() {
    let seq = pose_sequence(10.0, (0..8).map(|i| (10.0 * i as f64, 0.3, 0.0))).unwrap();
    let s = metric_series(&seq, Metric::HipDisplacement, None).unwrap();
    assert_eq!(s.as_flat()[0], 0.0);
    assert!(s.as_flat().iter().all(|v| v.abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn angles_ignore_scale_and_translation(frame in arb_pose(), s in 0.01..100.0f64,
                                           tx in -10.0..10.0f64, ty in -10.0..10.0f64, tz in -10.0..10.0f64) {
        let t = Vector3::new(tx, ty, tz);
        let moved = frame.map_positions(|p| p * s + t);
        let up = UpAxis::Z;
        prop_assert!((trunk_flexion(&frame, up).unwrap() - trunk_flexion(&moved, up).unwrap()).abs() < 1e-9);
        prop_assert!((asymmetry_angle(&frame, up).unwrap() - asymmetry_angle(&moved, up).unwrap()).abs() < 1e-9);
        prop_assert!((upper_arm_angle(&frame, up).unwrap() - upper_arm_angle(&moved, up).unwrap()).abs() < 1e-9);
        prop_assert!((shoulder_to_hand_distance(&frame, up).unwrap() - shoulder_to_hand_distance(&moved, up).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn flexion_ignores_rotation_about_up(frame in arb_pose(), yaw in -PI..PI) {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let turned = frame.map_positions(|p| r * p);
        let up = UpAxis::Z;
        prop_assert!((trunk_flexion(&frame, up).unwrap() - trunk_flexion(&turned, up).unwrap()).abs() < 1e-9);
        prop_assert!((upper_arm_angle(&frame, up).unwrap() - upper_arm_angle(&turned, up).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sacral_rotation_is_monotone_for_constant_share(share in 0.0..1.0f64, a in 0.0..120.0f64, b in 0.0..120.0f64) {
        let rhythm = LumbopelvicRhythm::new(vec![(0.0, share), (60.0, share)]).unwrap();
        prop_assert_eq!(sacral_rotation(0.0, &rhythm).unwrap(), 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sacral_rotation(lo, &rhythm).unwrap() <= sacral_rotation(hi, &rhythm).unwrap());
    }

    #[test]
    fn metric_series_length_is_frame_count(n in 2usize..40) {
        let seq = pose_sequence(25.0, (0..n).map(|i| (i as f64, 0.3, 5.0))).unwrap();
        for m in [Metric::TrunkFlexion, Metric::ShoulderToHand, Metric::Asymmetry, Metric::UpperArm, Metric::HipDisplacement] {
            prop_assert_eq!(metric_series(&seq, m, None).unwrap().len(), n);
        }
    }
}
