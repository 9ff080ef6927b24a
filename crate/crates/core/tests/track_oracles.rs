use std::f64::consts::PI;

use proptest::prelude::*;

use spine_core::signal::FilterSpec;
use spine_core::synth::{
    parabolic_patch, patch_sequence, swaying_patch, texture, translating_patch,
};
use spine_core::track::{
    head_acceleration_pipeline, ncc_match, read_pgm_dir, track_sequence, write_pgm, Template,
    TrackOptions,
};

#[test]
fn translation_is_recovered_exactly() {
    let seq = translating_patch(12, 3);
    let t = Template::new(seq.patch.clone()).unwrap();
    for radius in [None, Some(6)] {
        let opts = TrackOptions {
            search_radius: radius,
            ..Default::default()
        };
        let out = track_sequence(&seq.frames, &t, opts, None).unwrap();
        let xs = out.positions.channel(0);
        for (i, w) in xs.windows(2).enumerate() {
            assert_eq!(w[1] - w[0], 3.0, "step {i}");
        }
        for (r, &(x, y)) in out.results.iter().zip(&seq.positions) {
            assert_eq!((r.x, r.y), (x, y));
            assert!((r.score - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn occluded_frame_is_flagged_and_filled() {
    let mut seq = translating_patch(9, 3);
    seq.occlude(4);
    let t = Template::new(seq.patch.clone()).unwrap();
    let out = track_sequence(&seq.frames, &t, TrackOptions::default(), None).unwrap();
    assert!(!out.results[4].valid);
    assert!(out.results[4].score < 0.8);
    assert!(out
        .results
        .iter()
        .enumerate()
        .all(|(i, r)| r.valid == (i != 4)));
    assert_eq!(out.interpolated.iter().filter(|f| **f).count(), 1);
    assert!(out.interpolated[4]);
    assert_eq!(out.positions.sample(4), &[16.0, 10.0]);
}

#[test]
fn static_patch_has_zero_acceleration() {
    let positions = vec![(9, 7); 20];
    let seq = patch_sequence(40, 40, &positions, 5);
    let t = Template::new(seq.patch.clone()).unwrap();
    let acc = head_acceleration_pipeline(
        &seq.frames,
        &t,
        FilterSpec::new(5, 0.1),
        None,
        None,
        TrackOptions::default(),
    )
    .unwrap();
    assert!(acc.acceleration.as_flat().iter().all(|a| a.abs() < 1e-12));
    assert_eq!(acc.acceleration.units(), "px/frame^2 (a.u.)");
}

#[test]
fn parabolic_fall_gives_constant_acceleration() {
    let seq = parabolic_patch(25);
    let t = Template::new(seq.patch.clone()).unwrap();
    let acc = head_acceleration_pipeline(
        &seq.frames,
        &t,
        FilterSpec::new(5, 0.1),
        None,
        None,
        TrackOptions::default(),
    )
    .unwrap();
    let ay = acc.acceleration.channel(1);
    let n = ay.len();
    for a in &ay[n / 5..n - n / 5] {
        assert!((a - 2.0).abs() / 2.0 < 0.02, "{a}");
    }
    // with a rate, acceleration scales by rate² and metres by the scale
    let rate = 50.0;
    let scaled = head_acceleration_pipeline(
        &seq.frames,
        &t,
        FilterSpec::new(5, 5.0),
        Some(0.001),
        Some(rate),
        TrackOptions::default(),
    )
    .unwrap();
    assert_eq!(scaled.acceleration.units(), "m/s^2");
    let want = 2.0 * 0.001 * rate * rate;
    let ay = scaled.acceleration.channel(1);
    for a in &ay[n / 5..n - n / 5] {
        assert!((a - want).abs() / want < 0.02, "{a} vs {want}");
    }
}

#[test]
fn sway_amplitude_matches_analytic_acceleration() {
    let (amp, period) = (200.0, 20.0);
    let seq = swaying_patch(80, amp, period);
    let t = Template::new(seq.patch.clone()).unwrap();
    let acc = head_acceleration_pipeline(
        &seq.frames,
        &t,
        FilterSpec::new(5, 0.1),
        None,
        None,
        TrackOptions::default(),
    )
    .unwrap();
    let ay = acc.acceleration.channel(1);
    // least-squares amplitude at the known frequency over the interior
    let w = 2.0 * PI / period;
    let (lo, hi) = (20, 60);
    let (mut s, mut c, mut ss, mut cc) = (0.0, 0.0, 0.0, 0.0);
    for (k, a) in ay.iter().enumerate().take(hi).skip(lo) {
        let th = w * k as f64;
        s += a * th.sin();
        c += a * th.cos();
        ss += th.sin().powi(2);
        cc += th.cos().powi(2);
    }
    let fitted = ((s / ss).powi(2) + (c / cc).powi(2)).sqrt();
    let analytic = w * w * amp;
    assert!(
        (fitted - analytic).abs() / analytic < 0.05,
        "{fitted} vs {analytic}"
    );
}

#[test]
fn frames_round_trip_through_pgm_files() {
    let seq = translating_patch(6, 3);
    let dir = tempfile::tempdir().unwrap();
    for (i, f) in seq.frames.iter().enumerate() {
        write_pgm(dir.path().join(format!("frame_{i:03}.pgm")), f).unwrap();
    }
    let back = read_pgm_dir(dir.path()).unwrap();
    assert_eq!(back.len(), 6);
    for (a, b) in back.iter().zip(&seq.frames) {
        assert_eq!(a.pixels(), b.pixels());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ncc_ignores_affine_intensity(gain in 0.05..20.0f64, offset in -5.0..5.0f64, seed in 0u64..1000) {
        let frame = texture(30, 24, 0.0, 1.0, seed);
        let t = Template::new(frame.crop(7, 5, 8, 6).unwrap()).unwrap();
        let m0 = ncc_match(&frame, &t).unwrap();
        let m1 = ncc_match(&frame.map_pixels(|p| gain * p + offset), &t).unwrap();
        prop_assert_eq!((m0.x, m0.y), (m1.x, m1.y));
        prop_assert!((m0.score - m1.score).abs() < 1e-6);
        prop_assert!((m0.score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scores_stay_in_range(seed in 0u64..1000, tseed in 0u64..1000) {
        let frame = texture(20, 16, 0.0, 1.0, seed);
        let t = Template::new(texture(5, 4, 0.0, 1.0, tseed)).unwrap();
        let m = ncc_match(&frame, &t).unwrap();
        prop_assert!((-1.0..=1.0).contains(&m.score));
    }

    #[test]
    fn mirrored_sequence_mirrors_x(steps in 2usize..5) {
        let seq = translating_patch(6, steps);
        let t = Template::new(seq.patch.clone()).unwrap();
        let width = seq.frames[0].width();
        let mirrored: Vec<_> = seq.frames.iter().map(|f| f.mirrored()).collect();
        let a = track_sequence(&seq.frames, &t, TrackOptions::default(), None).unwrap();
        let b = track_sequence(&mirrored, &t.mirrored(), TrackOptions::default(), None).unwrap();
        for (ra, rb) in a.results.iter().zip(&b.results) {
            prop_assert_eq!(rb.x, width - t.width() - ra.x);
            prop_assert_eq!(rb.y, ra.y);
        }
    }
}
