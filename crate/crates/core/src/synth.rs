//! Deterministic synthetic inputs with known answers: closed meshes, a
//! parametric body corpus, pose sequences and grayscale frame sequences.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anthro::{self, BodyDensity, TriMesh, DEFAULT_TRUNK_FRACTIONS};
use crate::error::Result;
use crate::kinematics::{LandmarkName, PoseFrame, PoseSequence, UpAxis, Vec3};
use crate::track::GrayFrame;

/// Axis-aligned cube with outward-facing triangles, Z up.
pub fn cube(side: f64, origin: Vec3) -> TriMesh {
    box_mesh(origin, origin + Vec3::new(side, side, side))
}

/// Axis-aligned box between two corners, Z up.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> TriMesh {
    let v = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = (0..8).map(v).collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(vertices, triangles, UpAxis::Z).expect("box is valid")
}

/// Prism over a regular `n`-gon inscribed in an ellipse with semi-axes
/// `rx`, `ry`, centred at `(cx, cy)` and spanning `z0..z1`. Caps are fanned
/// from a centre vertex.
pub fn elliptic_prism(n: usize, rx: f64, ry: f64, center: (f64, f64), z0: f64, z1: f64) -> TriMesh {
    assert!(n >= 3 && z1 > z0);
    let ring = |z: f64| {
        (0..n).map(move |k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            Vec3::new(center.0 + rx * th.cos(), center.1 + ry * th.sin(), z)
        })
    };
    let mut vertices: Vec<Vec3> = ring(z0).chain(ring(z1)).collect();
    let bottom_c = vertices.len();
    vertices.push(Vec3::new(center.0, center.1, z0));
    let top_c = vertices.len();
    vertices.push(Vec3::new(center.0, center.1, z1));
    let mut triangles = Vec::with_capacity(4 * n);
    for k in 0..n {
        let k1 = (k + 1) % n;
        triangles.push([k, k1, n + k1]);
        triangles.push([k, n + k1, n + k]);
        triangles.push([bottom_c, k1, k]);
        triangles.push([top_c, n + k, n + k1]);
    }
    TriMesh::new(vertices, triangles, UpAxis::Z).expect("prism is valid")
}

/// Circular prism of radius `r` about the z axis.
pub fn prism(n: usize, r: f64, z0: f64, z1: f64) -> TriMesh {
    elliptic_prism(n, r, r, (0.0, 0.0), z0, z1)
}

/// Geodesic sphere: an icosahedron with `subdivisions` rounds of midpoint
/// splitting, vertices projected onto radius `r`.
pub fn icosphere(r: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * r).collect();
    TriMesh::new(vertices, faces, UpAxis::Z).expect("icosphere is valid")
}

/// Upright elliptic torso with one arm cylinder beside it, both crossing
/// the plane `z = 1`. The arm loop is the smaller section.
pub fn torso_with_arm() -> TriMesh {
    let torso = elliptic_prism(64, 0.16, 0.11, (0.0, 0.0), 0.5, 1.5);
    let arm = elliptic_prism(32, 0.04, 0.04, (0.0, 0.25), 0.7, 1.4);
    torso.merged(&arm).expect("disjoint parts")
}

/// Parameters of a blocky standing body: two leg cylinders, an elliptic
/// trunk, horizontal box arms at shoulder level and a cylindrical head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBody {
    pub height_m: f64,
    /// Trunk half-width (left-right).
    pub trunk_half_width_m: f64,
    /// Trunk depth as a fraction of its width.
    pub depth_ratio: f64,
    pub leg_radius_m: f64,
    pub arm_thickness_m: f64,
}

/// Ground truth for one synthetic body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBodyRecord {
    pub body: SyntheticBody,
    pub weight_kg: f64,
    pub waist_circumference_m: f64,
    pub trunk_mass_kg: f64,
}

const TRUNK_SIDES: usize = 64;

impl SyntheticBody {
    pub fn mesh(&self) -> TriMesh {
        let h = self.height_m;
        let a = self.trunk_half_width_m;
        let b = a * self.depth_ratio;
        let rl = self.leg_radius_m;
        let leg_y = rl + 0.005;
        let mut mesh = elliptic_prism(24, rl, rl, (0.0, -leg_y), 0.0, 0.47 * h);
        let parts = [
            elliptic_prism(24, rl, rl, (0.0, leg_y), 0.0, 0.47 * h),
            elliptic_prism(TRUNK_SIDES, b, a, (0.0, 0.0), 0.47 * h, 0.85 * h),
            box_mesh(
                Vec3::new(-0.04, a + 0.01, 0.825 * h),
                Vec3::new(0.04, a + 0.01 + 0.33 * h, 0.825 * h + self.arm_thickness_m),
            ),
            box_mesh(
                Vec3::new(-0.04, -(a + 0.01 + 0.33 * h), 0.825 * h),
                Vec3::new(0.04, -(a + 0.01), 0.825 * h + self.arm_thickness_m),
            ),
            elliptic_prism(24, 0.075, 0.065, (0.0, 0.0), 0.87 * h, h),
        ];
        for p in &parts {
            mesh = mesh.merged(p).expect("disjoint parts");
        }
        mesh
    }

    /// Weight, waist and trunk-slab mass of the body at the given density.
    pub fn record(&self, density: BodyDensity) -> Result<SyntheticBodyRecord> {
        let mesh = self.mesh();
        let (lo, hi) = anthro::default_trunk_bounds(&mesh, DEFAULT_TRUNK_FRACTIONS);
        Ok(SyntheticBodyRecord {
            body: *self,
            weight_kg: anthro::segment_mass(anthro::mesh_volume(&mesh)?, density)?,
            waist_circumference_m: anthro::plane_section_perimeter(&mesh, 0.6 * self.height_m)?,
            trunk_mass_kg: anthro::segment_mass(anthro::slab_volume(&mesh, lo, hi)?, density)?,
        })
    }
}

/// Seeded corpus of synthetic bodies spanning adult proportions.
pub fn body_corpus(seed: u64, count: usize) -> Vec<SyntheticBody> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| SyntheticBody {
            height_m: rng.gen_range(1.55..1.95),
            trunk_half_width_m: rng.gen_range(0.13..0.19),
            depth_ratio: rng.gen_range(0.6..0.8),
            leg_radius_m: rng.gen_range(0.06..0.09),
            arm_thickness_m: rng.gen_range(0.07..0.11),
        })
        .collect()
}

pub const BODY_CORPUS_SEED: u64 = 2024;
pub const BODY_CORPUS_SIZE: usize = 48;

/// Random 8-bit texture in `[lo, hi]`, quantized so PGM round trips are exact.
pub fn texture(width: usize, height: usize, lo: f64, hi: f64, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..width * height)
        .map(|_| (rng.gen_range(lo..=hi) * 255.0).round() / 255.0)
        .collect();
    GrayFrame::new(width, height, px, 0).expect("valid texture")
}

/// Frames showing `patch` pasted over a fixed low-contrast background with
/// its top-left corner at each of `positions`.
#[derive(Debug, Clone)]
pub struct PatchSequence {
    pub frames: Vec<GrayFrame>,
    pub patch: GrayFrame,
    pub positions: Vec<(usize, usize)>,
}

pub fn patch_sequence(
    width: usize,
    height: usize,
    positions: &[(usize, usize)],
    seed: u64,
) -> PatchSequence {
    let background = texture(width, height, 0.35, 0.65, seed);
    let patch = texture(12, 12, 0.0, 1.0, seed.wrapping_add(1));
    let frames = positions
        .iter()
        .enumerate()
        .map(|(i, &(px, py))| {
            let mut pixels = background.pixels().to_vec();
            for r in 0..patch.height() {
                for c in 0..patch.width() {
                    pixels[(py + r) * width + px + c] = patch.at(c, r);
                }
            }
            GrayFrame::new(width, height, pixels, i).expect("patch fits")
        })
        .collect();
    PatchSequence {
        frames,
        patch,
        positions: positions.to_vec(),
    }
}

impl PatchSequence {
    /// Replace the patch in frame `i` with a flat gray block.
    pub fn occlude(&mut self, i: usize) {
        let (px, py) = self.positions[i];
        let f = &self.frames[i];
        let mut pixels = f.pixels().to_vec();
        for r in 0..self.patch.height() {
            for c in 0..self.patch.width() {
                pixels[(py + r) * f.width() + px + c] = 0.5;
            }
        }
        self.frames[i] = GrayFrame::new(f.width(), f.height(), pixels, i).expect("same size");
    }
}

/// Patch translating `step` px per frame along x.
pub fn translating_patch(frames: usize, step: usize) -> PatchSequence {
    let positions: Vec<_> = (0..frames).map(|i| (4 + step * i, 10)).collect();
    patch_sequence(4 + step * frames + 16, 36, &positions, 11)
}

/// Patch falling as `y = t²` px, i.e. constant 2 px/frame² acceleration.
pub fn parabolic_patch(frames: usize) -> PatchSequence {
    let positions: Vec<_> = (0..frames).map(|t| (8, 4 + t * t)).collect();
    let h = 4 + (frames - 1).pow(2) + 16;
    patch_sequence(32, h, &positions, 23)
}

/// Patch swaying vertically with `amplitude` px and `period` frames,
/// positions rounded to whole pixels.
pub fn swaying_patch(frames: usize, amplitude: f64, period: f64) -> PatchSequence {
    let positions: Vec<_> = (0..frames)
        .map(|t| {
            let y = amplitude * (1.0 + (2.0 * PI * t as f64 / period).sin());
            (8, 4 + y.round() as usize)
        })
        .collect();
    let h = 4 + (2.0 * amplitude).ceil() as usize + 18;
    patch_sequence(32, h, &positions, 37)
}

/// Body dimensions of the synthetic lifter, metres, Z up, +x forward, +y left.
pub const POSE_HIP_HEIGHT_M: f64 = 1.0;
pub const POSE_TRUNK_LENGTH_M: f64 = 0.5;
pub const POSE_SHOULDER_WIDTH_M: f64 = 0.4;
pub const POSE_HIP_WIDTH_M: f64 = 0.3;
const POSE_HAND_HEIGHT_M: f64 = 0.45;
const POSE_GRIP_WIDTH_M: f64 = 0.3;

/// One lifting pose. The trunk pitches forward by `flexion_deg` about the
/// mid-hip; the mid-hand sits `reach_m` horizontally from the mid-hip,
/// rotated `asymmetry_deg` toward the left side.
pub fn lifting_pose(time_s: f64, flexion_deg: f64, reach_m: f64, asymmetry_deg: f64) -> PoseFrame {
    use LandmarkName::*;
    let f = flexion_deg.to_radians();
    let a = asymmetry_deg.to_radians();
    let hip = Vec3::new(0.0, 0.0, POSE_HIP_HEIGHT_M);
    let axis = Vec3::new(f.sin(), 0.0, f.cos());
    let shoulder = hip + axis * POSE_TRUNK_LENGTH_M;
    let hand = Vec3::new(reach_m * a.cos(), reach_m * a.sin(), POSE_HAND_HEIGHT_M);
    let lat = Vec3::new(0.0, 1.0, 0.0);
    let grip = Vec3::new(-a.sin(), a.cos(), 0.0) * (POSE_GRIP_WIDTH_M / 2.0);
    let ls = shoulder + lat * (POSE_SHOULDER_WIDTH_M / 2.0);
    let rs = shoulder - lat * (POSE_SHOULDER_WIDTH_M / 2.0);
    let lw = hand + grip;
    let rw = hand - grip;
    let arr = |v: Vec3| [v.x, v.y, v.z];
    PoseFrame::new(time_s)
        .with(LHip, arr(hip + lat * (POSE_HIP_WIDTH_M / 2.0)))
        .with(RHip, arr(hip - lat * (POSE_HIP_WIDTH_M / 2.0)))
        .with(LShoulder, arr(ls))
        .with(RShoulder, arr(rs))
        .with(LWrist, arr(lw))
        .with(RWrist, arr(rw))
        .with(LElbow, arr((ls + lw) * 0.5))
        .with(RElbow, arr((rs + rw) * 0.5))
        .with(Head, arr(shoulder + axis * 0.25))
}

/// Sequence of poses from per-frame `(flexion, reach, asymmetry)`.
pub fn pose_sequence(
    rate_hz: f64,
    params: impl IntoIterator<Item = (f64, f64, f64)>,
) -> Result<PoseSequence> {
    let frames = params
        .into_iter()
        .enumerate()
        .map(|(i, (f, r, a))| lifting_pose(i as f64 / rate_hz, f, r, a))
        .collect();
    PoseSequence::new(frames, UpAxis::Z, Some(1.0))
}

/// Repeated bowing: flexion `peak/2·(1 − cos 2πt/T)` with hands hanging
/// below the shoulders.
pub fn bowing_sequence(
    frames: usize,
    rate_hz: f64,
    peak_deg: f64,
    period_s: f64,
) -> Result<PoseSequence> {
    pose_sequence(
        rate_hz,
        (0..frames).map(|i| {
            let t = i as f64 / rate_hz;
            let f = 0.5 * peak_deg * (1.0 - (2.0 * PI * t / period_s).cos());
            (f, POSE_TRUNK_LENGTH_M * f.to_radians().sin() + 0.1, 0.0)
        }),
    )
}

/// Single asymmetric lift: bend, reach and twist peak together at the
/// middle frame (`frames` should be odd for an exact peak frame).
pub fn asymmetric_lift_sequence(frames: usize, rate_hz: f64) -> Result<PoseSequence> {
    let last = (frames - 1) as f64;
    pose_sequence(
        rate_hz,
        (0..frames).map(|i| {
            let s = (PI * i as f64 / last).sin().powi(2);
            (10.0 + 40.0 * s, 0.2 + 0.3 * s, 5.0 + 25.0 * s)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn generated_meshes_are_closed_and_outward() {
        for m in [
            cube(1.0, Vec3::zeros()),
            prism(64, 0.15, 0.0, 1.0),
            icosphere(1.0, 2),
            torso_with_arm(),
            body_corpus(1, 1)[0].mesh(),
        ] {
            assert!(m.is_closed());
            assert!(anthro::mesh_volume(&m).unwrap() > 0.0);
        }
    }

    #[test]
    fn prism_volume_matches_polygon_area() {
        let n = 64;
        let m = prism(n, 0.15, 0.0, 2.0);
        let area = 0.5 * n as f64 * 0.15f64.powi(2) * (2.0 * PI / n as f64).sin();
        assert_relative_eq!(
            anthro::mesh_volume(&m).unwrap(),
            2.0 * area,
            epsilon = 1e-12
        );
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(body_corpus(5, 3), body_corpus(5, 3));
        assert_ne!(body_corpus(5, 3), body_corpus(6, 3));
    }
}
