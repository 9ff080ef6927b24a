//! Lumped sagittal-plane musculoskeletal model of the lumbar spine.
//!
//! Joints (levels) are indexed from the most superior (T12/L1) to the most
//! inferior (L5/S1). Segment `s` sits directly above joint `s`: segment 0 is
//! the upper body, segments 1.. are the lumbar vertebrae. The inferior-most
//! joint is the origin; `x` points anterior and `y` up.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{sacral_rotation, LumbopelvicRhythm, Sex, SubjectAnthropometry};
use crate::signal::{central_diff, TimeSeries};

pub const GRAVITY: f64 = 9.81;
pub const SIGMA_MAX_DEFAULT_PA: f64 = 1.0e6;
pub const SIGMA_MAX_WEIGHTLIFTER_PA: f64 = 5.0e6;
/// Coupling stops once no fascicle force changes by this fraction.
pub const COUPLING_TOLERANCE: f64 = 0.05;
pub const COUPLING_MAX_ITERATIONS: usize = 50;
/// Largest equilibrium residual accepted as converged, N·m.
pub const RESIDUAL_TOLERANCE_NM: f64 = 1e-6;

const SHIPPED_MODEL: &str = include_str!("../data/reduced_spine_model.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub mass_kg: f64,
    /// Distance from the joint below to the joint above (unused for the top segment).
    pub length_m: f64,
    /// Centre of mass along the segment axis, measured from the joint below.
    pub com_along_m: f64,
    /// Centre of mass anterior to the segment axis.
    pub com_anterior_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleFascicle {
    pub name: String,
    /// Indices of the levels this fascicle crosses.
    pub levels: Vec<usize>,
    /// Sagittal moment arm per crossed level; extensors positive.
    pub moment_arms_m: Vec<f64>,
    pub pcsa_m2: f64,
    /// Unit pull on the superior body per crossed level, `[anterior, axial]`
    /// in the disc frame.
    pub lines_of_action: Vec<[f64; 2]>,
}

/// Age-dependent PCSA multipliers per sex, `(age_years, multiplier)` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsaMultipliers {
    pub male: Vec<(f64, f64)>,
    pub female: Vec<(f64, f64)>,
}

impl PcsaMultipliers {
    pub fn factor(&self, sex: Sex, age_years: f64) -> f64 {
        let knots = match sex {
            Sex::Male => &self.male,
            Sex::Female => &self.female,
        };
        interp_clamped(knots, age_years)
    }
}

impl Default for PcsaMultipliers {
    fn default() -> Self {
        Self {
            male: vec![(20.0, 1.0), (40.0, 1.0), (60.0, 0.9), (80.0, 0.8)],
            female: vec![(20.0, 0.8), (40.0, 0.8), (60.0, 0.72), (80.0, 0.64)],
        }
    }
}

fn interp_clamped(knots: &[(f64, f64)], x: f64) -> f64 {
    match knots {
        [] => 1.0,
        [only] => only.1,
        _ => {
            if x <= knots[0].0 {
                return knots[0].1;
            }
            for w in knots.windows(2) {
                if x <= w[1].0 {
                    let f = (x - w[0].0) / (w[1].0 - w[0].0);
                    return w[0].1 + f * (w[1].1 - w[0].1);
                }
            }
            knots[knots.len() - 1].1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineModel {
    pub levels: Vec<String>,
    pub segments: Vec<Segment>,
    pub fascicles: Vec<MuscleFascicle>,
    pub sigma_max_pa: f64,
    pub reference: SubjectAnthropometry,
    /// Share of lumbar rotation taken by each level; sums to 1.
    pub rotation_fractions: Vec<f64>,
    /// Shoulder position along the upper-body axis above the top joint.
    pub shoulder_along_m: f64,
    /// Shoulder-to-hand distance with the arm straight.
    pub arm_length_m: f64,
    /// Lever-arm softening per newton of total muscle force.
    #[serde(default)]
    pub compliance_per_n: f64,
    #[serde(default)]
    pub pcsa_multipliers: PcsaMultipliers,
    #[serde(default)]
    pub provenance: String,
}

impl SpineModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("spine model: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Built-in 12-fascicle T12–S1 model for a 75 kg, 1.75 m reference male.
    pub fn reduced_default() -> Self {
        Self::from_json(SHIPPED_MODEL).expect("shipped model is valid")
    }

    /// One-joint model with a massless upper body, for hand-checkable cases.
    /// Each fascicle is `(moment_arm_m, pcsa_m2)` pulling along the disc normal.
    pub fn single_level(fascicles: &[(f64, f64)], sigma_max_pa: f64) -> Result<Self> {
        let model = SpineModel {
            levels: vec!["L5/S1".into()],
            segments: vec![Segment {
                name: "upper_body".into(),
                mass_kg: 0.0,
                length_m: 0.0,
                com_along_m: 0.3,
                com_anterior_m: 0.0,
            }],
            fascicles: fascicles
                .iter()
                .enumerate()
                .map(|(i, &(r, a))| MuscleFascicle {
                    name: format!("m{i}"),
                    levels: vec![0],
                    moment_arms_m: vec![r],
                    pcsa_m2: a,
                    lines_of_action: vec![[0.0, -1.0]],
                })
                .collect(),
            sigma_max_pa,
            reference: SubjectAnthropometry {
                sex: Sex::Male,
                age_years: 30.0,
                height_m: 1.75,
                weight_kg: 75.0,
                waist_circumference_m: None,
            },
            rotation_fractions: vec![1.0],
            shoulder_along_m: 0.45,
            arm_length_m: 0.6,
            compliance_per_n: 0.0,
            pcsa_multipliers: PcsaMultipliers::default(),
            provenance: "single-level test model".into(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_sigma_max(mut self, sigma_max_pa: f64) -> Result<Self> {
        self.sigma_max_pa = sigma_max_pa;
        self.validate()?;
        Ok(self)
    }

    pub fn with_compliance(mut self, compliance_per_n: f64) -> Result<Self> {
        self.compliance_per_n = compliance_per_n;
        self.validate()?;
        Ok(self)
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == name)
    }

    /// L4/L5 when present, else the most inferior level.
    pub fn reaction_level(&self) -> usize {
        self.level_index("L4/L5").unwrap_or(self.levels.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if n == 0 {
            return bad("model needs at least one level".into());
        }
        if self.segments.len() != n {
            return bad(format!(
                "{} levels need {n} segments, got {}",
                n,
                self.segments.len()
            ));
        }
        if self.rotation_fractions.len() != n
            || (self.rotation_fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("rotation fractions need one entry per level summing to 1".into());
        }
        if !(self.sigma_max_pa.is_finite() && self.sigma_max_pa > 0.0) {
            return bad(format!(
                "sigma_max must be positive, got {}",
                self.sigma_max_pa
            ));
        }
        if !(self.compliance_per_n.is_finite() && self.compliance_per_n >= 0.0) {
            return bad("compliance must be nonnegative".into());
        }
        for s in &self.segments {
            let finite = [s.mass_kg, s.length_m, s.com_along_m, s.com_anterior_m]
                .iter()
                .all(|v| v.is_finite());
            if !finite || s.mass_kg < 0.0 || s.length_m < 0.0 {
                return bad(format!("segment {} has invalid mass or geometry", s.name));
            }
        }
        for f in &self.fascicles {
            let k = f.levels.len();
            if k == 0 || f.moment_arms_m.len() != k || f.lines_of_action.len() != k {
                return bad(format!(
                    "fascicle {} needs levels, moment arms and lines of equal length",
                    f.name
                ));
            }
            if !(f.pcsa_m2.is_finite() && f.pcsa_m2 > 0.0) {
                return bad(format!("fascicle {} needs positive PCSA", f.name));
            }
            if f.levels.iter().any(|&l| l >= n) {
                return bad(format!("fascicle {} references a missing level", f.name));
            }
            if f.moment_arms_m.iter().any(|r| !r.is_finite() || *r == 0.0) {
                return bad(format!(
                    "fascicle {} has a zero or non-finite moment arm",
                    f.name
                ));
            }
            if f.lines_of_action
                .iter()
                .any(|l| ((l[0] * l[0] + l[1] * l[1]).sqrt() - 1.0).abs() > 1e-9)
            {
                return bad(format!("fascicle {} has a non-unit line of action", f.name));
            }
        }
        for (l, name) in self.levels.iter().enumerate() {
            let extensor = self.fascicles.iter().any(|f| {
                f.levels
                    .iter()
                    .zip(&f.moment_arms_m)
                    .any(|(&fl, &r)| fl == l && r > 0.0)
            });
            if !extensor {
                return bad(format!("level {name} has no extensor fascicle"));
            }
        }
        self.reference.validate()
    }

    /// `K[ℓ][i] = r_iℓ·σ_max·PCSA_i`: moment per unit normalized activation.
    fn capacity_matrix(&self) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.levels.len(), self.fascicles.len());
        for (i, f) in self.fascicles.iter().enumerate() {
            for (&l, &r) in f.levels.iter().zip(&f.moment_arms_m) {
                k[(l, i)] += r * self.sigma_max_pa * f.pcsa_m2;
            }
        }
        k
    }

    /// Supportable moment range per level with every fascicle free.
    pub fn level_capacity(&self) -> Vec<(f64, f64)> {
        let k = self.capacity_matrix();
        (0..k.nrows())
            .map(|l| {
                let row = k.row(l);
                (
                    row.iter().filter(|v| **v < 0.0).sum(),
                    row.iter().filter(|v| **v > 0.0).sum(),
                )
            })
            .collect()
    }
}

/// Scale a reference model to a subject: masses by weight, lengths and
/// moment arms by height, PCSA by weight^(2/3) and the sex/age multiplier.
pub fn scale_model(reference: &SpineModel, subject: &SubjectAnthropometry) -> Result<SpineModel> {
    subject.validate()?;
    let r = &reference.reference;
    let wr = subject.weight_kg / r.weight_kg;
    let hr = subject.height_m / r.height_m;
    let pcsa_ratio = wr.powf(2.0 / 3.0)
        * reference
            .pcsa_multipliers
            .factor(subject.sex, subject.age_years)
        / reference.pcsa_multipliers.factor(r.sex, r.age_years);
    let mut m = reference.clone();
    for s in &mut m.segments {
        s.mass_kg *= wr;
        s.length_m *= hr;
        s.com_along_m *= hr;
        s.com_anterior_m *= hr;
    }
    for f in &mut m.fascicles {
        f.pcsa_m2 *= pcsa_ratio;
        for r in &mut f.moment_arms_m {
            *r *= hr;
        }
    }
    m.shoulder_along_m *= hr;
    m.arm_length_m *= hr;
    m.reference = *subject;
    m.validate()?;
    Ok(m)
}

/// Sagittal posture driving the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posture {
    pub trunk_flexion_deg: f64,
    pub sacral_rotation_deg: f64,
    pub level_rotations_deg: Vec<f64>,
    /// Hand-load position relative to the most inferior joint: horizontal
    /// lever (anterior positive) and vertical offset.
    pub load_position_m: [f64; 2],
}

impl Posture {
    /// Distribute lumbar flexion (trunk minus sacral) over the levels.
    pub fn from_flexion(
        model: &SpineModel,
        trunk_flexion_deg: f64,
        sacral_rotation_deg: f64,
        load_position_m: [f64; 2],
    ) -> Result<Self> {
        if !(trunk_flexion_deg.is_finite() && sacral_rotation_deg.is_finite()) {
            return Err(Error::InvalidInput("posture angles must be finite".into()));
        }
        let lumbar = trunk_flexion_deg - sacral_rotation_deg;
        Ok(Self {
            trunk_flexion_deg,
            sacral_rotation_deg,
            level_rotations_deg: model
                .rotation_fractions
                .iter()
                .map(|f| f * lumbar)
                .collect(),
            load_position_m,
        })
    }

    /// Sacral share from a lumbopelvic rhythm.
    pub fn from_rhythm(
        model: &SpineModel,
        trunk_flexion_deg: f64,
        rhythm: &LumbopelvicRhythm,
        load_position_m: [f64; 2],
    ) -> Result<Self> {
        let sacral = sacral_rotation(trunk_flexion_deg, rhythm)?;
        Self::from_flexion(model, trunk_flexion_deg, sacral, load_position_m)
    }

    /// Load held in the hands of a straight arm at `arm_angle_deg` from
    /// vertical-up (hanging arm is 180°, swung forward).
    pub fn with_arm(
        model: &SpineModel,
        trunk_flexion_deg: f64,
        rhythm: &LumbopelvicRhythm,
        arm_angle_deg: f64,
    ) -> Result<Self> {
        let mut p = Self::from_rhythm(model, trunk_flexion_deg, rhythm, [0.0, 0.0])?;
        let g = Geometry::new(model, &p)?;
        let th = arm_angle_deg.to_radians();
        let hand = [
            g.shoulder[0] + model.arm_length_m * th.sin(),
            g.shoulder[1] + model.arm_length_m * th.cos(),
        ];
        p.load_position_m = hand;
        Ok(p)
    }

    fn validate(&self, model: &SpineModel) -> Result<()> {
        if self.level_rotations_deg.len() != model.level_count() {
            return Err(Error::InvalidInput(format!(
                "posture has {} level rotations for {} levels",
                self.level_rotations_deg.len(),
                model.level_count()
            )));
        }
        let lumbar = self.trunk_flexion_deg - self.sacral_rotation_deg;
        let sum: f64 = self.level_rotations_deg.iter().sum();
        if (sum - lumbar).abs() > 1e-9 * lumbar.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "level rotations sum to {sum}°, lumbar rotation is {lumbar}°"
            )));
        }
        if !self.load_position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("load position must be finite".into()));
        }
        Ok(())
    }
}

/// World positions of joints and centres of mass for one posture.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub joints: Vec<[f64; 2]>,
    /// Segment orientation from vertical, radians, anterior positive.
    pub orientations: Vec<f64>,
    pub sacral_orientation: f64,
    pub coms: Vec<[f64; 2]>,
    pub shoulder: [f64; 2],
}

fn axis(phi: f64) -> [f64; 2] {
    [phi.sin(), phi.cos()]
}

fn anterior(phi: f64) -> [f64; 2] {
    [phi.cos(), -phi.sin()]
}

impl Geometry {
    pub fn new(model: &SpineModel, posture: &Posture) -> Result<Self> {
        posture.validate(model)?;
        let n = model.level_count();
        let sacral = posture.sacral_rotation_deg.to_radians();
        let mut orientations = vec![0.0; n];
        let mut acc = sacral;
        for s in (0..n).rev() {
            acc += posture.level_rotations_deg[s].to_radians();
            orientations[s] = acc;
        }
        let mut joints = vec![[0.0, 0.0]; n];
        for s in (1..n).rev() {
            let a = axis(orientations[s]);
            let len = model.segments[s].length_m;
            joints[s - 1] = [joints[s][0] + len * a[0], joints[s][1] + len * a[1]];
        }
        let place = |s: usize, along: f64, ant: f64| {
            let (a, p) = (axis(orientations[s]), anterior(orientations[s]));
            [
                joints[s][0] + along * a[0] + ant * p[0],
                joints[s][1] + along * a[1] + ant * p[1],
            ]
        };
        let coms = (0..n)
            .map(|s| {
                place(
                    s,
                    model.segments[s].com_along_m,
                    model.segments[s].com_anterior_m,
                )
            })
            .collect();
        let shoulder = place(0, model.shoulder_along_m, 0.0);
        Ok(Self {
            joints,
            orientations,
            sacral_orientation: sacral,
            coms,
            shoulder,
        })
    }

    /// Disc frame at a level: mean orientation of the two adjacent segments.
    fn disc_frame(&self, level: usize) -> ([f64; 2], [f64; 2]) {
        let below = self
            .orientations
            .get(level + 1)
            .copied()
            .unwrap_or(self.sacral_orientation);
        let phi = 0.5 * (self.orientations[level] + below);
        (axis(phi), anterior(phi))
    }
}

/// Hand load plus optional accelerations (zero in statics).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalLoad {
    pub mass_kg: f64,
    /// Load acceleration `[anterior, up]`, m/s².
    #[serde(default)]
    pub acceleration: [f64; 2],
    /// Per-segment accelerations; empty means all zero.
    #[serde(default)]
    pub segment_accelerations: Vec<[f64; 2]>,
}

impl ExternalLoad {
    pub fn statics(mass_kg: f64) -> Self {
        Self {
            mass_kg,
            ..Default::default()
        }
    }

    fn validate(&self, model: &SpineModel) -> Result<()> {
        if !(self.mass_kg.is_finite() && self.mass_kg >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "load mass must be nonnegative, got {}",
                self.mass_kg
            )));
        }
        if !self.segment_accelerations.is_empty()
            && self.segment_accelerations.len() != model.level_count()
        {
            return Err(Error::InvalidInput(
                "one acceleration per segment required".into(),
            ));
        }
        Ok(())
    }

    fn segment_acc(&self, s: usize) -> [f64; 2] {
        self.segment_accelerations
            .get(s)
            .copied()
            .unwrap_or([0.0, 0.0])
    }
}

/// Bodies above a level: `(mass, position, acceleration)`.
fn superior_bodies<'a>(
    model: &'a SpineModel,
    geo: &'a Geometry,
    posture: &'a Posture,
    load: &'a ExternalLoad,
    level: usize,
) -> impl Iterator<Item = (f64, [f64; 2], [f64; 2])> + 'a {
    (0..=level)
        .map(move |s| (model.segments[s].mass_kg, geo.coms[s], load.segment_acc(s)))
        .chain(std::iter::once((
            load.mass_kg,
            posture.load_position_m,
            load.acceleration,
        )))
}

fn moments_with_lever_scale(
    model: &SpineModel,
    posture: &Posture,
    load: &ExternalLoad,
    gravity: f64,
    lever_scale: f64,
) -> Result<Vec<f64>> {
    load.validate(model)?;
    let geo = Geometry::new(model, posture)?;
    Ok((0..model.level_count())
        .map(|l| {
            let joint = geo.joints[l];
            superior_bodies(model, &geo, posture, load, l)
                .map(|(m, p, a)| {
                    let (dx, dy) = (p[0] - joint[0], p[1] - joint[1]);
                    m * (gravity + a[1]) * dx * lever_scale - m * a[0] * dy
                })
                .sum()
        })
        .collect())
}

/// Net flexion moment at every level from gravity and d'Alembert forces of
/// the superior segments and the hand load.
pub fn external_moments(
    model: &SpineModel,
    posture: &Posture,
    load: &ExternalLoad,
    gravity: f64,
) -> Result<Vec<f64>> {
    moments_with_lever_scale(model, posture, load, gravity, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleSolution {
    pub forces_n: Vec<f64>,
    /// Outer coupling iterations (1 for a direct solve).
    pub iteration_count: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    /// `Σ r·F − M` per level, N·m.
    pub residuals_nm: Vec<f64>,
    /// Largest violation of the optimality conditions.
    pub kkt_residual: f64,
    pub objective: f64,
}

impl MuscleSolution {
    pub fn max_residual_nm(&self) -> f64 {
        self.residuals_nm.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

fn primal(nu: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    k.tr_mul(nu).map(|u| u.clamp(0.0, 1.0))
}

struct QpOutcome {
    t: DVector<f64>,
    residual: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// min ½|t|² s.t. K t = M, 0 ≤ t ≤ 1, by semismooth Newton on the dual.
fn solve_box_qp(k: &DMatrix<f64>, m: &DVector<f64>) -> QpOutcome {
    let levels = k.nrows();
    let tol = 1e-9f64.max(1e-13 * m.amax());
    let scale = (k * k.transpose()).diagonal().amax().max(1e-300);
    // unconstrained minimum-norm start
    let mut nu = (k * k.transpose())
        .pseudo_inverse(1e-14 * scale)
        .map(|p| p * m)
        .unwrap_or_else(|_| DVector::zeros(levels));
    let mut iterations = 0;
    loop {
        let t = primal(&nu, k);
        let residual = m - k * &t;
        if residual.amax() < tol || iterations >= 500 {
            return QpOutcome {
                converged: residual.amax() < tol,
                t,
                residual,
                iterations,
            };
        }
        iterations += 1;
        let u = k.tr_mul(&nu);
        let mut j = DMatrix::zeros(levels, levels);
        for (i, &ui) in u.iter().enumerate() {
            if ui > 0.0 && ui < 1.0 {
                let col = k.column(i);
                j += col * col.transpose();
            }
        }
        // Levenberg term keeps the step an ascent direction when the free set is rank deficient
        let mu = 1e-10 * scale;
        let reg = &j + DMatrix::identity(levels, levels) * mu;
        let dir = match reg.cholesky() {
            Some(ch) => ch.solve(&residual),
            None => residual.clone(),
        };
        match exact_step(&nu, &dir, k, m) {
            Some(alpha) if alpha > 0.0 && alpha.is_finite() => nu += dir * alpha,
            _ => {
                return QpOutcome {
                    converged: false,
                    t,
                    residual,
                    iterations,
                }
            }
        }
    }
}

/// Exact maximizer of the dual along `dir`. The directional derivative is a
/// nonincreasing piecewise-linear function, so its root is found by walking the
/// breakpoints. `None` means the dual grows without bound, i.e. the moments
/// cannot be balanced.
fn exact_step(
    nu: &DVector<f64>,
    dir: &DVector<f64>,
    k: &DMatrix<f64>,
    m: &DVector<f64>,
) -> Option<f64> {
    let u = k.tr_mul(nu);
    let w = k.tr_mul(dir);
    let md = m.dot(dir);
    let slope = |alpha: f64| -> f64 {
        md - u
            .iter()
            .zip(w.iter())
            .map(|(ui, wi)| wi * (ui + alpha * wi).clamp(0.0, 1.0))
            .sum::<f64>()
    };
    let mut breaks: Vec<f64> = u
        .iter()
        .zip(w.iter())
        .filter(|(_, wi)| wi.abs() > 0.0)
        .flat_map(|(ui, wi)| [-ui / wi, (1.0 - ui) / wi])
        .filter(|b| *b > 0.0)
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut prev = (0.0, slope(0.0));
    if prev.1 <= 0.0 {
        return None;
    }
    for b in breaks {
        let g = slope(b);
        if g <= 0.0 {
            let (a0, g0) = prev;
            return Some(a0 + (b - a0) * g0 / (g0 - g));
        }
        prev = (b, g);
    }
    // beyond the last breakpoint the slope is constant; positive means unbounded
    let far = prev.0 + 1.0;
    let g = slope(far);
    if g < prev.1 {
        let (a0, g0) = prev;
        Some(a0 + (far - a0) * g0 / (g0 - g))
    } else {
        None
    }
}

fn capacity_error(model: &SpineModel, moments: &[f64], level: usize) -> Error {
    let caps = model.level_capacity();
    Error::CapacityExceeded {
        level,
        level_name: model.levels[level].clone(),
        moment: moments[level],
        min_supportable: caps[level].0,
        max_supportable: caps[level].1,
        per_level_max: caps.iter().map(|c| c.1).collect(),
    }
}

/// Minimize Σ(F/PCSA)² subject to moment equilibrium at every level and
/// 0 ≤ F ≤ σ_max·PCSA.
pub fn solve_muscle_forces(model: &SpineModel, moments: &[f64]) -> Result<MuscleSolution> {
    let n = model.level_count();
    if moments.len() != n || moments.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need {n} finite level moments"
        )));
    }
    // worst relative overshoot of the single-level capacity
    let caps = model.level_capacity();
    let over = (0..n)
        .filter_map(|l| {
            let (lo, hi) = caps[l];
            let m = moments[l];
            let excess = if m > hi {
                (m - hi) / hi.abs().max(1e-12)
            } else if m < lo {
                (lo - m) / lo.abs().max(1e-12)
            } else {
                return None;
            };
            Some((l, excess))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((l, _)) = over {
        return Err(capacity_error(model, moments, l));
    }
    let k = model.capacity_matrix();
    let mv = DVector::from_column_slice(moments);
    let qp = solve_box_qp(&k, &mv);
    if !qp.converged {
        let worst = qp.residual.iamax();
        return Err(capacity_error(model, moments, worst));
    }
    let forces_n: Vec<f64> =
        qp.t.iter()
            .zip(&model.fascicles)
            .map(|(t, f)| t * model.sigma_max_pa * f.pcsa_m2)
            .collect();
    // residuals recomputed in newtons so they match what a caller would check
    let residuals_nm: Vec<f64> = (0..n)
        .map(|l| {
            model
                .fascicles
                .iter()
                .zip(&forces_n)
                .map(|(f, force)| {
                    f.levels
                        .iter()
                        .zip(&f.moment_arms_m)
                        .filter(|(fl, _)| **fl == l)
                        .map(|(_, r)| r * force)
                        .sum::<f64>()
                })
                .sum::<f64>()
                - moments[l]
        })
        .collect();
    let max_res = residuals_nm.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let objective = forces_n
        .iter()
        .zip(&model.fascicles)
        .map(|(f, m)| (f / m.pcsa_m2).powi(2))
        .sum();
    Ok(MuscleSolution {
        forces_n,
        iteration_count: 1,
        newton_iterations: qp.iterations,
        converged: max_res < RESIDUAL_TOLERANCE_NM,
        kkt_residual: qp.residual.amax(),
        residuals_nm,
        objective,
    })
}

/// Alternate moments and muscle solves; total muscle force shortens the
/// gravity levers by `1/(1 + c·ΣF)` with `c` the model compliance.
pub fn iterate_posture_coupling(
    model: &SpineModel,
    posture: &Posture,
    load: &ExternalLoad,
    gravity: f64,
) -> Result<MuscleSolution> {
    let c = model.compliance_per_n;
    let moments = external_moments(model, posture, load, gravity)?;
    let mut sol = solve_muscle_forces(model, &moments)?;
    if c == 0.0 {
        return Ok(sol);
    }
    for iteration in 2..=COUPLING_MAX_ITERATIONS {
        let total: f64 = sol.forces_n.iter().sum();
        let moments =
            moments_with_lever_scale(model, posture, load, gravity, 1.0 / (1.0 + c * total))?;
        let mut next = solve_muscle_forces(model, &moments)?;
        let change = next
            .forces_n
            .iter()
            .zip(&sol.forces_n)
            .map(|(a, b)| (a - b).abs() / b.max(1.0))
            .fold(0.0, f64::max);
        next.iteration_count = iteration;
        let done = change < COUPLING_TOLERANCE;
        next.converged = next.converged && done;
        sol = next;
        if done {
            return Ok(sol);
        }
    }
    sol.converged = false;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointReaction {
    pub compression_n: f64,
    /// Anterior shear on the superior body.
    pub shear_n: f64,
}

/// Compression and shear in the disc frame at `level`: muscle pulls of the
/// fascicles crossing it plus gravity and inertia of everything above.
pub fn joint_reaction(
    model: &SpineModel,
    posture: &Posture,
    solution: &MuscleSolution,
    load: &ExternalLoad,
    level: usize,
    gravity: f64,
) -> Result<JointReaction> {
    if level >= model.level_count() {
        return Err(Error::InvalidInput(format!("no level {level}")));
    }
    if solution.forces_n.len() != model.fascicles.len() {
        return Err(Error::InvalidInput(
            "solution does not match the model".into(),
        ));
    }
    load.validate(model)?;
    let geo = Geometry::new(model, posture)?;
    let (ax, ap) = geo.disc_frame(level);
    let mut total = [0.0, 0.0];
    for (m, _, a) in superior_bodies(model, &geo, posture, load, level) {
        total[0] -= m * a[0];
        total[1] -= m * (gravity + a[1]);
    }
    for (f, force) in model.fascicles.iter().zip(&solution.forces_n) {
        for (&fl, line) in f.levels.iter().zip(&f.lines_of_action) {
            if fl == level {
                total[0] += force * (line[0] * ap[0] + line[1] * ax[0]);
                total[1] += force * (line[0] * ap[1] + line[1] * ax[1]);
            }
        }
    }
    Ok(JointReaction {
        compression_n: -(total[0] * ax[0] + total[1] * ax[1]),
        shear_n: total[0] * ap[0] + total[1] * ap[1],
    })
}

/// Coupled solve and reaction at the model's reaction level.
pub fn static_analysis(
    model: &SpineModel,
    posture: &Posture,
    load: &ExternalLoad,
    gravity: f64,
) -> Result<(MuscleSolution, JointReaction)> {
    let sol = iterate_posture_coupling(model, posture, load, gravity)?;
    let reaction = joint_reaction(model, posture, &sol, load, model.reaction_level(), gravity)?;
    Ok((sol, reaction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveFrame {
    pub frame: usize,
    pub time_s: f64,
    pub posture: Posture,
    pub load: ExternalLoad,
    pub solution: Option<MuscleSolution>,
    pub reaction: Option<JointReaction>,
    /// Error code and message when this frame could not be solved.
    pub error: Option<(String, String)>,
}

/// Per-frame quasi-static solves driven by a 3-channel parameter series:
/// trunk flexion (deg), upper-arm angle (deg from vertical-up) and vertical
/// hip displacement (m). Accelerations of every segment and the load come
/// from second differences of their positions.
pub fn dynamic_drive(
    model: &SpineModel,
    params: &TimeSeries,
    load_mass_kg: f64,
    rhythm: &LumbopelvicRhythm,
    gravity: f64,
) -> Result<Vec<DriveFrame>> {
    if params.dim() != 3 {
        return Err(Error::InvalidInput(format!(
            "drive series needs 3 channels (flexion, arm angle, hip displacement), got {}",
            params.dim()
        )));
    }
    if params.len() < 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: params.len(),
        });
    }
    let n = model.level_count();
    let postures = params
        .samples()
        .map(|p| Posture::with_arm(model, p[0], rhythm, p[1]))
        .collect::<Result<Vec<_>>>()?;
    // positions of segment COMs then the load, lifted by the hip displacement
    let mut tracks: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(params.len()); n + 1];
    for (posture, p) in postures.iter().zip(params.samples()) {
        let geo = Geometry::new(model, posture)?;
        let lift = p[2];
        for (track, com) in tracks.iter_mut().zip(&geo.coms) {
            track.push(vec![com[0], com[1] + lift]);
        }
        tracks[n].push(vec![
            posture.load_position_m[0],
            posture.load_position_m[1] + lift,
        ]);
    }
    let accelerations = tracks
        .into_iter()
        .map(|t| {
            let ts = TimeSeries::new(t, params.sample_rate_hz(), params.start_time_s())?;
            central_diff(&ts, 2)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(postures
        .into_par_iter()
        .enumerate()
        .map(|(i, posture)| {
            let acc = |b: usize| {
                let s = accelerations[b].sample(i);
                [s[0], s[1]]
            };
            let load = ExternalLoad {
                mass_kg: load_mass_kg,
                acceleration: acc(n),
                segment_accelerations: (0..n).map(acc).collect(),
            };
            let outcome = static_analysis(model, &posture, &load, gravity);
            let (solution, reaction, error) = match outcome {
                Ok((s, r)) => (Some(s), Some(r), None),
                Err(e) => (None, None, Some((e.code().to_string(), e.to_string()))),
            };
            DriveFrame {
                frame: i,
                time_s: params.time(i),
                posture,
                load,
                solution,
                reaction,
                error,
            }
        })
        .collect())
}
