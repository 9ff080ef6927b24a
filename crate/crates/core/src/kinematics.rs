//! Pose-keypoint schema and the posture metrics derived from landmarks:
//! trunk flexion, normalized shoulder-to-hand lever, asymmetry angle,
//! upper-arm angle, hip vertical displacement and sacral rotation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, butterworth_zero_lag, central_diff, FilterSpec, TimeSeries};

pub type Vec3 = Vector3<f64>;

/// Default minimum landmark confidence for a frame to count as valid.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.3;

/// Landmarks the metrics know about; anything else passes through unused.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LandmarkName {
    LShoulder,
    RShoulder,
    LHip,
    RHip,
    LWrist,
    RWrist,
    LElbow,
    RElbow,
    Head,
    Other(String),
}

impl LandmarkName {
    pub const KNOWN: [LandmarkName; 9] = [
        LandmarkName::LShoulder,
        LandmarkName::RShoulder,
        LandmarkName::LHip,
        LandmarkName::RHip,
        LandmarkName::LWrist,
        LandmarkName::RWrist,
        LandmarkName::LElbow,
        LandmarkName::RElbow,
        LandmarkName::Head,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            LandmarkName::LShoulder => "LShoulder",
            LandmarkName::RShoulder => "RShoulder",
            LandmarkName::LHip => "LHip",
            LandmarkName::RHip => "RHip",
            LandmarkName::LWrist => "LWrist",
            LandmarkName::RWrist => "RWrist",
            LandmarkName::LElbow => "LElbow",
            LandmarkName::RElbow => "RElbow",
            LandmarkName::Head => "Head",
            LandmarkName::Other(s) => s,
        }
    }
}

impl fmt::Display for LandmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkName {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(LandmarkName::KNOWN
            .iter()
            .find(|k| k.as_str() == s)
            .cloned()
            .unwrap_or_else(|| LandmarkName::Other(s.to_string())))
    }
}

/// Maps skeleton-specific keypoint names onto [`LandmarkName`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkMapping {
    pub names: BTreeMap<String, String>,
}

impl LandmarkMapping {
    /// COCO-17 keypoint names.
    pub fn coco17() -> Self {
        let pairs = [
            ("left_shoulder", "LShoulder"),
            ("right_shoulder", "RShoulder"),
            ("left_hip", "LHip"),
            ("right_hip", "RHip"),
            ("left_wrist", "LWrist"),
            ("right_wrist", "RWrist"),
            ("left_elbow", "LElbow"),
            ("right_elbow", "RElbow"),
            ("nose", "Head"),
        ];
        Self {
            names: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    pub fn resolve(&self, raw: &str) -> LandmarkName {
        let mapped = self.names.get(raw).map(String::as_str).unwrap_or(raw);
        mapped.parse().unwrap()
    }
}

/// Vertical direction of a coordinate system: one of ±x, ±y, ±z.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpAxis {
    pub axis: usize,
    pub positive: bool,
}

impl UpAxis {
    pub const Z: UpAxis = UpAxis {
        axis: 2,
        positive: true,
    };
    pub const Y: UpAxis = UpAxis {
        axis: 1,
        positive: true,
    };
    pub const NEG_Y: UpAxis = UpAxis {
        axis: 1,
        positive: false,
    };

    pub fn unit(&self) -> Vec3 {
        let mut v = Vec3::zeros();
        v[self.axis] = if self.positive { 1.0 } else { -1.0 };
        v
    }

    /// Height of a point along this axis.
    pub fn height(&self, p: &Vec3) -> f64 {
        p.dot(&self.unit())
    }
}

impl Default for UpAxis {
    fn default() -> Self {
        UpAxis::Z
    }
}

impl FromStr for UpAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (positive, rest) = match s.as_bytes().first() {
            Some(b'-') => (false, &s[1..]),
            Some(b'+') => (true, &s[1..]),
            _ => (true, s),
        };
        let axis = match rest.to_ascii_lowercase().as_str() {
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "up axis must be one of ±x, ±y, ±z; got {s:?}"
                )))
            }
        };
        Ok(UpAxis { axis, positive })
    }
}

impl fmt::Display for UpAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.positive { '+' } else { '-' };
        write!(f, "{sign}{}", ['x', 'y', 'z'][self.axis])
    }
}

impl Serialize for UpAxis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for UpAxis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub position: Vec3,
    pub confidence: f64,
}

impl Landmark {
    pub fn new(position: Vec3, confidence: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "landmark position must be finite".into(),
            ));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "landmark confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            position,
            confidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseFrame {
    pub time_s: f64,
    pub landmarks: BTreeMap<LandmarkName, Landmark>,
}

impl PoseFrame {
    pub fn new(time_s: f64) -> Self {
        Self {
            time_s,
            landmarks: BTreeMap::new(),
        }
    }

    /// Insert a fully confident landmark. Convenient for synthetic poses.
    pub fn with(mut self, name: LandmarkName, p: [f64; 3]) -> Self {
        self.landmarks.insert(
            name,
            Landmark {
                position: Vec3::from(p),
                confidence: 1.0,
            },
        );
        self
    }

    pub fn position(&self, name: &LandmarkName) -> Result<Vec3> {
        self.landmarks
            .get(name)
            .map(|l| l.position)
            .ok_or_else(|| Error::MissingLandmark {
                name: name.to_string(),
                frame: None,
            })
    }

    fn midpoint(&self, a: LandmarkName, b: LandmarkName) -> Result<Vec3> {
        Ok((self.position(&a)? + self.position(&b)?) * 0.5)
    }

    pub fn mid_shoulder(&self) -> Result<Vec3> {
        self.midpoint(LandmarkName::LShoulder, LandmarkName::RShoulder)
    }

    pub fn mid_hip(&self) -> Result<Vec3> {
        self.midpoint(LandmarkName::LHip, LandmarkName::RHip)
    }

    /// Wrist midpoint, the stand-in for the hand-held load position.
    pub fn mid_hand(&self) -> Result<Vec3> {
        self.midpoint(LandmarkName::LWrist, LandmarkName::RWrist)
    }

    /// Copy with every position transformed by `f`.
    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> PoseFrame {
        PoseFrame {
            time_s: self.time_s,
            landmarks: self
                .landmarks
                .iter()
                .map(|(k, l)| {
                    (
                        k.clone(),
                        Landmark {
                            position: f(&l.position),
                            confidence: l.confidence,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<PoseFrame>,
    pub nominal_rate_hz: f64,
    pub up_axis: UpAxis,
    pub calibration_scale_m_per_unit: Option<f64>,
}

impl PoseSequence {
    /// Validate timing and derive the nominal rate from the frame timestamps.
    pub fn new(
        frames: Vec<PoseFrame>,
        up_axis: UpAxis,
        calibration_scale_m_per_unit: Option<f64>,
    ) -> Result<Self> {
        if let Some(s) = calibration_scale_m_per_unit {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "calibration scale must be positive, got {s}"
                )));
            }
        }
        let times: Vec<f64> = frames.iter().map(|f| f.time_s).collect();
        let nominal_rate_hz = signal::uniform_rate(&times)?;
        Ok(Self {
            frames,
            nominal_rate_hz,
            up_axis,
            calibration_scale_m_per_unit,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_time_s(&self) -> f64 {
        self.frames[0].time_s
    }

    fn length_scale(&self) -> (f64, &'static str) {
        match self.calibration_scale_m_per_unit {
            Some(s) => (s, "m"),
            None => (1.0, "a.u."),
        }
    }
}

#[derive(Deserialize)]
struct RawLandmark {
    p: Vec<f64>,
    #[serde(default = "full_confidence")]
    c: f64,
}

fn full_confidence() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct RawFrame {
    t: f64,
    landmarks: BTreeMap<String, RawLandmark>,
}

/// Parse keypoints in JSON Lines form, one frame per line:
/// `{"t": 0.0, "landmarks": {"LShoulder": {"p": [x, y, z], "c": 0.9}}}`.
/// Blank lines are skipped; `c` defaults to 1.
pub fn parse_pose_jsonl(
    text: &str,
    path: &Path,
    mapping: &LandmarkMapping,
    up_axis: UpAxis,
    calibration_scale_m_per_unit: Option<f64>,
) -> Result<PoseSequence> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut frames = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rf: RawFrame =
            serde_json::from_str(raw).map_err(|e| parse_err(lineno, e.to_string()))?;
        if !rf.t.is_finite() {
            return Err(parse_err(lineno, "time must be finite".into()));
        }
        let mut frame = PoseFrame::new(rf.t);
        for (name, lm) in rf.landmarks {
            if lm.p.len() != 3 {
                return Err(parse_err(
                    lineno,
                    format!("landmark {name} needs three coordinates"),
                ));
            }
            let landmark = Landmark::new(Vec3::new(lm.p[0], lm.p[1], lm.p[2]), lm.c)
                .map_err(|e| parse_err(lineno, format!("landmark {name}: {e}")))?;
            let resolved = mapping.resolve(&name);
            if frame.landmarks.insert(resolved.clone(), landmark).is_some() {
                return Err(parse_err(lineno, format!("duplicate landmark {resolved}")));
            }
        }
        frames.push(frame);
    }
    PoseSequence::new(frames, up_axis, calibration_scale_m_per_unit)
}

pub fn load_pose_jsonl(
    path: impl AsRef<Path>,
    mapping: &LandmarkMapping,
    up_axis: UpAxis,
    calibration_scale_m_per_unit: Option<f64>,
) -> Result<PoseSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_jsonl(&text, path, mapping, up_axis, calibration_scale_m_per_unit)
}

/// Serialize a sequence as JSON Lines using the internal landmark names.
pub fn to_pose_jsonl(seq: &PoseSequence) -> String {
    let mut out = String::new();
    for f in &seq.frames {
        let landmarks: serde_json::Map<String, serde_json::Value> = f
            .landmarks
            .iter()
            .map(|(k, l)| {
                (
                    k.to_string(),
                    serde_json::json!({"p": [l.position.x, l.position.y, l.position.z], "c": l.confidence}),
                )
            })
            .collect();
        out.push_str(&serde_json::json!({"t": f.time_s, "landmarks": landmarks}).to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Subject descriptors used for scaling and regression inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectAnthropometry {
    pub sex: Sex,
    pub age_years: f64,
    pub height_m: f64,
    pub weight_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waist_circumference_m: Option<f64>,
}

impl SubjectAnthropometry {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.age_years) || !positive(self.height_m) || !positive(self.weight_kg) {
            return Err(Error::InvalidInput(format!(
                "subject age, height and weight must be positive: {self:?}"
            )));
        }
        if let Some(w) = self.waist_circumference_m {
            if !positive(w) {
                return Err(Error::InvalidInput(format!(
                    "waist circumference must be positive, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn bmi(&self) -> f64 {
        self.weight_kg / (self.height_m * self.height_m)
    }
}

/// Piecewise-linear share of trunk flexion taken by the pelvis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LumbopelvicRhythm {
    /// (trunk flexion in degrees, pelvic share in [0, 1])
    pub knots: Vec<(f64, f64)>,
}

impl LumbopelvicRhythm {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let r = Self { knots };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::InvalidConfig(
                "lumbopelvic rhythm has no knots".into(),
            ));
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig(
                "rhythm flexion knots must be strictly increasing".into(),
            ));
        }
        if self.knots.iter().any(|k| !(0.0..=1.0).contains(&k.1)) {
            return Err(Error::InvalidConfig(
                "rhythm shares must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn pelvic_share(&self, flexion_deg: f64) -> f64 {
        let k = &self.knots;
        if flexion_deg <= k[0].0 {
            return k[0].1;
        }
        if flexion_deg >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|p| p.0 <= flexion_deg) - 1;
        let (x0, y0) = k[i];
        let (x1, y1) = k[i + 1];
        y0 + (y1 - y0) * (flexion_deg - x0) / (x1 - x0)
    }
}

impl Default for LumbopelvicRhythm {
    /// Placeholder single share; not a measured rhythm.
    fn default() -> Self {
        Self {
            knots: vec![(0.0, 0.35)],
        }
    }
}

fn angle_between_deg(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 form stays accurate near 0° and 180°
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

fn horizontal(v: &Vec3, up: &Vec3) -> Vec3 {
    v - up * v.dot(up)
}

/// Angle between the up axis and the mid-hip → mid-shoulder line, degrees.
pub fn trunk_flexion(frame: &PoseFrame, up: UpAxis) -> Result<f64> {
    let trunk = frame.mid_shoulder()? - frame.mid_hip()?;
    if trunk.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry(
            "mid-shoulder coincides with mid-hip".into(),
        ));
    }
    Ok(angle_between_deg(&up.unit(), &trunk))
}

/// Horizontal mid-hand to mid-shoulder distance over shoulder width.
pub fn shoulder_to_hand_distance(frame: &PoseFrame, up: UpAxis) -> Result<f64> {
    let ls = frame.position(&LandmarkName::LShoulder)?;
    let rs = frame.position(&LandmarkName::RShoulder)?;
    let hand = frame.mid_hand()?;
    let width = (ls - rs).norm();
    if width <= 1e-6 {
        return Err(Error::DegenerateGeometry(format!(
            "shoulder width {width} too small"
        )));
    }
    let offset = horizontal(&(hand - (ls + rs) * 0.5), &up.unit());
    Ok(offset.norm() / width)
}

/// Transverse-plane angle between the pelvis forward direction and the
/// horizontal mid-hip → mid-hand direction, degrees in [0, 180].
///
/// Pelvis forward is `up × (RHip − LHip)`, i.e. anatomical forward for a
/// right-handed coordinate system with correctly labelled sides.
pub fn asymmetry_angle(frame: &PoseFrame, up: UpAxis) -> Result<f64> {
    let u = up.unit();
    // shoulders are part of the required set even though only hips orient the pelvis
    frame.mid_shoulder()?;
    let hip_line = horizontal(
        &(frame.position(&LandmarkName::RHip)? - frame.position(&LandmarkName::LHip)?),
        &u,
    );
    if hip_line.norm() < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "hip line has no horizontal extent".into(),
        ));
    }
    let forward = u.cross(&hip_line);
    let reach = horizontal(&(frame.mid_hand()? - frame.mid_hip()?), &u);
    if reach.norm() < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "hands have no horizontal offset from the pelvis".into(),
        ));
    }
    Ok(angle_between_deg(&forward, &reach))
}

/// Angle between the up axis and shoulder → elbow, averaged over the sides
/// where both landmarks are present. Hanging arm reads 180°.
pub fn upper_arm_angle(frame: &PoseFrame, up: UpAxis) -> Result<f64> {
    upper_arm_angle_filtered(frame, up, |_| true)
}

fn upper_arm_angle_filtered(
    frame: &PoseFrame,
    up: UpAxis,
    usable: impl Fn(&Landmark) -> bool,
) -> Result<f64> {
    let sides = [
        (LandmarkName::LShoulder, LandmarkName::LElbow),
        (LandmarkName::RShoulder, LandmarkName::RElbow),
    ];
    let mut sum = 0.0;
    let mut count = 0;
    for (s, e) in &sides {
        if let (Some(sl), Some(el)) = (frame.landmarks.get(s), frame.landmarks.get(e)) {
            if !usable(sl) || !usable(el) {
                continue;
            }
            let arm = el.position - sl.position;
            if arm.norm() < 1e-12 {
                return Err(Error::DegenerateGeometry(format!("zero-length arm on {s}")));
            }
            sum += angle_between_deg(&up.unit(), &arm);
            count += 1;
        }
    }
    if count == 0 {
        let missing = sides
            .iter()
            .flat_map(|(s, e)| [s, e])
            .find(|n| !frame.landmarks.contains_key(n))
            .unwrap_or(&LandmarkName::LElbow);
        return Err(Error::MissingLandmark {
            name: missing.to_string(),
            frame: None,
        });
    }
    Ok(sum / count as f64)
}

/// Mid-hip height per frame relative to the first frame.
pub fn hip_vertical_displacement(seq: &PoseSequence) -> Result<TimeSeries> {
    let (scale, units) = seq.length_scale();
    let heights = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.mid_hip()
                .map(|p| seq.up_axis.height(&p) * scale)
                .map_err(|e| e.at_frame(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let h0 = heights[0];
    let values = heights.into_iter().map(|h| h - h0).collect();
    Ok(
        TimeSeries::from_scalar(values, seq.nominal_rate_hz, seq.start_time_s())?
            .with_channels(["hip_displacement"])
            .with_units(units),
    )
}

/// Sacral (pelvic) rotation implied by a lumbopelvic rhythm.
pub fn sacral_rotation(trunk_flexion_deg: f64, rhythm: &LumbopelvicRhythm) -> Result<f64> {
    rhythm.validate()?;
    Ok(rhythm.pelvic_share(trunk_flexion_deg) * trunk_flexion_deg)
}

/// Per-frame posture metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TrunkFlexion,
    ShoulderToHand,
    Asymmetry,
    UpperArm,
    HipDisplacement,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::TrunkFlexion,
        Metric::ShoulderToHand,
        Metric::Asymmetry,
        Metric::UpperArm,
        Metric::HipDisplacement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::TrunkFlexion => "trunk_flexion",
            Metric::ShoulderToHand => "shoulder_to_hand",
            Metric::Asymmetry => "asymmetry",
            Metric::UpperArm => "upper_arm",
            Metric::HipDisplacement => "hip_displacement",
        }
    }

    pub fn units(&self) -> &'static str {
        match self {
            Metric::ShoulderToHand => "1",
            Metric::HipDisplacement => "",
            _ => "deg",
        }
    }

    fn required(&self) -> &'static [LandmarkName] {
        use LandmarkName::*;
        match self {
            Metric::TrunkFlexion => &[LShoulder, RShoulder, LHip, RHip],
            Metric::ShoulderToHand => &[LShoulder, RShoulder, LWrist, RWrist],
            Metric::Asymmetry => &[LShoulder, RShoulder, LHip, RHip, LWrist, RWrist],
            Metric::UpperArm => &[],
            Metric::HipDisplacement => &[LHip, RHip],
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}")))
    }
}

/// A metric series together with the frames that had to be interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrace {
    pub series: TimeSeries,
    /// One flag per output sample.
    pub interpolated: Vec<bool>,
    /// Low-confidence frames dropped from the start of the sequence.
    pub trimmed_leading: usize,
    /// Low-confidence frames dropped from the end of the sequence.
    pub trimmed_trailing: usize,
}

/// Evaluate `metric` on every frame. Frames whose required landmarks fall
/// below `confidence_floor` are interpolated when interior and trimmed at
/// the boundaries; missing landmarks are errors.
pub fn metric_trace(
    seq: &PoseSequence,
    metric: Metric,
    filter: Option<FilterSpec>,
    confidence_floor: f64,
) -> Result<MetricTrace> {
    if seq.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let up = seq.up_axis;
    let (scale, length_units) = seq.length_scale();
    let mut values: Vec<Option<Vec<f64>>> = Vec::with_capacity(seq.len());
    let mut hip0: Option<f64> = None;
    for (i, frame) in seq.frames.iter().enumerate() {
        let confident = metric
            .required()
            .iter()
            .all(|n| match frame.landmarks.get(n) {
                Some(l) => l.confidence >= confidence_floor,
                None => true,
            });
        let value = match metric {
            Metric::TrunkFlexion => trunk_flexion(frame, up),
            Metric::ShoulderToHand => shoulder_to_hand_distance(frame, up),
            Metric::Asymmetry => asymmetry_angle(frame, up),
            Metric::UpperArm => {
                match upper_arm_angle_filtered(frame, up, |l| l.confidence >= confidence_floor) {
                    // sides exist but all are low confidence
                    Err(Error::MissingLandmark { .. }) if upper_arm_angle(frame, up).is_ok() => {
                        values.push(None);
                        continue;
                    }
                    r => r,
                }
            }
            Metric::HipDisplacement => frame.mid_hip().map(|p| up.height(&p) * scale),
        };
        let value = match value {
            Ok(v) => v,
            Err(e @ Error::MissingLandmark { .. }) => return Err(e.at_frame(i)),
            Err(_) if !confident => {
                values.push(None);
                continue;
            }
            Err(e) => return Err(annotate_frame(e, i)),
        };
        if !confident {
            values.push(None);
            continue;
        }
        let value = if metric == Metric::HipDisplacement {
            value - *hip0.get_or_insert(value)
        } else {
            value
        };
        values.push(Some(vec![value]));
    }
    let (filled, range, interpolated) = signal::fill_gaps(&values).ok_or_else(|| {
        Error::DegenerateData(format!(
            "no frame has confident landmarks for {}",
            metric.name()
        ))
    })?;
    let units = if metric == Metric::HipDisplacement {
        length_units
    } else {
        metric.units()
    };
    let mut series = TimeSeries::new(filled, seq.nominal_rate_hz, seq.frames[range.start].time_s)?
        .with_channels([metric.name()])
        .with_units(units);
    if let Some(spec) = filter {
        series = butterworth_zero_lag(&series, spec)?;
    }
    Ok(MetricTrace {
        series,
        interpolated,
        trimmed_leading: range.start,
        trimmed_trailing: seq.len() - range.end,
    })
}

fn annotate_frame(e: Error, i: usize) -> Error {
    match e {
        Error::DegenerateGeometry(msg) => Error::DegenerateGeometry(format!("frame {i}: {msg}")),
        other => other.at_frame(i),
    }
}

/// Per-frame metric at the sequence rate, optionally zero-lag filtered.
pub fn metric_series(
    seq: &PoseSequence,
    metric: Metric,
    filter: Option<FilterSpec>,
) -> Result<TimeSeries> {
    metric_trace(seq, metric, filter, DEFAULT_CONFIDENCE_FLOOR).map(|t| t.series)
}

/// Position, velocity and acceleration of one landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct PointKinematics {
    pub position: TimeSeries,
    pub velocity: TimeSeries,
    pub acceleration: TimeSeries,
}

/// Landmark trajectory differentiated with second-order finite differences,
/// then zero-lag filtered. Units are metres when the sequence is calibrated
/// and arbitrary units otherwise.
pub fn point_kinematics(
    seq: &PoseSequence,
    landmark: &LandmarkName,
    filter: FilterSpec,
) -> Result<PointKinematics> {
    let (scale, units) = seq.length_scale();
    let samples = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.position(landmark)
                .map(|p| (p * scale).iter().copied().collect::<Vec<f64>>())
                .map_err(|e| e.at_frame(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let position = TimeSeries::new(samples, seq.nominal_rate_hz, seq.start_time_s())?
        .with_channels(["x", "y", "z"])
        .with_units(units);
    let velocity = butterworth_zero_lag(&central_diff(&position, 1)?, filter)?;
    let acceleration = butterworth_zero_lag(&central_diff(&position, 2)?, filter)?;
    Ok(PointKinematics {
        position,
        velocity,
        acceleration,
    })
}
