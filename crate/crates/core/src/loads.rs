//! Polynomial regression equations for L4/L5 compression and shear, fitted
//! against the muscle-force model and evaluated per frame of a lift.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    asymmetry_angle, shoulder_to_hand_distance, trunk_flexion, LumbopelvicRhythm, PoseSequence,
    SubjectAnthropometry,
};
use crate::msk::{
    scale_model, static_analysis, ExternalLoad, Geometry, Posture, SpineModel, GRAVITY,
};
use crate::signal::{butterworth_zero_lag, FilterSpec, TimeSeries};

/// Inputs the regression can draw on, in canonical order.
pub const INPUT_NAMES: [&str; 6] = [
    "flexion_deg",
    "lever",
    "asymmetry_deg",
    "load_kg",
    "height_m",
    "weight_kg",
];

/// Default shear coupling of the asymmetry surrogate.
pub const DEFAULT_ASYMMETRY_SHEAR_COUPLING: f64 = 0.5;

/// Biacromial width as a fraction of stature, used to turn the normalized
/// lever into metres when sampling the muscle model.
pub const SHOULDER_WIDTH_PER_HEIGHT: f64 = 0.23;

const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadInputs {
    pub flexion_deg: f64,
    /// Horizontal hand-to-shoulder distance over shoulder width.
    pub lever: f64,
    pub asymmetry_deg: f64,
    pub load_kg: f64,
    pub height_m: f64,
    pub weight_kg: f64,
}

impl LoadInputs {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.flexion_deg,
            self.lever,
            self.asymmetry_deg,
            self.load_kg,
            self.height_m,
            self.weight_kg,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            flexion_deg: a[0],
            lever: a[1],
            asymmetry_deg: a[2],
            load_kg: a[3],
            height_m: a[4],
            weight_kg: a[5],
        }
    }
}

/// Monomials up to `degree` over the named inputs, pairwise interactions
/// included. Terms list input indices; the empty term is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecipe {
    pub degree: usize,
    pub inputs: Vec<String>,
}

impl FeatureRecipe {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            degree,
            inputs: INPUT_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_inputs(degree: usize, inputs: &[&str]) -> Result<Self> {
        let r = Self {
            degree,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        };
        r.input_indices()?;
        Ok(r)
    }

    fn input_indices(&self) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.inputs.len());
        for name in &self.inputs {
            let i = INPUT_NAMES.iter().position(|n| n == name).ok_or_else(|| {
                Error::InvalidConfig(format!("unknown regression input {name:?}"))
            })?;
            if idx.contains(&i) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate regression input {name:?}"
                )));
            }
            idx.push(i);
        }
        Ok(idx)
    }

    /// Terms in a fixed order: by degree, then lexicographic.
    pub fn terms(&self) -> Result<Vec<Vec<usize>>> {
        let idx = self.input_indices()?;
        let mut out = vec![Vec::new()];
        let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..self.degree {
            let mut next = Vec::new();
            for t in &frontier {
                // nondecreasing positions into `idx` keep each monomial unique
                let start = t
                    .last()
                    .map_or(0, |last| idx.iter().position(|i| i == last).unwrap());
                for &i in &idx[start..] {
                    let mut term = t.clone();
                    term.push(i);
                    next.push(term);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        Ok(out)
    }

    pub fn term_names(&self) -> Result<Vec<String>> {
        Ok(self
            .terms()?
            .iter()
            .map(|t| {
                if t.is_empty() {
                    "1".to_string()
                } else {
                    t.iter()
                        .map(|&i| INPUT_NAMES[i])
                        .collect::<Vec<_>>()
                        .join("*")
                }
            })
            .collect())
    }
}

fn features(terms: &[Vec<usize>], x: &[f64; 6]) -> Vec<f64> {
    terms
        .iter()
        .map(|t| t.iter().map(|&i| x[i]).product())
        .collect()
}

/// Per-input bounds of the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub min: [f64; 6],
    pub max: [f64; 6],
}

impl DomainBox {
    pub fn contains(&self, x: &[f64; 6]) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn of(samples: &[LoadSample]) -> Self {
        let mut min = [f64::INFINITY; 6];
        let mut max = [f64::NEG_INFINITY; 6];
        for s in samples {
            for (k, v) in s.inputs.as_array().iter().enumerate() {
                min[k] = min[k].min(*v);
                max[k] = max[k].max(*v);
            }
        }
        Self { min, max }
    }
}

/// Goodness of fit for one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub r_squared: f64,
    pub rms_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub compression: FitStats,
    pub shear: FitStats,
}

/// How asymmetry enters training samples, since the muscle model is
/// sagittal: the lever is projected by cos(asymmetry) and shear gains
/// `coupling·m·g·sin(asymmetry)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetrySurrogate {
    pub shear_coupling: f64,
}

impl Default for AsymmetrySurrogate {
    fn default() -> Self {
        Self {
            shear_coupling: DEFAULT_ASYMMETRY_SHEAR_COUPLING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub recipe: FeatureRecipe,
    pub compression: Vec<f64>,
    pub shear: Vec<f64>,
    pub domain: DomainBox,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymmetry_surrogate: Option<AsymmetrySurrogate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

impl RegressionModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.recipe.terms()?.len();
        if self.compression.len() != n || self.shear.len() != n {
            return Err(Error::InvalidConfig(format!(
                "recipe has {n} terms but coefficients have {} and {}",
                self.compression.len(),
                self.shear.len()
            )));
        }
        if self
            .compression
            .iter()
            .chain(&self.shear)
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidConfig("coefficients must be finite".into()));
        }
        if self
            .domain
            .min
            .iter()
            .zip(&self.domain.max)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::InvalidConfig(
                "regression domain box is empty".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("regression model: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("regression model serializes")
    }

    /// Equations fitted to the reduced spine model on the default grid.
    pub fn shipped() -> Self {
        Self::from_json(include_str!("../data/load_regression.json"))
            .expect("shipped regression is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadEstimate {
    pub compression_n: f64,
    pub shear_n: f64,
    /// Inputs fell outside the training box; values are still returned.
    pub extrapolated: bool,
}

pub fn eval_loads(reg: &RegressionModel, inputs: &LoadInputs) -> Result<LoadEstimate> {
    let x = inputs.as_array();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regression inputs must be finite: {inputs:?}"
        )));
    }
    let terms = reg.recipe.terms()?;
    if terms.len() != reg.compression.len() || terms.len() != reg.shear.len() {
        return Err(Error::InvalidConfig(
            "coefficient count does not match recipe".into(),
        ));
    }
    let f = features(&terms, &x);
    let dot = |c: &[f64]| c.iter().zip(&f).map(|(c, f)| c * f).sum::<f64>();
    Ok(LoadEstimate {
        compression_n: dot(&reg.compression),
        shear_n: dot(&reg.shear),
        extrapolated: !reg.domain.contains(&x),
    })
}

/// One training pair: inputs and the loads the muscle model produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSample {
    pub inputs: LoadInputs,
    pub compression_n: f64,
    pub shear_n: f64,
}

/// Polynomial in raw inputs, keyed by sorted index multisets.
type Poly = BTreeMap<Vec<usize>, f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ka, va) in a {
        for (kb, vb) in b {
            let mut k: Vec<usize> = ka.iter().chain(kb).copied().collect();
            k.sort_unstable();
            *out.entry(k).or_insert(0.0) += va * vb;
        }
    }
    out
}

/// Ordinary least squares per target on the recipe features.
///
/// The solve runs on inputs centred and scaled to the training box, then
/// the polynomial is expanded back into raw-input coefficients.
pub fn fit_regression(
    samples: &[LoadSample],
    recipe: &FeatureRecipe,
    provenance: impl Into<String>,
) -> Result<RegressionModel> {
    let terms = recipe.terms()?;
    let p = terms.len();
    let needed = 10 * p;
    if samples.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| {
        s.inputs.as_array().iter().any(|v| !v.is_finite())
            || !s.compression_n.is_finite()
            || !s.shear_n.is_finite()
    }) {
        return Err(Error::InvalidInput(
            "training samples must be finite".into(),
        ));
    }
    let domain = DomainBox::of(samples);
    let used = recipe.input_indices()?;
    for &i in &used {
        if domain.max[i] <= domain.min[i] {
            return Err(Error::DegenerateDesign(format!(
                "input {} is constant over the samples",
                INPUT_NAMES[i]
            )));
        }
    }
    let center: Vec<f64> = (0..6)
        .map(|i| 0.5 * (domain.min[i] + domain.max[i]))
        .collect();
    let half: Vec<f64> = (0..6)
        .map(|i| {
            let h = 0.5 * (domain.max[i] - domain.min[i]);
            if h > 0.0 {
                h
            } else {
                1.0
            }
        })
        .collect();
    let scaled = |x: [f64; 6]| -> [f64; 6] {
        let mut z = [0.0; 6];
        for i in 0..6 {
            z[i] = (x[i] - center[i]) / half[i];
        }
        z
    };
    let n = samples.len();
    let mut a = DMatrix::zeros(n, p);
    for (r, s) in samples.iter().enumerate() {
        for (c, v) in features(&terms, &scaled(s.inputs.as_array()))
            .into_iter()
            .enumerate()
        {
            a[(r, c)] = v;
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.partial_cmp(&(RANK_TOLERANCE * smax)) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateDesign(format!(
            "design matrix is rank deficient (singular values {smin:e} / {smax:e})"
        )));
    }
    let solve = |y: &DVector<f64>| -> Result<DVector<f64>> {
        svd.solve(y, 0.0)
            .map_err(|e| Error::DegenerateDesign(e.to_string()))
    };
    // (x_i − c_i)/h_i as a polynomial in x_i
    let unscale = |b: &DVector<f64>| -> Vec<f64> {
        let mut total = Poly::new();
        for (t, coef) in terms.iter().zip(b.iter()) {
            let mut poly: Poly = [(Vec::new(), *coef)].into_iter().collect();
            for &i in t {
                let lin: Poly = [(vec![i], 1.0 / half[i]), (Vec::new(), -center[i] / half[i])]
                    .into_iter()
                    .collect();
                poly = poly_mul(&poly, &lin);
            }
            for (k, v) in poly {
                *total.entry(k).or_insert(0.0) += v;
            }
        }
        terms
            .iter()
            .map(|t| {
                let mut k = t.clone();
                k.sort_unstable();
                total.get(&k).copied().unwrap_or(0.0)
            })
            .collect()
    };
    let raw: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| features(&terms, &s.inputs.as_array()))
        .collect();
    let residual = |c: &[f64], y: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(
            n,
            raw.iter()
                .zip(y.iter())
                .map(|(f, y)| y - f.iter().zip(c).map(|(f, c)| f * c).sum::<f64>()),
        )
    };
    // solve, expand, then refine against the residual in raw coordinates
    let fit_target = |y: &DVector<f64>| -> Result<(Vec<f64>, FitStats)> {
        let mut c = unscale(&solve(y)?);
        for _ in 0..2 {
            let dc = unscale(&solve(&residual(&c, y))?);
            c.iter_mut().zip(dc).for_each(|(c, d)| *c += d);
        }
        let ss_res = residual(&c, y).norm_squared();
        let mean = y.mean();
        let ss_tot = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let r_squared = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
        Ok((
            c,
            FitStats {
                r_squared,
                rms_n: (ss_res / n as f64).sqrt(),
            },
        ))
    };
    let (compression, cstats) = fit_target(&DVector::from_iterator(
        n,
        samples.iter().map(|s| s.compression_n),
    ))?;
    let (shear, sstats) = fit_target(&DVector::from_iterator(
        n,
        samples.iter().map(|s| s.shear_n),
    ))?;
    let report = FitReport {
        samples: n,
        compression: cstats,
        shear: sstats,
    };
    let model = RegressionModel {
        recipe: recipe.clone(),
        compression,
        shear,
        domain,
        provenance: provenance.into(),
        asymmetry_surrogate: None,
        fit: Some(report),
    };
    model.validate()?;
    Ok(model)
}

/// Settings for sampling the muscle model as the regression oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSettings {
    pub model: SpineModel,
    pub rhythm: LumbopelvicRhythm,
    pub surrogate: AsymmetrySurrogate,
    /// Sex and age of the sampled subject; height and weight come from
    /// the inputs.
    pub subject: SubjectAnthropometry,
}

impl OracleSettings {
    pub fn new(model: SpineModel) -> Self {
        let subject = model.reference;
        Self {
            model,
            rhythm: LumbopelvicRhythm::default(),
            surrogate: AsymmetrySurrogate::default(),
            subject,
        }
    }
}

/// Compression and shear at the reaction level for one input point. The
/// model is scaled to the subject and the load held at the sagittal
/// projection of the lever in front of the shoulder.
pub fn oracle_loads(settings: &OracleSettings, inputs: &LoadInputs) -> Result<LoadSample> {
    let subject = SubjectAnthropometry {
        height_m: inputs.height_m,
        weight_kg: inputs.weight_kg,
        ..settings.subject
    };
    let model = scale_model(&settings.model, &subject)?;
    let mut posture =
        Posture::from_rhythm(&model, inputs.flexion_deg, &settings.rhythm, [0.0, 0.0])?;
    let geo = Geometry::new(&model, &posture)?;
    let asym = inputs.asymmetry_deg.to_radians();
    let lever_m = inputs.lever * SHOULDER_WIDTH_PER_HEIGHT * inputs.height_m;
    posture.load_position_m = [
        geo.shoulder[0] + lever_m * asym.cos(),
        geo.shoulder[1] - 0.5 * model.arm_length_m,
    ];
    let (_, reaction) = static_analysis(
        &model,
        &posture,
        &ExternalLoad::statics(inputs.load_kg),
        GRAVITY,
    )?;
    Ok(LoadSample {
        inputs: *inputs,
        compression_n: reaction.compression_n,
        shear_n: reaction.shear_n
            + settings.surrogate.shear_coupling * inputs.load_kg * GRAVITY * asym.sin(),
    })
}

/// Full-factorial grid over per-input value lists.
pub fn input_grid(axes: &[Vec<f64>; 6]) -> Vec<LoadInputs> {
    let mut out = vec![[0.0; 6]];
    for (k, axis) in axes.iter().enumerate() {
        out = out
            .into_iter()
            .flat_map(|x| {
                axis.iter().map(move |&v| {
                    let mut y = x;
                    y[k] = v;
                    y
                })
            })
            .collect();
    }
    out.into_iter().map(LoadInputs::from_array).collect()
}

/// Evenly spaced values from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Default training grid: flexion 0–60°, lever 0–1, asymmetry 0–45°,
/// load 0–20 kg, stature 1.6–1.9 m, mass 60–90 kg.
pub fn default_training_axes() -> [Vec<f64>; 6] {
    [
        linspace(0.0, 60.0, 7),
        linspace(0.0, 1.0, 5),
        linspace(0.0, 45.0, 3),
        linspace(0.0, 20.0, 5),
        linspace(1.6, 1.9, 3),
        linspace(60.0, 90.0, 3),
    ]
}

/// Midpoints between neighbouring grid values, for held-out checks.
pub fn midpoint_axes(axes: &[Vec<f64>; 6]) -> [Vec<f64>; 6] {
    axes.clone()
        .map(|a| a.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// Sample the oracle on every input point. Points the muscle model cannot
/// balance are skipped and counted.
pub fn oracle_samples(
    settings: &OracleSettings,
    inputs: &[LoadInputs],
) -> (Vec<LoadSample>, usize) {
    let mut skipped = 0;
    let samples = inputs
        .iter()
        .filter_map(|x| match oracle_loads(settings, x) {
            Ok(s) => Some(s),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    (samples, skipped)
}

/// Sample the oracle on the grid and fit the recipe.
pub fn fit_from_oracle(
    settings: &OracleSettings,
    axes: &[Vec<f64>; 6],
    recipe: &FeatureRecipe,
) -> Result<RegressionModel> {
    let (samples, skipped) = oracle_samples(settings, &input_grid(axes));
    let provenance = format!(
        "least squares on {} muscle-model samples ({skipped} infeasible skipped); model: {}",
        samples.len(),
        settings.model.provenance
    );
    let mut reg = fit_regression(&samples, recipe, provenance)?;
    reg.asymmetry_surrogate = Some(settings.surrogate);
    Ok(reg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub peak_compression_n: f64,
    pub peak_frame: usize,
    pub peak_time_s: f64,
    pub mean_compression_n: f64,
    pub peak_shear_n: f64,
    pub mean_shear_n: f64,
    pub percent_extrapolated: f64,
    /// Frames whose asymmetry was undefined (no horizontal reach) and read as 0°.
    pub asymmetry_defaulted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftAssessment {
    /// Channels: compression_n, shear_n, flexion_deg, lever, asymmetry_deg.
    pub series: TimeSeries,
    pub extrapolated: Vec<bool>,
    pub summary: LoadSummary,
}

/// Per-frame static load estimate for a lift from pose metrics.
pub fn lift_assessment(
    seq: &PoseSequence,
    subject: &SubjectAnthropometry,
    load_mass_kg: f64,
    reg: &RegressionModel,
    filter: Option<FilterSpec>,
) -> Result<LiftAssessment> {
    subject.validate()?;
    if !(load_mass_kg.is_finite() && load_mass_kg >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "load mass must be nonnegative, got {load_mass_kg}"
        )));
    }
    if seq.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let up = seq.up_axis;
    let mut defaulted = 0;
    let mut metrics = Vec::with_capacity(seq.len());
    for (i, frame) in seq.frames.iter().enumerate() {
        let flex = trunk_flexion(frame, up).map_err(|e| e.at_frame(i))?;
        let lever = shoulder_to_hand_distance(frame, up).map_err(|e| e.at_frame(i))?;
        let asym = match asymmetry_angle(frame, up) {
            Ok(a) => a,
            Err(Error::DegenerateGeometry(_)) => {
                defaulted += 1;
                0.0
            }
            Err(e) => return Err(e.at_frame(i)),
        };
        metrics.push(vec![flex, lever, asym]);
    }
    let mut metrics = TimeSeries::new(metrics, seq.nominal_rate_hz, seq.start_time_s())?;
    if let Some(spec) = filter {
        metrics = butterworth_zero_lag(&metrics, spec)?;
    }
    let mut rows = Vec::with_capacity(seq.len());
    let mut extrapolated = Vec::with_capacity(seq.len());
    for m in metrics.samples() {
        let est = eval_loads(
            reg,
            &LoadInputs {
                flexion_deg: m[0],
                lever: m[1],
                asymmetry_deg: m[2],
                load_kg: load_mass_kg,
                height_m: subject.height_m,
                weight_kg: subject.weight_kg,
            },
        )?;
        rows.push(vec![est.compression_n, est.shear_n, m[0], m[1], m[2]]);
        extrapolated.push(est.extrapolated);
    }
    let series = TimeSeries::new(rows, seq.nominal_rate_hz, seq.start_time_s())?.with_channels([
        "compression_n",
        "shear_n",
        "flexion_deg",
        "lever",
        "asymmetry_deg",
    ]);
    let comp = series.channel(0);
    let shear = series.channel(1);
    let n = comp.len() as f64;
    let (peak_frame, peak) =
        comp.iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    let summary = LoadSummary {
        peak_compression_n: peak,
        peak_frame,
        peak_time_s: series.time(peak_frame),
        mean_compression_n: comp.iter().sum::<f64>() / n,
        peak_shear_n: shear.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_shear_n: shear.iter().sum::<f64>() / n,
        percent_extrapolated: 100.0 * extrapolated.iter().filter(|e| **e).count() as f64 / n,
        asymmetry_defaulted: defaulted,
    };
    Ok(LiftAssessment {
        series,
        extrapolated,
        summary,
    })
}
