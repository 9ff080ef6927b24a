//! Uniformly sampled signals, zero-lag Butterworth filtering and
//! finite-difference differentiation.
//!
//! Every dynamic analysis in the crate passes through [`TimeSeries`]: flexion
//! traces, tracked positions, accelerations and per-frame spinal loads.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on timestamp spacing accepted at ingestion.
pub const UNIFORM_SPACING_TOL: f64 = 1e-6;

/// A uniformly sampled series of real vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dim: usize,
    data: Vec<f64>,
    sample_rate_hz: f64,
    start_time_s: f64,
    channels: Vec<String>,
    units: String,
}

impl TimeSeries {
    /// Build from one vector per sample. All vectors must share a dimension.
    pub fn new(samples: Vec<Vec<f64>>, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidInput(
                "all samples must have the same dimension".into(),
            ));
        }
        let data = samples.into_iter().flatten().collect();
        Self::from_flat(dim, data, sample_rate_hz, start_time_s)
    }

    pub fn from_scalar(values: Vec<f64>, sample_rate_hz: f64, start_time_s: f64) -> Result<Self> {
        Self::from_flat(1, values, sample_rate_hz, start_time_s)
    }

    /// Build from row-major data holding `dim` values per sample.
    pub fn from_flat(
        dim: usize,
        data: Vec<f64>,
        sample_rate_hz: f64,
        start_time_s: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "sample dimension must be at least 1".into(),
            ));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InsufficientData {
                needed: 1,
                got: data.len() / dim,
            });
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !start_time_s.is_finite() {
            return Err(Error::InvalidInput("start time must be finite".into()));
        }
        let channels = (0..dim).map(|c| format!("c{c}")).collect();
        Ok(Self {
            dim,
            data,
            sample_rate_hz,
            start_time_s,
            channels,
            units: String::new(),
        })
    }

    /// Build from explicit timestamps, rejecting non-uniform spacing.
    pub fn from_timestamps(times: &[f64], samples: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != samples.len() {
            return Err(Error::InvalidInput(format!(
                "{} timestamps for {} samples",
                times.len(),
                samples.len()
            )));
        }
        let rate = uniform_rate(times)?;
        Self::new(samples, rate, times[0])
    }

    pub fn with_channels<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        assert_eq!(
            names.len(),
            self.dim,
            "channel name count must match dimension"
        );
        self.channels = names;
        self
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time_s + i as f64 / self.sample_rate_hz
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn end_time_s(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Copy of one channel as a plain vector.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples().map(|s| s[c]).collect()
    }

    /// Single-channel series holding channel `c`, keeping name and units.
    pub fn channel_series(&self, c: usize) -> TimeSeries {
        TimeSeries {
            dim: 1,
            data: self.channel(c),
            sample_rate_hz: self.sample_rate_hz,
            start_time_s: self.start_time_s,
            channels: vec![self.channels[c].clone()],
            units: self.units.clone(),
        }
    }

    /// Apply `f` to every channel independently, producing a same-shaped series.
    pub fn map_channels<F>(&self, mut f: F) -> Result<TimeSeries>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let n = self.len();
        let mut data = vec![0.0; self.data.len()];
        for c in 0..self.dim {
            let out = f(&self.channel(c))?;
            debug_assert_eq!(out.len(), n);
            for (i, v) in out.into_iter().enumerate() {
                data[i * self.dim + c] = v;
            }
        }
        Ok(TimeSeries {
            data,
            ..self.clone()
        })
    }

    /// Series with the samples in reverse order and the same time span.
    pub fn reversed(&self) -> TimeSeries {
        let data = self
            .samples()
            .rev()
            .flat_map(|s| s.iter().copied())
            .collect();
        TimeSeries {
            data,
            ..self.clone()
        }
    }

    /// Sub-series of samples `range`, with the start time shifted accordingly.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<TimeSeries> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidInput(format!(
                "slice {range:?} out of bounds for {} samples",
                self.len()
            )));
        }
        Ok(TimeSeries {
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
            start_time_s: self.time(range.start),
            ..self.clone()
        })
    }
}

/// Derive the sample rate of strictly increasing, uniformly spaced timestamps.
pub fn uniform_rate(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: times.len(),
        });
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(
            "timestamps must be strictly increasing".into(),
        ));
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        if (step - dt).abs() > UNIFORM_SPACING_TOL * dt {
            return Err(Error::InvalidInput(format!(
                "non-uniform sampling at sample {}: step {step} vs mean {dt}",
                i + 1
            )));
        }
    }
    Ok(1.0 / dt)
}

/// Low-pass Butterworth design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
}

impl FilterSpec {
    pub fn new(order: usize, cutoff_hz: f64) -> Self {
        Self { order, cutoff_hz }
    }

    fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidSpec("filter order must be at least 1".into()));
        }
        if !(self.cutoff_hz.is_finite() && self.cutoff_hz > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "cutoff must be positive, got {}",
                self.cutoff_hz
            )));
        }
        if self.cutoff_hz >= sample_rate_hz / 2.0 {
            return Err(Error::InvalidSpec(format!(
                "cutoff {} Hz is not below the Nyquist frequency {} Hz",
                self.cutoff_hz,
                sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }

    /// Reflection padding applied at each end before forward-backward filtering.
    pub fn pad_len(&self) -> usize {
        3 * (self.order + 1)
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 5,
            cutoff_hz: 1.5,
        }
    }
}

/// Second-order section in transposed direct form II, normalized so `a0 = 1`.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Run the section over `x` in place, starting from the steady state of `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let x0 = x[0];
        // steady state for a constant input (unity DC gain)
        let mut z1 = (1.0 - b0) * x0;
        let mut z2 = (b2 - a2) * x0;
        for v in x.iter_mut() {
            let xi = *v;
            let yi = b0 * xi + z1;
            z1 = b1 * xi - a1 * yi + z2;
            z2 = b2 * xi - a2 * yi;
            *v = yi;
        }
    }
}

/// Digital low-pass Butterworth sections via the bilinear transform with
/// prewarping. Odd orders get one first-order section (stored with zero
/// second-order coefficients).
fn butterworth_sections(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Vec<Biquad> {
    let w = (PI * cutoff_hz / sample_rate_hz).tan();
    let w2 = w * w;
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for k in 0..order / 2 {
        // 1/Q of the k-th conjugate pole pair
        let q = 2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).sin();
        let a0 = 1.0 + q * w + w2;
        sections.push(Biquad {
            b: [w2 / a0, 2.0 * w2 / a0, w2 / a0],
            a: [(2.0 * w2 - 2.0) / a0, (1.0 - q * w + w2) / a0],
        });
    }
    if order % 2 == 1 {
        let a0 = 1.0 + w;
        sections.push(Biquad {
            b: [w / a0, w / a0, 0.0],
            a: [(w - 1.0) / a0, 0.0],
        });
    }
    sections
}

/// Magnitude response of one forward pass of the designed digital filter.
pub fn butterworth_gain(spec: FilterSpec, sample_rate_hz: f64, freq_hz: f64) -> f64 {
    let omega = 2.0 * PI * freq_hz / sample_rate_hz;
    // evaluate each section at z = e^{jω}
    let (c1, s1) = (omega.cos(), -omega.sin());
    let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
    butterworth_sections(spec.order, spec.cutoff_hz, sample_rate_hz)
        .iter()
        .map(|s| {
            let num_re = s.b[0] + s.b[1] * c1 + s.b[2] * c2;
            let num_im = s.b[1] * s1 + s.b[2] * s2;
            let den_re = 1.0 + s.a[0] * c1 + s.a[1] * c2;
            let den_im = s.a[0] * s1 + s.a[1] * s2;
            (num_re.hypot(num_im)) / (den_re.hypot(den_im))
        })
        .product()
}

fn filter_forward(sections: &[Biquad], x: &mut [f64]) {
    for s in sections {
        s.run(x);
    }
}

fn zero_lag_channel(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    // odd reflection about each end sample keeps value and slope continuous
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    filter_forward(sections, &mut ext);
    ext.reverse();
    filter_forward(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Forward-backward Butterworth low-pass: zero phase, squared magnitude.
pub fn butterworth_zero_lag(series: &TimeSeries, spec: FilterSpec) -> Result<TimeSeries> {
    spec.validate(series.sample_rate_hz())?;
    let pad = spec.pad_len();
    if series.len() <= pad {
        return Err(Error::InsufficientData {
            needed: pad + 1,
            got: series.len(),
        });
    }
    let sections = butterworth_sections(spec.order, spec.cutoff_hz, series.sample_rate_hz());
    series.map_channels(|x| Ok(zero_lag_channel(&sections, x, pad)))
}

/// Second-order accurate finite differences of order 1 or 2.
///
/// Interior samples use central stencils; the two boundary samples use
/// one-sided stencils of the same accuracy so output aligns with input.
pub fn central_diff(series: &TimeSeries, derivative_order: usize) -> Result<TimeSeries> {
    if !(1..=2).contains(&derivative_order) {
        return Err(Error::InvalidSpec(format!(
            "derivative order must be 1 or 2, got {derivative_order}"
        )));
    }
    if series.len() < 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: series.len(),
        });
    }
    let h = series.dt();
    let out = series.map_channels(|x| {
        Ok(match derivative_order {
            1 => first_derivative(x, h),
            _ => second_derivative(x, h),
        })
    })?;
    let units = match (series.units(), derivative_order) {
        ("", _) => String::new(),
        (u, 1) => format!("{u}/s"),
        (u, _) => format!("{u}/s^2"),
    };
    Ok(out.with_units(units))
}

fn first_derivative(x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - x[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h);
    d
}

fn second_derivative(x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    // 4-point one-sided stencil: the 3-point one is only first-order accurate
    d[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / h2;
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / h2;
    }
    d[n - 1] = (2.0 * x[n - 1] - 5.0 * x[n - 2] + 4.0 * x[n - 3] - x[n - 4]) / h2;
    d
}

/// Linear interpolation onto a new uniform grid over the original time span.
pub fn resample_linear(series: &TimeSeries, new_rate_hz: f64) -> Result<TimeSeries> {
    if !(new_rate_hz.is_finite() && new_rate_hz > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "resample rate must be positive, got {new_rate_hz}"
        )));
    }
    let n = series.len();
    // position in old-sample units per new sample
    let step = series.sample_rate_hz() / new_rate_hz;
    let span = (n - 1) as f64;
    let count = ((span / step) * (1.0 + 1e-12)).floor() as usize + 1;
    let dim = series.dim();
    let mut data = Vec::with_capacity(count * dim);
    for k in 0..count {
        let u = (k as f64 * step).min(span);
        let i = (u.floor() as usize).min(n - 1);
        let frac = u - i as f64;
        let a = series.sample(i);
        if frac == 0.0 {
            data.extend_from_slice(a);
        } else {
            let b = series.sample(i + 1);
            data.extend(a.iter().zip(b).map(|(&a, &b)| a + (b - a) * frac));
        }
    }
    Ok(TimeSeries {
        dim,
        data,
        sample_rate_hz: new_rate_hz,
        start_time_s: series.start_time_s(),
        channels: series.channels().to_vec(),
        units: series.units().to_string(),
    })
}

/// Filled values, retained index span and per-sample interpolation flags.
pub type FilledGaps = (Vec<Vec<f64>>, std::ops::Range<usize>, Vec<bool>);

/// Linearly fill `None` gaps between known values. Returns the filled values,
/// the index range of the retained span (leading/trailing gaps are trimmed),
/// and a flag per retained sample telling whether it was interpolated.
pub fn fill_gaps(values: &[Option<Vec<f64>>]) -> Option<FilledGaps> {
    let first = values.iter().position(Option::is_some)?;
    let last = values.iter().rposition(Option::is_some)?;
    let mut out = Vec::with_capacity(last - first + 1);
    let mut flags = Vec::with_capacity(last - first + 1);
    let mut prev = first;
    for i in first..=last {
        match &values[i] {
            Some(v) => {
                out.push(v.clone());
                flags.push(false);
                prev = i;
            }
            None => {
                let next = (i + 1..=last).find(|&j| values[j].is_some()).unwrap();
                let a = values[prev].as_ref().unwrap();
                let b = values[next].as_ref().unwrap();
                let frac = (i - prev) as f64 / (next - prev) as f64;
                out.push(a.iter().zip(b).map(|(a, b)| a + (b - a) * frac).collect());
                flags.push(true);
            }
        }
    }
    Some((out, first..last + 1, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(values: Vec<f64>, rate: f64) -> TimeSeries {
        TimeSeries::from_scalar(values, rate, 0.0).unwrap()
    }

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate).sin())
            .collect()
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = TimeSeries::new(vec![vec![1.0], vec![1.0, 2.0]], 10.0, 0.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_non_uniform_timestamps() {
        let times = [0.0, 0.1, 0.2, 0.31];
        let samples = vec![vec![0.0]; 4];
        assert!(matches!(
            TimeSeries::from_timestamps(&times, samples),
            Err(Error::InvalidInput(_))
        ));
        let ok = TimeSeries::from_timestamps(&[0.0, 0.1, 0.2, 0.3], vec![vec![0.0]; 4]).unwrap();
        assert_relative_eq!(ok.sample_rate_hz(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn filter_preserves_constant() {
        let s = scalar(vec![7.0; 200], 60.0);
        let f = butterworth_zero_lag(&s, FilterSpec::default()).unwrap();
        assert_eq!(f.len(), 200);
        for v in f.as_flat() {
            assert!((v - 7.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn filter_rejects_cutoff_at_nyquist() {
        let s = scalar(vec![0.0; 100], 10.0);
        assert!(matches!(
            butterworth_zero_lag(&s, FilterSpec::new(2, 5.0)),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn filter_rejects_short_series() {
        let s = scalar(vec![0.0; 18], 60.0);
        assert!(matches!(
            butterworth_zero_lag(&s, FilterSpec::default()),
            Err(Error::InsufficientData {
                needed: 19,
                got: 18
            })
        ));
    }

    #[test]
    fn designed_gain_is_butterworth() {
        // prewarped bilinear design matches the analog response at the cutoff
        let spec = FilterSpec::new(5, 1.5);
        let g = butterworth_gain(spec, 60.0, 1.5);
        assert_relative_eq!(g, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(butterworth_gain(spec, 60.0, 0.0), 1.0, epsilon = 1e-12);
        assert!(butterworth_gain(spec, 60.0, 15.0) < 1e-5);
    }

    #[test]
    fn odd_and_even_orders_attenuate_high_band() {
        let rate = 100.0;
        for order in 1..=6 {
            let spec = FilterSpec::new(order, 2.0);
            let x = scalar(sine(20.0, rate, 2000), rate);
            let y = butterworth_zero_lag(&x, spec).unwrap();
            let peak = y.as_flat()[800..1200]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let expected = butterworth_gain(spec, rate, 20.0).powi(2);
            assert!(
                peak < expected * 1.5 + 1e-9,
                "order {order}: {peak} vs {expected}"
            );
        }
    }

    #[test]
    fn filter_multichannel_is_per_channel() {
        let a = sine(0.5, 60.0, 300);
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v + 1.0).collect();
        let both: Vec<Vec<f64>> = a.iter().zip(&b).map(|(a, b)| vec![*a, *b]).collect();
        let s = TimeSeries::new(both, 60.0, 0.0).unwrap();
        let f = butterworth_zero_lag(&s, FilterSpec::default()).unwrap();
        let fa = butterworth_zero_lag(&scalar(a, 60.0), FilterSpec::default()).unwrap();
        for i in 0..300 {
            assert_relative_eq!(f.sample(i)[0], fa.as_flat()[i], epsilon = 1e-12);
            assert_relative_eq!(f.sample(i)[1], 3.0 * fa.as_flat()[i] + 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let s = scalar(vec![3.0; 10], 50.0);
        for order in [1, 2] {
            let d = central_diff(&s, order).unwrap();
            assert!(d.as_flat().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn second_diff_of_square_is_two() {
        let rate = 100.0;
        let x: Vec<f64> = (0..50).map(|i| (i as f64 / rate).powi(2)).collect();
        let d = central_diff(&scalar(x, rate), 2).unwrap();
        for v in d.as_flat() {
            assert!((v - 2.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn diff_requires_five_samples() {
        assert!(matches!(
            central_diff(&scalar(vec![0.0; 4], 1.0), 1),
            Err(Error::InsufficientData { needed: 5, got: 4 })
        ));
        assert!(central_diff(&scalar(vec![0.0; 5], 1.0), 3).is_err());
    }

    #[test]
    fn diff_units_propagate() {
        let s = scalar(vec![0.0; 6], 1.0).with_units("m");
        assert_eq!(central_diff(&s, 1).unwrap().units(), "m/s");
        assert_eq!(central_diff(&s, 2).unwrap().units(), "m/s^2");
    }

    #[test]
    fn resample_identity_is_bitwise() {
        let x = sine(1.3, 60.0, 123);
        let s = scalar(x.clone(), 60.0);
        let r = resample_linear(&s, 60.0).unwrap();
        assert_eq!(r.as_flat(), x.as_slice());
    }

    #[test]
    fn resample_keeps_ramp_linear() {
        let x: Vec<f64> = (0..61).map(|i| 0.5 + 2.0 * i as f64 / 60.0).collect();
        let r = resample_linear(&scalar(x, 60.0), 47.0).unwrap();
        for (i, v) in r.as_flat().iter().enumerate() {
            let t = i as f64 / 47.0;
            assert_relative_eq!(*v, 0.5 + 2.0 * t, epsilon = 1e-12);
        }
        assert!(r.end_time_s() <= 1.0 + 1e-12);
    }

    #[test]
    fn resample_rejects_bad_rate() {
        let s = scalar(vec![0.0; 3], 1.0);
        assert!(resample_linear(&s, 0.0).is_err());
        assert!(resample_linear(&s, -2.0).is_err());
    }

    #[test]
    fn fill_gaps_interpolates_and_trims() {
        let v = vec![None, Some(vec![0.0]), None, Some(vec![2.0]), None];
        let (out, range, flags) = fill_gaps(&v).unwrap();
        assert_eq!(range, 1..4);
        assert_eq!(out, vec![vec![0.0], vec![1.0], vec![2.0]]);
        assert_eq!(flags, vec![false, true, false]);
        assert!(fill_gaps(&[None, None]).is_none());
    }
}
