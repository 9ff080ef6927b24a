//! Maximum Lyapunov exponent of a scalar kinematic signal.
//!
//! The state space is rebuilt by delay embedding; every state's nearest
//! neighbour (outside a temporal exclusion window) is followed forward in
//! time and the mean log separation is fitted by least squares over a short
//! and a long window (Rosenstein's method).

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Separations below this are clamped before taking logarithms.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// Default reconstruction delay in seconds.
pub const DEFAULT_DELAY_S: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub delay_samples: usize,
    pub dimension: usize,
}

impl EmbeddingSpec {
    pub fn new(delay_samples: usize, dimension: usize) -> Self {
        Self {
            delay_samples,
            dimension,
        }
    }

    /// Planar reconstruction with the default 0.6 s delay at `sample_rate_hz`.
    pub fn default_for_rate(sample_rate_hz: f64) -> Self {
        Self {
            delay_samples: ((DEFAULT_DELAY_S * sample_rate_hz).round() as usize).max(1),
            dimension: 2,
        }
    }

    fn span(&self) -> usize {
        (self.dimension - 1) * self.delay_samples
    }
}

/// Delay-embedded states stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput(
                "trajectory points need one common nonzero dimension".into(),
            ));
        }
        Ok(Self {
            dim,
            data: points.into_iter().flatten().collect(),
        })
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

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// State vectors `(x_i, x_{i+τ}, …, x_{i+(m−1)τ})`.
pub fn delay_embed(series: &TimeSeries, spec: EmbeddingSpec) -> Result<Trajectory> {
    if series.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "delay embedding needs a scalar series, got dimension {}",
            series.dim()
        )));
    }
    if spec.dimension < 2 {
        return Err(Error::InvalidSpec(format!(
            "embedding dimension must be at least 2, got {}",
            spec.dimension
        )));
    }
    if spec.delay_samples < 1 {
        return Err(Error::InvalidSpec(
            "embedding delay must be at least 1 sample".into(),
        ));
    }
    let x = series.as_flat();
    let n = x.len();
    if spec.span() >= n {
        return Err(Error::InsufficientData {
            needed: spec.span() + 1,
            got: n,
        });
    }
    let count = n - spec.span();
    let mut data = Vec::with_capacity(count * spec.dimension);
    for i in 0..count {
        data.extend((0..spec.dimension).map(|k| x[i + k * spec.delay_samples]));
    }
    Ok(Trajectory {
        dim: spec.dimension,
        data,
    })
}

/// Reciprocal of the power-weighted mean frequency of a scalar series.
pub fn mean_period_s(series: &TimeSeries) -> Result<f64> {
    let x = series.as_flat();
    let n = x.len();
    if series.dim() != 1 || n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let power = c.norm_sqr();
        num += power * k as f64 * series.sample_rate_hz() / n as f64;
        den += power;
    }
    if den <= 0.0 || num <= 0.0 {
        return Err(Error::DegenerateData(
            "signal has no variation to define a mean period".into(),
        ));
    }
    Ok(den / num)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCurve {
    /// Mean natural-log separation against time since the pair was formed.
    pub mean_log_divergence: TimeSeries,
    pub pair_counts: Vec<usize>,
}

impl DivergenceCurve {
    pub fn len(&self) -> usize {
        self.pair_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_counts.is_empty()
    }

    pub fn domain_end_s(&self) -> f64 {
        self.mean_log_divergence.end_time_s()
    }
}

/// Nearest neighbour of every state under the temporal exclusion, or `None`.
fn nearest_neighbours(traj: &Trajectory, exclusion: usize) -> Vec<Option<(usize, f64)>> {
    let m = traj.len();
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if i.abs_diff(j) <= exclusion {
                    continue;
                }
                let d = traj.dist(i, j);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best
        })
        .collect()
}

/// Mean log separation of nearest-neighbour pairs followed forward in time.
///
/// Neighbours must be separated by more than `mean_period_s`; pairs leaving
/// the end of the trajectory drop out of later steps. The curve stops early
/// if no pair survives.
pub fn rosenstein_divergence(
    traj: &Trajectory,
    sample_rate_hz: f64,
    mean_period_s: f64,
    max_horizon_s: f64,
) -> Result<DivergenceCurve> {
    if !(sample_rate_hz > 0.0 && mean_period_s >= 0.0 && max_horizon_s >= 0.0) {
        return Err(Error::InvalidSpec(
            "rate must be positive, mean period and horizon nonnegative".into(),
        ));
    }
    let m = traj.len();
    // strictly more than the mean period apart
    let exclusion = (mean_period_s * sample_rate_hz * (1.0 + 1e-12)).floor() as usize;
    let pairs: Vec<(usize, usize)> = nearest_neighbours(traj, exclusion)
        .into_iter()
        .enumerate()
        .filter_map(|(i, nn)| nn.map(|(j, _)| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateData(format!(
            "no neighbour pairs among {m} states separated by more than {mean_period_s} s"
        )));
    }
    let horizon = (max_horizon_s * sample_rate_hz + 1e-9).floor() as usize;
    let mut means = Vec::with_capacity(horizon + 1);
    let mut counts = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let (sum, count) = pairs
            .iter()
            .filter(|(i, j)| i + k < m && j + k < m)
            .fold((0.0, 0usize), |(s, c), (i, j)| {
                (s + traj.dist(i + k, j + k).max(DISTANCE_FLOOR).ln(), c + 1)
            });
        if count == 0 {
            break;
        }
        means.push(sum / count as f64);
        counts.push(count);
    }
    Ok(DivergenceCurve {
        mean_log_divergence: TimeSeries::from_scalar(means, sample_rate_hz, 0.0)?
            .with_channels(["mean_log_div"]),
        pair_counts: counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Slope over the short window, 1/s.
    pub lambda_short: f64,
    /// Slope over the long window, 1/s.
    pub lambda_long: f64,
    pub fit_windows: [(f64, f64); 2],
    /// RMS residual of each straight-line fit.
    pub fit_residuals: [f64; 2],
}

/// Ordinary least-squares slope and RMS residual over points with t in `window`.
fn window_slope(curve: &DivergenceCurve, window: (f64, f64)) -> Result<(f64, f64)> {
    let series = &curve.mean_log_divergence;
    let domain_end = curve.domain_end_s();
    let eps = 1e-9 * series.dt();
    let invalid = || Error::InvalidWindow {
        start: window.0,
        end: window.1,
        domain_end,
    };
    if !(window.0 >= -eps && window.1 <= domain_end + eps && window.0 < window.1) {
        return Err(invalid());
    }
    let pts: Vec<(f64, f64)> = series
        .times()
        .into_iter()
        .zip(series.as_flat().iter().copied())
        .filter(|(t, _)| *t >= window.0 - eps && *t <= window.1 + eps)
        .collect();
    if pts.len() < 3 {
        return Err(invalid());
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    let slope = sxy / sxx;
    let rms = (pts
        .iter()
        .map(|(t, y)| (y - ym - slope * (t - tm)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, rms))
}

/// Short- and long-term exponents from a divergence curve.
pub fn lyapunov_fit(
    curve: &DivergenceCurve,
    short_window: (f64, f64),
    long_window: (f64, f64),
) -> Result<LyapunovResult> {
    if short_window.1 > long_window.0 + 1e-12 {
        return Err(Error::InvalidWindow {
            start: long_window.0,
            end: long_window.1,
            domain_end: curve.domain_end_s(),
        });
    }
    let (lambda_short, r_short) = window_slope(curve, short_window)?;
    let (lambda_long, r_long) = window_slope(curve, long_window)?;
    Ok(LyapunovResult {
        lambda_short,
        lambda_long,
        fit_windows: [short_window, long_window],
        fit_residuals: [r_short, r_long],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub short_window_s: (f64, f64),
    pub long_window_s: (f64, f64),
    /// Temporal exclusion for neighbours; estimated from the spectrum when absent.
    pub mean_period_s: Option<f64>,
    /// Divergence horizon; defaults to the end of the long window.
    pub max_horizon_s: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            short_window_s: (0.0, 0.5),
            long_window_s: (1.0, 2.5),
            mean_period_s: None,
            max_horizon_s: None,
        }
    }
}

/// Divergence curve plus the fitted exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovAnalysis {
    pub curve: DivergenceCurve,
    pub result: LyapunovResult,
    pub mean_period_s: f64,
}

pub fn lyapunov_analysis(
    series: &TimeSeries,
    embedding: EmbeddingSpec,
    config: &FitConfig,
) -> Result<LyapunovAnalysis> {
    let traj = delay_embed(series, embedding)?;
    let mean_period = match config.mean_period_s {
        Some(p) => p,
        None => mean_period_s(series)?,
    };
    let horizon = config.max_horizon_s.unwrap_or(config.long_window_s.1);
    let curve = rosenstein_divergence(&traj, series.sample_rate_hz(), mean_period, horizon)?;
    let result = lyapunov_fit(&curve, config.short_window_s, config.long_window_s)?;
    Ok(LyapunovAnalysis {
        curve,
        result,
        mean_period_s: mean_period,
    })
}

pub fn lyapunov_from_series(
    series: &TimeSeries,
    embedding: EmbeddingSpec,
    config: &FitConfig,
) -> Result<LyapunovResult> {
    lyapunov_analysis(series, embedding, config).map(|a| a.result)
}
