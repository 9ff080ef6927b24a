//! Grayscale template tracking by zero-normalized cross-correlation and the
//! head-acceleration pipeline built on it.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{butterworth_zero_lag, central_diff, fill_gaps, FilterSpec, TimeSeries};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    frame_index: usize,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, frame_index: usize) -> Result<Self> {
        if width == 0 || height == 0 || width * height != pixels.len() {
            return Err(Error::InvalidInput(format!(
                "{width}x{height} frame needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("frame has non-finite intensity".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            frame_index,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Copy of the `w`×`h` patch whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayFrame> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::InvalidInput(format!(
                "crop {w}x{h} at ({x}, {y}) leaves the {}x{} frame",
                self.width, self.height
            )));
        }
        let pixels = (y..y + h)
            .flat_map(|r| {
                self.pixels[r * self.width + x..r * self.width + x + w]
                    .iter()
                    .copied()
            })
            .collect();
        GrayFrame::new(w, h, pixels, self.frame_index)
    }

    pub fn map_pixels(&self, f: impl Fn(f64) -> f64) -> GrayFrame {
        GrayFrame {
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
            ..self.clone()
        }
    }

    pub fn mirrored(&self) -> GrayFrame {
        let pixels = self
            .pixels
            .chunks_exact(self.width)
            .flat_map(|row| row.iter().rev().copied())
            .collect();
        GrayFrame {
            pixels,
            ..self.clone()
        }
    }
}

/// A patch with nonzero intensity variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    patch: GrayFrame,
    centered: Vec<f64>,
    norm: f64,
}

impl Template {
    pub fn new(patch: GrayFrame) -> Result<Self> {
        let n = patch.pixels.len() as f64;
        let mean = patch.pixels.iter().sum::<f64>() / n;
        let centered: Vec<f64> = patch.pixels.iter().map(|p| p - mean).collect();
        let norm = centered.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm <= 1e-9 {
            return Err(Error::InvalidInput(
                "template has zero intensity variance".into(),
            ));
        }
        Ok(Self {
            patch,
            centered,
            norm,
        })
    }

    pub fn width(&self) -> usize {
        self.patch.width
    }

    pub fn height(&self) -> usize {
        self.patch.height
    }

    pub fn patch(&self) -> &GrayFrame {
        &self.patch
    }

    pub fn mirrored(&self) -> Template {
        Template::new(self.patch.mirrored()).expect("mirroring keeps variance")
    }

    /// Zero-normalized cross-correlation with the window at `(x, y)`.
    fn score_at(&self, frame: &GrayFrame, x: usize, y: usize) -> f64 {
        let (w, h) = (self.width(), self.height());
        let n = (w * h) as f64;
        let mut sum = 0.0;
        for r in 0..h {
            let row = &frame.pixels[(y + r) * frame.width + x..][..w];
            sum += row.iter().sum::<f64>();
        }
        let mean = sum / n;
        let mut cross = 0.0;
        let mut ss = 0.0;
        for r in 0..h {
            let row = &frame.pixels[(y + r) * frame.width + x..][..w];
            let trow = &self.centered[r * w..][..w];
            for (p, t) in row.iter().zip(trow) {
                let d = p - mean;
                cross += d * t;
                ss += d * d;
            }
        }
        // flat windows: correlation undefined, scored 0
        if ss <= 1e-12 * n {
            return 0.0;
        }
        (cross / (ss.sqrt() * self.norm)).clamp(-1.0, 1.0)
    }
}

/// Best placement: template top-left in pixels, and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// Inclusive placement bounds `(x0, x1, y0, y1)`.
type Region = (usize, usize, usize, usize);

fn search(frame: &GrayFrame, template: &Template, region: Region) -> Match {
    let (x0, x1, y0, y1) = region;
    let row_best: Vec<Match> = (y0..=y1)
        .into_par_iter()
        .map(|y| {
            let mut best = Match {
                x: x0,
                y,
                score: f64::NEG_INFINITY,
            };
            for x in x0..=x1 {
                let s = template.score_at(frame, x, y);
                if s > best.score {
                    best = Match { x, y, score: s };
                }
            }
            best
        })
        .collect();
    // strict comparison in row order keeps the smallest (y, x) on ties
    row_best
        .into_iter()
        .fold(None, |acc: Option<Match>, m| match acc {
            Some(b) if b.score >= m.score => Some(b),
            _ => Some(m),
        })
        .expect("nonempty search region")
}

fn full_region(frame: &GrayFrame, template: &Template) -> Result<Region> {
    if template.width() > frame.width || template.height() > frame.height {
        return Err(Error::InvalidInput(format!(
            "{}x{} template does not fit the {}x{} frame",
            template.width(),
            template.height(),
            frame.width,
            frame.height
        )));
    }
    Ok((
        0,
        frame.width - template.width(),
        0,
        frame.height - template.height(),
    ))
}

/// Exhaustive search over every placement of the template.
pub fn ncc_match(frame: &GrayFrame, template: &Template) -> Result<Match> {
    Ok(search(frame, template, full_region(frame, template)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub threshold: f64,
    /// Restrict each search to this many pixels around the last valid hit.
    pub search_radius: Option<usize>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            search_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    pub score: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub results: Vec<TrackResult>,
    /// Template top-left `(x, y)` over the retained span of frames.
    pub positions: TimeSeries,
    /// Per retained sample: filled in from neighbouring valid frames.
    pub interpolated: Vec<bool>,
    pub trimmed_leading: usize,
    pub trimmed_trailing: usize,
}

pub fn track_sequence(
    frames: &[GrayFrame],
    template: &Template,
    options: TrackOptions,
    rate_hz: Option<f64>,
) -> Result<TrackOutput> {
    let first = frames
        .first()
        .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
    if let Some(f) = frames
        .iter()
        .find(|f| f.width != first.width || f.height != first.height)
    {
        return Err(Error::InvalidInput(format!(
            "frame {} is {}x{}, expected {}x{}",
            f.frame_index, f.width, f.height, first.width, first.height
        )));
    }
    let full = full_region(first, template)?;
    let matches: Vec<Match> = match options.search_radius {
        None => frames.iter().map(|f| search(f, template, full)).collect(),
        Some(radius) => {
            let mut last: Option<Match> = None;
            frames
                .iter()
                .map(|f| {
                    let region = match last {
                        None => full,
                        Some(m) => (
                            m.x.saturating_sub(radius),
                            (m.x + radius).min(full.1),
                            m.y.saturating_sub(radius),
                            (m.y + radius).min(full.3),
                        ),
                    };
                    let m = search(f, template, region);
                    if m.score >= options.threshold {
                        last = Some(m);
                    }
                    m
                })
                .collect()
        }
    };
    let results: Vec<TrackResult> = frames
        .iter()
        .zip(&matches)
        .map(|(f, m)| TrackResult {
            frame_index: f.frame_index,
            x: m.x,
            y: m.y,
            score: m.score,
            valid: m.score >= options.threshold,
        })
        .collect();
    let known: Vec<Option<Vec<f64>>> = results
        .iter()
        .map(|r| r.valid.then(|| vec![r.x as f64, r.y as f64]))
        .collect();
    let (values, range, interpolated) =
        fill_gaps(&known).ok_or(Error::TrackingLost(options.threshold))?;
    let rate = rate_hz.unwrap_or(1.0);
    let positions = TimeSeries::new(values, rate, range.start as f64 / rate)?
        .with_channels(["x", "y"])
        .with_units(if rate_hz.is_some() {
            "px"
        } else {
            "px (per frame)"
        });
    Ok(TrackOutput {
        trimmed_leading: range.start,
        trimmed_trailing: frames.len() - range.end,
        results,
        positions,
        interpolated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadAcceleration {
    pub track: TrackOutput,
    /// Filtered second derivative of the tracked position, channels `x`, `y`.
    pub acceleration: TimeSeries,
}

/// Track, differentiate twice and low-pass filter.
///
/// Without a frame rate, time is counted in frames and the filter cutoff is
/// read in cycles per frame; without a scale, lengths stay in pixels.
pub fn head_acceleration_pipeline(
    frames: &[GrayFrame],
    template: &Template,
    filter: FilterSpec,
    scale_m_per_px: Option<f64>,
    rate_hz: Option<f64>,
    options: TrackOptions,
) -> Result<HeadAcceleration> {
    if let Some(s) = scale_m_per_px {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale must be positive, got {s}"
            )));
        }
    }
    let track = track_sequence(frames, template, options, rate_hz)?;
    if track.positions.len() < 5 {
        return Err(Error::InsufficientData {
            needed: 5,
            got: track.positions.len(),
        });
    }
    let scale = scale_m_per_px.unwrap_or(1.0);
    let scaled = track
        .positions
        .map_channels(|c| Ok(c.iter().map(|v| v * scale).collect()))?;
    let raw = central_diff(&scaled, 2)?;
    let acceleration = butterworth_zero_lag(&raw, filter)?.with_units(
        match (scale_m_per_px.is_some(), rate_hz.is_some()) {
            (true, true) => "m/s^2",
            (false, true) => "px/s^2",
            (true, false) => "m/frame^2 (a.u.)",
            (false, false) => "px/frame^2 (a.u.)",
        },
    );
    Ok(HeadAcceleration {
        track,
        acceleration,
    })
}

/// Read a binary PGM (P5, maxval 255); intensities are divided by 255.
pub fn read_pgm(path: impl AsRef<Path>, frame_index: usize) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path, frame_index)
}

pub fn parse_pgm(bytes: &[u8], path: &Path, frame_index: usize) -> Result<GrayFrame> {
    let err = |message: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: message.to_string(),
    };
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // whitespace and comments between header tokens
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated PGM header"));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(err("not a binary PGM (expected P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad PGM header number"));
    let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if maxval != 255 {
        return Err(err("only 8-bit PGM (maxval 255) is supported"));
    }
    // exactly one whitespace byte precedes the raster
    pos += 1;
    let raster = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| err("PGM raster is shorter than width x height"))?;
    GrayFrame::new(
        w,
        h,
        raster.iter().map(|&b| b as f64 / 255.0).collect(),
        frame_index,
    )
}

/// Write a frame as binary PGM, rounding intensities to 8 bits.
pub fn write_pgm(path: impl AsRef<Path>, frame: &GrayFrame) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(
        frame
            .pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

/// All `.pgm` files in a directory, in lexicographic order.
pub fn read_pgm_dir(dir: impl AsRef<Path>) -> Result<Vec<GrayFrame>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingInput(format!(
            "no .pgm frames in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| read_pgm(p, i))
        .collect()
}
