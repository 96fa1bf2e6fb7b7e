//! Handcrafted optical-strain features.
//!
//! Dense Horn–Schunck flow is computed between consecutive face crops, the
//! symmetric part of the flow gradient gives the strain tensor, and its
//! magnitude is averaged over the whole face and its four quadrants. Each region
//! yields a strain series whose peaks are summarised by their mean.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel `f64` raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::contract(format!(
                "plane {height}×{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn same_dims(&self, other: &Plane) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Mean over the half-open rectangle `[y0, y1) × [x0, x1)`.
    pub fn mean_in(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> f64 {
        let mut sum = 0.0;
        for y in y0..y1 {
            sum += self.data[y * self.width + x0..y * self.width + x1]
                .iter()
                .sum::<f64>();
        }
        sum / ((y1 - y0) * (x1 - x0)) as f64
    }
}

/// Spatial derivative along x and y: central differences inside, one-sided at borders.
pub fn gradient(p: &Plane) -> (Plane, Plane) {
    let (h, w) = (p.height, p.width);
    let diff = |lo: f64, hi: f64, span: usize| (hi - lo) / span as f64;
    let gx = Plane::from_fn(h, w, |y, x| {
        if w == 1 {
            0.0
        } else if x == 0 {
            diff(p.at(y, 0), p.at(y, 1), 1)
        } else if x == w - 1 {
            diff(p.at(y, w - 2), p.at(y, w - 1), 1)
        } else {
            diff(p.at(y, x - 1), p.at(y, x + 1), 2)
        }
    })
    .expect("same dims");
    let gy = Plane::from_fn(h, w, |y, x| {
        if h == 1 {
            0.0
        } else if y == 0 {
            diff(p.at(0, x), p.at(1, x), 1)
        } else if y == h - 1 {
            diff(p.at(h - 2, x), p.at(h - 1, x), 1)
        } else {
            diff(p.at(y - 1, x), p.at(y + 1, x), 2)
        }
    })
    .expect("same dims");
    (gx, gy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Plane,
    pub v: Plane,
}

impl FlowField {
    pub fn new(u: Plane, v: Plane) -> Result<Self> {
        if !u.same_dims(&v) {
            return Err(Error::contract("flow components differ in size"));
        }
        Ok(Self { u, v })
    }

    /// Anisotropic total variation: sum of absolute forward differences of u and v.
    pub fn total_variation(&self) -> f64 {
        let tv = |p: &Plane| {
            let mut s = 0.0;
            for y in 0..p.height {
                for x in 0..p.width {
                    if x + 1 < p.width {
                        s += (p.at(y, x + 1) - p.at(y, x)).abs();
                    }
                    if y + 1 < p.height {
                        s += (p.at(y + 1, x) - p.at(y, x)).abs();
                    }
                }
            }
            s
        };
        tv(&self.u) + tv(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            iterations: 100,
        }
    }
}

/// Horn–Schunck global-smoothness flow from `a` to `b`, started from zero flow
/// and refined with Jacobi sweeps using the 8-neighbour weighted average.
pub fn horn_schunck_flow(a: &Plane, b: &Plane, params: FlowParams) -> Result<FlowField> {
    if !a.same_dims(b) {
        return Err(Error::contract(format!(
            "frames differ in size: {}×{} vs {}×{}",
            a.height, a.width, b.height, b.width
        )));
    }
    if params.iterations == 0 || !(params.alpha > 0.0) {
        return Err(Error::contract("flow needs alpha > 0 and at least one iteration"));
    }
    let (h, w) = (a.height, a.width);
    let mid = Plane::new(
        h,
        w,
        a.data.iter().zip(&b.data).map(|(p, q)| 0.5 * (p + q)).collect(),
    )?;
    let (ix, iy) = gradient(&mid);
    let it: Vec<f64> = b.data.iter().zip(&a.data).map(|(q, p)| q - p).collect();
    let alpha2 = params.alpha * params.alpha;
    let denom: Vec<f64> = ix
        .data
        .iter()
        .zip(&iy.data)
        .map(|(gx, gy)| alpha2 + gx * gx + gy * gy)
        .collect();

    let mut u = vec![0.0; h * w];
    let mut v = vec![0.0; h * w];
    let mut u_next = vec![0.0; h * w];
    let mut v_next = vec![0.0; h * w];
    for _ in 0..params.iterations {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let ub = neighbour_average(&u, h, w, y, x);
                let vb = neighbour_average(&v, h, w, y, x);
                let t = (ix.data[i] * ub + iy.data[i] * vb + it[i]) / denom[i];
                u_next[i] = ub - ix.data[i] * t;
                v_next[i] = vb - iy.data[i] * t;
            }
        }
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
    }
    FlowField::new(Plane::new(h, w, u)?, Plane::new(h, w, v)?)
}

/// Weighted neighbourhood mean (1/6 edge neighbours, 1/12 corners), replicate border.
#[inline]
fn neighbour_average(f: &[f64], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(h - 1);
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let at = |yy: usize, xx: usize| f[yy * w + xx];
    (at(ym, x) + at(yp, x) + at(y, xm) + at(y, xp)) / 6.0
        + (at(ym, xm) + at(ym, xp) + at(yp, xm) + at(yp, xp)) / 12.0
}

/// Per-pixel magnitude `sqrt(εxx² + εyy² + 2·εxy²)` of the symmetric flow gradient.
pub fn strain_magnitude_map(flow: &FlowField) -> Result<Plane> {
    if flow.u.height < 2 || flow.u.width < 2 {
        return Err(Error::contract("strain needs a flow field of at least 2×2"));
    }
    let (ux, uy) = gradient(&flow.u);
    let (vx, vy) = gradient(&flow.v);
    let data = (0..ux.data.len())
        .map(|i| {
            let exx = ux.data[i];
            let eyy = vy.data[i];
            let exy = 0.5 * (uy.data[i] + vx.data[i]);
            (exx * exx + eyy * eyy + 2.0 * exy * exy).sqrt()
        })
        .collect();
    Plane::new(flow.u.height, flow.u.width, data)
}

/// Whole face plus the four quadrants (upper-left, upper-right, lower-left, lower-right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    FaceAll,
    FaceI,
    FaceII,
    FaceIII,
    FaceIV,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::FaceAll,
        Region::FaceI,
        Region::FaceII,
        Region::FaceIII,
        Region::FaceIV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::FaceAll => "FaceAll",
            Region::FaceI => "FaceI",
            Region::FaceII => "FaceII",
            Region::FaceIII => "FaceIII",
            Region::FaceIV => "FaceIV",
        }
    }

    /// Half-open `(y0, y1, x0, x1)` bounds for a `height × width` crop.
    pub fn bounds(self, height: usize, width: usize) -> (usize, usize, usize, usize) {
        let (hy, hx) = (height / 2, width / 2);
        match self {
            Region::FaceAll => (0, height, 0, width),
            Region::FaceI => (0, hy, 0, hx),
            Region::FaceII => (0, hy, hx, width),
            Region::FaceIII => (hy, height, 0, hx),
            Region::FaceIV => (hy, height, hx, width),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrainSeries {
    pub region: Region,
    pub values: Vec<f64>,
}

/// Mean strain magnitude per region for every consecutive frame pair, in
/// [`Region::ALL`] order. Each series has `frames.len() - 1` values.
pub fn strain_series(frames: &[Plane], params: FlowParams) -> Result<Vec<StrainSeries>> {
    if frames.len() < 2 {
        return Err(Error::contract(format!(
            "strain series needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let (h, w) = (frames[0].height, frames[0].width);
    if h < 2 || w < 2 {
        return Err(Error::contract("frames must be at least 2×2"));
    }
    let per_pair: Vec<[f64; 5]> = frames
        .par_windows(2)
        .map(|pair| -> Result<[f64; 5]> {
            let flow = horn_schunck_flow(&pair[0], &pair[1], params)?;
            let map = strain_magnitude_map(&flow)?;
            Ok(Region::ALL.map(|r| {
                let (y0, y1, x0, x1) = r.bounds(h, w);
                map.mean_in(y0, y1, x0, x1)
            }))
        })
        .collect::<Result<_>>()?;
    Ok(Region::ALL
        .iter()
        .enumerate()
        .map(|(k, &region)| StrainSeries {
            region,
            values: per_pair.iter().map(|m| m[k]).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Minimum prominence as a fraction of the series maximum.
    pub min_prominence: f64,
    /// Minimum index distance between reported peaks.
    pub min_separation: usize,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            min_prominence: 0.3,
            min_separation: 5,
        }
    }
}

/// Strict interior local maxima with enough prominence, thinned so that kept
/// peaks are at least `min_separation` apart (taller first, earlier on ties).
pub fn detect_peaks(values: &[f64], params: PeakParams) -> Vec<usize> {
    let n = values.len();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n < 3 || !(max > 0.0) {
        return Vec::new();
    }
    let threshold = params.min_prominence * max;
    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .filter(|&i| prominence(values, i) >= threshold)
        .collect();

    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| k.abs_diff(c) >= params.min_separation) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

/// Height above the higher of the two bases reached before a taller point.
fn prominence(values: &[f64], peak: usize) -> f64 {
    let top = values[peak];
    let mut left_min = top;
    for &v in values[..peak].iter().rev() {
        if v > top {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = top;
    for &v in &values[peak + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

/// Named per-region peak statistics. The first five entries are always the
/// region means; `extended` appends per-region max and standard deviation.
pub fn peak_statistics(series: &[StrainSeries], params: PeakParams, extended: bool) -> Vec<(String, f64)> {
    let peak_values: Vec<(Region, Vec<f64>)> = series
        .iter()
        .map(|s| {
            let vals = detect_peaks(&s.values, params)
                .into_iter()
                .map(|i| s.values[i])
                .collect();
            (s.region, vals)
        })
        .collect();
    let mut out: Vec<(String, f64)> = peak_values
        .iter()
        .map(|(r, v)| (format!("{}_mean", r.name()), mean(v)))
        .collect();
    if extended {
        for (r, v) in &peak_values {
            let max = v.iter().copied().fold(0.0, f64::max);
            out.push((format!("{}_max", r.name()), max));
        }
        for (r, v) in &peak_values {
            let m = mean(v);
            let var = if v.is_empty() {
                0.0
            } else {
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            out.push((format!("{}_std", r.name()), var.sqrt()));
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn canonical_feature_names() -> Vec<String> {
    Region::ALL
        .iter()
        .map(|r| format!("{}_mean", r.name()))
        .collect()
}
