//! Landmark-driven face registration and key-frame selection.
//!
//! Frames arrive with 49 tracked landmarks; frames flagged as tracking failures
//! are skipped. Faces are cropped to the landmark bounding box (plus a margin),
//! resized bilinearly and converted to mean-subtracted CNN input tensors.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::strain::Plane;
use crate::tensor::Tensor;

pub const LANDMARK_COUNT: usize = 49;
pub const INPUT_SIZE: usize = 224;
pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_TAU: f64 = 1.5;

/// 8-bit image with 1 (grayscale) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::contract(format!(
                "{height}×{width}×{channels} image needs {} bytes, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Luma plane (ITU-R 601 weights for RGB input).
    pub fn to_gray(&self) -> Plane {
        let data = self
            .pixels
            .chunks_exact(self.channels)
            .map(|p| match p {
                [g] => *g as f64,
                [r, g, b] => 0.299 * *r as f64 + 0.587 * *g as f64 + 0.114 * *b as f64,
                _ => unreachable!("validated channel count"),
            })
            .collect();
        Plane::new(self.height, self.width, data).expect("validated dimensions")
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Self::new(h as usize, w as usize, 1, g.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Self::new(h as usize, w as usize, 3, rgb.into_raw())
            }
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            color,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }
}

/// Tracker output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub frame_index: usize,
    pub points: Vec<(f64, f64)>,
    pub failed: bool,
}

impl LandmarkFrame {
    pub fn new(frame_index: usize, points: Vec<(f64, f64)>) -> Result<Self> {
        let frame = Self {
            frame_index,
            points,
            failed: false,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn failed(frame_index: usize) -> Self {
        Self {
            frame_index,
            points: Vec::new(),
            failed: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.failed {
            return Ok(());
        }
        if self.points.len() != LANDMARK_COUNT {
            return Err(Error::contract(format!(
                "frame {}: expected {LANDMARK_COUNT} landmarks, got {}",
                self.frame_index,
                self.points.len()
            )));
        }
        if self.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::contract(format!(
                "frame {}: non-finite landmark",
                self.frame_index
            )));
        }
        Ok(())
    }

    /// Mean Euclidean distance between corresponding landmarks.
    pub fn mean_displacement(&self, other: &LandmarkFrame) -> f64 {
        let total: f64 = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
            .sum();
        total / self.points.len().max(1) as f64
    }
}

/// Landmark CSV: `frame_index,failed,x1..x49,y1..y49`. Failed rows may leave
/// coordinates blank.
pub fn read_landmarks<R: Read>(r: R) -> Result<Vec<LandmarkFrame>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut frames = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::contract("landmark row needs frame_index and failed"));
        }
        let frame_index: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| Error::contract(format!("bad frame_index `{}`: {e}", &rec[0])))?;
        let failed = match rec[1].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::contract(format!("bad failed flag `{other}`"))),
        };
        if failed {
            frames.push(LandmarkFrame::failed(frame_index));
            continue;
        }
        if rec.len() != 2 + 2 * LANDMARK_COUNT {
            return Err(Error::contract(format!(
                "frame {frame_index}: expected {} columns, got {}",
                2 + 2 * LANDMARK_COUNT,
                rec.len()
            )));
        }
        let coord = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::contract(format!("frame {frame_index}: bad coordinate: {e}")))
        };
        let mut points = Vec::with_capacity(LANDMARK_COUNT);
        for k in 0..LANDMARK_COUNT {
            points.push((coord(2 + k)?, coord(2 + LANDMARK_COUNT + k)?));
        }
        frames.push(LandmarkFrame::new(frame_index, points)?);
    }
    Ok(frames)
}

pub fn write_landmarks<W: Write>(w: W, frames: &[LandmarkFrame]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["frame_index".to_string(), "failed".to_string()];
    header.extend((1..=LANDMARK_COUNT).map(|k| format!("x{k}")));
    header.extend((1..=LANDMARK_COUNT).map(|k| format!("y{k}")));
    wr.write_record(&header)?;
    for f in frames {
        let mut rec = vec![f.frame_index.to_string(), u8::from(f.failed).to_string()];
        if f.failed {
            rec.extend(std::iter::repeat_n(String::new(), 2 * LANDMARK_COUNT));
        } else {
            rec.extend(f.points.iter().map(|p| p.0.to_string()));
            rec.extend(f.points.iter().map(|p| p.1.to_string()));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Integer crop rectangle, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CropBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// Landmark bounding box grown by `margin` × extent on each side, clamped to the image.
/// Returns `None` for failed frames.
pub fn face_box(
    landmarks: &LandmarkFrame,
    margin: f64,
    height: usize,
    width: usize,
) -> Result<Option<CropBox>> {
    if landmarks.failed {
        return Ok(None);
    }
    landmarks.validate()?;
    if !(margin >= 0.0) {
        return Err(Error::contract(format!("margin must be ≥ 0, got {margin}")));
    }
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &landmarks.points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let (ex, ey) = (max_x - min_x, max_y - min_y);
    if ex <= 0.0 || ey <= 0.0 {
        return Err(Error::contract(format!(
            "frame {}: degenerate landmark bounding box",
            landmarks.frame_index
        )));
    }
    const EPS: f64 = 1e-9;
    let lo = |v: f64| (v + EPS).floor().max(0.0);
    let hi = |v: f64, limit: usize| (v - EPS).ceil().min(limit as f64 - 1.0);
    let x0 = lo(min_x - margin * ex);
    let y0 = lo(min_y - margin * ey);
    let x1 = hi(max_x + margin * ex, width);
    let y1 = hi(max_y + margin * ey, height);
    if x1 < x0 || y1 < y0 {
        return Err(Error::contract(format!(
            "frame {}: face box lies outside the image",
            landmarks.frame_index
        )));
    }
    Ok(Some(CropBox {
        x0: x0 as usize,
        y0: y0 as usize,
        x1: x1 as usize,
        y1: y1 as usize,
    }))
}

pub fn crop(image: &Image, b: CropBox) -> Result<Image> {
    let c = image.channels;
    let mut pixels = Vec::with_capacity(b.width() * b.height() * c);
    for y in b.y0..=b.y1 {
        let row = &image.pixels[(y * image.width + b.x0) * c..(y * image.width + b.x1 + 1) * c];
        pixels.extend_from_slice(row);
    }
    Image::new(b.height(), b.width(), c, pixels)
}

/// Crops the face region; `Ok(None)` means the frame is a tracking failure and
/// must be excluded.
pub fn crop_face(image: &Image, landmarks: &LandmarkFrame, margin: f64) -> Result<Option<Image>> {
    match face_box(landmarks, margin, image.height, image.width)? {
        Some(b) => crop(image, b).map(Some),
        None => Ok(None),
    }
}

/// Bilinear resize with corner-aligned sampling: output corners sample input corners.
pub fn resize_bilinear(image: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::contract("output dimensions must be positive"));
    }
    if out_h == image.height && out_w == image.width {
        return Ok(image.clone());
    }
    let c = image.channels;
    let scale = |n_in: usize, n_out: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let (sy, sx) = (scale(image.height, out_h), scale(image.width, out_w));
    let taps = |pos: f64, n: usize| {
        let i0 = (pos.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| taps(x as f64 * sx, image.width)).collect();
    let mut pixels = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y as f64 * sy, image.height);
        for &(x0, x1, fx) in &cols {
            for ch in 0..c {
                let p = |yy: usize, xx: usize| image.get(yy, xx, ch) as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(out_h, out_w, c, pixels)
}

/// Greedy near-duplicate removal: keeps the first usable frame, then any frame
/// whose mean landmark displacement from the last kept frame exceeds `tau`.
/// Returns the kept frames' `frame_index` values.
pub fn select_key_frames(frames: &[LandmarkFrame], tau: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut last: Option<&LandmarkFrame> = None;
    for f in frames.iter().filter(|f| !f.failed) {
        match last {
            Some(prev) if f.mean_displacement(prev) <= tau => {}
            _ => {
                kept.push(f.frame_index);
                last = Some(f);
            }
        }
    }
    if kept.is_empty() {
        log::warn!("key-frame selection: every frame is a tracking failure");
    }
    kept
}

/// Float conversion with per-channel mean subtraction; grayscale is replicated to RGB.
pub fn to_tensor(image: &Image, channel_means: [f32; 3]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(image.height * image.width * 3);
    for px in image.pixels.chunks_exact(image.channels) {
        for (c, mean) in channel_means.iter().enumerate() {
            let v = if image.channels == 1 { px[0] } else { px[c] };
            data.push(v as f32 - mean);
        }
    }
    Tensor::new(vec![image.height, image.width, 3], data)
}

/// [`to_tensor`] for the fixed 224 × 224 network input.
pub fn to_input_tensor(image: &Image, channel_means: [f32; 3]) -> Result<Tensor> {
    if image.height != INPUT_SIZE || image.width != INPUT_SIZE {
        return Err(Error::contract(format!(
            "network input must be {INPUT_SIZE}×{INPUT_SIZE}, got {}×{}",
            image.height, image.width
        )));
    }
    to_tensor(image, channel_means)
}

/// Crop then resize to `size` × `size`; `None` for failed frames.
pub fn register_face(
    image: &Image,
    landmarks: &LandmarkFrame,
    margin: f64,
    size: usize,
) -> Result<Option<Image>> {
    match crop_face(image, landmarks, margin)? {
        Some(face) => resize_bilinear(&face, size, size).map(Some),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 49 points on the border of the square [lo, hi]².
    fn square_points(lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut pts = vec![(lo, lo), (hi, hi), (lo, hi), (hi, lo)];
        while pts.len() < LANDMARK_COUNT {
            let t = pts.len() as f64 / LANDMARK_COUNT as f64;
            pts.push((lo + t * (hi - lo), lo + 0.5 * (hi - lo)));
        }
        pts
    }

    fn gradient_image(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |y, x, c| ((x * 3 + y * 5 + c * 40) % 256) as u8).unwrap()
    }

    #[test]
    fn crop_without_margin() {
        let img = gradient_image(80, 80);
        let lm = LandmarkFrame::new(0, square_points(10.0, 50.0)).unwrap();
        let face = crop_face(&img, &lm, 0.0).unwrap().unwrap();
        assert_eq!((face.height(), face.width()), (41, 41));
        assert_eq!(face.get(0, 0, 0), img.get(10, 10, 0));
        assert_eq!(face.get(40, 40, 2), img.get(50, 50, 2));
    }

    #[test]
    fn crop_with_margin() {
        let lm = LandmarkFrame::new(0, square_points(10.0, 50.0)).unwrap();
        let b = face_box(&lm, 0.2, 80, 80).unwrap().unwrap();
        assert_eq!(
            b,
            CropBox {
                x0: 2,
                y0: 2,
                x1: 58,
                y1: 58
            }
        );
        let clamped = face_box(&lm, 0.2, 55, 55).unwrap().unwrap();
        assert_eq!((clamped.x1, clamped.y1), (54, 54));
    }

    #[test]
    fn failed_frame_is_skipped() {
        let img = gradient_image(20, 20);
        assert!(crop_face(&img, &LandmarkFrame::failed(3), 0.1)
            .unwrap()
            .is_none());
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let lm = LandmarkFrame::new(0, vec![(5.0, 5.0); LANDMARK_COUNT]).unwrap();
        assert!(face_box(&lm, 0.1, 20, 20).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gradient_image(INPUT_SIZE, INPUT_SIZE);
        assert_eq!(resize_bilinear(&img, INPUT_SIZE, INPUT_SIZE).unwrap(), img);
        let flat = Image::from_fn(37, 53, 3, |_, _, c| [12, 200, 77][c]).unwrap();
        let out = resize_bilinear(&flat, INPUT_SIZE, INPUT_SIZE).unwrap();
        assert!(out
            .pixels()
            .chunks_exact(3)
            .all(|p| p == [12, 200, 77]));
    }

    #[test]
    fn resize_keeps_checkerboard_corners() {
        let board = Image::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let out = resize_bilinear(&board, INPUT_SIZE, INPUT_SIZE).unwrap();
        let last = INPUT_SIZE - 1;
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(0, last, 0), 255);
        assert_eq!(out.get(last, 0, 0), 255);
        assert_eq!(out.get(last, last, 0), 0);
    }

    fn shifted(index: usize, dx: f64) -> LandmarkFrame {
        let pts = square_points(10.0, 50.0)
            .into_iter()
            .map(|(x, y)| (x + dx, y))
            .collect();
        LandmarkFrame::new(index, pts).unwrap()
    }

    #[test]
    fn key_frames_static_video() {
        let frames: Vec<_> = (0..5).map(|i| shifted(i, 0.0)).collect();
        assert_eq!(select_key_frames(&frames, 1.0), vec![0]);
    }

    #[test]
    fn key_frames_tau_zero_keeps_moving_frames() {
        let frames: Vec<_> = (0..5).map(|i| shifted(i, i as f64 * 0.1)).collect();
        assert_eq!(select_key_frames(&frames, 0.0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn key_frames_hand_trace() {
        // consecutive displacements 0.5, 2.0, 0.3
        let frames = vec![
            shifted(0, 0.0),
            shifted(1, 0.5),
            shifted(2, 2.5),
            shifted(3, 2.8),
        ];
        assert_eq!(select_key_frames(&frames, 1.0), vec![0, 2]);
    }

    #[test]
    fn key_frames_skip_failures() {
        let frames = vec![
            LandmarkFrame::failed(0),
            shifted(1, 0.0),
            LandmarkFrame::failed(2),
            shifted(3, 5.0),
        ];
        assert_eq!(select_key_frames(&frames, 1.0), vec![1, 3]);
        assert!(select_key_frames(&[LandmarkFrame::failed(0)], 1.0).is_empty());
    }

    #[test]
    fn input_tensor_conversion() {
        let img = gradient_image(INPUT_SIZE, INPUT_SIZE);
        let t = to_input_tensor(&img, [0.0; 3]).unwrap();
        assert!(t
            .data()
            .iter()
            .zip(img.pixels())
            .all(|(&a, &b)| a == b as f32));

        let flat = Image::from_fn(INPUT_SIZE, INPUT_SIZE, 3, |_, _, c| [10, 20, 30][c]).unwrap();
        let t = to_input_tensor(&flat, [10.0, 20.0, 30.0]).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));

        let gray = Image::from_fn(INPUT_SIZE, INPUT_SIZE, 1, |y, x, _| ((x + y) % 256) as u8).unwrap();
        let t = to_input_tensor(&gray, [0.0; 3]).unwrap();
        assert!(t.data().chunks_exact(3).all(|p| p[0] == p[1] && p[1] == p[2]));

        assert!(to_input_tensor(&gradient_image(10, 10), [0.0; 3]).is_err());
    }

    #[test]
    fn landmark_csv_roundtrip() {
        let frames = vec![shifted(0, 0.25), LandmarkFrame::failed(1), shifted(2, 1.5)];
        let mut buf = Vec::new();
        write_landmarks(&mut buf, &frames).unwrap();
        assert_eq!(read_landmarks(buf.as_slice()).unwrap(), frames);
    }
}
