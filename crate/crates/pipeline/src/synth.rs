//! Synthetic two-class dataset: drifting faces, where pain videos carry an
//! upper-left texture patch and periodic non-rigid deformation pulses.

use std::path::Path;

use neopain_core::preprocess::{write_landmarks, Image, LandmarkFrame, LANDMARK_COUNT};
use neopain_core::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, StageExt};
use crate::manifest::{frame_file_name, DatasetManifest, ManifestEntry};

pub const FRAME_SIZE: usize = 160;
const FACE_ORIGIN: i64 = 32;
const DRIFT_STEP: i64 = 2;
const DRIFT_STEPS: i64 = 3;
const PULSE: [f64; 5] = [0.0, 0.3, 1.0, 0.0, 0.0];
const PULSE_AMPLITUDE: f64 = 4.0;
const PULSE_CENTRE: (f64, f64) = (24.0, 24.0);
const PULSE_SIGMA: f64 = 10.0;

/// 49 points in face coordinates: brows 10, nose 9, eyes 12, mouth 18.
pub fn landmark_template(label: Label) -> Vec<(f64, f64)> {
    let pain = label.is_pain();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(LANDMARK_COUNT);
    let brow_y: [f64; 5] = if pain { [20.0, 18.0, 18.0, 20.0, 23.0] } else { [20.0, 16.0, 14.0, 15.0, 18.0] };
    for (i, y) in brow_y.iter().enumerate() {
        pts.push((12.0 + 7.0 * i as f64, *y));
    }
    for (i, y) in brow_y.iter().rev().enumerate() {
        pts.push((56.0 + 7.0 * i as f64, *y));
    }
    for y in [30.0, 36.0, 42.0, 48.0] {
        pts.push((48.0, y));
    }
    for (x, y) in [(40.0, 54.0), (44.0, 55.0), (48.0, 56.0), (52.0, 55.0), (56.0, 54.0)] {
        pts.push((x, y));
    }
    let (upper, lower) = if pain { (33.0, 35.0) } else { (31.0, 37.0) };
    let left_eye = [(18.0, 34.0), (26.0, upper), (34.0, upper), (42.0, 34.0), (34.0, lower), (26.0, lower)];
    pts.extend(left_eye);
    pts.extend(left_eye.iter().map(|&(x, y)| (96.0 - x, y)));
    let lift = if pain { 2.0 } else { 0.0 };
    let open = if pain { [4.0, 6.0, 7.0, 6.0, 4.0] } else { [0.0; 5] };
    pts.push((30.0, 70.0));
    for (x, y) in [(36.0, 67.0), (42.0, 65.0), (48.0, 66.0), (54.0, 65.0), (60.0, 67.0)] {
        pts.push((x, y - lift));
    }
    pts.push((66.0, 70.0));
    for (i, (x, y)) in [(60.0, 74.0), (54.0, 77.0), (48.0, 78.0), (42.0, 77.0), (36.0, 74.0)].iter().enumerate() {
        pts.push((*x, y + open[i]));
    }
    let gape = if pain { 8.0 } else { 0.0 };
    for (x, y) in [(36.0, 70.0), (48.0, 69.0), (60.0, 70.0)] {
        pts.push((x, y - lift / 2.0));
    }
    for (x, y) in [(60.0, 71.0), (48.0, 72.0), (36.0, 71.0)] {
        pts.push((x, y + gape));
    }
    debug_assert_eq!(pts.len(), LANDMARK_COUNT);
    pts
}

struct FaceStyle {
    label: Label,
    tone: f64,
    background: f64,
    landmarks: Vec<(f64, f64)>,
}

impl FaceStyle {
    /// RGB at continuous face coordinates.
    fn colour(&self, fx: f64, fy: f64) -> [f64; 3] {
        let inside = ((fx - 48.0) / 52.0).powi(2) + ((fy - 50.0) / 56.0).powi(2) <= 1.0;
        if !inside {
            return [self.background; 3];
        }
        let mut v = self.tone * (1.0 - 0.1 * (fy - 48.0) / 48.0);
        for &(lx, ly) in &self.landmarks {
            v -= 70.0 * (-((fx - lx).powi(2) + (fy - ly).powi(2)) / 8.0).exp();
        }
        if self.label.is_pain() {
            let window = (-((fx - 24.0).powi(2) + (fy - 24.0).powi(2)) / (2.0 * 14.0 * 14.0)).exp();
            v += 45.0 * window * (1.4 * fx).sin() * (1.4 * fy).sin();
        }
        [v, 0.8 * v, 0.7 * v]
    }
}

fn triangle(t: i64) -> i64 {
    let period = 2 * DRIFT_STEPS;
    let k = t.rem_euclid(period);
    DRIFT_STEP * if k <= DRIFT_STEPS { k } else { period - k }
}

/// Displacement of the pain deformation pulse scaled by `strength`.
fn pulse_displacement(fx: f64, fy: f64, strength: f64) -> (f64, f64) {
    if strength == 0.0 {
        return (0.0, 0.0);
    }
    let r2 = (fx - PULSE_CENTRE.0).powi(2) + (fy - PULSE_CENTRE.1).powi(2);
    let g = PULSE_AMPLITUDE * strength * (-r2 / (2.0 * PULSE_SIGMA * PULSE_SIGMA)).exp();
    (g, -0.5 * g)
}

fn render_frame(style: &FaceStyle, ox: i64, oy: i64, strength: f64) -> Result<Image> {
    Image::from_fn(FRAME_SIZE, FRAME_SIZE, 3, |y, x, c| {
        let mut fx = x as f64 - ox as f64;
        let mut fy = y as f64 - oy as f64;
        let (dx, dy) = pulse_displacement(fx, fy, strength);
        fx -= dx;
        fy -= dy;
        style.colour(fx, fy)[c].round().clamp(0.0, 255.0) as u8
    })
    .stage("gen-synthetic")
}

/// Writes `subjects` videos of `frames` frames each under `out` and returns
/// the manifest, which is also saved as `out/manifest.csv`.
pub fn gen_synthetic(out: &Path, subjects: usize, frames: usize, seed: u64) -> Result<DatasetManifest> {
    if subjects < 4 {
        return Err(Error::Usage(format!("gen-synthetic needs at least 4 subjects, got {subjects}")));
    }
    if frames < 2 {
        return Err(Error::Usage(format!("gen-synthetic needs at least 2 frames per video, got {frames}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(subjects);
    for s in 0..subjects {
        let label = Label::from_pain(s % 2 == 0);
        let style = FaceStyle {
            label,
            tone: rng.random_range(172.0..188.0),
            background: rng.random_range(72.0..88.0),
            landmarks: landmark_template(label),
        };
        let (phase_x, phase_y): (i64, i64) = (rng.random_range(0..6), rng.random_range(0..6));
        let pulse_phase = rng.random_range(0..PULSE.len());

        let video_id = format!("v{:02}", s + 1);
        let subject_id = format!("s{:02}", s + 1);
        let dir = out.join("videos").join(&video_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut marks = Vec::with_capacity(frames);
        for t in 0..frames {
            let ox = FACE_ORIGIN + triangle(t as i64 + phase_x);
            let oy = FACE_ORIGIN + triangle(t as i64 + phase_y);
            let strength = if label.is_pain() { PULSE[(t + pulse_phase) % PULSE.len()] } else { 0.0 };
            let image = render_frame(&style, ox, oy, strength)?;
            let path = dir.join(frame_file_name(t));
            image.save_png(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let points = style
                .landmarks
                .iter()
                .map(|&(x, y)| (x + ox as f64, y + oy as f64))
                .collect();
            marks.push(LandmarkFrame::new(t, points).stage("gen-synthetic")?);
        }
        let landmarks_path = dir.join("landmarks.csv");
        let file = std::fs::File::create(&landmarks_path).map_err(|e| Error::io(&landmarks_path, e))?;
        write_landmarks(std::io::BufWriter::new(file), &marks).stage("gen-synthetic")?;
        entries.push(ManifestEntry {
            video_id,
            subject_id,
            label,
            frames_dir: dir,
            landmarks_path,
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    manifest.save(&out.join("manifest.csv"))?;
    Ok(manifest)
}
