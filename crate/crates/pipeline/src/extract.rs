//! Frame loading and deep-feature extraction.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use neopain_core::cnn::{load_weights, ArchitectureSpec, Network, Phase, TapRequest, WeightSet};
use neopain_core::preprocess::{
    crop_face, read_landmarks, resize_bilinear, select_key_frames, to_input_tensor, Image, INPUT_SIZE,
};
use neopain_core::FeatureMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, PreprocessConfig};
use crate::error::{Error, Result, StageExt};
use crate::manifest::{DatasetManifest, ManifestEntry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    File(PathBuf),
    Random(u64),
}

impl FromStr for WeightSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("random:") {
            Some(seed) => seed
                .trim()
                .parse()
                .map(WeightSource::Random)
                .map_err(|_| Error::Usage(format!("bad random weight seed in `{s}`"))),
            None => Ok(WeightSource::File(PathBuf::from(s))),
        }
    }
}

/// `--weights` wins over the per-architecture map in the config.
pub fn weight_source(cfg: &PipelineConfig, arch: &str, cli: Option<&str>) -> Result<WeightSource> {
    match cli.or_else(|| cfg.weights.get(arch).map(String::as_str)) {
        Some(s) => s.parse(),
        None => Err(Error::Usage(format!(
            "no weights for {arch}: pass --weights PATH|random:SEED or set weights.{arch} in the config"
        ))),
    }
}

pub fn load_network(arch_name: &str, source: &WeightSource) -> Result<Network> {
    let arch = ArchitectureSpec::resolve(arch_name).stage("architecture")?;
    let weights = match source {
        WeightSource::File(p) => load_weights(p, &arch).stage("weights")?,
        WeightSource::Random(seed) => WeightSet::random(&arch, *seed).stage("weights")?,
    };
    Network::new(arch, weights).stage("weights")
}

/// A video or frame the run skipped, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub video_id: String,
    pub stage: String,
    pub message: String,
}

impl Failure {
    pub fn new(video_id: &str, stage: &str, err: impl std::fmt::Display) -> Self {
        Self {
            video_id: video_id.to_string(),
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }
}

fn load_frames(entry: &ManifestEntry, pre: &PreprocessConfig, key_only: bool) -> Result<Vec<(usize, Image)>> {
    let file = std::fs::File::open(&entry.landmarks_path).map_err(|e| Error::io(&entry.landmarks_path, e))?;
    let landmarks = read_landmarks(std::io::BufReader::new(file)).stage("landmarks")?;
    let keep: Vec<usize> = if key_only {
        select_key_frames(&landmarks, pre.tau)
    } else {
        landmarks.iter().filter(|f| !f.failed).map(|f| f.frame_index).collect()
    };
    let mut out = Vec::with_capacity(keep.len());
    for lm in landmarks.iter().filter(|f| keep.contains(&f.frame_index)) {
        let path = entry.frame_path(lm.frame_index);
        let image = Image::load_png(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if let Some(face) = crop_face(&image, lm, pre.margin).stage("crop")? {
            out.push((lm.frame_index, face));
        }
    }
    Ok(out)
}

/// Face crops of the key frames, in frame order.
pub fn load_key_frames(entry: &ManifestEntry, pre: &PreprocessConfig) -> Result<Vec<(usize, Image)>> {
    load_frames(entry, pre, true)
}

/// Face crops of every tracked frame, in frame order.
pub fn load_tracked_frames(entry: &ManifestEntry, pre: &PreprocessConfig) -> Result<Vec<(usize, Image)>> {
    load_frames(entry, pre, false)
}

fn layer_slug(layer: &str) -> String {
    layer
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Column names for a tap, e.g. `conv_5.post.123`.
pub fn tap_feature_names(tap: &TapRequest, width: usize) -> Vec<String> {
    let phase = match tap.phase {
        Phase::PreReLU => "pre",
        Phase::PostReLU => "post",
    };
    let slug = layer_slug(&tap.layer);
    (0..width).map(|i| format!("{slug}.{phase}.{i}")).collect()
}

pub fn frame_instance_id(video_id: &str, frame_index: usize) -> String {
    format!("{video_id}#{frame_index:04}")
}

#[derive(Debug, Clone)]
pub struct DeepExtraction {
    pub matrices: BTreeMap<TapRequest, FeatureMatrix>,
    pub failures: Vec<Failure>,
}

/// One row per key frame for every tap, from a single forward pass per frame.
pub fn extract_deep(
    manifest: &DatasetManifest,
    net: &Network,
    taps: &[TapRequest],
    pre: &PreprocessConfig,
) -> Result<DeepExtraction> {
    let mut matrices = BTreeMap::new();
    for tap in taps {
        let width = net.arch().flat_width(&tap.layer).stage("extract")?;
        matrices.insert(tap.clone(), FeatureMatrix::new(tap_feature_names(tap, width)).stage("extract")?);
    }
    if manifest.is_empty() {
        log::warn!("empty manifest: no frames to extract");
    }
    let means = net.weights().channel_means();
    let mut failures = Vec::new();
    for entry in &manifest.entries {
        let frames = match load_key_frames(entry, pre) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{}: skipped ({e})", entry.video_id);
                failures.push(Failure::new(&entry.video_id, "frames", e));
                continue;
            }
        };
        for (frame_index, face) in frames {
            let resized = resize_bilinear(&face, INPUT_SIZE, INPUT_SIZE)
                .stage("resize")?;
            let input = to_input_tensor(&resized, means).stage("tensor")?;
            let out = net.forward_with_taps(&input, taps).stage("forward")?;
            let id = frame_instance_id(&entry.video_id, frame_index);
            for (tap, values) in out {
                let row: Vec<f64> = values.iter().map(|&v| v as f64).collect();
                matrices
                    .get_mut(&tap)
                    .ok_or_else(|| Error::Internal(format!("unexpected tap {tap}")))?
                    .push_row(&id, &entry.video_id, &entry.subject_id, entry.label, &row)
                    .stage("extract")?;
            }
        }
        log::info!("{}: extracted", entry.video_id);
    }
    Ok(DeepExtraction { matrices, failures })
}
