//! Per-video optical-strain features.

use neopain_core::preprocess::resize_bilinear;
use neopain_core::strain::{canonical_feature_names, peak_statistics, strain_series, Plane};
use neopain_core::FeatureMatrix;

use crate::config::{PreprocessConfig, StrainConfig};
use crate::error::{Error, Result, StageExt};
use crate::extract::{load_tracked_frames, Failure};
use crate::manifest::{DatasetManifest, ManifestEntry};

pub fn strain_feature_names(cfg: &StrainConfig) -> Vec<String> {
    let mut names = canonical_feature_names();
    if cfg.extended {
        for stat in ["max", "std"] {
            for n in canonical_feature_names() {
                names.push(n.replace("_mean", &format!("_{stat}")));
            }
        }
    }
    names
}

/// Grayscale face planes of every tracked frame, resized to `size × size`.
pub fn face_planes(entry: &ManifestEntry, pre: &PreprocessConfig, size: usize) -> Result<Vec<Plane>> {
    load_tracked_frames(entry, pre)?
        .into_iter()
        .map(|(_, face)| Ok(resize_bilinear(&face, size, size).stage("strain")?.to_gray()))
        .collect()
}

pub fn video_strain_features(
    entry: &ManifestEntry,
    pre: &PreprocessConfig,
    cfg: &StrainConfig,
) -> Result<Vec<(String, f64)>> {
    let planes = face_planes(entry, pre, cfg.size)?;
    if planes.len() < 2 {
        return Err(Error::Data(format!(
            "{}: strain needs at least 2 tracked frames, found {}",
            entry.video_id,
            planes.len()
        )));
    }
    let series = strain_series(&planes, cfg.flow()).stage("strain")?;
    Ok(peak_statistics(&series, cfg.peaks(), cfg.extended))
}

/// One row per video; videos that cannot be processed are reported as failures.
pub fn extract_strain(
    manifest: &DatasetManifest,
    pre: &PreprocessConfig,
    cfg: &StrainConfig,
) -> Result<(FeatureMatrix, Vec<Failure>)> {
    let names = strain_feature_names(cfg);
    let mut matrix = FeatureMatrix::new(names.clone()).stage("strain")?;
    let mut failures = Vec::new();
    if manifest.is_empty() {
        log::warn!("empty manifest: no videos for strain features");
    }
    for entry in &manifest.entries {
        match video_strain_features(entry, pre, cfg) {
            Ok(stats) => {
                if stats.iter().map(|(n, _)| n).ne(names.iter()) {
                    return Err(Error::Internal("strain statistics out of order".into()));
                }
                let values: Vec<f64> = stats.into_iter().map(|(_, v)| v).collect();
                matrix
                    .push_row(&entry.video_id, &entry.video_id, &entry.subject_id, entry.label, &values)
                    .stage("strain")?;
            }
            Err(e) => {
                log::warn!("{}: strain skipped ({e})", entry.video_id);
                failures.push(Failure::new(&entry.video_id, "strain", e));
            }
        }
    }
    Ok((matrix, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_statistics_order() {
        let mut cfg = StrainConfig::default();
        assert_eq!(strain_feature_names(&cfg).len(), 5);
        cfg.extended = true;
        let names = strain_feature_names(&cfg);
        assert_eq!(names.len(), 15);
        assert_eq!(names[5], "FaceAll_max");
        assert_eq!(names[14], "FaceIV_std");
    }
}
