//! Per-video aggregation of frame features and strain + deep fusion.

use std::collections::{BTreeMap, HashMap};

use neopain_core::eval::SplitPlan;
use neopain_core::{FeatureMatrix, Label};

use crate::config::{FusionConfig, SelectorConfig};
use crate::error::{Error, Result, StageExt};
use crate::run::select_features;

/// Mean of each video's frame rows; one row per video in first-seen order,
/// with the video id as instance id.
pub fn aggregate_by_video(frames: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, (Vec<f64>, usize, &str, Label)> = HashMap::new();
    for (i, row) in frames.rows().enumerate() {
        let video = frames.video_ids()[i].as_str();
        let subject = frames.subject_ids()[i].as_str();
        let label = frames.labels()[i];
        let g = groups.entry(video).or_insert_with(|| {
            order.push(video);
            (vec![0.0; row.len()], 0, subject, label)
        });
        if g.2 != subject || g.3 != label {
            return Err(Error::Data(format!(
                "video `{video}` has rows with different subject or label"
            )));
        }
        for (s, v) in g.0.iter_mut().zip(row) {
            *s += v;
        }
        g.1 += 1;
    }
    let mut out = FeatureMatrix::new(frames.names().to_vec()).stage("fuse")?;
    for video in order {
        let (sum, count, subject, label) = &groups[video];
        let mean: Vec<f64> = sum.iter().map(|s| s / *count as f64).collect();
        out.push_row(video, video, *subject, *label, &mean).stage("fuse")?;
    }
    Ok(out)
}

/// Joins two per-video matrices on video id, taking `left_names` then
/// `right_names`. Rows follow `left`.
pub fn join_by_video(
    left: &FeatureMatrix,
    left_names: &[String],
    right: &FeatureMatrix,
    right_names: &[String],
) -> Result<FeatureMatrix> {
    let index = |m: &FeatureMatrix| -> Result<BTreeMap<String, usize>> {
        let mut map = BTreeMap::new();
        for (i, v) in m.video_ids().iter().enumerate() {
            if map.insert(v.clone(), i).is_some() {
                return Err(Error::Data(format!("video `{v}` appears twice; aggregate frames first")));
            }
        }
        Ok(map)
    };
    let li = index(left)?;
    let ri = index(right)?;
    let unmatched: Vec<&String> = li
        .keys()
        .filter(|k| !ri.contains_key(*k))
        .chain(ri.keys().filter(|k| !li.contains_key(*k)))
        .collect();
    if !unmatched.is_empty() {
        return Err(neopain_core::Error::Contract(format!(
            "fusion inputs disagree on videos: {unmatched:?}"
        )))
        .stage("fuse");
    }
    let l = left.select_columns(left_names).stage("fuse")?;
    let r = right.select_columns(right_names).stage("fuse")?;
    let names: Vec<String> = left_names.iter().chain(right_names).cloned().collect();
    let mut out = FeatureMatrix::new(names).stage("fuse")?;
    for (i, video) in left.video_ids().iter().enumerate() {
        let j = ri[video];
        if right.labels()[j] != left.labels()[i] || right.subject_ids()[j] != left.subject_ids()[i] {
            return Err(Error::Data(format!("video `{video}` differs in label or subject between inputs")));
        }
        let row: Vec<f64> = l.row(i).iter().chain(r.row(j)).copied().collect();
        out.push_row(video, video, &left.subject_ids()[i], left.labels()[i], &row)
            .stage("fuse")?;
    }
    Ok(out)
}

/// Top `strain_n` strain and top `deep_n` deep features, each ranked by the
/// selector on the training subjects only, concatenated per video.
pub fn fuse(
    strain: &FeatureMatrix,
    deep_frames: &FeatureMatrix,
    plan: &SplitPlan,
    selector: &SelectorConfig,
    fusion: FusionConfig,
) -> Result<FeatureMatrix> {
    let deep = aggregate_by_video(deep_frames)?;
    let pick = |m: &FeatureMatrix, n: usize| -> Result<Vec<String>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let sel = SelectorConfig {
            n,
            ..selector.clone()
        };
        select_features(m, plan, &sel)
    };
    let strain_names = pick(strain, fusion.strain_n)?;
    let deep_names = pick(&deep, fusion.deep_n)?;
    let fused = join_by_video(strain, &strain_names, &deep, &deep_names)?;
    if fused.width() != fusion.strain_n + fusion.deep_n {
        return Err(Error::Internal(format!(
            "fused width {} is not {} + {}",
            fused.width(),
            fusion.strain_n,
            fusion.deep_n
        )));
    }
    Ok(fused)
}
