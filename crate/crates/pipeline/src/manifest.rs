//! Dataset manifest: one row per video.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use neopain_core::Label;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["video_id", "subject_id", "label", "frames_dir", "landmarks_path"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub subject_id: String,
    pub label: Label,
    pub frames_dir: PathBuf,
    pub landmarks_path: PathBuf,
}

impl ManifestEntry {
    /// Frame image for a landmark row's `frame_index`.
    pub fn frame_path(&self, frame_index: usize) -> PathBuf {
        self.frames_dir.join(frame_file_name(frame_index))
    }
}

pub fn frame_file_name(frame_index: usize) -> String {
    format!("frame_{frame_index:04}.png")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct Row {
    video_id: String,
    subject_id: String,
    label: String,
    frames_dir: String,
    landmarks_path: String,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Data(format!("duplicate video id `{}` in manifest", e.video_id)));
            }
        }
        Ok(Self { entries })
    }

    /// Reads the manifest; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut rd = csv::Reader::from_reader(file);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != MANIFEST_HEADER {
            return Err(Error::Data(format!(
                "{}: manifest header must be {}",
                path.display(),
                MANIFEST_HEADER.join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, row) in rd.deserialize::<Row>().enumerate() {
            let row = row?;
            let label: Label = row.label.parse().map_err(|e| {
                Error::Data(format!("{} line {}: {e}", path.display(), i + 2))
            })?;
            entries.push(ManifestEntry {
                video_id: row.video_id,
                subject_id: row.subject_id,
                label,
                frames_dir: base.join(row.frames_dir),
                landmarks_path: base.join(row.landmarks_path),
            });
        }
        Self::new(entries)
    }

    /// Writes paths relative to `base` when possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new("."));
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wr = csv::Writer::from_writer(file);
        wr.write_record(MANIFEST_HEADER)?;
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        for e in &self.entries {
            wr.write_record([
                e.video_id.as_str(),
                e.subject_id.as_str(),
                e.label.as_str(),
                &rel(&e.frames_dir),
                &rel(&e.landmarks_path),
            ])?;
        }
        wr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.subject_id.clone()).collect()
    }
}
