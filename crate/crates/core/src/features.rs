//! Labelled feature matrix keyed by instance, video and subject.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved leading columns of the feature CSV.
pub const RESERVED_COLUMNS: [&str; 4] = ["instance_id", "video_id", "subject_id", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "no-pain")]
    NoPain,
    #[serde(rename = "pain")]
    Pain,
}

impl Label {
    pub fn is_pain(self) -> bool {
        self == Label::Pain
    }

    pub fn from_pain(pain: bool) -> Self {
        if pain {
            Label::Pain
        } else {
            Label::NoPain
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pain => "pain",
            Label::NoPain => "no-pain",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pain" | "1" => Ok(Label::Pain),
            "no-pain" | "nopain" | "no_pain" | "0" => Ok(Label::NoPain),
            other => Err(Error::contract(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    instance_ids: Vec<String>,
    video_ids: Vec<String>,
    subject_ids: Vec<String>,
    labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::contract(format!("duplicate feature name `{n}`")));
            }
            if RESERVED_COLUMNS.contains(&n.as_str()) {
                return Err(Error::contract(format!("feature name `{n}` is reserved")));
            }
        }
        Ok(Self {
            names,
            ..Self::default()
        })
    }

    pub fn push_row(
        &mut self,
        instance_id: impl Into<String>,
        video_id: impl Into<String>,
        subject_id: impl Into<String>,
        label: Label,
        values: &[f64],
    ) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::contract(format!(
                "row has {} values for {} features",
                values.len(),
                self.names.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite value in feature `{}`",
                self.names[bad]
            )));
        }
        self.values.extend_from_slice(values);
        self.instance_ids.push(instance_id.into());
        self.video_ids.push(video_id.into());
        self.subject_ids.push(subject_id.into());
        self.labels.push(label);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows explicitly
        let w = self.width();
        (0..self.len()).map(move |i| &self.values[i * w..(i + 1) * w])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pain = self.labels.iter().filter(|l| l.is_pain()).count();
        (self.len() - pain, pain)
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::contract(format!(
                "both classes required, got {pos} pain and {neg} no-pain rows"
            )));
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self {
            names: self.names.clone(),
            ..Self::default()
        };
        for &i in rows {
            out.values.extend_from_slice(self.row(i));
            out.instance_ids.push(self.instance_ids[i].clone());
            out.video_ids.push(self.video_ids[i].clone());
            out.subject_ids.push(self.subject_ids[i].clone());
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Rows whose subject id is in `subjects`, in original order.
    pub fn rows_for_subjects(&self, subjects: &HashSet<String>) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| subjects.contains(&self.subject_ids[i]))
            .collect()
    }

    /// Projection onto the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let idx = names
            .iter()
            .map(|n| {
                lookup
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::contract(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(names.to_vec())?;
        out.values.reserve(self.len() * idx.len());
        for r in self.rows() {
            out.values.extend(idx.iter().map(|&j| r[j]));
        }
        out.instance_ids = self.instance_ids.clone();
        out.video_ids = self.video_ids.clone();
        out.subject_ids = self.subject_ids.clone();
        out.labels = self.labels.clone();
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header = RESERVED_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain(self.names.iter().cloned());
        wr.write_record(header)?;
        let mut record = Vec::with_capacity(4 + self.width());
        for i in 0..self.len() {
            record.clear();
            record.push(self.instance_ids[i].clone());
            record.push(self.video_ids[i].clone());
            record.push(self.subject_ids[i].clone());
            record.push(self.labels[i].as_str().to_string());
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&record)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let fields: Vec<&str> = header.iter().collect();
        if fields.len() < 4 || fields[..4] != RESERVED_COLUMNS {
            return Err(Error::contract(format!(
                "feature CSV must start with {RESERVED_COLUMNS:?}"
            )));
        }
        let mut out = Self::new(fields[4..].iter().map(|s| s.to_string()).collect())?;
        let mut values = Vec::with_capacity(out.width());
        for rec in rd.records() {
            let rec = rec?;
            values.clear();
            for (j, v) in rec.iter().skip(4).enumerate() {
                values.push(v.parse::<f64>().map_err(|e| {
                    Error::contract(format!("bad value `{v}` in column {}: {e}", j + 4))
                })?);
            }
            out.push_row(&rec[0], &rec[1], &rec[2], rec[3].parse()?, &values)?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureMatrix {
        let mut m = FeatureMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        m.push_row("v1#0", "v1", "s1", Label::Pain, &[1.0, 0.1]).unwrap();
        m.push_row("v2#0", "v2", "s2", Label::NoPain, &[-2.5, 1e-12])
            .unwrap();
        m
    }

    #[test]
    fn csv_roundtrip() {
        let m = sample();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instance_id,video_id,subject_id,label,a,b\n"));
        assert_eq!(FeatureMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_duplicate_and_reserved_names() {
        assert!(FeatureMatrix::new(vec!["x".into(), "x".into()]).is_err());
        assert!(FeatureMatrix::new(vec!["label".into()]).is_err());
    }

    #[test]
    fn rejects_ragged_and_non_finite_rows() {
        let mut m = sample();
        assert!(m.push_row("i", "v", "s", Label::Pain, &[1.0]).is_err());
        assert!(m.push_row("i", "v", "s", Label::Pain, &[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn column_projection_keeps_metadata() {
        let m = sample();
        let p = m.select_columns(&["b".into()]).unwrap();
        assert_eq!(p.width(), 1);
        assert_eq!(p.row(1), &[1e-12]);
        assert_eq!(p.labels(), m.labels());
        assert!(m.select_columns(&["zzz".into()]).is_err());
    }
}
