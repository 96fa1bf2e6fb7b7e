//! Binary pain / no-pain classifiers with real-valued scores.
//!
//! Every model reports a score where larger means more pain-like, and the
//! predicted label is pain exactly when the score reaches the model's
//! threshold (0.5 for the probabilistic models, 0 for the SVM margin).

mod forest;
mod io;
mod knn;
mod nb;
mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use forest::{Node, RandomForest, Tree};
pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use knn::Knn;
pub use nb::NaiveBayes;
pub use svm::LinearSvm;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Nb,
    Knn,
    Svm,
    Rf,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::Nb,
        ClassifierKind::Knn,
        ClassifierKind::Svm,
        ClassifierKind::Rf,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ClassifierKind::Nb => "nb",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Rf => "rf",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::Nb => "NB",
            ClassifierKind::Knn => "kNN",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::Rf => "RFT",
        }
    }

    pub fn threshold(self) -> f64 {
        match self {
            ClassifierKind::Svm => 0.0,
            _ => 0.5,
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" | "naive-bayes" => Ok(ClassifierKind::Nb),
            "knn" => Ok(ClassifierKind::Knn),
            "svm" | "svms" => Ok(ClassifierKind::Svm),
            "rf" | "rft" | "random-forest" => Ok(ClassifierKind::Rf),
            _ => Err(Error::contract(format!("unknown classifier `{s}`"))),
        }
    }
}

/// Hyperparameters; fields irrelevant to the chosen kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub k: usize,
    pub c: f64,
    pub trees: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            k: 3,
            c: 1.0,
            trees: 100,
            seed: 0,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Nb(NaiveBayes),
    Knn(Knn),
    Svm(LinearSvm),
    Rf(RandomForest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    feature_names: Vec<String>,
    body: ModelBody,
}

impl TrainedModel {
    pub fn new(feature_names: Vec<String>, body: ModelBody) -> Result<Self> {
        let width = match &body {
            ModelBody::Nb(m) => m.width(),
            ModelBody::Knn(m) => m.width(),
            ModelBody::Svm(m) => m.weights.len(),
            ModelBody::Rf(m) => m.width,
        };
        if width != feature_names.len() {
            return Err(Error::contract(format!(
                "model expects {width} features but {} names were given",
                feature_names.len()
            )));
        }
        Ok(Self {
            feature_names,
            body,
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        match self.body {
            ModelBody::Nb(_) => ClassifierKind::Nb,
            ModelBody::Knn(_) => ClassifierKind::Knn,
            ModelBody::Svm(_) => ClassifierKind::Svm,
            ModelBody::Rf(_) => ClassifierKind::Rf,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn body(&self) -> &ModelBody {
        &self.body
    }

    pub fn score(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_names.len() {
            return Err(Error::contract(format!(
                "instance has {} values, model expects {}",
                row.len(),
                self.feature_names.len()
            )));
        }
        Ok(match &self.body {
            ModelBody::Nb(m) => m.score(row),
            ModelBody::Knn(m) => m.score(row),
            ModelBody::Svm(m) => m.score(row),
            ModelBody::Rf(m) => m.score(row),
        })
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        let score = self.score(row)?;
        Ok(Prediction {
            label: Label::from_pain(score >= self.kind().threshold()),
            score,
        })
    }

    /// Predicts every row after checking that the matrix carries exactly the
    /// training features, reordering columns by name if needed.
    pub fn predict_matrix(&self, matrix: &FeatureMatrix) -> Result<Vec<Prediction>> {
        let missing: Vec<&String> = self
            .feature_names
            .iter()
            .filter(|n| matrix.column_index(n).is_none())
            .collect();
        let extra: Vec<&String> = matrix
            .names()
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(Error::contract(format!(
                "feature mismatch: missing {missing:?}, extra {extra:?}"
            )));
        }
        let aligned = if matrix.names() == self.feature_names.as_slice() {
            matrix.clone()
        } else {
            matrix.select_columns(&self.feature_names)?
        };
        aligned.rows().map(|r| self.predict(r)).collect()
    }
}

pub fn train_nb(matrix: &FeatureMatrix) -> Result<TrainedModel> {
    TrainedModel::new(matrix.names().to_vec(), ModelBody::Nb(NaiveBayes::fit(matrix)?))
}

pub fn train_knn(matrix: &FeatureMatrix, k: usize) -> Result<TrainedModel> {
    TrainedModel::new(matrix.names().to_vec(), ModelBody::Knn(Knn::fit(matrix, k)?))
}

pub fn train_svm_linear(matrix: &FeatureMatrix, c: f64) -> Result<TrainedModel> {
    train_svm_with_cap(matrix, c, ClassifierParams::default().max_iterations)
}

pub fn train_svm_with_cap(matrix: &FeatureMatrix, c: f64, max_iterations: usize) -> Result<TrainedModel> {
    TrainedModel::new(
        matrix.names().to_vec(),
        ModelBody::Svm(LinearSvm::fit(matrix, c, max_iterations)?),
    )
}

pub fn train_rf(matrix: &FeatureMatrix, trees: usize, seed: u64) -> Result<TrainedModel> {
    TrainedModel::new(
        matrix.names().to_vec(),
        ModelBody::Rf(RandomForest::fit(matrix, trees, seed)?),
    )
}

pub fn train(matrix: &FeatureMatrix, kind: ClassifierKind, params: &ClassifierParams) -> Result<TrainedModel> {
    match kind {
        ClassifierKind::Nb => train_nb(matrix),
        ClassifierKind::Knn => train_knn(matrix, params.k),
        ClassifierKind::Svm => train_svm_with_cap(matrix, params.c, params.max_iterations),
        ClassifierKind::Rf => train_rf(matrix, params.trees, params.seed),
    }
}

pub fn predict(model: &TrainedModel, row: &[f64]) -> Result<Prediction> {
    model.predict(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> FeatureMatrix {
        let mut m = FeatureMatrix::new(vec!["a".into(), "b".into()]).unwrap();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            m.push_row(format!("p{i}"), "v", "s", Label::Pain, &[2.0 + t, 1.0 - t])
                .unwrap();
            m.push_row(format!("n{i}"), "v", "s", Label::NoPain, &[-2.0 - t, t])
                .unwrap();
        }
        m
    }

    #[test]
    fn every_kind_fits_a_separable_set() {
        let m = separable();
        for kind in ClassifierKind::ALL {
            let params = ClassifierParams {
                k: 1,
                trees: 15,
                ..Default::default()
            };
            let model = train(&m, kind, &params).unwrap();
            let preds = model.predict_matrix(&m).unwrap();
            for (p, l) in preds.iter().zip(m.labels()) {
                assert_eq!(p.label, *l, "{kind}");
                assert_eq!(p.label.is_pain(), p.score >= kind.threshold());
            }
        }
    }

    #[test]
    fn predict_checks_feature_names() {
        let m = separable();
        let model = train_nb(&m).unwrap();
        let other = m.select_columns(&["b".into()]).unwrap();
        let err = model.predict_matrix(&other).unwrap_err().to_string();
        assert!(err.contains("missing [\"a\"]"), "{err}");
        assert!(model.predict(&[1.0]).is_err());

        let swapped = m.select_columns(&["b".into(), "a".into()]).unwrap();
        assert_eq!(
            model.predict_matrix(&swapped).unwrap(),
            model.predict_matrix(&m).unwrap()
        );
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RFT".parse::<ClassifierKind>().unwrap(), ClassifierKind::Rf);
        assert!("tree".parse::<ClassifierKind>().is_err());
    }
}
