//! Subject split, train-only selection, classification and the run report.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use neopain_core::classify::{self, TrainedModel};
use neopain_core::cnn::{Phase, TapRequest};
use neopain_core::eval::{self, ScoredSet, SplitPlan};
use neopain_core::select::{self, FeatureRanking, ReliefParams, SampleCount, SelectionMethod};
use neopain_core::{FeatureMatrix, Label};
use serde::{Deserialize, Serialize};

use crate::compare::ComparisonRecord;
use crate::config::{ClassifierConfig, PipelineConfig, SelectorConfig};
use crate::error::{Error, Result, StageExt};
use crate::extract::{extract_deep, load_network, weight_source, Failure};
use crate::fuse::fuse;
use crate::manifest::DatasetManifest;
use crate::strain::extract_strain;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn plan_split(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<SplitPlan> {
    eval::subject_split(&manifest.subject_ids(), cfg.split.test_fraction, cfg.split.seed).stage("split")
}

/// Ranks every column of `train` with the configured selector.
pub fn rank(train: &FeatureMatrix, sel: &SelectorConfig) -> Result<FeatureRanking> {
    match sel.method {
        SelectionMethod::Su => select::rank_su(train, sel.bins),
        SelectionMethod::Relieff => select::relieff(
            train,
            ReliefParams {
                k_neighbors: sel.k_neighbors,
                samples: SampleCount::All,
            },
        ),
    }
    .stage("select")
}

fn side_rows(matrix: &FeatureMatrix, subjects: &[String]) -> Vec<usize> {
    matrix.rows_for_subjects(&subjects.iter().cloned().collect())
}

/// Top `sel.n` feature names, ranked on the training subjects' rows only.
pub fn select_features(matrix: &FeatureMatrix, plan: &SplitPlan, sel: &SelectorConfig) -> Result<Vec<String>> {
    let train = matrix.select_rows(&side_rows(matrix, &plan.train));
    if train.is_empty() {
        return Err(Error::Data("no training rows for feature selection".into()));
    }
    select::select_top(&rank(&train, sel)?, sel.n).stage("select")
}

/// One evaluated configuration, shaped like a results-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub architecture: String,
    pub tap: String,
    pub dims: usize,
    pub selection: String,
    pub classifier: String,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub majority_baseline: f64,
    pub selected_features: Vec<String>,
    pub train_instances: usize,
    pub test_instances: Vec<String>,
    pub test_labels: Vec<Label>,
    pub scores: Vec<f64>,
}

impl ExperimentRecord {
    /// Key used by `compare`, e.g. `vgg-face/Full 7 PostReLU/SU(10)/NB`.
    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}", self.architecture, self.tap, self.selection, self.classifier)
    }

    pub fn scored_set(&self) -> Result<ScoredSet> {
        ScoredSet::new(self.scores.clone(), self.test_labels.clone(), self.test_instances.clone())
            .stage("evaluate")
    }
}

pub fn tap_label(tap: &TapRequest) -> String {
    let phase = match tap.phase {
        Phase::PreReLU => "PreReLU",
        Phase::PostReLU => "PostReLU",
    };
    format!("{} {phase}", tap.layer)
}

/// Accuracy of always predicting the training majority (pain on a tie).
pub fn majority_baseline(train: &[Label], test: &[Label]) -> f64 {
    let pain = train.iter().filter(|l| l.is_pain()).count();
    let guess = Label::from_pain(2 * pain >= train.len());
    test.iter().filter(|&&l| l == guess).count() as f64 / test.len() as f64
}

/// Outcome of training on the train rows of `matrix` restricted to `features`.
pub struct Evaluation {
    pub model: TrainedModel,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub majority_baseline: f64,
    pub train_instances: usize,
    pub test_instances: Vec<String>,
    pub test_labels: Vec<Label>,
    pub scores: Vec<f64>,
}

pub fn evaluate_features(
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
    features: &[String],
    classifier: &ClassifierConfig,
) -> Result<Evaluation> {
    let train = matrix
        .select_rows(&side_rows(matrix, &plan.train))
        .select_columns(features)
        .stage("train")?;
    let test = matrix
        .select_rows(&side_rows(matrix, &plan.test))
        .select_columns(features)
        .stage("evaluate")?;
    if test.is_empty() {
        return Err(Error::Data("no test rows to evaluate".into()));
    }
    let model = classify::train(&train, classifier.kind, &classifier.params).stage("train")?;
    let predictions = model.predict_matrix(&test).stage("predict")?;
    let predicted: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let accuracy = eval::accuracy(&predicted, test.labels()).stage("evaluate")?;
    let (neg, pos) = test.class_counts();
    let auc = if neg > 0 && pos > 0 {
        Some(eval::auc(&ScoredSet::new(scores.clone(), test.labels().to_vec(), test.instance_ids().to_vec()).stage("evaluate")?).stage("evaluate")?)
    } else {
        log::warn!("test side has a single class; AUC not reported");
        None
    };
    Ok(Evaluation {
        model,
        accuracy,
        auc,
        majority_baseline: majority_baseline(train.labels(), test.labels()),
        train_instances: train.len(),
        test_instances: test.instance_ids().to_vec(),
        test_labels: test.labels().to_vec(),
        scores,
    })
}

/// Select on train, reduce both sides, train, evaluate.
pub fn run_experiment(
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    architecture: &str,
    tap: &str,
) -> Result<ExperimentRecord> {
    let features = select_features(matrix, plan, &cfg.selector)?;
    let e = evaluate_features(matrix, plan, &features, &cfg.classifier)?;
    Ok(ExperimentRecord {
        architecture: architecture.to_string(),
        tap: tap.to_string(),
        dims: matrix.width(),
        selection: cfg.selector.label(),
        classifier: cfg.classifier.kind.display_name().to_string(),
        accuracy: e.accuracy,
        auc: e.auc,
        majority_baseline: e.majority_baseline,
        selected_features: features,
        train_instances: e.train_instances,
        test_instances: e.test_instances,
        test_labels: e.test_labels,
        scores: e.scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config_hash: String,
    pub split: SplitPlan,
    pub timestamp_unix: u64,
    pub records: Vec<ExperimentRecord>,
    #[serde(default)]
    pub comparisons: Vec<ComparisonRecord>,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl RunReport {
    pub fn new(cfg: &PipelineConfig, split: SplitPlan) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: cfg.hash(),
            split,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            records: Vec::new(),
            comparisons: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn find(&self, key: &str) -> Result<&ExperimentRecord> {
        self.records
            .iter()
            .find(|r| r.key() == key)
            .ok_or_else(|| Error::Usage(format!("no record `{key}` in report")))
    }

    /// Fails if any record's dims disagree with the given matrix widths.
    pub fn check_dims(&self, widths: &BTreeMap<(String, String), usize>) -> Result<()> {
        for r in &self.records {
            if let Some(&w) = widths.get(&(r.architecture.clone(), r.tap.clone())) {
                if w != r.dims {
                    return Err(Error::Internal(format!(
                        "{}: dims {} but matrix width {w}",
                        r.key(),
                        r.dims
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Full run: split, deep extraction per architecture, every configured
/// experiment and, when configured, strain + deep fusion.
pub fn run_pipeline(manifest: &DatasetManifest, cfg: &PipelineConfig, weights: Option<&str>) -> Result<RunReport> {
    cfg.validate()?;
    let plan = plan_split(manifest, cfg)?;
    log::info!("split: {} train / {} test subjects", plan.train.len(), plan.test.len());
    let mut report = RunReport::new(cfg, plan.clone());

    let experiments = cfg.experiments();
    let fusion_key = (cfg.architecture.clone(), cfg.tap.request());
    let mut fusion_deep: Option<FeatureMatrix> = None;
    let mut architectures: Vec<&str> = Vec::new();
    for e in &experiments {
        if !architectures.contains(&e.architecture.as_str()) {
            architectures.push(&e.architecture);
        }
    }
    if cfg.fusion.is_some() && !architectures.contains(&cfg.architecture.as_str()) {
        architectures.push(&cfg.architecture);
    }

    let mut records: Vec<(usize, ExperimentRecord)> = Vec::new();
    let mut widths = BTreeMap::new();
    for arch in architectures {
        let mut taps: Vec<TapRequest> = experiments
            .iter()
            .filter(|e| e.architecture == arch)
            .map(|e| e.tap.clone())
            .collect();
        let wants_fusion = cfg.fusion.is_some() && fusion_key.0 == arch;
        if wants_fusion && !taps.contains(&fusion_key.1) {
            taps.push(fusion_key.1.clone());
        }
        let net = load_network(arch, &weight_source(cfg, arch, weights)?)?;
        let mut extraction = extract_deep(manifest, &net, &taps, &cfg.preprocess)?;
        drop(net);
        for f in extraction.failures.drain(..) {
            if !report.failures.contains(&f) {
                report.failures.push(f);
            }
        }
        for (i, e) in experiments.iter().enumerate().filter(|(_, e)| e.architecture == arch) {
            let matrix = &extraction.matrices[&e.tap];
            let tap = tap_label(&e.tap);
            widths.insert((arch.to_string(), tap.clone()), matrix.width());
            let record = run_experiment(matrix, &plan, cfg, arch, &tap)?;
            log::info!("{}: accuracy {}", record.key(), eval::percent(record.accuracy));
            records.push((i, record));
        }
        if wants_fusion {
            fusion_deep = extraction.matrices.remove(&fusion_key.1);
        }
    }
    records.sort_by_key(|(i, _)| *i);
    report.records = records.into_iter().map(|(_, r)| r).collect();
    report.check_dims(&widths)?;

    if let (Some(fusion), Some(deep)) = (cfg.fusion, fusion_deep) {
        let (strain, mut failures) = extract_strain(manifest, &cfg.preprocess, &cfg.strain)?;
        report.failures.append(&mut failures);
        let fused = fuse(&strain, &deep, &plan, &cfg.selector, fusion)?;
        let names = fused.names().to_vec();
        let e = evaluate_features(&fused, &plan, &names, &cfg.classifier)?;
        report.records.push(ExperimentRecord {
            architecture: format!("strain+{}", cfg.architecture),
            tap: tap_label(&fusion_key.1),
            dims: fused.width(),
            selection: format!("Strain({})+Deep({})", fusion.strain_n, fusion.deep_n),
            classifier: cfg.classifier.kind.display_name().to_string(),
            accuracy: e.accuracy,
            auc: e.auc,
            majority_baseline: e.majority_baseline,
            selected_features: names,
            train_instances: e.train_instances,
            test_instances: e.test_instances,
            test_labels: e.test_labels,
            scores: e.scores,
        });
    }
    Ok(report)
}
