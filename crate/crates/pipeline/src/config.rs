//! JSON pipeline configuration.

use std::collections::BTreeMap;
use std::path::Path;

use neopain_core::classify::{ClassifierKind, ClassifierParams};
use neopain_core::cnn::{ArchitectureSpec, Phase, TapRequest};
use neopain_core::select::{SelectionMethod, DEFAULT_BINS, DEFAULT_K_NEIGHBORS};
use neopain_core::strain::{FlowParams, PeakParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub architecture: String,
    pub tap: TapConfig,
    pub selector: SelectorConfig,
    pub classifier: ClassifierConfig,
    pub fusion: Option<FusionConfig>,
    pub split: SplitConfig,
    pub preprocess: PreprocessConfig,
    pub strain: StrainConfig,
    pub sweep: Option<SweepConfig>,
    /// Weight source per architecture: a file path or `random:SEED`.
    pub weights: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            architecture: "vgg-face".into(),
            tap: TapConfig::default(),
            selector: SelectorConfig::default(),
            classifier: ClassifierConfig::default(),
            fusion: None,
            split: SplitConfig::default(),
            preprocess: PreprocessConfig::default(),
            strain: StrainConfig::default(),
            sweep: None,
            weights: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapConfig {
    pub layer: String,
    pub phase: Phase,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            layer: "Full 7".into(),
            phase: Phase::PostReLU,
        }
    }
}

impl TapConfig {
    pub fn request(&self) -> TapRequest {
        TapRequest::new(self.layer.clone(), self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub method: SelectionMethod,
    pub n: usize,
    pub bins: usize,
    pub k_neighbors: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            method: SelectionMethod::Su,
            n: 10,
            bins: DEFAULT_BINS,
            k_neighbors: DEFAULT_K_NEIGHBORS,
        }
    }
}

impl SelectorConfig {
    /// Report label such as `SU(10)`.
    pub fn label(&self) -> String {
        format!("{}({})", self.method.short(), self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub params: ClassifierParams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Nb,
            params: ClassifierParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub strain_n: usize,
    pub deep_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        // 15 of 31 subjects held out
        Self {
            test_fraction: 0.484,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub margin: f64,
    pub tau: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            margin: neopain_core::preprocess::DEFAULT_MARGIN,
            tau: neopain_core::preprocess::DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrainConfig {
    /// Side of the square grayscale face crop used for flow.
    pub size: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub min_prominence: f64,
    pub min_separation: usize,
    /// Also emit per-region peak max and standard deviation.
    pub extended: bool,
}

impl Default for StrainConfig {
    fn default() -> Self {
        let flow = FlowParams::default();
        let peaks = PeakParams::default();
        Self {
            size: 64,
            alpha: flow.alpha,
            iterations: flow.iterations,
            min_prominence: peaks.min_prominence,
            min_separation: peaks.min_separation,
            extended: false,
        }
    }
}

impl StrainConfig {
    pub fn flow(&self) -> FlowParams {
        FlowParams {
            alpha: self.alpha,
            iterations: self.iterations,
        }
    }

    pub fn peaks(&self) -> PeakParams {
        PeakParams {
            min_prominence: self.min_prominence,
            min_separation: self.min_separation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub architectures: Vec<String>,
    pub layers: Vec<String>,
    pub phases: Vec<Phase>,
}

/// One (architecture, tap) combination to evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Experiment {
    pub architecture: String,
    pub tap: TapRequest,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Experiments in sweep order (architecture, then layer, then phase), or
    /// the single configured tap.
    pub fn experiments(&self) -> Vec<Experiment> {
        match &self.sweep {
            Some(s) => s
                .architectures
                .iter()
                .flat_map(|a| {
                    s.layers.iter().flat_map(move |l| {
                        s.phases.iter().map(move |p| Experiment {
                            architecture: a.clone(),
                            tap: TapRequest::new(l.clone(), *p),
                        })
                    })
                })
                .collect(),
            None => vec![Experiment {
                architecture: self.architecture.clone(),
                tap: self.tap.request(),
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("invalid config: {m}")));
        if self.selector.n == 0 {
            return bad("selector.n must be positive".into());
        }
        if self.selector.bins < 2 {
            return bad("selector.bins must be at least 2".into());
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad("split.test_fraction must lie in (0, 1)".into());
        }
        if self.strain.size < 2 {
            return bad("strain.size must be at least 2".into());
        }
        for exp in self.experiments() {
            let arch = ArchitectureSpec::resolve(&exp.architecture)?;
            let idx = arch.layer_index(&exp.tap.layer).ok_or_else(|| {
                Error::Data(format!(
                    "invalid config: tap layer `{}` not in {}",
                    exp.tap.layer, arch.name
                ))
            })?;
            if exp.tap.phase == Phase::PreReLU && !arch.followed_by_relu(idx) {
                return bad(format!(
                    "{} has no ReLU after `{}` for a PreReLU tap",
                    arch.name, exp.tap.layer
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
