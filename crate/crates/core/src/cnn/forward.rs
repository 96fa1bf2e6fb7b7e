//! Forward pass with named feature taps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, LayerKind};
use super::ops;
use super::weights::WeightSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Whether a tap reads a layer's activations before or after its rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    PreReLU,
    PostReLU,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::PreReLU => "PreReLU",
            Phase::PostReLU => "PostReLU",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prerelu" | "pre" => Ok(Phase::PreReLU),
            "postrelu" | "post" => Ok(Phase::PostReLU),
            _ => Err(Error::Request(format!("unknown tap phase `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TapRequest {
    pub layer: String,
    pub phase: Phase,
}

impl TapRequest {
    pub fn new(layer: impl Into<String>, phase: Phase) -> Self {
        Self {
            layer: layer.into(),
            phase,
        }
    }
}

impl fmt::Display for TapRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.layer, self.phase)
    }
}

/// An architecture bound to validated weights.
#[derive(Debug, Clone)]
pub struct Network {
    arch: ArchitectureSpec,
    weights: WeightSet,
}

impl Network {
    pub fn new(arch: ArchitectureSpec, weights: WeightSet) -> Result<Self> {
        arch.validate()?;
        weights.validate(&arch)?;
        Ok(Self { arch, weights })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    /// Index of the layer after which each tap is read.
    fn plan(&self, taps: &[TapRequest]) -> Result<Vec<usize>> {
        taps.iter()
            .map(|tap| {
                let idx = self.arch.layer_index(&tap.layer).ok_or_else(|| {
                    Error::Request(format!(
                        "unknown tap layer `{}` in {}",
                        tap.layer, self.arch.name
                    ))
                })?;
                let relu_next = self.arch.followed_by_relu(idx);
                match tap.phase {
                    Phase::PreReLU if !relu_next => Err(Error::Request(format!(
                        "PreReLU tap on `{}` which is not followed by a ReLU",
                        tap.layer
                    ))),
                    Phase::PreReLU => Ok(idx),
                    Phase::PostReLU if relu_next => Ok(idx + 1),
                    Phase::PostReLU => Ok(idx),
                }
            })
            .collect()
    }

    /// Runs the network up to the deepest requested tap and returns each tap's
    /// activations flattened row-major.
    pub fn forward_with_taps(
        &self,
        input: &Tensor,
        taps: &[TapRequest],
    ) -> Result<BTreeMap<TapRequest, Vec<f32>>> {
        if input.shape() != self.arch.input {
            return Err(Error::Request(format!(
                "input shape {:?} does not match {} input {:?}",
                input.shape(),
                self.arch.name,
                self.arch.input
            )));
        }
        let points = self.plan(taps)?;
        let mut out = BTreeMap::new();
        let Some(&stop) = points.iter().max() else {
            return Ok(out);
        };
        let mut x = input.clone();
        for (i, layer) in self.arch.layers.iter().enumerate().take(stop + 1) {
            x = self.apply(i, x).map_err(|e| rename_layer(e, &layer.name))?;
            for (tap, _) in taps.iter().zip(&points).filter(|(_, &p)| p == i) {
                out.insert(tap.clone(), x.data().to_vec());
            }
        }
        Ok(out)
    }

    fn apply(&self, index: usize, x: Tensor) -> Result<Tensor> {
        let layer = &self.arch.layers[index];
        let params = || {
            self.weights
                .get(&layer.name)
                .ok_or_else(|| Error::validation(&layer.name, "missing weights"))
        };
        match layer.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let p = params()?;
                ops::conv2d(&x, &p.kernel, &p.bias, stride, pad)
            }
            LayerKind::Relu => {
                let mut x = x;
                ops::relu_in_place(&mut x);
                Ok(x)
            }
            LayerKind::Maxpool { window, stride } => ops::maxpool(&x, window, stride),
            LayerKind::Lrn {
                size,
                alpha,
                beta,
                bias,
            } => ops::lrn(&x, size, alpha, beta, bias),
            LayerKind::Fc { .. } => {
                let p = params()?;
                ops::fully_connected(&x.flatten(), &p.kernel, &p.bias)
            }
            LayerKind::Softmax => Ok(ops::softmax(&x.flatten())),
        }
    }
}

fn rename_layer(err: Error, name: &str) -> Error {
    match err {
        Error::Config { message, .. } => Error::config(name, message),
        other => other,
    }
}

/// Validates the binding and runs [`Network::forward_with_taps`].
pub fn forward_with_taps(
    arch: &ArchitectureSpec,
    weights: &WeightSet,
    input: &Tensor,
    taps: &[TapRequest],
) -> Result<BTreeMap<TapRequest, Vec<f32>>> {
    weights.validate(arch)?;
    let net = Network {
        arch: arch.clone(),
        weights: weights.clone(),
    };
    net.forward_with_taps(input, taps)
}
