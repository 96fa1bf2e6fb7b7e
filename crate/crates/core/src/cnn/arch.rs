//! Network descriptions and shape propagation.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ops::window_output;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Maxpool {
        window: usize,
        stride: usize,
    },
    Lrn {
        size: usize,
        alpha: f32,
        beta: f32,
        bias: f32,
    },
    Fc {
        outputs: usize,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn has_parameters(&self) -> bool {
        matches!(self.kind, LayerKind::Conv { .. } | LayerKind::Fc { .. })
    }
}

/// An ordered layer list with a fixed input shape.
///
/// `aliases` maps generic tap names onto concrete layers, e.g. `"Conv 5"` onto
/// `"Conv 5-3"` for the face network, so one sweep can address all four nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub input: [usize; 3],
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub layers: Vec<LayerSpec>,
}

pub const SHIPPED: [&str; 4] = ["vgg-f", "vgg-m", "vgg-s", "vgg-face"];

const VGG_F: &str = include_str!("../../architectures/vgg-f.json");
const VGG_M: &str = include_str!("../../architectures/vgg-m.json");
const VGG_S: &str = include_str!("../../architectures/vgg-s.json");
const VGG_FACE: &str = include_str!("../../architectures/vgg-face.json");

impl ArchitectureSpec {
    /// One of the four bundled networks.
    pub fn shipped(name: &str) -> Result<Self> {
        let json = match name {
            "vgg-f" => VGG_F,
            "vgg-m" => VGG_M,
            "vgg-s" => VGG_S,
            "vgg-face" => VGG_FACE,
            other => {
                return Err(Error::Request(format!(
                    "unknown architecture `{other}`; expected one of {SHIPPED:?}"
                )))
            }
        };
        Self::from_json(json)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Shipped name or path to a JSON description.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if SHIPPED.contains(&name_or_path) {
            Self::shipped(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::config(&layer.name, "duplicate layer name"));
            }
        }
        for (alias, target) in &self.aliases {
            if !seen.contains(target.as_str()) {
                return Err(Error::config(
                    alias,
                    format!("alias points at unknown layer `{target}`"),
                ));
            }
        }
        self.output_shapes().map(|_| ())
    }

    /// Output shape of every layer, in order.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input.to_vec();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::config(&self.name, "input dimensions must be positive"));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = propagate(layer, &shape)?;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        let target = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.layers.iter().position(|l| l.name == target)
    }

    pub fn followed_by_relu(&self, index: usize) -> bool {
        matches!(
            self.layers.get(index + 1).map(|l| &l.kind),
            Some(LayerKind::Relu)
        )
    }

    /// Expected `(kernel, bias)` shapes for each conv/fc layer, keyed by layer name.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>, Vec<usize>)>> {
        let shapes = self.output_shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 {
                self.input.to_vec()
            } else {
                shapes[i - 1].clone()
            };
            match layer.kind {
                LayerKind::Conv {
                    filters, kernel, ..
                } => out.push((
                    layer.name.clone(),
                    vec![filters, kernel, kernel, input[input.len() - 1]],
                    vec![filters],
                )),
                LayerKind::Fc { outputs } => out.push((
                    layer.name.clone(),
                    vec![outputs, input.iter().product()],
                    vec![outputs],
                )),
                _ => {}
            }
        }
        Ok(out)
    }

    /// Flattened width of a layer's output (tap dimensionality).
    pub fn flat_width(&self, layer: &str) -> Result<usize> {
        let idx = self
            .layer_index(layer)
            .ok_or_else(|| Error::Request(format!("unknown layer `{layer}` in {}", self.name)))?;
        Ok(self.output_shapes()?[idx].iter().product())
    }
}

fn propagate(layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    let spatial = |what: &str| -> Result<(usize, usize, usize)> {
        match *input {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::config(
                &layer.name,
                format!("{what} needs an H×W×C input, got {input:?}"),
            )),
        }
    };
    match layer.kind {
        LayerKind::Conv {
            filters,
            kernel,
            stride,
            pad,
        } => {
            let (h, w, _) = spatial("conv")?;
            if filters == 0 {
                return Err(Error::config(&layer.name, "conv needs at least one filter"));
            }
            match (
                window_output(h, kernel, stride, pad),
                window_output(w, kernel, stride, pad),
            ) {
                (Some(oh), Some(ow)) => Ok(vec![oh, ow, filters]),
                _ => Err(Error::config(
                    &layer.name,
                    format!(
                        "{kernel}×{kernel} kernel, stride {stride}, pad {pad} gives no output on {h}×{w}"
                    ),
                )),
            }
        }
        LayerKind::Maxpool { window, stride } => {
            let (h, w, c) = spatial("maxpool")?;
            match (
                window_output(h, window, stride, 0),
                window_output(w, window, stride, 0),
            ) {
                (Some(oh), Some(ow)) => Ok(vec![oh, ow, c]),
                _ => Err(Error::config(
                    &layer.name,
                    format!("pool window {window} stride {stride} does not fit {h}×{w}"),
                )),
            }
        }
        LayerKind::Fc { outputs } => {
            if outputs == 0 {
                return Err(Error::config(&layer.name, "fc output width must be ≥ 1"));
            }
            Ok(vec![outputs])
        }
        LayerKind::Lrn { size, .. } => {
            if size == 0 || size % 2 == 0 {
                return Err(Error::config(&layer.name, "lrn size must be odd"));
            }
            Ok(input.to_vec())
        }
        LayerKind::Relu | LayerKind::Softmax => Ok(input.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_output_widths() {
        for (name, width) in [
            ("vgg-f", 1000),
            ("vgg-m", 1000),
            ("vgg-s", 1000),
            ("vgg-face", 2622),
        ] {
            let arch = ArchitectureSpec::shipped(name).unwrap();
            assert_eq!(arch.flat_width("Full 8").unwrap(), width, "{name}");
        }
    }

    #[test]
    fn conv5_spatial_sizes() {
        for (name, side) in [("vgg-f", 13), ("vgg-m", 13), ("vgg-s", 17), ("vgg-face", 14)] {
            let arch = ArchitectureSpec::shipped(name).unwrap();
            let idx = arch.layer_index("Conv 5").unwrap();
            let shape = &arch.output_shapes().unwrap()[idx];
            assert_eq!((shape[0], shape[1]), (side, side), "{name}");
        }
    }

    #[test]
    fn rejects_duplicate_names() {
        let json = r#"{"name":"x","input":[8,8,1],"layers":[
            {"name":"a","kind":"relu"},{"name":"a","kind":"relu"}]}"#;
        assert!(matches!(
            ArchitectureSpec::from_json(json),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn rejects_vanishing_spatial_size() {
        let json = r#"{"name":"x","input":[8,8,1],"layers":[
            {"name":"c","kind":"conv","filters":2,"kernel":9,"stride":1,"pad":0}]}"#;
        let err = ArchitectureSpec::from_json(json).unwrap_err();
        assert!(err.to_string().contains("`c`"), "{err}");
    }

    #[test]
    fn unknown_architecture_is_a_request_error() {
        assert!(matches!(
            ArchitectureSpec::shipped("vgg-19"),
            Err(Error::Request(_))
        ));
    }

    #[test]
    fn json_roundtrip() {
        let arch = ArchitectureSpec::shipped("vgg-face").unwrap();
        let json = serde_json::to_string(&arch).unwrap();
        assert_eq!(ArchitectureSpec::from_json(&json).unwrap(), arch);
    }
}
