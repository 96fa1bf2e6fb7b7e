//! Forward-only inference for VGG-style networks.

pub mod arch;
pub mod forward;
mod gemm;
pub mod ops;
pub mod weights;

pub use arch::{ArchitectureSpec, LayerKind, LayerSpec, SHIPPED};
pub use forward::{forward_with_taps, Network, Phase, TapRequest};
pub use weights::{load_weights, LayerParams, WeightSet};
