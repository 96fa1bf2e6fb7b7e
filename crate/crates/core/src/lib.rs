//! Transfer-learning toolkit for pain-expression classification.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`cnn`]: VGG-style forward inference with pre/post-ReLU feature taps.
//! - [`preprocess`]: landmark-driven face cropping, resizing and key-frame selection.
//! - [`strain`]: dense optical flow, optical strain and per-region peak features.
//! - [`features`]: the labelled, subject-keyed feature matrix.
//! - [`select`]: symmetric uncertainty and Relief-f feature ranking.
//! - [`classify`]: naive Bayes, kNN, linear SVM and random forest.
//! - [`eval`]: accuracy, ROC AUC, the DeLong paired test and subject-disjoint splits.

pub mod classify;
pub mod cnn;
mod error;
pub mod eval;
pub mod features;
pub mod preprocess;
pub mod select;
pub mod strain;
pub mod tensor;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, Label};
pub use tensor::Tensor;
