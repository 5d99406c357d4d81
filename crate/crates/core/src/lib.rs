//! Flood impact analytics for pavement roughness (IRI).
//!
//! The crate covers the full batch workflow: loading section-year
//! records, tagging flood events, pre/post-flood deterioration statistics,
//! six regression models with grid-search cross-validation, and two
//! model-agnostic explainers (exact/sampled Shapley values and LIME local
//! surrogates). A seeded synthetic generator with a known ground-truth
//! function backs the validation suite.

pub mod cli;
pub mod dataset;
pub mod deterioration;
pub mod error;
pub mod flood;
pub mod lime;
pub mod models;
pub mod seed;
pub mod shap;
pub mod synth;

pub use error::{Error, Result};
