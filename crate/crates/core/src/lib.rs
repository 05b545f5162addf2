//! Confidence-aware similarity learning under label noise.
//!
//! The crate trains desk-scale metric-learning models that down-weight
//! suspect samples: per-batch proxy losses are thresholded (Otsu by default)
//! and mapped through a Lambert-W confidence curve, so presumed-noisy samples
//! contribute less to the embedding objective. Around that core sit loss
//! kernels with analytic gradients, taxonomy-driven label-noise injection,
//! synthetic benchmark generation, and retrieval / noise-identification
//! evaluation.

pub mod confidence;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod synth;
pub mod taxonomy;

pub use confidence::{ConfidenceConfig, ThresholdStrategy};
pub use dataset::{FeatureDataset, Sample};
pub use error::{Error, Result};
pub use losses::{LossConfig, SemanticTable, SimilarityMatrix};
pub use model::{Checkpoint, Embedder, ProxyBank, TrainConfig, TrainHistory};
pub use noise::{NoiseManifest, NoiseModel, NoiseSpec};
pub use numerics::{LossVector, OtsuResult};
pub use synth::SynthSpec;
pub use taxonomy::{LexicalGraph, Taxonomy};
