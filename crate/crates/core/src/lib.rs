//! Test-time embedding adjustment and semantic drift diagnostics for
//! personalized text-to-image tokens.
//!
//! Personalization methods learn a new token (say `sks`) for a user's concept.
//! Left unconstrained, the learned embedding drifts away from the word it was
//! meant to stand for (`man`, `dog`, ...), grows to an unusual norm, and ends
//! up dominating any prompt it appears in. This crate provides:
//!
//! * [`adjust`]: rescaling plus spherical interpolation of the learned
//!   embedding back toward its concept, per token or per prompt position;
//! * [`metrics`]: L2, Hausdorff, Mahalanobis and KL set distances between
//!   index-paired prompt-embedding sets;
//! * [`norms`]: vocabulary norm histograms and drift trajectories;
//! * [`prompts`]: construction of paired prompt lists from templates;
//! * [`sim`]: synthetic drift trajectories with known geometry;
//! * [`io`]: the manifest + raw `f32le` interchange format;
//! * [`report`] and [`sweep`]: JSON/CSV output and `(alpha, beta)` grids.
//!
//! The crate never touches a model; embeddings arrive through [`io`].

pub mod adjust;
pub mod embedding;
pub mod error;
pub mod io;
pub mod metrics;
pub mod norms;
pub mod prompts;
pub mod report;
pub mod sim;
pub mod sweep;

pub use adjust::{adjust_prompt, adjust_token, beta_heuristic, AdjustParams, ZeroNormPolicy};
pub use embedding::{
    angle_between, cosine_similarity, l2_norm, rescale_to, CheckpointSeries, EmbeddingMatrix, EmbeddingVector,
    MatrixKind, PromptEmbedding,
};
pub use error::{Error, Result};
pub use io::Artifact;
pub use metrics::{Metric, MetricConfig, SetDistanceResult};
