//! Redemption Score: a hybrid image-caption metric.
//!
//! Three evidence channels are squashed to `(0, 1)` and fused as a blend of
//! a weighted arithmetic and a weighted geometric mean:
//!
//! ```text
//! RS = λ · Σ wᵢ zᵢ + (1 − λ) · Π zᵢ^wᵢ
//! ```
//!
//! The canonical channels are a Gaussian mutual-information divergence
//! between image and caption embeddings ([`gaussian`]), a cosine similarity
//! between DINO features of the original image and an image generated from
//! the caption, and a cosine similarity between GTE caption embeddings.
//! Weights and λ are chosen by grid search against human ratings using
//! Kendall's τ ([`calibration`], [`rank`]).
//!
//! Embeddings are precomputed and loaded from `.evb` bundles named by a JSON
//! manifest ([`data`]). The `examples/` directory has one runnable program
//! per capability; start with `cargo run --example end_to_end`.

pub mod ablation;
pub mod calibration;
pub mod channels;
pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gaussian;
pub mod rank;
pub mod report;
pub mod synthetic;

pub use calibration::{calibrate, CalibrateOptions, CalibrationResult, GridSpec};
pub use channels::{build_channels, ChannelOptions, ChannelSet, ChannelSpec};
pub use data::{load_dataset, Dataset, Sample};
pub use error::{Error, Result};
pub use fusion::{redemption_score, score_dataset, squash, FusionWeights, ScoreVector};
pub use gaussian::{fit_gaussian_stats, GaussianStats, Shrinkage};
pub use rank::{bootstrap_tau, kendall_tau, TauResult, TauVariant};
