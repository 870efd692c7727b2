//! Dual indicators for AI benchmark result matrices.
//!
//! A benchmark result matrix has one row per agent (an AI system) and one
//! column per item (a task or game). This crate fits logistic item response
//! theory models to such matrices and derives four indicators:
//!
//! - item **difficulty** and **discrimination** (from the fitted item
//!   characteristic curves),
//! - agent **ability** (expected a posteriori estimate on the same latent
//!   scale as difficulty),
//! - agent **generality**: the inverse of the summed within-difficulty-bin
//!   variances of an agent's scores.
//!
//! The pipeline is `dataio` (load and filter) → `normalize` (commensurate
//! [0,1] scores and binary successes) → `irt` (marginal maximum likelihood
//! fit, ability scoring) → `indicators` (variance, regularity, generality,
//! agent characteristic curves). `synth` generates ground-truth data for
//! validation.

pub mod dataio;
pub mod indicators;
pub mod irt;
pub mod normalize;
pub mod stats;
pub mod synth;

pub use dataio::{load_results, DataError, FilterReport, Layout, ResultMatrix};
pub use indicators::{AgentIndicators, DifficultyBinning, Indicator, IndicatorError};
pub use irt::{AbilityEstimate, FitConfig, FittedModel, IrtError, ItemParams, ModelKind};
pub use normalize::{BinarizePolicy, BinaryResponseMatrix, NormalizeError, NormalizedMatrix};
pub use synth::{ScoreModel, SynthError, TwoPLWorld};
