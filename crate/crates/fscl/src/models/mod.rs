//! Bundled model implementations.

pub mod gaussian;
pub mod latent;

pub use gaussian::{GaussianMeanModel, Grouping};
pub use latent::{cell_prob, FitNotes, LatentCategoricalModel, QuantileParams};
