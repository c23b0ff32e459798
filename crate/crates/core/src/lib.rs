//! Bayesian inference for competing inverse-Gaussian spike-train models.
//!
//! The dual-stimulus "competition" model treats each spike as the winner of a
//! race between two first-passage processes, with the loser of the previous
//! race delayed by `delta`. Labels (which process won) are latent and are
//! handled exactly with forward filtering and backward sampling.

pub mod error;
pub mod filter;
pub mod igdist;
pub mod mcmc;
pub mod modelselect;
pub mod posteriorpred;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod splines;
pub mod train;

pub use error::{Error, Result};
pub use igdist::{CompetitionParams, StimulusParams};
pub use splines::{Basis, BasisConfig};
pub use train::{Condition, Label, LabeledTrain, SpikeTrain, Triplet};
