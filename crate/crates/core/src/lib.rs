//! Multi-subject Bayesian vector autoregressive (VAR) inference for directed
//! connectivity networks.
//!
//! The model couples a VAR(L) likelihood per subject with a group-level
//! spike-and-slab prior over the `L*R^2` coefficients, an ICAR slab for
//! smoothness, and an optional logit inclusion prior driven by external
//! structural connectivity (with Polya-Gamma augmentation for conjugate
//! updates). Two inference backends are provided:
//!
//! * [`vb`] — a mean-field coordinate-ascent engine that scales to
//!   whole-network problems,
//! * [`gibbs`] — a small-instance Gibbs sampler used as a correctness
//!   oracle for the variational results.
//!
//! Supporting modules cover synthetic data generation ([`sim`]), selection
//! and estimation metrics ([`metrics`]), and on-disk formats plus CSV
//! exports ([`io`]).

pub mod data;
pub mod error;
pub mod gibbs;
pub mod hyper;
pub mod index;
pub mod io;
pub mod metrics;
pub mod pg;
pub mod rng;
pub mod sim;
pub mod vb;

pub use data::{LaggedDesign, SmoothingMatrix, StructuralPrior, StudyDataset};
pub use error::{Error, Result};
pub use hyper::{Hyperparameters, PriorMode};
pub use index::CoefficientIndex;
pub use vb::{FitResult, GroupPosterior};
