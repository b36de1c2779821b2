//! Construction and verification of model-X knockoff copies.
//!
//! A knockoff copy of a random vector `X ∈ R^p` is a vector `X̃` such that
//! the joint law of `(X, X̃)` is unchanged by every swap of `X_i` with
//! `X̃_i`. This crate builds such laws several ways:
//!
//! * [`swap`]: the swap group, density symmetrization and the orbit
//!   normalization characterization.
//! * [`gaussian`]: the joint Gaussian construction with a diagonal `D`.
//! * [`copula`]: the copula candidate `H`, its validity checks, and exact
//!   frailty sampling for a shared Archimedean generator.
//! * [`mixture`]: conditionally independent (conjugate mixture) models
//!   with closed-form knockoff densities.
//! * [`discretization`]: approximate knockoffs through digit
//!   discretization.
//! * [`symmetrized`]: exact conditional sampling from a symmetrized
//!   Gaussian density.
//!
//! [`diagnostics`] verifies a sampler statistically or exactly, and
//! [`filter`] runs the knockoff filter end to end. [`model::ModelSpec`]
//! describes any of the constructions as JSON.

pub mod copula;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod linalg;
pub mod marginal;
pub mod mixture;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod sample;
pub mod special;
pub mod stats;
pub mod swap;
pub mod symmetrized;

pub use copula::{CopulaModel, CopulaModelSpec, FrailtyKnockoffs};
pub use diagnostics::{DiagnosticsReport, TestRecord};
pub use discretization::{DiscretizationLevel, DiscretizedKnockoffs};
pub use error::{Error, Result};
pub use filter::{compute_w_statistics, fdr_simulation, knockoff_threshold, RegressionScenario};
pub use gaussian::{assemble_joint, select_diag_equicorrelated, GaussianKnockoffs, GaussianModel};
pub use mixture::{ConjugateFamily, MixtureSpec};
pub use model::ModelSpec;
pub use sample::{JointSampleMatrix, KnockoffSampler, MarginalLaw};
pub use swap::{apply_swap, enumerate_swaps, symmetrize_density, tilt_density, Density2p, SwapSet};
