//! Local Gaussian regression (LGR).
//!
//! A localized Bayesian linear regression model: `M` local linear models,
//! each weighted by a radial basis localizer, sum to the regression
//! function. Local models are decoupled through per-model latent targets and
//! trained by a factorizing variational EM procedure, so that every update
//! except the global noise level is local to one model. Models are placed
//! greedily as data arrives and pruned by automatic relevance determination.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature adds
//! `std::error::Error` impls; `parallel` runs per-model updates on rayon.
//!
//! Modules:
//! - [`features`]: RBF localizers and localized linear features.
//! - [`exact`]: exact Gaussian regression used as a ground-truth oracle.
//! - [`variational`]: E-steps, M-steps, length-scale gradient and the ELBO.
//! - [`model`]: incremental fitting, pruning and prediction.
//! - [`lwr`]: the classical locally weighted regression baseline.
//! - [`dataset`]: the dataset container and error metrics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod dataset;
pub mod exact;
pub mod features;
pub mod linalg;
pub mod lwr;
pub mod model;
pub mod variational;

pub use dataset::{mse, nmse, DataView, Dataset};
pub use error::{LgrError, Result};
pub use features::{Center, FeatureVector, LengthScales};
pub use lwr::LwrModel;
pub use model::{fit, fit_observed, FitConfig, FitReport, LgrModel, LocalModel, Prediction};
pub use variational::{LatentTargets, Precisions, WeightPosterior};
