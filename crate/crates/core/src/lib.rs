//! Reject inference for credit scoring: a library and CLI for building
//! scorecards from financed-only samples and stress-testing the classical
//! "reintegration" strategies (augmentation, parceling, a semi-supervised
//! generative classifier) against oracle baselines under controlled
//! financing-selection mechanisms.
//!
//! The crate is organized around the lifecycle of a selection experiment:
//!
//! - [`data`]: datasets with a financing mask, synthetic generators with
//!   known ground truth, CSV ingestion, quantile discretization.
//! - [`logistic`]: weighted maximum-likelihood logistic regression with
//!   Newton/step-halving iterations and model-based + sandwich covariance.
//! - [`generative`]: semi-supervised class-conditional Gaussian classifier
//!   fit by EM, using rejected applicants through the feature marginal.
//! - [`mechanisms`]: MCAR / MAR / MNAR financing selection applied to fully
//!   labeled data, including graduated-strictness sweeps.
//! - [`methods`]: the strategies under test, all returning a common
//!   [`methods::Scorer`].
//! - [`evaluation`]: Gini/AUC, bootstrap comparisons, the 2x2 asymptotics
//!   verdict table, and the acceptance-rate sweep harness.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod generative;
pub mod logistic;
pub mod mechanisms;
pub mod methods;
pub mod seed;
pub mod util;

pub use error::{Error, Result};
