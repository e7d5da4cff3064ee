//! Source localization from range-difference (TDOA) measurements.
//!
//! The estimator runs in two stages. A closed-form solve of the squared
//! measurement model, with the noise-induced bias removed using an estimated
//! noise variance, gives a consistent initial position. A single
//! Gauss-Newton step on the likelihood then makes it asymptotically
//! efficient.
//!
//! ```
//! use tdoa_core::model::{deploy_fixed_paper_array, simulate, NoiseModel, SourcePosition};
//! use tdoa_core::pipeline::{localize, GnConfig};
//!
//! let array = deploy_fixed_paper_array(50)?;
//! let source = SourcePosition::new(&[52.0, 52.0, 52.0])?;
//! let meas = simulate(&array, &source, &NoiseModel::new(1.0, 7)?)?;
//! let report = localize(&meas, &GnConfig::default())?;
//! assert!(report.x_hat.distance(&source) < 2.0);
//! # Ok::<(), tdoa_core::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod geometry;
mod linalg;
mod serde_util;

pub mod harness;
pub mod identifiability;
pub mod likelihood;
pub mod linear;
pub mod model;
pub mod noise_variance;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::COINCIDENCE_TOL;
pub use harness::{draw_trial, run_campaign, CampaignResult, EstimatorKind, ExperimentConfig, Scenario};
pub use identifiability::{check_assumption5, check_geometry, IdentifiabilityReport, Verdict};
pub use likelihood::{fisher_information, BoundsReport};
pub use model::{MeasurementSet, NoiseModel, SensorArray, SourcePosition};
pub use pipeline::{localize, EstimateReport, GnConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/measurement-model.md")]
    mod measurement_model {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/bias-elimination.md")]
    mod bias_elimination {}
    #[doc = include_str!("../../../book/src/noise-variance.md")]
    mod noise_variance {}
    #[doc = include_str!("../../../book/src/two-step.md")]
    mod two_step {}
    #[doc = include_str!("../../../book/src/identifiability.md")]
    mod identifiability {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
