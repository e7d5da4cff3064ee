//! The two-step estimator: noise variance, bias-eliminated initializer, then
//! Gauss-Newton refinement on the range-difference likelihood.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::likelihood::fisher_information;
use crate::linalg;
use crate::linear::{self, LiftedParameter};
use crate::model::{MeasurementSet, SourcePosition};
use crate::noise_variance::{self, VarianceEstimate};

/// `J^T J + damping I` with a larger condition number is rejected.
pub const GN_MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnConfig {
    pub max_iterations: usize,
    /// Stop once a step is shorter than this (meters).
    pub step_tolerance: f64,
    /// Levenberg damping retried when an undamped step is rank deficient.
    /// Zero disables the retry.
    pub damping: f64,
    /// Use the measurement set's true noise variance instead of estimating
    /// it, when one is attached.
    pub use_known_variance: bool,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1,
            step_tolerance: 1e-10,
            damping: 0.0,
            use_known_variance: false,
        }
    }
}

impl GnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.step_tolerance.is_finite() && self.step_tolerance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step_tolerance must be finite and nonnegative, got {}",
                self.step_tolerance
            )));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must be finite and nonnegative, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Noise variance estimation failed; zero was used instead.
    VarianceFallback,
    /// The corrected normal matrix was ill-conditioned; plain least squares
    /// initialized the refinement.
    BiasedInitializer,
    /// At least one Gauss-Newton step needed damping.
    DampedStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub x_hat: SourcePosition,
    pub sigma2_hat: f64,
    pub x_be: SourcePosition,
    pub y_be: LiftedParameter,
    pub gn_iterations: usize,
    pub gn_step_norms: Vec<f64>,
    /// Trace of the inverse Fisher information at `x_hat` with
    /// `sigma2_hat`; absent when that matrix is unavailable (e.g. zero
    /// variance).
    pub crlb: Option<f64>,
    pub fallbacks: Vec<Fallback>,
    /// Seconds.
    pub wall_time: f64,
}

/// One Gauss-Newton update `x + (J^T J + damping I)^-1 J^T (d - f(x))`.
pub fn gauss_newton_step(meas: &MeasurementSet, x: &SourcePosition, damping: f64) -> Result<SourcePosition> {
    let local = meas.to_local(x)?;
    let step = gn_increment(meas, &local, damping)?;
    Ok(meas.world_position(local + step))
}

fn gn_increment(meas: &MeasurementSet, local: &DVector<f64>, damping: f64) -> Result<DVector<f64>> {
    let n = meas.dim();
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    for (sensor, d) in meas.centered_sensors().iter().zip(meas.d().iter()) {
        let (f, grad) = geometry::value_and_gradient(sensor, local)?;
        jtj.ger(1.0, &grad, &grad, 1.0);
        jtr.axpy(d - f, &grad, 1.0);
    }
    for k in 0..n {
        jtj[(k, k)] += damping;
    }
    linalg::solve_symmetric(&jtj, &jtr, GN_MAX_CONDITION)
        .map(|(step, _)| step)
        .map_err(|e| match e {
            Error::IllConditioned { condition } => Error::RankDeficientJacobian { condition },
            other => other,
        })
}

/// First stage: noise variance and bias-eliminated solution. Returns the
/// variance used, the variance estimate when one was computed, and the
/// lifted solution.
pub fn initialize(
    meas: &MeasurementSet,
    cfg: &GnConfig,
    fallbacks: &mut Vec<Fallback>,
) -> Result<(f64, Option<VarianceEstimate>, LiftedParameter)> {
    meas.array().require_estimable()?;
    let (sigma2, estimate) = match meas.true_sigma2().filter(|_| cfg.use_known_variance) {
        Some(known) => (known, None),
        None => match noise_variance::estimate_sigma2(meas) {
            Ok(est) => (est.sigma2_hat, Some(est)),
            Err(_) => {
                fallbacks.push(Fallback::VarianceFallback);
                (0.0, None)
            }
        },
    };
    let (y_be, biased) = linear::solve_bias_eliminated_or_biased(meas, sigma2)?;
    if biased {
        fallbacks.push(Fallback::BiasedInitializer);
    }
    Ok((sigma2, estimate, y_be))
}

pub fn localize(meas: &MeasurementSet, cfg: &GnConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut fallbacks = Vec::new();
    let (sigma2_hat, _, y_be) = initialize(meas, cfg, &mut fallbacks)?;
    let x_be = y_be.position();

    let mut local = meas.to_local(&x_be)?;
    let mut gn_step_norms = Vec::with_capacity(cfg.max_iterations);
    for _ in 0..cfg.max_iterations {
        let step = match gn_increment(meas, &local, 0.0) {
            Err(Error::RankDeficientJacobian { .. }) if cfg.damping > 0.0 => {
                if !fallbacks.contains(&Fallback::DampedStep) {
                    fallbacks.push(Fallback::DampedStep);
                }
                gn_increment(meas, &local, cfg.damping)?
            }
            other => other?,
        };
        local += &step;
        let norm = step.norm();
        gn_step_norms.push(norm);
        if norm < cfg.step_tolerance {
            break;
        }
    }
    if local.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotLocalizable("Gauss-Newton produced a non-finite estimate".into()));
    }
    let x_hat = meas.world_position(local);
    let crlb = (sigma2_hat > 0.0)
        .then(|| fisher_information(meas.array(), &x_hat, sigma2_hat).ok())
        .flatten()
        .map(|b| b.crlb);
    Ok(EstimateReport {
        x_hat,
        sigma2_hat,
        x_be,
        y_be,
        gn_iterations: gn_step_norms.len(),
        gn_step_norms,
        crlb,
        fallbacks,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
