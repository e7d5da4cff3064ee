//! Monte-Carlo campaigns over array sizes and estimators.
//!
//! Each trial draws from its own RNG stream, keyed by size index and trial
//! index, so results are independent of thread scheduling. Every selected
//! estimator sees the same measurement draw.

mod config;
mod emit;

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{EstimatorKind, ExperimentConfig, Scenario};
pub use emit::{emit_results, CampaignArtifact};

use crate::error::{Error, Result};
use crate::likelihood::fisher_information;
use crate::linear;
use crate::model::{deploy_uniform_cube_with, simulate_with, MeasurementSet, SensorArray, SourcePosition};
use crate::noise_variance;
use crate::pipeline::{self, GnConfig};
use crate::rng;

/// Estimates farther than this many source ranges from the truth count as
/// divergent.
pub const DIVERGENCE_FACTOR: f64 = 100.0;

/// Aggregates for one estimator at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub size: usize,
    /// Number of sensors behind `size`.
    pub sensors: usize,
    pub estimator: EstimatorKind,
    /// Sum over coordinates of `|mean(x_hat - x)|`; absent when every trial
    /// diverged.
    pub bias: Option<f64>,
    /// `sqrt(mean |x_hat - x|^2)` over non-divergent trials.
    pub rmse: Option<f64>,
    /// Root of the Cramér-Rao bound at the true source with the true
    /// variance, averaged over the trial geometries when they are redrawn.
    pub rcrlb: f64,
    /// RMSE of the variance estimate, for estimators that estimate it.
    pub sigma2_rmse: Option<f64>,
    /// Seconds per trial.
    pub mean_wall_time: f64,
    pub divergence_count: usize,
}

/// Statistics of the noise variance estimate at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub size: usize,
    /// RMSE of `sigma2_hat` over trials where estimation succeeded.
    pub rmse: Option<f64>,
    pub mean: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
    pub variance: Vec<VarianceRow>,
}

impl CampaignResult {
    pub fn row(&self, estimator: EstimatorKind, size: usize) -> Option<&CampaignRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.size == size)
    }

    pub fn variance_row(&self, size: usize) -> Option<&VarianceRow> {
        self.variance.iter().find(|r| r.size == size)
    }

    /// Copy with all wall-clock timings zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.mean_wall_time = 0.0;
        }
        out
    }
}

struct Trial {
    /// Per selected estimator: the estimate (None on failure) and seconds.
    estimates: Vec<(Option<SourcePosition>, f64)>,
    sigma2_hat: Option<f64>,
    crlb: Option<f64>,
}

/// Index of the stream used for the shared array when geometry is not
/// redrawn.
const GEOMETRY_STREAM: usize = u32::MAX as usize;

fn sensors_for(cfg: &ExperimentConfig, size: usize, base: Option<&SensorArray>) -> usize {
    match base {
        Some(array) => array.len() * size,
        None => {
            debug_assert_eq!(cfg.scenario, Scenario::UniformCube);
            size
        }
    }
}

fn run_estimator(kind: EstimatorKind, meas: &MeasurementSet, sigma2: f64, gn: &GnConfig) -> Result<SourcePosition> {
    match kind {
        EstimatorKind::Biased => Ok(linear::solve_biased(&linear::assemble(meas, sigma2)?)?.position()),
        EstimatorKind::BiasEliminatedTrueSigma => Ok(linear::solve_bias_eliminated(meas, sigma2)?.position()),
        EstimatorKind::BiasEliminatedEstSigma => {
            let cfg = GnConfig {
                use_known_variance: false,
                ..gn.clone()
            };
            Ok(pipeline::initialize(meas, &cfg, &mut Vec::new())?.2.position())
        }
        EstimatorKind::TwoStep => Ok(pipeline::localize(meas, gn)?.x_hat),
    }
}

fn crlb_at(array: &SensorArray, x: &SourcePosition, sigma2: f64) -> Option<f64> {
    fisher_information(array, x, sigma2).ok().map(|b| b.crlb)
}

/// Array shared by every trial at `size_index`, or None when each trial
/// draws its own.
fn shared_geometry(cfg: &ExperimentConfig, base: Option<&SensorArray>, size_index: usize) -> Result<Option<SensorArray>> {
    let size = cfg.sizes[size_index];
    Ok(match (base, cfg.redraws_geometry()) {
        (Some(array), _) => Some(array.repeated(size)),
        (None, false) => Some(deploy_uniform_cube_with(
            cfg.cube_edge,
            size,
            &mut rng::trial_stream(cfg.seed, size_index, GEOMETRY_STREAM),
        )?),
        (None, true) => None,
    })
}

fn draw(cfg: &ExperimentConfig, size_index: usize, trial: usize, fixed: Option<&SensorArray>) -> Result<MeasurementSet> {
    let mut rng = rng::trial_stream(cfg.seed, size_index, trial);
    match fixed {
        Some(array) => simulate_with(array, &cfg.source, cfg.sigma, &mut rng),
        None => {
            let array = deploy_uniform_cube_with(cfg.cube_edge, cfg.sizes[size_index], &mut rng)?;
            simulate_with(&array, &cfg.source, cfg.sigma, &mut rng)
        }
    }
}

fn base_geometry(cfg: &ExperimentConfig) -> Result<Option<SensorArray>> {
    match cfg.scenario {
        Scenario::UniformCube => Ok(None),
        _ => cfg.base_array().map(Some),
    }
}

/// The measurement set that trial `trial` at `sizes[size_index]` of a
/// campaign sees.
pub fn draw_trial(cfg: &ExperimentConfig, size_index: usize, trial: usize) -> Result<MeasurementSet> {
    cfg.validate()?;
    if size_index >= cfg.sizes.len() {
        return Err(Error::Config(format!(
            "size index {size_index} out of range for {} sizes",
            cfg.sizes.len()
        )));
    }
    let fixed = shared_geometry(cfg, base_geometry(cfg)?.as_ref(), size_index)?;
    draw(cfg, size_index, trial, fixed.as_ref())
}

fn run_trial(
    cfg: &ExperimentConfig,
    size_index: usize,
    trial: usize,
    fixed: Option<&SensorArray>,
) -> Result<Trial> {
    let sigma2 = cfg.sigma * cfg.sigma;
    let meas = draw(cfg, size_index, trial, fixed)?;
    let array = meas.array();
    let estimates = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let est = run_estimator(kind, &meas, sigma2, &cfg.gn).ok();
            (est, start.elapsed().as_secs_f64())
        })
        .collect();
    let sigma2_hat = noise_variance::estimate_sigma2(&meas).ok().map(|e| e.sigma2_hat);
    let crlb = (fixed.is_none() && sigma2 > 0.0)
        .then(|| crlb_at(array, &cfg.source, sigma2))
        .flatten();
    Ok(Trial {
        estimates,
        sigma2_hat,
        crlb,
    })
}

fn estimates_variance(kind: EstimatorKind, gn: &GnConfig) -> bool {
    match kind {
        EstimatorKind::BiasEliminatedEstSigma => true,
        EstimatorKind::TwoStep => !gn.use_known_variance,
        _ => false,
    }
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| (sum / count as f64).sqrt())
}

pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignResult> {
    cfg.validate()?;
    let sigma2 = cfg.sigma * cfg.sigma;
    let base = base_geometry(cfg)?;
    let x = cfg.source.coords();
    let mut rows = Vec::new();
    let mut variance = Vec::new();

    for (size_index, &size) in cfg.sizes.iter().enumerate() {
        let fixed = shared_geometry(cfg, base.as_ref(), size_index)?;
        let reference = fixed.as_ref().map_or_else(|| DVector::zeros(x.len()), |a| a.reference().clone());
        let radius = DIVERGENCE_FACTOR * (x - reference).norm().max(1.0);

        let trials: Vec<Trial> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, size_index, t, fixed.as_ref()))
            .collect::<Result<_>>()?;

        let rcrlb = if sigma2 == 0.0 {
            0.0
        } else if let Some(array) = &fixed {
            crlb_at(array, &cfg.source, sigma2).map_or(f64::NAN, f64::sqrt)
        } else {
            let crlbs: Vec<f64> = trials.iter().filter_map(|t| t.crlb).collect();
            (crlbs.iter().sum::<f64>() / crlbs.len() as f64).sqrt()
        };

        let sigma2_errors: Vec<f64> = trials.iter().filter_map(|t| t.sigma2_hat).collect();
        let sigma2_rmse = rms(sigma2_errors.iter().map(|s| (s - sigma2).powi(2)));
        variance.push(VarianceRow {
            size,
            rmse: sigma2_rmse,
            mean: (!sigma2_errors.is_empty()).then(|| sigma2_errors.iter().sum::<f64>() / sigma2_errors.len() as f64),
            failures: cfg.trials - sigma2_errors.len(),
        });

        for (e, &kind) in cfg.estimators.iter().enumerate() {
            let errors: Vec<DVector<f64>> = trials
                .iter()
                .filter_map(|t| t.estimates[e].0.as_ref())
                .map(|est| est.coords() - x)
                .filter(|err| err.norm() <= radius)
                .collect();
            let valid = errors.len();
            let bias = (valid > 0).then(|| {
                let mean = errors.iter().fold(DVector::zeros(x.len()), |acc, err| acc + err) / valid as f64;
                mean.abs().sum()
            });
            rows.push(CampaignRow {
                size,
                sensors: sensors_for(cfg, size, base.as_ref()),
                estimator: kind,
                bias,
                rmse: rms(errors.iter().map(|err| err.norm_squared())),
                rcrlb,
                sigma2_rmse: if estimates_variance(kind, &cfg.gn) { sigma2_rmse } else { None },
                mean_wall_time: trials.iter().map(|t| t.estimates[e].1).sum::<f64>() / cfg.trials as f64,
                divergence_count: cfg.trials - valid,
            });
        }
    }
    Ok(CampaignResult { rows, variance })
}
