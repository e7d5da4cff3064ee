//! Checkable sufficient conditions for a unique source position.
//!
//! If no conic (2D) or quadric surface (3D) passes through every sensor, the
//! second-moment matrix of the monomial lift `v(a)` has full rank and the
//! noise-free squared model pins down the source. The monomial order is fixed:
//!
//! | n | `v(a)` |
//! |---|--------|
//! | 2 | `a1², a1a2, a2², a1, a2, 1` |
//! | 3 | `a1², a2², a3², a1a2, a1a3, a2a3, a1, a2, a3, 1` |

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{information_matrix, FISHER_SINGULAR_RATIO};
use crate::model::{SensorArray, SourcePosition};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
/// Singular values within this factor of the cutoff make the verdict
/// inconclusive.
pub const BORDERLINE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identifiable,
    Degenerate,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub veronese_rank: usize,
    pub veronese_full: bool,
    pub affine_rank: usize,
    /// Smallest eigenvalue of `M(x)` at the probe position, if one was given.
    pub m_matrix_min_eig: Option<f64>,
    pub verdict: Verdict,
    /// Singular values of the lifted second-moment matrix divided by the
    /// largest one, descending.
    pub relative_singular_values: Vec<f64>,
}

/// Number of monomials of degree at most two in `n` variables.
pub fn veronese_len(dim: usize) -> usize {
    (dim + 1) * (dim + 2) / 2
}

pub fn veronese_vector(a: &[f64]) -> Result<Vec<f64>> {
    match *a {
        [a1, a2] => Ok(vec![a1 * a1, a1 * a2, a2 * a2, a1, a2, 1.0]),
        [a1, a2, a3] => Ok(vec![
            a1 * a1,
            a2 * a2,
            a3 * a3,
            a1 * a2,
            a1 * a3,
            a2 * a3,
            a1,
            a2,
            a3,
            1.0,
        ]),
        _ => Err(Error::InvalidDimension(a.len())),
    }
}

/// Sensors centered on their centroid and divided by their RMS radius.
fn normalized_sensors(array: &SensorArray) -> Vec<DVector<f64>> {
    let sensors = array.sensors();
    let centroid = sensors.iter().fold(DVector::zeros(array.dim()), |acc, s| acc + s) / sensors.len() as f64;
    let centered: Vec<DVector<f64>> = sensors.iter().map(|s| s - &centroid).collect();
    let rms = (centered.iter().map(|c| c.norm_squared()).sum::<f64>() / centered.len() as f64).sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    centered.into_iter().map(|c| c * scale).collect()
}

fn relative_singular_values(mat: DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = mat.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    if top > 0.0 {
        sv.iter().map(|s| s / top).collect()
    } else {
        vec![0.0; sv.len()]
    }
}

fn rank_of(rel: &[f64]) -> usize {
    rel.iter().filter(|&&s| s > RANK_CUTOFF).count()
}

fn borderline(rel: &[f64]) -> bool {
    rel.iter()
        .any(|&s| s > RANK_CUTOFF / BORDERLINE_FACTOR && s <= RANK_CUTOFF * BORDERLINE_FACTOR)
}

/// Rank test on the lifted sensor positions, plus collinearity/coplanarity.
pub fn check_assumption5(array: &SensorArray) -> IdentifiabilityReport {
    let n = array.dim();
    let len = veronese_len(n);
    let points = normalized_sensors(array);
    let mut moment = DMatrix::zeros(len, len);
    for p in &points {
        let v = DVector::from_vec(veronese_vector(p.as_slice()).expect("array dimension is 2 or 3"));
        moment.ger(1.0, &v, &v, 1.0);
    }
    moment /= points.len() as f64;
    let lifted = relative_singular_values(moment);
    let veronese_rank = rank_of(&lifted);

    let coords = DMatrix::from_fn(points.len(), n, |i, k| points[i][k]);
    let affine = relative_singular_values(coords);
    let affine_rank = rank_of(&affine);

    let veronese_full = veronese_rank == len;
    let verdict = if borderline(&lifted) || borderline(&affine) {
        Verdict::Inconclusive
    } else if veronese_full && affine_rank == n {
        Verdict::Identifiable
    } else {
        Verdict::Degenerate
    };
    IdentifiabilityReport {
        veronese_rank,
        veronese_full,
        affine_rank,
        m_matrix_min_eig: None,
        verdict,
        relative_singular_values: lifted,
    }
}

/// [`check_assumption5`] plus positive definiteness of `M(x)` at `probe`.
pub fn check_geometry(array: &SensorArray, probe: Option<&SourcePosition>) -> Result<IdentifiabilityReport> {
    let mut report = check_assumption5(array);
    if let Some(x) = probe {
        let eig = SymmetricEigen::new(information_matrix(array, x)?).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        report.m_matrix_min_eig = Some(lo);
        if report.verdict == Verdict::Identifiable && !(lo > FISHER_SINGULAR_RATIO * hi) {
            report.verdict = Verdict::Degenerate;
        }
    }
    Ok(report)
}
