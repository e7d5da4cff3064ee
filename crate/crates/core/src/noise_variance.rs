//! Consistent estimation of the noise variance from the measurements alone.
//!
//! With the augmented regressor `Ã` (rows `[-2 a_i^T, 1, -2 d_i, d_i^2 - |a_i|^2]`)
//! and `Q = Ã^T Ã / m`, the estimate is the smallest `z` at which the
//! largest eigenvalue of `Q^-1 S(z)` reaches one. `S(z)` is zero apart from
//! its trailing 2x2 block
//!
//! ```text
//! S22(z) = [ 4z        -4 mean(d) z              ]
//!          [ -4 mean(d) z   4 mean(d^2) z - 2 z^2 ]
//! ```
//!
//! Only the Schur complement `[q1 q2; q2 q3]` of the leading block of `Q`
//! interacts with `S22`, so the nonzero eigenvalues solve the quadratic
//! `c1 l^2 + (2 q1 z^2 - c2 z) l - 8 z^3 + c3 z^2 = 0`. Requiring `l = 1` to be
//! its larger root gives a cubic in `z` plus a sign condition.

use nalgebra::{Cholesky, DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::MeasurementSet;
use crate::serde_util;

/// `Q` counts as singular below this ratio of extreme eigenvalues, after
/// diagonal equilibration.
pub const Q_SINGULAR_RATIO: f64 = 1e-10;
/// Maximum allowed `|lambda_max(Q^-1 S(sigma2_hat)) - 1|`.
pub const VERIFY_TOL: f64 = 1e-6;
const SIGN_REL_TOL: f64 = 1e-9;
const IMAG_REL_TOL: f64 = 1e-8;

/// Everything the variance estimate is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVarianceProblem {
    /// `Ã`, one row per sensor, in the reference frame.
    #[serde(with = "serde_util::rows")]
    pub a_tilde: DMatrix<f64>,
    #[serde(with = "serde_util::rows")]
    pub q: DMatrix<f64>,
    pub d_bar: f64,
    pub d2_bar: f64,
    /// `[q1 q2; q2 q3]`.
    #[serde(with = "serde_util::rows")]
    pub schur: DMatrix<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl NoiseVarianceProblem {
    pub fn q1(&self) -> f64 {
        self.schur[(0, 0)]
    }

    pub fn q2(&self) -> f64 {
        self.schur[(0, 1)]
    }

    pub fn q3(&self) -> f64 {
        self.schur[(1, 1)]
    }

    /// Coefficients of the cubic in `z`, highest degree first.
    pub fn cubic_coefficients(&self) -> [f64; 4] {
        cubic_with(self.c1, self.c2, self.c3, self.q1())
    }

    /// `2 c1 + 2 q1 z^2 - c2 z`; positive when one is the larger root of the
    /// quadratic at `z`.
    pub fn sign_condition(&self, z: f64) -> f64 {
        2.0 * self.c1 + 2.0 * self.q1() * z * z - self.c2 * z
    }

    fn sign_tolerance(&self, z: f64) -> f64 {
        SIGN_REL_TOL * ((2.0 * self.c1).abs() + self.c2.abs() * z.abs() + 2.0 * self.q1().abs() * z * z)
    }
}

/// Outcome of [`estimate_sigma2`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub sigma2_hat: f64,
    /// Every real root of the cubic, ascending.
    pub roots: Vec<f64>,
    /// Nonnegative roots passing the sign condition, ascending.
    pub accepted: Vec<f64>,
    /// `|lambda_max(Q^-1 S(sigma2_hat)) - 1|` from a direct eigensolve.
    pub residual: f64,
}

fn cubic_with(c1: f64, c2: f64, c3: f64, q1: f64) -> [f64; 4] {
    [
        32.0 * c1,
        -(4.0 * c1 * c3 + 8.0 * q1 * c1),
        4.0 * c1 * c2,
        -4.0 * c1 * c1,
    ]
}

pub fn build_problem(meas: &MeasurementSet) -> Result<NoiseVarianceProblem> {
    let n = meas.dim();
    let m = meas.len();
    if m < n + 3 {
        return Err(Error::TooFewSensors {
            required: n + 3,
            found: m,
        });
    }
    let d = meas.d();
    let sensors = meas.centered_sensors();
    let mut a_tilde = DMatrix::zeros(m, n + 3);
    for (i, s) in sensors.iter().enumerate() {
        for k in 0..n {
            a_tilde[(i, k)] = -2.0 * s[k];
        }
        a_tilde[(i, n)] = 1.0;
        a_tilde[(i, n + 1)] = -2.0 * d[i];
        a_tilde[(i, n + 2)] = d[i] * d[i] - s.norm_squared();
    }
    let mf = m as f64;
    let q = a_tilde.tr_mul(&a_tilde) / mf;
    let d_bar = d.sum() / mf;
    let d2_bar = d.norm_squared() / mf;

    let scaled = linalg::scale_symmetric(&q, &linalg::equilibration(&q));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= Q_SINGULAR_RATIO * hi {
        return Err(Error::InsufficientGeometry(format!(
            "Q is not positive definite (equilibrated eigenvalue ratio {:.3e}); \
             need at least {} sensors that are not collinear/coplanar, and nonzero noise",
            lo / hi,
            n + 3
        )));
    }

    let k = n + 1;
    let q11 = q.view((0, 0), (k, k)).clone_owned();
    let q12 = q.view((0, k), (k, 2)).clone_owned();
    let q22 = q.view((k, k), (2, 2)).clone_owned();
    let chol = Cholesky::new(q11)
        .ok_or_else(|| Error::InsufficientGeometry("leading block of Q is not positive definite".into()))?;
    let mut schur = q22 - q12.tr_mul(&chol.solve(&q12));
    let off = 0.5 * (schur[(0, 1)] + schur[(1, 0)]);
    schur[(0, 1)] = off;
    schur[(1, 0)] = off;

    let (q1, q2, q3) = (schur[(0, 0)], schur[(0, 1)], schur[(1, 1)]);
    let c1 = q1 * q3 - q2 * q2;
    if !(c1 > 1e-12 * (q1 * q3).abs()) {
        return Err(Error::SchurDegenerate { c1 });
    }
    let c2 = 4.0 * q1 * d2_bar + 4.0 * q3 + 8.0 * q2 * d_bar;
    let c3 = 16.0 * (d2_bar - d_bar * d_bar);
    Ok(NoiseVarianceProblem {
        a_tilde,
        q,
        d_bar,
        d2_bar,
        schur,
        c1,
        c2,
        c3,
    })
}

/// The full `(n+3) x (n+3)` matrix `S(z)`.
pub fn s_of_z(prob: &NoiseVarianceProblem, z: f64) -> DMatrix<f64> {
    let size = prob.q.nrows();
    let mut s = DMatrix::zeros(size, size);
    let k = size - 2;
    s[(k, k)] = 4.0 * z;
    s[(k, k + 1)] = -4.0 * prob.d_bar * z;
    s[(k + 1, k)] = -4.0 * prob.d_bar * z;
    s[(k + 1, k + 1)] = 4.0 * prob.d2_bar * z - 2.0 * z * z;
    s
}

/// `lambda_max(Q^-1 S(z))` from the reduced quadratic. The remaining `n + 1`
/// eigenvalues of `Q^-1 S(z)` are zero, hence the clamp at zero.
pub fn lambda_max_condition(prob: &NoiseVarianceProblem, z: f64) -> f64 {
    let a = prob.c1;
    let b = 2.0 * prob.q1() * z * z - prob.c2 * z;
    let c = -8.0 * z * z * z + prob.c3 * z * z;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let larger = if q == 0.0 {
        0.0
    } else {
        (q / a).max(c / q)
    };
    larger.max(0.0)
}

/// `lambda_max(Q^-1 S(z))` by a direct symmetric eigensolve of
/// `L^-1 S L^-T`, `L` the Cholesky factor of the equilibrated `Q`.
pub fn lambda_max_direct(prob: &NoiseVarianceProblem, z: f64) -> Result<f64> {
    let scale = linalg::equilibration(&prob.q);
    let q = linalg::scale_symmetric(&prob.q, &scale);
    let s = linalg::scale_symmetric(&s_of_z(prob, z), &scale);
    let l = Cholesky::new(q)
        .ok_or_else(|| Error::InsufficientGeometry("Q is not positive definite".into()))?
        .unpack();
    let left = l
        .solve_lower_triangular(&s)
        .ok_or_else(|| Error::InsufficientGeometry("singular Cholesky factor".into()))?;
    let mut whitened = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::InsufficientGeometry("singular Cholesky factor".into()))?;
    whitened = 0.5 * (&whitened + whitened.transpose());
    Ok(SymmetricEigen::new(whitened).eigenvalues.max())
}

pub fn estimate_sigma2(meas: &MeasurementSet) -> Result<VarianceEstimate> {
    estimate_from_problem(&build_problem(meas)?)
}

pub fn estimate_from_problem(prob: &NoiseVarianceProblem) -> Result<VarianceEstimate> {
    let (roots, accepted, signs) = classify_roots(prob, prob.c3);
    let Some(&sigma2_hat) = accepted.first() else {
        return Err(Error::NoAdmissibleRoot {
            roots,
            sign_values: signs,
        });
    };
    let residual = (lambda_max_direct(prob, sigma2_hat)? - 1.0).abs();
    if !(residual < VERIFY_TOL) {
        return Err(Error::VarianceVerification { residual });
    }
    Ok(VarianceEstimate {
        sigma2_hat,
        roots,
        accepted,
        residual,
    })
}

/// Real roots of the cubic built with the given `c3`, the admissible subset
/// and the sign-condition value at every root.
fn classify_roots(prob: &NoiseVarianceProblem, c3: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let roots = real_cubic_roots(cubic_with(prob.c1, prob.c2, c3, prob.q1()));
    let signs: Vec<f64> = roots.iter().map(|&z| prob.sign_condition(z)).collect();
    let accepted = roots
        .iter()
        .zip(&signs)
        .filter(|(&z, &s)| z >= 0.0 && s > prob.sign_tolerance(z))
        .map(|(&z, _)| z)
        .collect();
    (roots, accepted, signs)
}

fn eval_cubic(p: &[f64; 4], z: f64) -> f64 {
    ((p[0] * z + p[1]) * z + p[2]) * z + p[3]
}

/// Real roots (ascending) of `p[0] z^3 + p[1] z^2 + p[2] z + p[3]` via the
/// eigenvalues of its companion matrix, each polished by Newton steps that
/// are kept only while they shrink the residual.
fn real_cubic_roots(p: [f64; 4]) -> Vec<f64> {
    let [lead, a2, a1, a0] = p;
    let companion = Matrix3::new(
        -a2 / lead, -a1 / lead, -a0 / lead,
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
    );
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|c| c.im.abs() < IMAG_REL_TOL * (1.0 + c.re.abs()))
        .map(|c| {
            let mut z = c.re;
            let mut best = eval_cubic(&p, z).abs();
            for _ in 0..4 {
                let slope = (3.0 * lead * z + 2.0 * a2) * z + a1;
                if slope == 0.0 {
                    break;
                }
                let next = z - eval_cubic(&p, z) / slope;
                let value = eval_cubic(&p, next).abs();
                if !(value < best) {
                    break;
                }
                z = next;
                best = value;
            }
            z
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}
