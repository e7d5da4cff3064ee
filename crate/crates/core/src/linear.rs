//! Closed-form estimators on the squared measurement model.
//!
//! Moving `|x|` to the left of the measurement equation and squaring gives,
//! for each sensor (reference at the origin),
//!
//! ```text
//! d_i^2 - |a_i|^2 - sigma^2 = -2 a_i^T x - 2 d_i |x| + eps_i
//! ```
//!
//! which is linear in the lifted unknown `y = [x; |x|]` once the norm
//! constraint is dropped. Stacking the rows gives `b = A y + eps`. Because
//! `A` contains the noisy `d_i`, the plain least-squares solution is biased;
//! subtracting the asymptotic noise contributions from the normal equations
//!
//! ```text
//! y_be = (A^T A/m - sigma^2 G^T G/m)^-1 (A^T b/m - 2 sigma^2 G^T d/m)
//! ```
//!
//! with `G` the constant matrix of rows `[0 ... 0, -2]` removes it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;
use crate::model::{MeasurementSet, SourcePosition};
use crate::serde_util;

/// Normal matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// `A`, `b`, `G`, `d` of the squared model, in the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    /// Rows `[-2 a_i^T, -2 d_i]`.
    pub a: DMatrix<f64>,
    /// Entries `d_i^2 - |a_i|^2 - sigma2_used`.
    pub b: DVector<f64>,
    /// Rows `[0_{1 x n}, -2]`.
    pub g: DMatrix<f64>,
    pub d: DVector<f64>,
    pub sigma2_used: f64,
    origin: DVector<f64>,
}

/// Noise-free regressor built from the true source position. Only useful in
/// simulation, where the truth is known.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRegressionSystem {
    /// Rows `[-2 a_i^T, -2 d_i^o]`.
    pub a_o: DMatrix<f64>,
    pub d_o: DVector<f64>,
}

/// Lifted estimate `y = [x; s]`, `s` standing in for `|x - a_0|`.
///
/// The relation between `x` and `s` is not enforced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedParameter {
    /// `y` in the reference frame (reference sensor at the origin).
    #[serde(with = "serde_util::vector")]
    pub y: DVector<f64>,
    /// Reference sensor position used to map `y[..n]` back to world
    /// coordinates.
    #[serde(with = "serde_util::vector")]
    pub origin: DVector<f64>,
    /// Condition number of the normal matrix that produced `y`.
    pub condition: f64,
}

impl LiftedParameter {
    pub fn dim(&self) -> usize {
        self.y.len() - 1
    }

    /// Position part `y[..n]` in world coordinates.
    pub fn position(&self) -> SourcePosition {
        let n = self.dim();
        SourcePosition::from_vector(self.y.rows(0, n) + &self.origin)
    }

    /// The lifted range coordinate `s`.
    pub fn range(&self) -> f64 {
        self.y[self.dim()]
    }
}

/// Assemble the squared-model regression with `sigma2` subtracted in `b`.
pub fn assemble(meas: &MeasurementSet, sigma2: f64) -> Result<RegressionSystem> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be finite and nonnegative, got {sigma2}"
        )));
    }
    let n = meas.dim();
    let m = meas.len();
    let sensors = meas.centered_sensors();
    let d = meas.d().clone();
    let mut a = DMatrix::zeros(m, n + 1);
    let mut b = DVector::zeros(m);
    for (i, sensor) in sensors.iter().enumerate() {
        for k in 0..n {
            a[(i, k)] = -2.0 * sensor[k];
        }
        a[(i, n)] = -2.0 * d[i];
        b[i] = d[i] * d[i] - sensor.norm_squared() - sigma2;
    }
    let mut g = DMatrix::zeros(m, n + 1);
    g.column_mut(n).fill(-2.0);
    Ok(RegressionSystem {
        a,
        b,
        g,
        d,
        sigma2_used: sigma2,
        origin: meas.array().reference().clone(),
    })
}

fn require_rows(rows: usize, dim: usize) -> Result<()> {
    if rows < dim + 1 {
        return Err(Error::TooFewSensors {
            required: dim + 1,
            found: rows,
        });
    }
    Ok(())
}

/// Ordinary least squares `y = (A^T A)^-1 A^T b`.
pub fn solve_biased(sys: &RegressionSystem) -> Result<LiftedParameter> {
    require_rows(sys.a.nrows(), sys.a.ncols() - 1)?;
    let normal = sys.a.tr_mul(&sys.a);
    let rhs = sys.a.tr_mul(&sys.b);
    let (y, condition) = linalg::solve_symmetric(&normal, &rhs, MAX_CONDITION)?;
    Ok(LiftedParameter {
        y,
        origin: sys.origin.clone(),
        condition,
    })
}

/// Bias-eliminated estimate using noise variance `sigma2` (known or a
/// consistent estimate).
pub fn solve_bias_eliminated(meas: &MeasurementSet, sigma2: f64) -> Result<LiftedParameter> {
    require_rows(meas.len(), meas.dim())?;
    let sys = assemble(meas, sigma2)?;
    let m = meas.len() as f64;
    let normal = (sys.a.tr_mul(&sys.a) - sys.g.tr_mul(&sys.g) * sigma2) / m;
    let rhs = (sys.a.tr_mul(&sys.b) - sys.g.tr_mul(&sys.d) * (2.0 * sigma2)) / m;
    let (y, condition) = linalg::solve_symmetric(&normal, &rhs, MAX_CONDITION)?;
    Ok(LiftedParameter {
        y,
        origin: sys.origin,
        condition,
    })
}

/// [`solve_bias_eliminated`], falling back to [`solve_biased`] on the same
/// `sigma2` when the corrected normal matrix is too ill-conditioned. The
/// flag reports whether the fallback was taken.
pub fn solve_bias_eliminated_or_biased(
    meas: &MeasurementSet,
    sigma2: f64,
) -> Result<(LiftedParameter, bool)> {
    match solve_bias_eliminated(meas, sigma2) {
        Ok(y) => Ok((y, false)),
        Err(Error::IllConditioned { .. }) => Ok((solve_biased(&assemble(meas, sigma2)?)?, true)),
        Err(e) => Err(e),
    }
}

/// `A^o` and `d^o` from the true position.
pub fn oracle_system(meas: &MeasurementSet, x_true: &SourcePosition) -> Result<OracleRegressionSystem> {
    let local = meas.to_local(x_true)?;
    let n = meas.dim();
    let sensors = meas.centered_sensors();
    let mut a_o = DMatrix::zeros(sensors.len(), n + 1);
    let mut d_o = DVector::zeros(sensors.len());
    for (i, sensor) in sensors.iter().enumerate() {
        d_o[i] = geometry::range_difference(sensor, &local)?;
        for k in 0..n {
            a_o[(i, k)] = -2.0 * sensor[k];
        }
        a_o[(i, n)] = -2.0 * d_o[i];
    }
    Ok(OracleRegressionSystem { a_o, d_o })
}

/// `y = (A_o^T A_o)^-1 A_o^T b`, `b` using the true noise variance.
pub fn solve_oracle_unbiased(meas: &MeasurementSet, x_true: &SourcePosition) -> Result<LiftedParameter> {
    let sigma2 = meas.true_sigma2().ok_or_else(|| {
        Error::InvalidParameter("oracle solution needs the true noise variance".into())
    })?;
    require_rows(meas.len(), meas.dim())?;
    let oracle = oracle_system(meas, x_true)?;
    let sys = assemble(meas, sigma2)?;
    let normal = oracle.a_o.tr_mul(&oracle.a_o);
    let rhs = oracle.a_o.tr_mul(&sys.b);
    let (y, condition) = linalg::solve_symmetric(&normal, &rhs, MAX_CONDITION).map_err(|e| match e {
        Error::IllConditioned { condition } => Error::NotLocalizable(format!(
            "noise-free regressor is rank deficient (condition number {condition:.3e}); \
             the sensors may lie on a single conic or quadric"
        )),
        other => other,
    })?;
    Ok(LiftedParameter {
        y,
        origin: sys.origin,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{deploy_fixed_paper_array, deploy_uniform_cube, simulate, NoiseModel, SensorArray};
    use approx::assert_relative_eq;

    fn lifted_truth(x: &SourcePosition) -> DVector<f64> {
        let mut y = x.coords().clone().insert_row(x.dim(), 0.0);
        y[x.dim()] = x.coords().norm();
        y
    }

    fn cube_meas(m: usize, sigma: f64, seed: u64) -> (MeasurementSet, SourcePosition) {
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let array = deploy_uniform_cube(100.0, m, seed).unwrap();
        let meas = simulate(&array, &x, &NoiseModel::new(sigma, seed + 77).unwrap()).unwrap();
        (meas, x)
    }

    #[test]
    fn assembles_rows_by_hand() {
        let array = SensorArray::new(&[0.0, 0.0, 0.0], &[vec![50.0, 0.0, 50.0]]).unwrap();
        let meas = MeasurementSet::new(array, vec![-37.99], None).unwrap();
        let sys = assemble(&meas, 25.0).unwrap();
        let row: Vec<f64> = sys.a.row(0).iter().copied().collect();
        assert_eq!(&row[..3], &[-100.0, 0.0, -100.0]);
        assert_relative_eq!(row[3], 75.98, max_relative = 1e-15);
        // 1443.2401 - 5000 - 25
        assert_relative_eq!(sys.b[0], -3581.7599, max_relative = 1e-14);
        assert_eq!(sys.g.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn zero_variance_b_is_squared_model_rhs() {
        let (meas, _) = cube_meas(20, 3.0, 1);
        let sys = assemble(&meas, 0.0).unwrap();
        for (i, s) in meas.centered_sensors().iter().enumerate() {
            assert_relative_eq!(sys.b[i], meas.d()[i].powi(2) - s.norm_squared(), max_relative = 1e-12);
        }
    }

    #[test]
    fn structural_identities() {
        let (meas, x) = cube_meas(200, 10.0, 2);
        let sys = assemble(&meas, 100.0).unwrap();
        let m = meas.len() as f64;
        let mut expected = DMatrix::zeros(4, 4);
        expected[(3, 3)] = 4.0 * m;
        assert_eq!(sys.g.tr_mul(&sys.g), expected);

        let oracle = oracle_system(&meas, &x).unwrap();
        let diff = &sys.a - &oracle.a_o;
        for i in 0..meas.len() {
            for k in 0..3 {
                assert_eq!(diff[(i, k)], 0.0);
            }
            let r = meas.d()[i] - oracle.d_o[i];
            assert_relative_eq!(diff[(i, 3)], -2.0 * r, epsilon = 1e-10);
        }
    }

    #[test]
    fn biased_solution_matches_qr_least_squares() {
        for seed in 0..10 {
            let (meas, _) = cube_meas(30 + 7 * seed as usize, 5.0, seed);
            let sys = assemble(&meas, 25.0).unwrap();
            let ours = solve_biased(&sys).unwrap();
            let qr = sys.a.clone().qr();
            let qtb = qr.q().tr_mul(&sys.b);
            let oracle = qr.r().solve_upper_triangular(&qtb).unwrap();
            assert_relative_eq!(ours.y, oracle, max_relative = 1e-8);
        }
    }

    #[test]
    fn noiseless_solvers_recover_truth() {
        let x = SourcePosition::new(&[52.0, 52.0, 52.0]).unwrap();
        let meas = simulate(&deploy_fixed_paper_array(1).unwrap(), &x, &NoiseModel::new(0.0, 0).unwrap()).unwrap();
        let truth = lifted_truth(&x);
        let biased = solve_biased(&assemble(&meas, 0.0).unwrap()).unwrap();
        let be = solve_bias_eliminated(&meas, 0.0).unwrap();
        let ub = solve_oracle_unbiased(&meas, &x).unwrap();
        for y in [&biased.y, &be.y, &ub.y] {
            assert!((y - &truth).amax() < 1e-9, "{y} vs {truth}");
        }
        assert_relative_eq!(be.y, biased.y, max_relative = 1e-12);
        assert!(biased.position().distance(&x) < 1e-9);
    }

    #[test]
    fn offset_reference_is_handled() {
        let x = SourcePosition::new(&[52.0, 52.0, 52.0]).unwrap();
        let base = deploy_fixed_paper_array(2).unwrap();
        let meas = simulate(&base, &x, &NoiseModel::new(0.0, 0).unwrap()).unwrap();
        let shift = [-300.0, 12.0, 7.5];
        let moved = MeasurementSet::new(base.translated(&shift).unwrap(), meas.d().as_slice().to_vec(), Some(0.0)).unwrap();
        let est = solve_bias_eliminated(&moved, 0.0).unwrap();
        let expected: Vec<f64> = x.as_slice().iter().zip(shift).map(|(a, b)| a + b).collect();
        assert!(est.position().distance(&SourcePosition::new(&expected).unwrap()) < 1e-8);
        assert_relative_eq!(est.range(), x.coords().norm(), max_relative = 1e-10);
    }

    #[test]
    fn bias_eliminated_tracks_oracle_at_root_m_rate() {
        // mean distance between the bias-eliminated and oracle solutions
        let gap = |m: usize| {
            let reps = 30;
            (0..reps)
                .map(|r| {
                    let (meas, x) = cube_meas(m, 10.0, 1000 * m as u64 + r);
                    let be = solve_bias_eliminated(&meas, 100.0).unwrap();
                    let ub = solve_oracle_unbiased(&meas, &x).unwrap();
                    (&be.y - &ub.y).norm()
                })
                .sum::<f64>()
                / reps as f64
        };
        let (g2, g3, g4) = (gap(100), gap(1000), gap(10_000));
        // sqrt(10) per decade
        assert!((1.8..5.5).contains(&(g2 / g3)), "{g2} {g3}");
        assert!((1.8..5.5).contains(&(g3 / g4)), "{g3} {g4}");
    }

    #[test]
    fn oracle_estimate_is_root_m_consistent() {
        let scaled_error = |m: usize| {
            let reps = 30;
            let mse = (0..reps)
                .map(|r| {
                    let (meas, x) = cube_meas(m, 10.0, 7 * m as u64 + r);
                    let ub = solve_oracle_unbiased(&meas, &x).unwrap();
                    (&ub.y - lifted_truth(&x)).norm_squared()
                })
                .sum::<f64>()
                / reps as f64;
            (m as f64 * mse).sqrt()
        };
        let (s2, s4) = (scaled_error(100), scaled_error(10_000));
        assert!((0.5..2.0).contains(&(s2 / s4)), "{s2} {s4}");
    }

    #[test]
    fn biased_solution_is_inconsistent() {
        let gap = |m: usize| {
            let reps = 10;
            (0..reps)
                .map(|r| {
                    let (meas, x) = cube_meas(m, 10.0, 31 * m as u64 + r);
                    let b = solve_biased(&assemble(&meas, 100.0).unwrap()).unwrap();
                    let ub = solve_oracle_unbiased(&meas, &x).unwrap();
                    (&b.y - &ub.y).norm()
                })
                .sum::<f64>()
                / reps as f64
        };
        let (g3, g4) = (gap(1000), gap(10_000));
        assert!(g4 > 1.0, "asymptotic gap {g4}");
        assert!(g4 / g3 > 0.7, "gap should not vanish: {g3} -> {g4}");
    }

    #[test]
    fn lifted_range_agrees_with_position_norm() {
        let (meas, _) = cube_meas(10_000, 10.0, 5);
        let be = solve_bias_eliminated(&meas, 100.0).unwrap();
        let gap = (be.position().coords().norm() - be.range()).abs();
        assert!(gap < 5.0 * 10.0 / 100.0, "gap {gap}");
    }

    #[test]
    fn rejects_bad_variance() {
        let (meas, _) = cube_meas(20, 1.0, 3);
        assert!(assemble(&meas, -1.0).is_err());
        assert!(assemble(&meas, f64::NAN).is_err());
    }
}
