//! Maximum-likelihood objective, information matrices and the CRLB.
//!
//! With i.i.d. Gaussian noise the negative log-likelihood is, up to
//! constants,
//!
//! ```text
//! P_m(x) = (1/m) sum_i (d_i - f_i(x))^2,     f_i(x) = |a_i - x| - |x|
//! ```
//!
//! (reference at the origin). The Fisher information at `x` is
//! `F = (1/sigma^2) sum_i grad f_i grad f_i^T`, and its finite-sample
//! normalization `M(x) = (1/m) sum_i grad f_i grad f_i^T` is the matrix
//! whose limit governs the asymptotic covariance `sigma^2 M^-1 / m` of the
//! ML estimate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;
use crate::model::{MeasurementSet, SensorArray, SourcePosition};
use crate::serde_util;

/// Fisher matrices with `lambda_min / lambda_max` below this are singular.
pub const FISHER_SINGULAR_RATIO: f64 = 1e-12;

/// Value, gradient and exact Hessian of `P_m` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Fisher information, one JSON array per row (1/m^2).
    #[serde(with = "serde_util::rows")]
    pub fisher: DMatrix<f64>,
    /// `tr(F^-1)` in m^2.
    pub crlb: f64,
    /// `sqrt(crlb)` in m.
    pub rcrlb: f64,
    /// `(1/m) sum grad f_i grad f_i^T`, dimensionless.
    #[serde(with = "serde_util::rows")]
    pub m_matrix: DMatrix<f64>,
    /// `lambda_max / lambda_min` of the Fisher matrix.
    pub condition: f64,
}

/// Evaluate `P_m(x)` with its analytic gradient and Hessian.
///
/// The Hessian keeps the curvature term:
/// `(2/m) sum_i [grad f_i grad f_i^T - hess f_i (d_i - f_i)]`.
pub fn ml_objective(meas: &MeasurementSet, x: &SourcePosition) -> Result<ObjectiveEval> {
    let local = meas.to_local(x)?;
    let n = local.len();
    let m = meas.len() as f64;
    let mut value = 0.0;
    let mut gradient = DVector::zeros(n);
    let mut hessian = DMatrix::zeros(n, n);
    for (sensor, &d) in meas.centered_sensors().iter().zip(meas.d().iter()) {
        let (f, grad) = geometry::value_and_gradient(sensor, &local)?;
        let residual = d - f;
        value += residual * residual;
        gradient -= &grad * (2.0 * residual);
        hessian += (&grad * grad.transpose()) * 2.0;
        hessian -= geometry::hessian(sensor, &local)? * (2.0 * residual);
    }
    Ok(ObjectiveEval {
        value: value / m,
        gradient: gradient / m,
        hessian: hessian / m,
    })
}

/// Range differences `f_i(x)` and their Jacobian (row `i` is
/// `grad f_i(x)^T`), as used by the Gauss-Newton update.
pub fn range_differences_with_jacobian(
    array: &SensorArray,
    x: &SourcePosition,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    array.check_position(x)?;
    let local = x.coords() - array.reference();
    let n = local.len();
    let mut values = DVector::zeros(array.len());
    let mut jacobian = DMatrix::zeros(array.len(), n);
    for (i, sensor) in array.centered_sensors().iter().enumerate() {
        let (f, grad) = geometry::value_and_gradient(sensor, &local)?;
        values[i] = f;
        jacobian.row_mut(i).copy_from(&grad.transpose());
    }
    Ok((values, jacobian))
}

/// `M(x) = (1/m) sum_i grad f_i(x) grad f_i(x)^T`.
pub fn information_matrix(array: &SensorArray, x: &SourcePosition) -> Result<DMatrix<f64>> {
    array.check_position(x)?;
    let local = x.coords() - array.reference();
    let n = local.len();
    let mut acc = DMatrix::zeros(n, n);
    for sensor in array.centered_sensors() {
        let (_, grad) = geometry::value_and_gradient(&sensor, &local)?;
        acc += &grad * grad.transpose();
    }
    Ok(acc / array.len() as f64)
}

/// Fisher information assembled from its three-term expansion, the CRLB
/// `tr(F^-1)` and `M(x)`.
pub fn fisher_information(
    array: &SensorArray,
    x: &SourcePosition,
    sigma2: f64,
) -> Result<BoundsReport> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    array.check_position(x)?;
    let local = x.coords() - array.reference();
    let n = local.len();
    let m = array.len() as f64;
    let to_reference = local.norm();
    if to_reference < geometry::COINCIDENCE_TOL {
        return Err(Error::DegenerateGeometry(
            "position coincides with the reference sensor".into(),
        ));
    }
    let w = &local / to_reference;

    let mut sensor_term = DMatrix::zeros(n, n);
    let mut cross_term = DMatrix::zeros(n, n);
    for sensor in array.centered_sensors() {
        let offset = &local - &sensor;
        let dist = offset.norm();
        if dist < geometry::COINCIDENCE_TOL {
            return Err(Error::DegenerateGeometry(format!(
                "position coincides with sensor at {:?}",
                (sensor + array.reference()).as_slice()
            )));
        }
        sensor_term += &offset * offset.transpose() / (dist * dist);
        cross_term += (&local * offset.transpose() + &offset * local.transpose()) / (to_reference * dist);
    }
    let fisher = (&w * w.transpose() * m + sensor_term - cross_term) / sigma2;
    let fisher = (&fisher + fisher.transpose()) * 0.5;

    let eig = SymmetricEigen::new(fisher.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    if !(lambda_max > 0.0) || lambda_min / lambda_max < FISHER_SINGULAR_RATIO {
        return Err(Error::NotLocalizable(format!(
            "Fisher information is singular at {:?} (eigenvalues {:?}); the gradients of all \
             {} range differences are confined to a lower-dimensional subspace",
            x.as_slice(),
            eig.eigenvalues.as_slice(),
            array.len()
        )));
    }
    let crlb: f64 = eig.eigenvalues.iter().map(|l| 1.0 / l).sum();
    Ok(BoundsReport {
        m_matrix: information_matrix(array, x)?,
        condition: linalg::condition_number(&eig.eigenvalues),
        fisher,
        crlb,
        rcrlb: crlb.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{deploy_fixed_paper_array, deploy_uniform_cube, simulate, NoiseModel};
    use approx::assert_relative_eq;
    use rand::Rng as _;

    fn fixed_source() -> SourcePosition {
        SourcePosition::new(&[52.0, 52.0, 52.0]).unwrap()
    }

    /// Central differences of an arbitrary scalar/vector function.
    fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-6 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt());
        (0..x.len())
            .map(|k| {
                let mut plus = x.to_vec();
                let mut minus = x.to_vec();
                plus[k] += h;
                minus[k] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn objective_value(meas: &MeasurementSet, x: &[f64]) -> f64 {
        ml_objective(meas, &SourcePosition::new(x).unwrap()).unwrap().value
    }

    #[test]
    fn noiseless_minimum_is_zero() {
        let array = deploy_fixed_paper_array(1).unwrap();
        let meas = simulate(&array, &fixed_source(), &NoiseModel::new(0.0, 1).unwrap()).unwrap();
        let eval = ml_objective(&meas, &fixed_source()).unwrap();
        assert!(eval.value < 1e-24);
        assert!(eval.gradient.norm() < 1e-12);
        // at the noiseless minimum the curvature term vanishes
        let m = information_matrix(&array, &fixed_source()).unwrap();
        assert_relative_eq!(eval.hessian, m * 2.0, max_relative = 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = crate::rng::from_seed(21);
        let array = deploy_uniform_cube(100.0, 40, 3).unwrap();
        let meas = simulate(&array, &SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap(), &NoiseModel::new(5.0, 2).unwrap()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-40.0..40.0)).collect();
            let eval = ml_objective(&meas, &SourcePosition::new(&x).unwrap()).unwrap();
            let fd = fd_gradient(|p| objective_value(&meas, p), &x);
            for (g, f) in eval.gradient.iter().zip(&fd) {
                assert_relative_eq!(*g, *f, max_relative = 1e-5, epsilon = 1e-8);
            }
            for k in 0..3 {
                let fd_row = fd_gradient(
                    |p| ml_objective(&meas, &SourcePosition::new(p).unwrap()).unwrap().gradient[k],
                    &x,
                );
                for (j, f) in fd_row.iter().enumerate() {
                    assert_relative_eq!(eval.hessian[(k, j)], *f, max_relative = 1e-3, epsilon = 1e-6);
                }
            }
            assert!(linalg::asymmetry(&eval.hessian) < 1e-12);
        }
    }

    #[test]
    fn objective_is_translation_invariant() {
        let array = deploy_uniform_cube(100.0, 30, 9).unwrap();
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let meas = simulate(&array, &x, &NoiseModel::new(4.0, 9).unwrap()).unwrap();
        let shift = [1000.0, -250.0, 37.5];
        let moved = MeasurementSet::new(array.translated(&shift).unwrap(), meas.d().as_slice().to_vec(), None).unwrap();
        let probe = [3.0, -7.0, 20.0];
        let moved_probe: Vec<f64> = probe.iter().zip(shift).map(|(a, b)| a + b).collect();
        assert_relative_eq!(
            objective_value(&meas, &probe),
            objective_value(&moved, &moved_probe),
            max_relative = 1e-10
        );
    }

    #[test]
    fn fisher_matches_fd_jacobian_outer_products() {
        let array = deploy_fixed_paper_array(1).unwrap();
        let x = fixed_source();
        let sigma2 = 25.0;
        let report = fisher_information(&array, &x, sigma2).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        for i in 0..array.len() {
            let g = fd_gradient(
                |p| crate::model::range_difference(&array, &SourcePosition::new(p).unwrap(), i).unwrap(),
                x.as_slice(),
            );
            let g = DVector::from_vec(g);
            expected += &g * g.transpose() / sigma2;
        }
        assert_relative_eq!(report.fisher, expected, max_relative = 1e-6);
        assert_relative_eq!(report.rcrlb * report.rcrlb, report.crlb, max_relative = 1e-14);
    }

    #[test]
    fn fisher_scaling_laws() {
        let array = deploy_fixed_paper_array(1).unwrap();
        let x = fixed_source();
        let base = fisher_information(&array, &x, 25.0).unwrap();
        let doubled_sigma = fisher_information(&array, &x, 100.0).unwrap();
        assert_relative_eq!(doubled_sigma.fisher * 4.0, base.fisher.clone(), max_relative = 1e-12);
        assert_relative_eq!(doubled_sigma.crlb, 4.0 * base.crlb, max_relative = 1e-12);

        let repeated = fisher_information(&array.repeated(4), &x, 25.0).unwrap();
        assert_relative_eq!(repeated.crlb * 4.0, base.crlb, max_relative = 1e-12);
    }

    #[test]
    fn fisher_equals_scaled_m_matrix() {
        let array = deploy_uniform_cube(100.0, 50, 6).unwrap();
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let sigma2 = 100.0;
        let report = fisher_information(&array, &x, sigma2).unwrap();
        let m = array.len() as f64;
        assert_relative_eq!(report.fisher.clone(), &report.m_matrix * (m / sigma2), max_relative = 1e-10);
        let via_m = report.m_matrix.clone().try_inverse().unwrap() * (sigma2 / m);
        let via_f = report.fisher.clone().try_inverse().unwrap();
        assert_relative_eq!(via_m, via_f, max_relative = 1e-10);
        assert!(linalg::asymmetry(&report.m_matrix) < 1e-15);
    }

    #[test]
    fn collinear_geometry_is_singular() {
        // sensors and source all on the x axis: every gradient is parallel to it
        let sensors: Vec<Vec<f64>> = [10.0, 20.0, -15.0, 40.0, -30.0, 55.0]
            .iter()
            .map(|&t| vec![t, 0.0])
            .collect();
        let array = SensorArray::new(&[0.0, 0.0], &sensors).unwrap();
        let x = SourcePosition::new(&[5.0, 0.0]).unwrap();
        let m = information_matrix(&array, &x).unwrap();
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.min().abs() < 1e-15 * eig.eigenvalues.max().max(1.0));
        assert!(matches!(
            fisher_information(&array, &x, 1.0),
            Err(Error::NotLocalizable(_))
        ));
    }

    #[test]
    fn fixed_array_m_matrix_is_positive_definite() {
        let m = information_matrix(&deploy_fixed_paper_array(1).unwrap(), &fixed_source()).unwrap();
        assert!(SymmetricEigen::new(m).eigenvalues.min() > 0.0);
    }

    #[test]
    fn adding_a_sensor_lowers_the_bound() {
        let array = deploy_uniform_cube(100.0, 12, 14).unwrap();
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let before = fisher_information(&array, &x, 1.0).unwrap().crlb;
        let mut sensors: Vec<Vec<f64>> = array.sensors().iter().map(|s| s.as_slice().to_vec()).collect();
        sensors.push(vec![-50.0, 20.0, 31.0]);
        let bigger = SensorArray::new(&[0.0, 0.0, 0.0], &sensors).unwrap();
        let after = fisher_information(&bigger, &x, 1.0).unwrap().crlb;
        assert!(after < before);
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let array = deploy_fixed_paper_array(1).unwrap();
        assert!(matches!(
            fisher_information(&array, &fixed_source(), 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn bounds_report_json_shape() {
        let report = fisher_information(&deploy_fixed_paper_array(1).unwrap(), &fixed_source(), 25.0).unwrap();
        let json: serde_json::Value = serde_json::to_value(&report).unwrap();
        assert_eq!(json["fisher"].as_array().unwrap().len(), 3);
        assert_eq!(json["fisher"][0][1].as_f64().unwrap(), report.fisher[(0, 1)]);
        assert_eq!(json["crlb"].as_f64().unwrap(), report.crlb);
        assert_eq!(json["rcrlb"].as_f64().unwrap(), report.rcrlb);
        let back: BoundsReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
