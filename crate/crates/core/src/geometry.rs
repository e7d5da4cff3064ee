//! Range-difference function and its derivatives in the reference frame
//! (reference sensor at the origin).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Points closer than this (meters) are treated as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-9;

fn check_apart(sensor: &DVector<f64>, x: &DVector<f64>) -> Result<(f64, f64)> {
    let to_sensor = (x - sensor).norm();
    let to_reference = x.norm();
    if to_sensor < COINCIDENCE_TOL {
        return Err(Error::DegenerateGeometry(format!(
            "position coincides with sensor at {:?}",
            sensor.as_slice()
        )));
    }
    if to_reference < COINCIDENCE_TOL {
        return Err(Error::DegenerateGeometry(
            "position coincides with the reference sensor".into(),
        ));
    }
    Ok((to_sensor, to_reference))
}

/// `f(x) = |a - x| - |x|`.
pub(crate) fn range_difference(sensor: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    let (to_sensor, to_reference) = check_apart(sensor, x)?;
    Ok(to_sensor - to_reference)
}

/// Value and gradient of `f`: `(x - a)/|x - a| - x/|x|`.
pub(crate) fn value_and_gradient(
    sensor: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let (to_sensor, to_reference) = check_apart(sensor, x)?;
    let grad = (x - sensor) / to_sensor - x / to_reference;
    Ok((to_sensor - to_reference, grad))
}

/// Hessian of `f`: `(I - u u^T)/|x - a| - (I - w w^T)/|x|` with unit
/// vectors `u` toward `x` from `a` and `w` toward `x` from the origin.
pub(crate) fn hessian(sensor: &DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (to_sensor, to_reference) = check_apart(sensor, x)?;
    let n = x.len();
    let u = (x - sensor) / to_sensor;
    let w = x / to_reference;
    let eye = DMatrix::<f64>::identity(n, n);
    Ok((&eye - &u * u.transpose()) / to_sensor - (&eye - &w * w.transpose()) / to_reference)
}
