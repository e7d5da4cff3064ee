//! Sensor geometry, measurements and the simulator.
//!
//! A range-difference measurement between sensor `i` and the reference
//! sensor is
//!
//! ```text
//! d_i = |a_i - x| - |x - a_0| + r_i,     r_i ~ N(0, sigma^2) i.i.d.
//! ```
//!
//! All estimators work in the frame where the reference sensor sits at the
//! origin; [`MeasurementSet::centered_sensors`] performs that translation.

mod csv;
mod deploy;

pub use deploy::{deploy_fixed_paper_array, deploy_uniform_cube, deploy_uniform_cube_with, FIXED_ARRAY};

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, COINCIDENCE_TOL};
use crate::rng;

fn check_dimension(dim: usize) -> Result<()> {
    match dim {
        2 | 3 => Ok(()),
        other => Err(Error::InvalidDimension(other)),
    }
}

fn to_point(coords: &[f64], dim: usize) -> Result<DVector<f64>> {
    if coords.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: coords.len(),
        });
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite coordinate in {coords:?}"
        )));
    }
    Ok(DVector::from_column_slice(coords))
}

/// Reference sensor `a_0` plus the measuring sensors `a_1..a_m`.
///
/// A sensor may appear several times; repeated entries model repeated
/// i.i.d. measurements by the same sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    dim: usize,
    reference: DVector<f64>,
    sensors: Vec<DVector<f64>>,
}

impl SensorArray {
    pub fn new(reference: &[f64], sensors: &[Vec<f64>]) -> Result<Self> {
        let dim = reference.len();
        check_dimension(dim)?;
        let reference = to_point(reference, dim)?;
        let sensors = sensors
            .iter()
            .map(|s| to_point(s, dim))
            .collect::<Result<Vec<_>>>()?;
        for (i, s) in sensors.iter().enumerate() {
            if (s - &reference).norm() < COINCIDENCE_TOL {
                return Err(Error::DegenerateGeometry(format!(
                    "sensor {i} coincides with the reference"
                )));
            }
        }
        Ok(Self {
            dim,
            reference,
            sensors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of measuring sensors `m` (the reference is not counted).
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn sensors(&self) -> &[DVector<f64>] {
        &self.sensors
    }

    /// Sensor coordinates relative to the reference.
    pub fn centered_sensors(&self) -> Vec<DVector<f64>> {
        self.sensors.iter().map(|s| s - &self.reference).collect()
    }

    /// Estimation needs at least `n + 3` sensors.
    pub fn require_estimable(&self) -> Result<()> {
        let required = self.dim + 3;
        if self.len() < required {
            return Err(Error::TooFewSensors {
                required,
                found: self.len(),
            });
        }
        Ok(())
    }

    /// `times` rounds of the same sensors, `[a_1..a_m, a_1..a_m, ...]`.
    pub fn repeated(&self, times: usize) -> Self {
        let sensors = (0..times)
            .flat_map(|_| self.sensors.iter().cloned())
            .collect();
        Self {
            dim: self.dim,
            reference: self.reference.clone(),
            sensors,
        }
    }

    /// Rigid translation of every sensor, reference included.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        let shift = to_point(shift, self.dim)?;
        Ok(Self {
            dim: self.dim,
            reference: &self.reference + &shift,
            sensors: self.sensors.iter().map(|s| s + &shift).collect(),
        })
    }

    pub(crate) fn check_position(&self, x: &SourcePosition) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }
}

/// Source coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct SourcePosition(DVector<f64>);

impl SourcePosition {
    pub fn new(coords: &[f64]) -> Result<Self> {
        check_dimension(coords.len())?;
        Ok(Self(to_point(coords, coords.len())?))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn distance(&self, other: &SourcePosition) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl From<SourcePosition> for Vec<f64> {
    fn from(p: SourcePosition) -> Self {
        p.0.as_slice().to_vec()
    }
}

impl TryFrom<Vec<f64>> for SourcePosition {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SourcePosition::new(&v)
    }
}

/// Gaussian measurement noise with a seed for reproducible draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
    seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise standard deviation must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Range-difference measurements `d_1..d_m` for a sensor array.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    array: SensorArray,
    d: DVector<f64>,
    true_sigma2: Option<f64>,
}

impl MeasurementSet {
    pub fn new(array: SensorArray, d: Vec<f64>, true_sigma2: Option<f64>) -> Result<Self> {
        if d.len() != array.len() {
            return Err(Error::DimensionMismatch {
                expected: array.len(),
                found: d.len(),
            });
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite measurement".into()));
        }
        if let Some(s2) = true_sigma2 {
            if !s2.is_finite() || s2 < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "noise variance must be finite and nonnegative, got {s2}"
                )));
            }
        }
        Ok(Self {
            array,
            d: DVector::from_vec(d),
            true_sigma2,
        })
    }

    pub fn array(&self) -> &SensorArray {
        &self.array
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.array.dim()
    }

    pub fn true_sigma2(&self) -> Option<f64> {
        self.true_sigma2
    }

    pub fn centered_sensors(&self) -> Vec<DVector<f64>> {
        self.array.centered_sensors()
    }

    /// Position relative to the reference sensor.
    pub(crate) fn to_local(&self, x: &SourcePosition) -> Result<DVector<f64>> {
        self.array.check_position(x)?;
        Ok(x.coords() - self.array.reference())
    }

    pub(crate) fn world_position(&self, local: DVector<f64>) -> SourcePosition {
        SourcePosition::from_vector(local + self.array.reference())
    }
}

/// Noiseless range difference `|a_i - x| - |x - a_0|` for sensor `index`
/// (zero-based).
pub fn range_difference(array: &SensorArray, x: &SourcePosition, index: usize) -> Result<f64> {
    array.check_position(x)?;
    let sensor = array.sensors().get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: array.len(),
    })?;
    let origin = array.reference();
    geometry::range_difference(&(sensor - origin), &(x.coords() - origin))
}

/// Draw `d_i = f_i(x) + r_i` with noise from the model's seeded generator.
pub fn simulate(array: &SensorArray, x: &SourcePosition, noise: &NoiseModel) -> Result<MeasurementSet> {
    let mut rng = rng::from_seed(noise.seed());
    simulate_with(array, x, noise.sigma(), &mut rng)
}

/// [`simulate`] drawing from a caller-supplied generator.
pub fn simulate_with(
    array: &SensorArray,
    x: &SourcePosition,
    sigma: f64,
    rng: &mut rng::Rng,
) -> Result<MeasurementSet> {
    NoiseModel::new(sigma, 0)?;
    array.check_position(x)?;
    let origin = array.reference();
    let local = x.coords() - origin;
    let d = array
        .sensors()
        .iter()
        .map(|s| {
            let clean = geometry::range_difference(&(s - origin), &local)?;
            let r: f64 = rng.sample(StandardNormal);
            Ok(clean + sigma * r)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementSet::new(array.clone(), d, Some(sigma * sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn origin3() -> Vec<f64> {
        vec![0.0, 0.0, 0.0]
    }

    #[test]
    fn range_difference_matches_high_precision_value() {
        let array = SensorArray::new(&origin3(), &[vec![50.0, 0.0, 50.0]]).unwrap();
        let x = SourcePosition::new(&[52.0, 52.0, 52.0]).unwrap();
        // 52.076866265166148... - 90.066641993581619... (40-digit evaluation)
        assert_relative_eq!(
            range_difference(&array, &x, 0).unwrap(),
            -37.989_775_728_415_471,
            max_relative = 1e-14
        );
    }

    #[test]
    fn range_difference_vanishes_at_midpoint() {
        let a = vec![30.0, -12.0, 8.0];
        let array = SensorArray::new(&origin3(), std::slice::from_ref(&a)).unwrap();
        let mid: Vec<f64> = a.iter().map(|v| v / 2.0).collect();
        let x = SourcePosition::new(&mid).unwrap();
        assert!(range_difference(&array, &x, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn range_difference_errors() {
        let array = SensorArray::new(&origin3(), &[vec![50.0, 0.0, 50.0]]).unwrap();
        let x = SourcePosition::new(&[50.0, 0.0, 50.0]).unwrap();
        assert!(matches!(
            range_difference(&array, &x, 0),
            Err(Error::DegenerateGeometry(_))
        ));
        let at_ref = SourcePosition::new(&[0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            range_difference(&array, &at_ref, 0),
            Err(Error::DegenerateGeometry(_))
        ));
        let x = SourcePosition::new(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            range_difference(&array, &x, 1),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
        let flat = SourcePosition::new(&[1.0, 2.0]).unwrap();
        assert!(matches!(
            range_difference(&array, &flat, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn range_difference_with_offset_reference() {
        let reference = [10.0, -5.0, 2.0];
        let array = SensorArray::new(&reference, &[vec![60.0, -5.0, 52.0]]).unwrap();
        let x = SourcePosition::new(&[62.0, 47.0, 54.0]).unwrap();
        assert_relative_eq!(
            range_difference(&array, &x, 0).unwrap(),
            -37.989_775_728_415_471,
            max_relative = 1e-13
        );
    }

    #[test]
    fn array_validation() {
        assert!(matches!(
            SensorArray::new(&[0.0; 4], &[]),
            Err(Error::InvalidDimension(4))
        ));
        assert!(matches!(
            SensorArray::new(&origin3(), &[vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            SensorArray::new(&origin3(), &[vec![0.0, 0.0, 1e-12]]),
            Err(Error::DegenerateGeometry(_))
        ));
        let small = SensorArray::new(&origin3(), &vec![vec![1.0, 0.0, 0.0]; 5]).unwrap();
        assert!(matches!(
            small.require_estimable(),
            Err(Error::TooFewSensors { required: 6, found: 5 })
        ));
        assert!(NoiseModel::new(-1.0, 0).is_err());
        assert!(NoiseModel::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let array = deploy_fixed_paper_array(1).unwrap();
        let x = SourcePosition::new(&[52.0, 52.0, 52.0]).unwrap();
        let meas = simulate(&array, &x, &NoiseModel::new(0.0, 3).unwrap()).unwrap();
        for i in 0..array.len() {
            assert_eq!(meas.d()[i], range_difference(&array, &x, i).unwrap());
        }
        assert_eq!(meas.true_sigma2(), Some(0.0));
    }

    #[test]
    fn simulation_is_deterministic() {
        let array = deploy_uniform_cube(100.0, 50, 1).unwrap();
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let noise = NoiseModel::new(10.0, 99).unwrap();
        assert_eq!(
            simulate(&array, &x, &noise).unwrap(),
            simulate(&array, &x, &noise).unwrap()
        );
        let other = NoiseModel::new(10.0, 100).unwrap();
        assert_ne!(
            simulate(&array, &x, &noise).unwrap(),
            simulate(&array, &x, &other).unwrap()
        );
    }

    #[test]
    fn residual_variance_matches_sigma() {
        let array = deploy_uniform_cube(100.0, 100_000, 4).unwrap();
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let meas = simulate(&array, &x, &NoiseModel::new(10.0, 5).unwrap()).unwrap();
        let mean_sq = (0..array.len())
            .map(|i| (meas.d()[i] - range_difference(&array, &x, i).unwrap()).powi(2))
            .sum::<f64>()
            / array.len() as f64;
        // sd of the mean of chi^2_1 * 100 over 1e5 draws is ~0.45
        assert!((mean_sq - 100.0).abs() < 5.0, "mean square residual {mean_sq}");
    }

    #[test]
    fn residual_variance_error_shrinks_with_m() {
        let x = SourcePosition::new(&[15.0, 15.0, 15.0]).unwrap();
        let error_at = |m: usize| {
            let mut total = 0.0;
            for rep in 0..40 {
                let array = deploy_uniform_cube(100.0, m, rep).unwrap();
                let meas = simulate(&array, &x, &NoiseModel::new(10.0, 1000 + rep).unwrap()).unwrap();
                let v = (0..m)
                    .map(|i| (meas.d()[i] - range_difference(&array, &x, i).unwrap()).powi(2))
                    .sum::<f64>()
                    / m as f64;
                total += (v - 100.0).powi(2);
            }
            (total / 40.0).sqrt()
        };
        let ratio = error_at(100) / error_at(10_000);
        // 1/sqrt(m) scaling predicts a factor of 10
        assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn translation_leaves_range_differences_unchanged() {
        let array = deploy_uniform_cube(100.0, 20, 8).unwrap();
        let x = SourcePosition::new(&[15.0, -3.0, 7.0]).unwrap();
        let shift = [123.0, -45.5, 0.25];
        let moved = array.translated(&shift).unwrap();
        let xs: Vec<f64> = x.as_slice().iter().zip(shift).map(|(a, b)| a + b).collect();
        let moved_x = SourcePosition::new(&xs).unwrap();
        for i in 0..array.len() {
            assert_relative_eq!(
                range_difference(&array, &x, i).unwrap(),
                range_difference(&moved, &moved_x, i).unwrap(),
                epsilon = 1e-10
            );
        }
    }
}
