use rand::Rng as _;

use super::SensorArray;
use crate::error::{Error, Result};
use crate::rng;

/// Ten fixed sensor positions (meters) used for the repeated-measurement
/// experiments; the reference sits at the origin.
pub const FIXED_ARRAY: [[f64; 3]; 10] = [
    [50.0, 0.0, 50.0],
    [50.0, 50.0, -50.0],
    [50.0, -50.0, 50.0],
    [50.0, 0.0, 0.0],
    [50.0, 50.0, 50.0],
    [-50.0, 0.0, -50.0],
    [-50.0, -50.0, 50.0],
    [-50.0, 50.0, -50.0],
    [-50.0, 0.0, 0.0],
    [-50.0, -50.0, -50.0],
];

/// `m` sensors uniformly distributed on the surface of a cube of side
/// `edge` centered on the reference sensor at the origin.
pub fn deploy_uniform_cube(edge: f64, m: usize, seed: u64) -> Result<SensorArray> {
    deploy_uniform_cube_with(edge, m, &mut rng::from_seed(seed))
}

pub fn deploy_uniform_cube_with(edge: f64, m: usize, rng: &mut rng::Rng) -> Result<SensorArray> {
    if !(edge.is_finite() && edge > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cube edge must be positive, got {edge}"
        )));
    }
    if m < 6 {
        return Err(Error::TooFewSensors {
            required: 6,
            found: m,
        });
    }
    let half = edge / 2.0;
    let sensors: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            // Faces have equal area, so pick one uniformly then a uniform
            // point on it.
            let face = rng.random_range(0..6_usize);
            let axis = face / 2;
            let side = if face % 2 == 0 { half } else { -half };
            let mut p = vec![0.0; 3];
            for (k, c) in p.iter_mut().enumerate() {
                *c = if k == axis {
                    side
                } else {
                    rng.random_range(-half..=half)
                };
            }
            p
        })
        .collect();
    SensorArray::new(&[0.0, 0.0, 0.0], &sensors)
}

/// [`FIXED_ARRAY`] with each sensor repeated `repeats` times (`m = 10 T`).
pub fn deploy_fixed_paper_array(repeats: usize) -> Result<SensorArray> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeat count must be at least 1".into()));
    }
    let base: Vec<Vec<f64>> = FIXED_ARRAY.iter().map(|p| p.to_vec()).collect();
    Ok(SensorArray::new(&[0.0, 0.0, 0.0], &base)?.repeated(repeats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_sensors_lie_on_surface() {
        let array = deploy_uniform_cube(100.0, 3000, 11).unwrap();
        assert_eq!(array.len(), 3000);
        for s in array.sensors() {
            let linf = s.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
            assert_eq!(linf, 50.0);
        }
    }

    #[test]
    fn cube_faces_are_equally_likely() {
        let array = deploy_uniform_cube(100.0, 6000, 12).unwrap();
        let mut counts = [0_usize; 6];
        for s in array.sensors() {
            let axis = (0..3).find(|&k| s[k].abs() == 50.0).unwrap();
            counts[2 * axis + usize::from(s[axis] < 0.0)] += 1;
        }
        // binomial(6000, 1/6): mean 1000, sd 28.87
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 3.0 * 28.87, "{counts:?}");
        }
    }

    #[test]
    fn cube_rejects_bad_input() {
        assert!(matches!(
            deploy_uniform_cube(100.0, 5, 0),
            Err(Error::TooFewSensors { .. })
        ));
        assert!(deploy_uniform_cube(0.0, 10, 0).is_err());
    }

    #[test]
    fn fixed_array_layout() {
        let one = deploy_fixed_paper_array(1).unwrap();
        assert_eq!(one.len(), 10);
        for (s, expected) in one.sensors().iter().zip(FIXED_ARRAY) {
            assert_eq!(s.as_slice(), &expected);
        }
        let three = deploy_fixed_paper_array(3).unwrap();
        assert_eq!(three.len(), 30);
        for p in FIXED_ARRAY {
            let hits = three.sensors().iter().filter(|s| s.as_slice() == p).count();
            assert_eq!(hits, 3);
        }
        assert_eq!(deploy_fixed_paper_array(300).unwrap().len(), 3000);
        assert!(deploy_fixed_paper_array(0).is_err());
    }
}
