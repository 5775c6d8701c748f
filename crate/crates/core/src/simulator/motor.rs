use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{MotorModel, StationModel};

/// Position memory of one motorized wave plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    /// Last commanded target (radians).
    pub position: f64,
    /// Sign of the last approach move; a repositioning onto the same target
    /// keeps it.
    pub direction: f64,
}

impl MotorState {
    pub fn at(position: f64) -> Self {
        Self {
            position,
            direction: 1.0,
        }
    }
}

/// Moves the plate to `target` and returns the angle where it actually
/// stops.
pub fn apply_motor_error<R: Rng + ?Sized>(
    target: f64,
    station: &StationModel,
    motor: &mut MotorState,
    rng: &mut R,
) -> f64 {
    let move_by = target - motor.position;
    if move_by != 0.0 {
        motor.direction = move_by.signum();
    }
    motor.position = target;

    let sigma = station.motor_sigma;
    match station.motor_model {
        MotorModel::Gaussian => target + gaussian(sigma, rng),
        MotorModel::Uniform => {
            if sigma == 0.0 {
                target
            } else {
                let half_width = 3f64.sqrt() * sigma;
                target + rng.random_range(-half_width..=half_width)
            }
        }
        MotorModel::Backlash { offset } => target + motor.direction * offset + gaussian(sigma, rng),
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn station(sigma: f64, model: MotorModel) -> StationModel {
        StationModel {
            motor_sigma: sigma,
            motor_model: model,
            ..StationModel::default_alice()
        }
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn exact_without_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = station(0.0, MotorModel::Gaussian);
        let mut m = MotorState::at(0.0);
        for target in [0.1, -0.3, 0.7] {
            assert_eq!(apply_motor_error(target, &st, &mut m, &mut rng), target);
        }
    }

    #[test]
    fn gaussian_moments() {
        let sigma = 0.2f64.to_radians();
        let st = station(sigma, MotorModel::Gaussian);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = MotorState::at(0.0);
        let target = 0.4;
        let draws: Vec<f64> = (0..100_000)
            .map(|_| apply_motor_error(target, &st, &mut m, &mut rng))
            .collect();
        let (mean, sd) = moments(&draws);
        assert!((mean - target).abs() < 4.0 * sigma / 100_000f64.sqrt());
        assert!((sd / sigma - 1.0).abs() < 0.03);
    }

    #[test]
    fn uniform_has_requested_sigma_and_bounded_support() {
        let sigma = 0.01;
        let st = station(sigma, MotorModel::Uniform);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = MotorState::at(0.0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| apply_motor_error(1.0, &st, &mut m, &mut rng) - 1.0)
            .collect();
        let (mean, sd) = moments(&draws);
        assert!(mean.abs() < 4.0 * sigma / 100_000f64.sqrt());
        assert!((sd / sigma - 1.0).abs() < 0.03);
        assert!(draws.iter().all(|d| d.abs() <= 3f64.sqrt() * sigma + 1e-15));
    }

    #[test]
    fn backlash_follows_approach_direction_and_cancels_on_alternation() {
        let offset = 0.05f64.to_radians();
        let st = station(0.0, MotorModel::Backlash { offset });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MotorState::at(0.0);
        let up = apply_motor_error(0.5, &st, &mut m, &mut rng);
        assert!((up - (0.5 + offset)).abs() < 1e-15);
        // repositioning onto the same target keeps the last direction
        let again = apply_motor_error(0.5, &st, &mut m, &mut rng);
        assert!((again - (0.5 + offset)).abs() < 1e-15);
        let down = apply_motor_error(0.2, &st, &mut m, &mut rng);
        assert!((down - (0.2 - offset)).abs() < 1e-15);

        let st = station(0.01, MotorModel::Backlash { offset });
        let target = 0.3;
        let n = 50_000;
        let mut sum = 0.0;
        for _ in 0..n {
            // approach from below, then from above
            m = MotorState::at(0.0);
            sum += apply_motor_error(target, &st, &mut m, &mut rng);
            m = MotorState::at(1.0);
            sum += apply_motor_error(target, &st, &mut m, &mut rng);
        }
        let mean = sum / (2 * n) as f64;
        assert!((mean - target).abs() < 4.0 * 0.01 / ((2 * n) as f64).sqrt());
    }
}
