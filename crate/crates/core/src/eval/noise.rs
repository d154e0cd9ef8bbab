use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Point2, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Disc radius as a multiple of the trajectory's mean step length.
    pub radius_factor: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            radius_factor: 0.02,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_factor.is_finite() && self.radius_factor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise radius factor must be non-negative, got {}",
                self.radius_factor
            )));
        }
        Ok(())
    }
}

/// Resamples every state uniformly in a disc around it. The radius is
/// `radius_factor` times the mean step length of `traj`.
pub fn perturb_with_noise(traj: &Trajectory, nc: &NoiseConfig) -> Result<Trajectory> {
    nc.validate()?;
    let radius = nc.radius_factor * traj.mean_step_length();
    if radius == 0.0 {
        return Ok(traj.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(nc.seed);
    let states = traj
        .states()
        .iter()
        .map(|&p| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = TAU * rng.random::<f64>();
            p + Point2::new(r * phi.cos(), r * phi.sin())
        })
        .collect();
    Trajectory::new(states, traj.dt())
}
