//! Finite-difference kinematics of a position trajectory.
//!
//! Accelerations are split into components along the central-difference
//! heading `h_i = (p_{i+1} - p_{i-1}) / |p_{i+1} - p_{i-1}|` (longitudinal)
//! and along `h_i` rotated by +90 degrees (lateral). Jerk components are the
//! first differences of those components divided by `dt`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Point2, Trajectory};

/// The derived quantities that carry statistical bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Speed,
    AccelLon,
    AccelLat,
    JerkLon,
    JerkLat,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::Speed,
        Quantity::AccelLon,
        Quantity::AccelLat,
        Quantity::JerkLon,
        Quantity::JerkLat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Speed => "speed",
            Quantity::AccelLon => "accel_lon",
            Quantity::AccelLat => "accel_lat",
            Quantity::JerkLon => "jerk_lon",
            Quantity::JerkLat => "jerk_lat",
        }
    }

    /// Number of states a single entry of this quantity depends on.
    pub fn stencil(self) -> usize {
        match self {
            Quantity::Speed => 2,
            Quantity::AccelLon | Quantity::AccelLat => 3,
            Quantity::JerkLon | Quantity::JerkLat => 4,
        }
    }

    /// Indices of the states entry `entry` of this quantity is computed from.
    pub fn support(self, entry: usize) -> Range<usize> {
        entry..entry + self.stencil()
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct KinematicProfile {
    /// One entry per transition, m/s.
    pub speed: Vec<f64>,
    /// One entry per interior state, m/s^2.
    pub accel_lon: Vec<f64>,
    pub accel_lat: Vec<f64>,
    /// One entry per pair of consecutive interior states, m/s^3.
    pub jerk_lon: Vec<f64>,
    pub jerk_lat: Vec<f64>,
}

impl KinematicProfile {
    pub fn values(&self, q: Quantity) -> &[f64] {
        match q {
            Quantity::Speed => &self.speed,
            Quantity::AccelLon => &self.accel_lon,
            Quantity::AccelLat => &self.accel_lat,
            Quantity::JerkLon => &self.jerk_lon,
            Quantity::JerkLat => &self.jerk_lat,
        }
    }
}

/// Unit heading from a central difference; `(1, 0)` when the neighbors
/// coincide.
fn central_heading(prev: Point2, next: Point2) -> Point2 {
    let d = next - prev;
    let n = d.norm();
    if n == 0.0 {
        Point2::new(1.0, 0.0)
    } else {
        d * (1.0 / n)
    }
}

pub fn derive_kinematics(traj: &Trajectory) -> Result<KinematicProfile> {
    let p = traj.states();
    if p.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "kinematics need at least two states, got {}",
            p.len()
        )));
    }
    let dt = traj.dt();

    let speed = p.windows(2).map(|w| (w[1] - w[0]).norm() / dt).collect();

    let (accel_lon, accel_lat): (Vec<f64>, Vec<f64>) = p
        .windows(3)
        .map(|w| {
            let a = (w[2] - w[1] * 2.0 + w[0]) * (1.0 / (dt * dt));
            let h = central_heading(w[0], w[2]);
            (a.dot(h), a.dot(h.perp()))
        })
        .unzip();

    let diff = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|w| (w[1] - w[0]) / dt).collect() };
    let jerk_lon = diff(&accel_lon);
    let jerk_lat = diff(&accel_lat);

    Ok(KinematicProfile {
        speed,
        accel_lon,
        accel_lat,
        jerk_lon,
        jerk_lat,
    })
}
