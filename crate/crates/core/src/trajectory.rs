//! Planar trajectories sampled at a fixed time step.
//!
//! States hold positions only. Velocities, accelerations and jerks are
//! always derived from positions (see [`crate::kinematics`]).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D position or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise rotation by 90 degrees.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Point2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// An ordered sequence of positions spaced `dt` seconds apart.
///
/// Past inputs, ground-truth futures, predictions and targets all use this
/// type; their horizon is simply the number of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    states: Vec<Point2>,
    dt: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectory {
    states: Vec<Point2>,
    dt: f64,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = Error;

    fn try_from(raw: RawTrajectory) -> Result<Self> {
        Trajectory::new(raw.states, raw.dt)
    }
}

impl Trajectory {
    /// Builds a trajectory, rejecting empty state lists, non-positive `dt`
    /// and non-finite coordinates.
    ///
    /// A single state is accepted so that one-step horizons can be
    /// represented; kinematic derivation needs at least two.
    pub fn new(states: Vec<Point2>, dt: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidTrajectory("no states".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTrajectory(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        if let Some(i) = states.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "state {i} has a non-finite coordinate"
            )));
        }
        Ok(Self { states, dt })
    }

    pub fn from_xy(points: &[(f64, f64)], dt: f64) -> Result<Self> {
        Self::new(points.iter().map(|&(x, y)| Point2::new(x, y)).collect(), dt)
    }

    pub fn states(&self) -> &[Point2] {
        &self.states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.states[0]
    }

    pub fn last(&self) -> Point2 {
        self.states[self.states.len() - 1]
    }

    /// Rigidly translates every state.
    pub fn translated(&self, offset: Point2) -> Trajectory {
        Trajectory {
            states: self.states.iter().map(|&p| p + offset).collect(),
            dt: self.dt,
        }
    }

    /// Applies a per-state displacement. Fails when the lengths differ or
    /// the result is not finite.
    pub fn perturbed(&self, delta: &Perturbation) -> Result<Trajectory> {
        if delta.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "perturbation has {} states, trajectory has {}",
                delta.len(),
                self.len()
            )));
        }
        let states = self
            .states
            .iter()
            .zip(delta.as_slice())
            .map(|(&p, &d)| p + d)
            .collect();
        Trajectory::new(states, self.dt)
    }

    /// Mean distance between consecutive states; zero for a single state.
    pub fn mean_step_length(&self) -> f64 {
        if self.states.len() < 2 {
            return 0.0;
        }
        let total: f64 = self.states.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        total / (self.states.len() - 1) as f64
    }

    /// Coordinates flattened as `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.states.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_flat(flat: &[f64], dt: f64) -> Result<Trajectory> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "flat coordinate vector has odd length {}",
                flat.len()
            )));
        }
        let states = flat
            .chunks_exact(2)
            .map(|c| Point2::new(c[0], c[1]))
            .collect();
        Trajectory::new(states, dt)
    }
}

/// Per-state displacement added to a nominal past trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Perturbation(Vec<Point2>);

impl Perturbation {
    pub fn zeros(len: usize) -> Self {
        Perturbation(vec![Point2::ZERO; len])
    }

    pub fn new(displacements: Vec<Point2>) -> Self {
        Perturbation(displacements)
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Perturbation(
            flat.chunks_exact(2)
                .map(|c| Point2::new(c[0], c[1]))
                .collect(),
        )
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// The displacement that separates `perturbed` from `nominal`.
    pub fn between(nominal: &Trajectory, perturbed: &Trajectory) -> Result<Self> {
        if nominal.len() != perturbed.len() {
            return Err(Error::ShapeMismatch(format!(
                "trajectories have {} and {} states",
                nominal.len(),
                perturbed.len()
            )));
        }
        Ok(Perturbation(
            perturbed
                .states()
                .iter()
                .zip(nominal.states())
                .map(|(&a, &b)| a - b)
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Point2] {
        &self.0
    }

    /// Scales state `n` by `theta[n]` (both coordinates).
    pub fn scaled_per_state(&self, theta: &[f64]) -> Perturbation {
        debug_assert_eq!(theta.len(), self.0.len());
        Perturbation(
            self.0
                .iter()
                .zip(theta)
                .map(|(&d, &t)| d * t)
                .collect(),
        )
    }
}

/// One test case: an observed past and the future that actually happened.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub past: Trajectory,
    pub future_truth: Trajectory,
}

impl Scenario {
    pub fn new(id: impl Into<String>, past: Trajectory, future_truth: Trajectory) -> Result<Self> {
        let id = id.into();
        if past.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "scenario {id}: past needs at least two states"
            )));
        }
        if past.dt() != future_truth.dt() {
            return Err(Error::InvalidTrajectory(format!(
                "scenario {id}: past dt {} differs from future dt {}",
                past.dt(),
                future_truth.dt()
            )));
        }
        Ok(Self {
            id,
            past,
            future_truth,
        })
    }

    /// Past horizon `P`; the past holds `P + 1` states.
    pub fn past_horizon(&self) -> usize {
        self.past.len() - 1
    }

    pub fn future_horizon(&self) -> usize {
        self.future_truth.len()
    }

    pub fn dt(&self) -> f64 {
        self.past.dt()
    }

    /// Past followed by future as a single trajectory.
    pub fn full_track(&self) -> Trajectory {
        let mut states = self.past.states().to_vec();
        states.extend_from_slice(self.future_truth.states());
        Trajectory {
            states,
            dt: self.past.dt(),
        }
    }
}
