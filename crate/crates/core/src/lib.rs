//! Targeted, constraint-feasible adversarial perturbations against
//! trajectory predictors.
//!
//! Given a past trajectory, a differentiable predictor and a desired future,
//! [`attack::run_attack`] searches for a small perturbation of the past that
//! steers the prediction towards the desired future while every perturbed
//! state stays within a position ball and the kinematic profile stays within
//! dataset-derived bands.

pub mod attack;
pub mod constraints;
pub mod dataset;
mod error;
pub mod eval;
pub mod kinematics;
pub mod matrix;
pub mod optim;
pub mod predictor;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{Perturbation, Point2, Scenario, Trajectory};
