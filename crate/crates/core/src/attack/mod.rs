//! Targeted attack: loss, weights, projection and the iterative solver.

mod loss;
mod projection;
mod run;
mod weights;

pub use loss::{loss, loss_gradient, LossGradient, COINCIDENT_TOLERANCE};
pub use projection::{project_line_search, project_with_budget, SEARCH_BUDGET};
pub use run::{
    run_attack, AttackConfig, AttackResult, InitKind, OptimizerKind, StepSchedule, Termination,
};
pub use weights::{make_weights, WeightKind, WeightScheme};
