use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{loss_gradient_at, LossGradient};
use super::projection::project_with_budget;
use super::weights::WeightScheme;
use crate::constraints::{is_feasible, ConstraintSet, FeasibilityReport};
use crate::error::{Error, Result};
use crate::optim::{gradient_step, Adam, AdamParams};
use crate::predictor::PredictorSpec;
use crate::trajectory::{Perturbation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    GradientDescent,
    Adam,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::GradientDescent => "gradient_descent",
            OptimizerKind::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant,
    /// `eps_k = eps_0 / sqrt(k + 1)`.
    InverseSqrt,
}

impl StepSchedule {
    pub fn step(self, initial: f64, k: usize) -> f64 {
        match self {
            StepSchedule::Constant => initial,
            StepSchedule::InverseSqrt => initial / ((k + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    /// Independent Gaussian coordinates with standard deviation `scale` meters.
    Random { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub optimizer: OptimizerKind,
    /// `eps_0`, meters.
    pub initial_step: f64,
    /// `None` picks constant steps for Adam and inverse-sqrt decay for
    /// gradient descent.
    pub schedule: Option<StepSchedule>,
    pub adam: AdamParams,
    /// Loss threshold in meters; the run stops once `J <= tau`.
    pub tau: f64,
    pub max_iterations: usize,
    pub init: InitKind,
    /// Resolution `G` of the projection grid.
    pub projection_grid: u32,
    /// Node budget of the exact search inside each projection.
    pub projection_budget: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            initial_step: 0.05,
            schedule: None,
            adam: AdamParams::default(),
            tau: 0.02,
            max_iterations: 100,
            init: InitKind::Random { scale: 0.01 },
            projection_grid: 100,
            projection_budget: 20_000,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn effective_schedule(&self) -> StepSchedule {
        self.schedule.unwrap_or(match self.optimizer {
            OptimizerKind::Adam => StepSchedule::Constant,
            OptimizerKind::GradientDescent => StepSchedule::InverseSqrt,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(Error::InvalidConfig(format!("initial step must be positive, got {}", self.initial_step)));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be non-negative, got {}", self.tau)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.projection_grid == 0 {
            return Err(Error::InvalidConfig("projection grid must be at least 1".into()));
        }
        if let InitKind::Random { scale } = self.init {
            if !(scale.is_finite() && scale >= 0.0) {
                return Err(Error::InvalidConfig(format!("init scale must be non-negative, got {scale}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    IterationCap,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackResult {
    /// Last iterate `X + Delta`.
    pub adversarial: Trajectory,
    /// `adversarial - nominal`.
    pub perturbation: Perturbation,
    /// Loss at the initial perturbation.
    pub initial_loss: f64,
    /// Loss after each update; `loss_trace[k - 1]` belongs to iterate `k`.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
    /// Lowest loss over the initial perturbation and every iterate.
    pub best_loss: f64,
    /// Iterate achieving `best_loss` (0 is the initial perturbation).
    pub best_iteration: usize,
    pub best_perturbation: Perturbation,
    pub iterations: usize,
    /// Iterates `k` whose update was shrunk by the projection.
    pub projection_events: Vec<usize>,
    /// Whether the random initial perturbation had to be projected.
    pub init_projected: bool,
    pub terminated_by: Termination,
    pub feasibility: FeasibilityReport,
    pub optimizer: OptimizerKind,
    pub schedule: StepSchedule,
}

impl AttackResult {
    /// `nominal + best_perturbation`.
    pub fn best_adversarial(&self, nominal: &Trajectory) -> Result<Trajectory> {
        nominal.perturbed(&self.best_perturbation)
    }
}

fn initial_perturbation(cfg: &AttackConfig, len: usize) -> Result<Perturbation> {
    match cfg.init {
        InitKind::Zero => Ok(Perturbation::zeros(len)),
        InitKind::Random { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let flat: Vec<f64> = (0..2 * len).map(|_| normal.sample(&mut rng)).collect();
            Ok(Perturbation::from_flat(&flat))
        }
    }
}

/// Projects `delta` if `nominal + delta` is infeasible. Returns the
/// (possibly shrunk) perturbation and whether projection fired.
fn enforce(
    cs: &ConstraintSet,
    nominal: &Trajectory,
    delta: Perturbation,
    cfg: &AttackConfig,
) -> Result<(Perturbation, bool)> {
    if is_feasible(cs, &nominal.perturbed(&delta)?)?.is_feasible() {
        return Ok((delta, false));
    }
    let theta = project_with_budget(cs, nominal, &delta, cfg.projection_grid, cfg.projection_budget)?;
    Ok((delta.scaled_per_state(&theta), true))
}

/// Runs the projected first-order attack on one nominal past trajectory.
///
/// Each iteration takes a gradient-descent or Adam step on the
/// perturbation, shrinks it per state with [`project_line_search`] when the
/// perturbed trajectory leaves the permissible sets, and records the loss.
/// The loop stops once the loss is at most `tau` or after
/// `max_iterations` updates.
pub fn run_attack(
    spec: &PredictorSpec,
    nominal: &Trajectory,
    target: &Trajectory,
    cs: &ConstraintSet,
    weights: &WeightScheme,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    if target.len() != spec.future_horizon() {
        return Err(Error::HorizonMismatch {
            expected: spec.future_horizon(),
            actual: target.len(),
        });
    }
    let nominal_report = is_feasible(cs, nominal)?;
    if !nominal_report.is_feasible() {
        return Err(Error::InfeasibleNominal(nominal_report.to_string()));
    }

    let schedule = cfg.effective_schedule();
    let evaluate = |delta: &Perturbation| -> Result<LossGradient> {
        let lg = loss_gradient_at(spec, &nominal.perturbed(delta)?, target, weights)?;
        if !lg.loss.is_finite() || lg.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss or gradient".into()));
        }
        Ok(lg)
    };

    let (mut delta, init_projected) =
        enforce(cs, nominal, initial_perturbation(cfg, nominal.len())?, cfg)?;
    let mut current = evaluate(&delta)?;
    let initial_loss = current.loss;
    let mut best = (current.loss, 0usize, delta.clone());

    let mut adam = Adam::new(2 * nominal.len(), cfg.adam);
    let mut loss_trace = Vec::new();
    let mut projection_events = Vec::new();
    let mut k = 0usize;
    while k < cfg.max_iterations && current.loss > cfg.tau {
        let step = schedule.step(cfg.initial_step, k);
        let mut params = delta.to_flat();
        match cfg.optimizer {
            OptimizerKind::GradientDescent => gradient_step(step, &mut params, &current.gradient),
            OptimizerKind::Adam => adam.update(step, &mut params, &current.gradient),
        }
        let (next, projected) = enforce(cs, nominal, Perturbation::from_flat(&params), cfg)?;
        k += 1;
        if projected {
            projection_events.push(k);
        }
        delta = next;
        current = evaluate(&delta)?;
        loss_trace.push(current.loss);
        if current.loss < best.0 {
            best = (current.loss, k, delta.clone());
        }
    }

    let adversarial = nominal.perturbed(&delta)?;
    let perturbation = Perturbation::between(nominal, &adversarial)?;
    let feasibility = is_feasible(cs, &adversarial)?;
    if !feasibility.is_feasible() {
        return Err(Error::FeasibilityBroken(feasibility.to_string()));
    }
    let terminated_by = if current.loss <= cfg.tau {
        Termination::Threshold
    } else {
        Termination::IterationCap
    };
    Ok(AttackResult {
        adversarial,
        perturbation,
        initial_loss,
        final_loss: current.loss,
        best_loss: best.0,
        best_iteration: best.1,
        best_perturbation: best.2,
        iterations: loss_trace.len(),
        loss_trace,
        projection_events,
        init_projected,
        terminated_by,
        feasibility,
        optimizer: cfg.optimizer,
        schedule,
    })
}
