//! Metrics and experiment protocols: nominal accuracy, target deviation,
//! attack suites and noise robustness.
//!
//! All distances are on positions. `J_bar` is the lowest loss seen during a
//! run, so a projection that bounces the last iterate does not count
//! against the attack.

mod noise;
mod targets;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use noise::{perturb_with_noise, NoiseConfig};
pub use targets::{make_targets, TargetSpec};

use crate::attack::{loss, make_weights, run_attack, AttackConfig, AttackResult, WeightKind, WeightScheme};
use crate::constraints::{ConstraintSet, KinematicBounds};
use crate::error::{Error, Result};
use crate::predictor::{predict, PredictorSpec};
use crate::trajectory::{Scenario, Trajectory};

/// Mean Euclidean distance between paired states.
pub fn mean_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let w = make_weights(WeightKind::Uniform, a.len())?;
    loss(a, b, &w)
}

fn check_future(spec: &PredictorSpec, s: &Scenario) -> Result<()> {
    if s.future_horizon() != spec.future_horizon() {
        return Err(Error::HorizonMismatch {
            expected: spec.future_horizon(),
            actual: s.future_horizon(),
        });
    }
    Ok(())
}

/// Per-scenario prediction error against ground truth and its mean.
pub fn nominal_accuracy(spec: &PredictorSpec, scenarios: &[Scenario]) -> Result<(Vec<f64>, f64)> {
    let rows = scenarios
        .iter()
        .map(|s| {
            check_future(spec, s)?;
            mean_distance(&predict(spec, &s.past)?, &s.future_truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean(&rows);
    Ok((rows, mean))
}

/// Per-scenario distance between ground truth and target and its mean.
pub fn target_deviation(scenarios: &[Scenario], targets: &[Trajectory]) -> Result<(Vec<f64>, f64)> {
    check_pairing(scenarios, targets)?;
    let rows = scenarios
        .iter()
        .zip(targets)
        .map(|(s, y)| mean_distance(&s.future_truth, y))
        .collect::<Result<Vec<_>>>()?;
    let mean = mean(&rows);
    Ok((rows, mean))
}

fn check_pairing(scenarios: &[Scenario], targets: &[Trajectory]) -> Result<()> {
    if scenarios.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scenarios but {} targets",
            scenarios.len(),
            targets.len()
        )));
    }
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Distinct, reproducible seed for scenario `index` on `stream`.
pub fn scenario_seed(base: u64, index: usize, stream: u64) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Everything shared by the attacks of a suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteSetup<'a> {
    pub spec: &'a PredictorSpec,
    pub bounds: &'a KinematicBounds,
    pub position_radius: f64,
    pub weights: &'a WeightScheme,
    pub attack: &'a AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario_id: String,
    #[serde(rename = "J_acc_nom")]
    pub j_acc_nom: f64,
    #[serde(rename = "J_GY")]
    pub j_gy: f64,
    #[serde(rename = "J_bar")]
    pub j_bar: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub optimizer: String,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    /// Weighted loss with no perturbation.
    #[serde(rename = "J_zero")]
    pub j_zero: f64,
    /// Loss of the last iterate.
    pub final_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteMeans {
    #[serde(rename = "J_acc_nom")]
    pub j_acc_nom: f64,
    #[serde(rename = "J_GY")]
    pub j_gy: f64,
    #[serde(rename = "J_bar")]
    pub j_bar: f64,
    pub iterations: f64,
    pub wall_time_s: f64,
    #[serde(rename = "J_zero")]
    pub j_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub scenario_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub scenario_id: String,
    /// Initial loss followed by the loss after each update.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ScenarioMetrics>,
    /// Arithmetic means over `rows`; failed scenarios are excluded.
    pub mean: SuiteMeans,
    pub failures: Vec<ScenarioFailure>,
    pub traces: Vec<LossTrace>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario_id: &'a str,
    #[serde(rename = "J_acc_nom")]
    j_acc_nom: f64,
    #[serde(rename = "J_GY")]
    j_gy: f64,
    #[serde(rename = "J_bar")]
    j_bar: f64,
    iterations: usize,
    wall_time_s: f64,
    optimizer: &'a str,
    #[serde(rename = "K_max")]
    k_max: usize,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<ScenarioMetrics>, failures: Vec<ScenarioFailure>, traces: Vec<LossTrace>) -> Self {
        let col = |f: fn(&ScenarioMetrics) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
        let mean = SuiteMeans {
            j_acc_nom: col(|r| r.j_acc_nom),
            j_gy: col(|r| r.j_gy),
            j_bar: col(|r| r.j_bar),
            iterations: col(|r| r.iterations as f64),
            wall_time_s: col(|r| r.wall_time_s),
            j_zero: col(|r| r.j_zero),
        };
        Self {
            rows,
            mean,
            failures,
            traces,
        }
    }

    /// Per-scenario table with columns `scenario_id, J_acc_nom, J_GY, J_bar,
    /// iterations, wall_time_s, optimizer, K_max`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                scenario_id: &r.scenario_id,
                j_acc_nom: r.j_acc_nom,
                j_gy: r.j_gy,
                j_bar: r.j_bar,
                iterations: r.iterations,
                wall_time_s: r.wall_time_s,
                optimizer: &r.optimizer,
                k_max: r.k_max,
            })
            .expect("in-memory csv write");
        }
        if self.rows.is_empty() {
            w.write_record(["scenario_id", "J_acc_nom", "J_GY", "J_bar", "iterations", "wall_time_s", "optimizer", "K_max"])
                .expect("in-memory csv write");
        }
        let bytes = w.into_inner().expect("in-memory csv flush");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }

    /// Long-format loss traces: `scenario_id, iteration, loss`.
    pub fn traces_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "scenario_id,iteration,loss").expect("write to vec");
        for t in &self.traces {
            for (i, l) in t.losses.iter().enumerate() {
                writeln!(out, "{},{},{}", t.scenario_id, i, l).expect("write to vec");
            }
        }
        String::from_utf8(out).expect("utf-8")
    }
}

/// One attack of a suite with its metrics row.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteAttack {
    pub scenario_id: String,
    pub target: Trajectory,
    pub result: AttackResult,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: MetricsReport,
    /// Successful attacks in scenario order.
    pub attacks: Vec<SuiteAttack>,
}

fn attack_one(
    setup: &SuiteSetup,
    index: usize,
    s: &Scenario,
    target: &Trajectory,
) -> Result<(ScenarioMetrics, AttackResult)> {
    check_future(setup.spec, s)?;
    let cs = ConstraintSet::new(s.past.clone(), setup.bounds.clone(), setup.position_radius)?;
    let cfg = AttackConfig {
        seed: scenario_seed(setup.attack.seed, index, 0),
        ..setup.attack.clone()
    };
    let clean_pred = predict(setup.spec, &s.past)?;
    let start = Instant::now();
    let result = run_attack(setup.spec, &s.past, target, &cs, setup.weights, &cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let row = ScenarioMetrics {
        scenario_id: s.id.clone(),
        j_acc_nom: mean_distance(&clean_pred, &s.future_truth)?,
        j_gy: mean_distance(&s.future_truth, target)?,
        j_bar: result.best_loss,
        iterations: result.iterations,
        wall_time_s,
        optimizer: cfg.optimizer.label().to_string(),
        k_max: cfg.max_iterations,
        j_zero: loss(&clean_pred, target, setup.weights)?,
        final_loss: result.final_loss,
    };
    Ok((row, result))
}

/// Attacks every scenario in parallel. Per-scenario errors are collected
/// in [`MetricsReport::failures`]; only mismatched input lengths fail the
/// whole suite.
pub fn run_suite(setup: &SuiteSetup, scenarios: &[Scenario], targets: &[Trajectory]) -> Result<SuiteRun> {
    check_pairing(scenarios, targets)?;
    let outcomes: Vec<_> = scenarios
        .par_iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (s, y))| attack_one(setup, i, s, y))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    let mut attacks = Vec::new();
    for ((s, y), outcome) in scenarios.iter().zip(targets).zip(outcomes) {
        match outcome {
            Ok((row, result)) => {
                let mut losses = vec![result.initial_loss];
                losses.extend_from_slice(&result.loss_trace);
                traces.push(LossTrace {
                    scenario_id: s.id.clone(),
                    losses,
                });
                rows.push(row);
                attacks.push(SuiteAttack {
                    scenario_id: s.id.clone(),
                    target: y.clone(),
                    result,
                });
            }
            Err(e) => failures.push(ScenarioFailure {
                scenario_id: s.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(SuiteRun {
        report: MetricsReport::from_rows(rows, failures, traces),
        attacks,
    })
}

pub fn attack_suite(setup: &SuiteSetup, scenarios: &[Scenario], targets: &[Trajectory]) -> Result<MetricsReport> {
    Ok(run_suite(setup, scenarios, targets)?.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub scenario_id: String,
    /// Prediction error on the clean input.
    pub clean_j_acc_nom: f64,
    /// Attack loss on the clean input (no perturbation).
    pub clean_j: f64,
    pub noisy_clean_j_acc_nom: f64,
    pub noisy_clean_j: f64,
    /// Attack loss on the best adversarial input.
    pub adversarial_j: f64,
    pub noisy_adversarial_j: f64,
    pub noisy_clean_input: Trajectory,
    pub noisy_adversarial_input: Trajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseMeans {
    pub clean_j_acc_nom: f64,
    pub clean_j: f64,
    pub noisy_clean_j_acc_nom: f64,
    pub noisy_clean_j: f64,
    pub adversarial_j: f64,
    pub noisy_adversarial_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub noise: NoiseConfig,
    pub rows: Vec<NoiseRow>,
    pub mean: NoiseMeans,
    pub failures: Vec<ScenarioFailure>,
    /// The attack suite that produced the adversarial inputs.
    pub attack: MetricsReport,
}

fn noise_row(
    setup: &SuiteSetup,
    nc: &NoiseConfig,
    index: usize,
    s: &Scenario,
    attack: &SuiteAttack,
) -> Result<NoiseRow> {
    let spec = setup.spec;
    let y = &attack.target;
    let adversarial = attack.result.best_adversarial(&s.past)?;
    let clean_nc = NoiseConfig {
        seed: scenario_seed(nc.seed, index, 1),
        ..*nc
    };
    let adv_nc = NoiseConfig {
        seed: scenario_seed(nc.seed, index, 2),
        ..*nc
    };
    let noisy_clean = perturb_with_noise(&s.past, &clean_nc)?;
    let noisy_adv = perturb_with_noise(&adversarial, &adv_nc)?;
    let clean_pred = predict(spec, &s.past)?;
    let noisy_clean_pred = predict(spec, &noisy_clean)?;
    Ok(NoiseRow {
        scenario_id: s.id.clone(),
        clean_j_acc_nom: mean_distance(&clean_pred, &s.future_truth)?,
        clean_j: loss(&clean_pred, y, setup.weights)?,
        noisy_clean_j_acc_nom: mean_distance(&noisy_clean_pred, &s.future_truth)?,
        noisy_clean_j: loss(&noisy_clean_pred, y, setup.weights)?,
        adversarial_j: loss(&predict(spec, &adversarial)?, y, setup.weights)?,
        noisy_adversarial_j: loss(&predict(spec, &noisy_adv)?, y, setup.weights)?,
        noisy_clean_input: noisy_clean,
        noisy_adversarial_input: noisy_adv,
    })
}

/// Runs the attack suite, then re-evaluates clean and best adversarial
/// inputs after resampling every state in a small disc.
pub fn noise_robustness(
    setup: &SuiteSetup,
    scenarios: &[Scenario],
    targets: &[Trajectory],
    nc: &NoiseConfig,
) -> Result<NoiseReport> {
    nc.validate()?;
    let run = run_suite(setup, scenarios, targets)?;
    let by_id: std::collections::HashMap<&str, (usize, &Scenario)> =
        scenarios.iter().enumerate().map(|(i, s)| (s.id.as_str(), (i, s))).collect();
    let outcomes: Vec<_> = run
        .attacks
        .par_iter()
        .map(|a| {
            let (i, s) = by_id[a.scenario_id.as_str()];
            noise_row(setup, nc, i, s, a)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = run.report.failures.clone();
    for (a, outcome) in run.attacks.iter().zip(outcomes) {
        match outcome {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(ScenarioFailure {
                scenario_id: a.scenario_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let col = |f: fn(&NoiseRow) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
    let mean = NoiseMeans {
        clean_j_acc_nom: col(|r| r.clean_j_acc_nom),
        clean_j: col(|r| r.clean_j),
        noisy_clean_j_acc_nom: col(|r| r.noisy_clean_j_acc_nom),
        noisy_clean_j: col(|r| r.noisy_clean_j),
        adversarial_j: col(|r| r.adversarial_j),
        noisy_adversarial_j: col(|r| r.noisy_adversarial_j),
    };
    Ok(NoiseReport {
        noise: *nc,
        rows,
        mean,
        failures,
        attack: run.report,
    })
}
