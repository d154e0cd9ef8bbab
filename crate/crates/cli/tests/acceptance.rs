//! Acceptance checks. Prints one PASS/FAIL line per criterion and a summary.
//! With `ACCEPTANCE_STRICT=1` any failure makes the process exit non-zero.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;
use tempfile::TempDir;

use trajadv_core::attack::{loss, loss_gradient, make_weights, project_line_search, run_attack, AttackConfig, WeightKind};
use trajadv_core::constraints::{is_feasible, ConstraintSet, KinematicBounds};
use trajadv_core::dataset::read_dataset;
use trajadv_core::predictor::{load_predictor, predict, PredictorSpec};
use trajadv_core::{Perturbation, Scenario, Trajectory};
use trajadv_oracle::instances::{disc_point, jittered, projection_case, random_mlp, random_track, reachable_cv_case};
use trajadv_oracle::{brute_force_theta, fd_loss_gradient, linear_attack_optimum, reference_feasible};

const SUITE: usize = 100;

enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn trajadv(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_trajadv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn trajadv");
    assert!(
        out.status.success(),
        "trajadv {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let p = rng.random_range(1..=6);
        let f = rng.random_range(1..=12);
        let spec = random_mlp(&mut rng, p, f, &[16, 16]);
        let nominal = random_track(&mut rng, p + 1, 0.5);
        let delta = Perturbation::new((0..=p).map(|_| disc_point(&mut rng, 1.0)).collect());
        let target = jittered(&mut rng, &predict(&spec, &nominal).unwrap(), 3.0);
        let kind = if draw % 2 == 0 {
            WeightKind::Uniform
        } else {
            WeightKind::Exponential { alpha: rng.random_range(0.05..0.95) }
        };
        let w = make_weights(kind, f).unwrap();
        let g = loss_gradient(&spec, &nominal, &delta, &target, &w).unwrap().gradient;
        let fd = fd_loss_gradient(&spec, &nominal, &delta.to_flat(), &target, w.as_slice(), 1e-5)
            .unwrap()
            .value;
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max(rel_err(*a, *b));
        }
    }
    verdict(worst <= 1e-4, format!("100 draws, max relative error {worst:.2e} (limit 1e-4)"))
}

fn projection_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let grid = 20;
    let (mut beyond, mut infeasible, mut worst) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let (cs, delta) = projection_case(&mut rng);
        let d = Perturbation::new(delta.clone());
        let theta = project_line_search(&cs, cs.nominal(), &d, grid).unwrap();
        let x = cs.nominal().perturbed(&d.scaled_per_state(&theta)).unwrap();
        if !is_feasible(&cs, &x).unwrap().is_feasible() || !reference_feasible(&cs, x.states()) {
            infeasible += 1;
        }
        let best: f64 = brute_force_theta(&cs, &delta, grid).unwrap().value.iter().sum();
        let gap = best - theta.iter().sum::<f64>();
        worst = worst.max(gap);
        if gap > 1.0 / f64::from(grid) + 1e-12 {
            beyond += 1;
        }
    }
    verdict(
        beyond == 0 && infeasible == 0,
        format!("200 cases, G=20: worst gap {worst:.3}, {beyond} beyond 1/G, {infeasible} infeasible"),
    )
}

fn closed_form_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut within, mut best_within, mut reached_tau) = (0, 0, 0);
    let mut gaps = Vec::new();
    for i in 0..100 {
        let (spec, past, target) = reachable_cv_case(&mut rng);
        let w = make_weights(WeightKind::default(), target.len()).unwrap();
        let opt = linear_attack_optimum(&past, &target, w.as_slice()).unwrap().value;
        let cs = ConstraintSet::position_only(past.clone(), 1e6).unwrap();
        let cfg = AttackConfig {
            seed: i,
            ..AttackConfig::default()
        };
        let r = run_attack(&spec, &past, &target, &cs, &w, &cfg).unwrap();
        let gap = (r.final_loss - opt.loss).abs();
        gaps.push(gap);
        within += usize::from(gap <= 1e-3);
        best_within += usize::from((r.best_loss - opt.loss).abs() <= 1e-3);
        reached_tau += usize::from(r.final_loss <= cfg.tau);
    }
    verdict(
        within >= 95,
        format!(
            "{within}/100 final losses within 1e-3 m of J* (need 95); best-so-far {best_within}/100; \
             {reached_tau}/100 stopped at tau; median gap {:.4} m",
            median(&gaps)
        ),
    )
}

fn weight_contract() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = ((0.0f64..1.0).prop_filter("open interval", |a| *a > 0.0), 1usize..=50);
    let result = runner.run(&strategy, |(alpha, f)| {
        for kind in [WeightKind::Uniform, WeightKind::Exponential { alpha }] {
            let w = make_weights(kind, f).unwrap();
            let sum: f64 = w.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
            prop_assert!(w.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
            if let WeightKind::Exponential { .. } = kind {
                prop_assert!(w.as_slice().windows(2).all(|p| p[0] < p[1]));
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => verdict(true, "1000 cases over alpha in (0,1), F in [1,50]".into()),
        Err(e) => verdict(false, format!("{e}")),
    }
}

#[derive(Deserialize)]
struct AttackLine {
    scenario_id: String,
    target: Trajectory,
    result: Option<Value>,
}

struct SuiteResult {
    target: Trajectory,
    adversarial: Trajectory,
    best: Trajectory,
    best_loss: f64,
}

fn read_attacks(path: &Path, scenarios: &[Scenario]) -> Vec<Option<SuiteResult>> {
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), scenarios.len());
    lines
        .iter()
        .zip(scenarios)
        .map(|(line, s)| {
            let Ok(a) = serde_json::from_str::<AttackLine>(line) else {
                return None;
            };
            assert_eq!(a.scenario_id, s.id);
            let r = a.result?;
            let best_delta: Perturbation = serde_json::from_value(r["best_perturbation"].clone()).unwrap();
            Some(SuiteResult {
                target: a.target,
                adversarial: serde_json::from_value(r["adversarial"].clone()).unwrap(),
                best: s.past.perturbed(&best_delta).unwrap(),
                best_loss: r["best_loss"].as_f64().unwrap(),
            })
        })
        .collect()
}

/// Trained model, bounds and attack runs shared by the suite-level criteria.
struct Pipeline {
    dir: TempDir,
    scenarios: Vec<Scenario>,
    spec: PredictorSpec,
    bounds: KinematicBounds,
    adam100: Vec<Option<SuiteResult>>,
    adam10: Vec<Option<SuiteResult>>,
    gd10: Vec<Option<SuiteResult>>,
}

fn pipeline() -> Pipeline {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    trajadv(d, &["--seed", "11", "gen", "--count", "1000", "--out", "train.jsonl"]);
    trajadv(d, &["--seed", "12", "gen", "--count", &SUITE.to_string(), "--out", "suite.jsonl"]);
    trajadv(d, &["stats", "--data", "train.jsonl", "--out", "bounds.json"]);
    trajadv(d, &["--seed", "13", "train", "--data", "train.jsonl", "--out", "mlp.json"]);
    let attack = |extra: &[&str], out: &str| {
        let mut args = vec![
            "--seed",
            "14",
            "attack",
            "--data",
            "suite.jsonl",
            "--model",
            "mlp.json",
            "--bounds",
            "bounds.json",
            "--lateral-shift",
            "1.0",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        trajadv(d, &args);
    };
    attack(&[], "adam100.jsonl");
    attack(&["--kmax", "10"], "adam10.jsonl");
    attack(&["--kmax", "10", "--optimizer", "gradient-descent"], "gd10.jsonl");
    let scenarios = read_dataset(d.join("suite.jsonl")).unwrap();
    let spec = load_predictor(d.join("mlp.json")).unwrap();
    let bounds = serde_json::from_str(&std::fs::read_to_string(d.join("bounds.json")).unwrap()).unwrap();
    Pipeline {
        adam100: read_attacks(&d.join("adam100.jsonl"), &scenarios),
        adam10: read_attacks(&d.join("adam10.jsonl"), &scenarios),
        gd10: read_attacks(&d.join("gd10.jsonl"), &scenarios),
        dir,
        scenarios,
        spec,
        bounds,
    }
}

fn feasibility_guarantee(p: &Pipeline) -> Outcome {
    let (mut checked, mut bad, mut missing) = (0, 0, 0);
    for runs in [&p.adam100, &p.adam10, &p.gd10] {
        for (s, r) in p.scenarios.iter().zip(runs.iter()) {
            let Some(r) = r else {
                missing += 1;
                continue;
            };
            let cs = ConstraintSet::new(s.past.clone(), p.bounds.clone(), 1.0).unwrap();
            for x in [&r.adversarial, &r.best] {
                checked += 1;
                if !is_feasible(&cs, x).unwrap().is_feasible() || !reference_feasible(&cs, x.states()) {
                    bad += 1;
                }
            }
        }
    }
    verdict(
        bad == 0 && missing == 0,
        format!("{checked} adversarial inputs from 3x{SUITE} attacks checked, {bad} infeasible, {missing} attacks without a result"),
    )
}

fn attack_effectiveness(p: &Pipeline) -> Outcome {
    let w = make_weights(WeightKind::default(), p.spec.future_horizon()).unwrap();
    let mut j0 = Vec::new();
    let mut jbar = Vec::new();
    for (s, r) in p.scenarios.iter().zip(&p.adam100) {
        let Some(r) = r else { continue };
        j0.push(loss(&predict(&p.spec, &s.past).unwrap(), &r.target, &w).unwrap());
        jbar.push(r.best_loss);
    }
    let ratio = mean(&jbar) / mean(&j0);
    let med = median(&jbar);
    verdict(
        jbar.len() == SUITE && ratio <= 0.2 && med <= 0.25,
        format!(
            "{} scenarios: mean J_bar {:.4} m vs J(0) {:.4} m (ratio {:.3}, limit 0.20); median J_bar {:.4} m (limit 0.25)",
            jbar.len(),
            mean(&jbar),
            mean(&j0),
            ratio,
            med
        ),
    )
}

fn optimizer_ablation(p: &Pipeline) -> Outcome {
    let bests = |runs: &[Option<SuiteResult>]| -> Vec<f64> { runs.iter().flatten().map(|r| r.best_loss).collect() };
    let (adam, gd) = (bests(&p.adam10), bests(&p.gd10));
    let regressions = p
        .adam100
        .iter()
        .zip(&p.adam10)
        .filter(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => a.best_loss > b.best_loss,
            _ => true,
        })
        .count();
    verdict(
        adam.len() == gd.len() && mean(&adam) <= mean(&gd) && regressions == 0,
        format!(
            "K=10: Adam J_bar {:.4} m, gradient descent {:.4} m; {regressions} scenarios worse at K=100 than K=10",
            mean(&adam),
            mean(&gd)
        ),
    )
}

fn noise_protocols(p: &Pipeline) -> Outcome {
    let d = p.dir.path();
    let noise = |extra: &[&str], out: &str| -> Value {
        let mut args = vec![
            "--seed",
            "14",
            "noise-eval",
            "--data",
            "suite.jsonl",
            "--model",
            "mlp.json",
            "--bounds",
            "bounds.json",
            "--lateral-shift",
            "1.0",
            "--out",
            out,
        ];
        args.extend_from_slice(extra);
        trajadv(d, &args);
        serde_json::from_str(&std::fs::read_to_string(d.join(out)).unwrap()).unwrap()
    };
    let zero = noise(&["--radius-factor", "0", "--limit", "20"], "noise0.json");
    let mut exact = true;
    for (row, r) in zero["rows"].as_array().unwrap().iter().zip(&p.adam100) {
        exact &= row["noisy_clean_j"] == row["clean_j"];
        exact &= row["noisy_clean_j_acc_nom"] == row["clean_j_acc_nom"];
        exact &= row["noisy_adversarial_j"] == row["adversarial_j"];
        let adv: Trajectory = serde_json::from_value(row["noisy_adversarial_input"].clone()).unwrap();
        exact &= r.as_ref().is_some_and(|r| adv == r.best);
    }
    for (row, r) in zero["attack"]["rows"].as_array().unwrap().iter().zip(&p.adam100) {
        exact &= r.as_ref().is_some_and(|r| row["J_bar"].as_f64() == Some(r.best_loss));
    }
    let full = noise(&[], "noise.json");
    let m = &full["mean"];
    let (clean, adv) = (m["noisy_clean_j"].as_f64().unwrap(), m["noisy_adversarial_j"].as_f64().unwrap());
    let rows = full["rows"].as_array().unwrap().len();
    verdict(
        exact && adv <= clean && rows == SUITE,
        format!(
            "radius 0 reproduces noiseless results: {exact}; factor 0.02 over {rows} scenarios: noisy adversarial J {adv:.4} m vs noisy clean J {clean:.4} m"
        ),
    )
}

/// Drops every `wall_time_s` value so timed reports can be compared.
fn untimed(path: &Path, bytes: &[u8]) -> Vec<u8> {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("wall_time_s");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let text = String::from_utf8_lossy(bytes);
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => match serde_json::from_str::<Value>(&text) {
            Ok(mut v) => {
                strip(&mut v);
                v.to_string().into_bytes()
            }
            Err(_) => bytes.to_vec(),
        },
        Some("csv") => {
            let mut lines = text.lines();
            let Some(header) = lines.next() else { return bytes.to_vec() };
            let Some(col) = header.split(',').position(|c| c == "wall_time_s") else {
                return bytes.to_vec();
            };
            text.lines()
                .map(|l| {
                    let cells: Vec<&str> = l.split(',').enumerate().filter(|(i, _)| *i != col).map(|(_, c)| c).collect();
                    cells.join(",") + "\n"
                })
                .collect::<String>()
                .into_bytes()
        }
        _ => bytes.to_vec(),
    }
}

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let suite = ["--data", "data.jsonl", "--model", "mlp.json", "--bounds", "bounds.json", "--limit", "4"];
    let runs: Vec<Vec<&str>> = vec![
        vec!["--seed", "21", "gen", "--count", "60", "--out", "data.jsonl"],
        vec!["stats", "--data", "data.jsonl", "--out", "bounds.json"],
        vec!["--seed", "22", "train", "--data", "data.jsonl", "--out", "mlp.json", "--epochs", "20", "--curve", "curve.csv"],
        vec!["train", "--kind", "constant-velocity", "--data", "data.jsonl", "--out", "cv.json"],
        vec!["predict", "--data", "data.jsonl", "--model", "cv.json", "--out", "cv_targets.jsonl"],
        [&["--seed", "23", "attack"][..], &suite, &["--target", "cv_targets.jsonl", "--out", "attack.jsonl"]].concat(),
        [&["--seed", "24", "eval"][..], &suite, &["--speedup", "1.2", "--out-dir", "eval"]].concat(),
        [&["--seed", "25", "noise-eval"][..], &suite, &["--lateral-shift", "-1", "--out", "noise.json"]].concat(),
    ];
    let manifests = [
        "data.jsonl.manifest.json",
        "bounds.json.manifest.json",
        "mlp.json.manifest.json",
        "cv.json.manifest.json",
        "cv_targets.jsonl.manifest.json",
        "attack.jsonl.manifest.json",
        "eval/manifest.json",
        "noise.json.manifest.json",
    ];
    for args in &runs {
        trajadv(d, args);
    }
    let (mut compared, mut differing, mut replay_failed) = (0, Vec::new(), 0);
    for m in manifests {
        let manifest: Value = serde_json::from_str(&std::fs::read_to_string(d.join(m)).unwrap()).unwrap();
        let outputs: Vec<String> = manifest["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| o["path"].as_str().unwrap().to_string())
            .collect();
        let before: Vec<Vec<u8>> = outputs.iter().map(|o| std::fs::read(d.join(o)).unwrap()).collect();
        let status = Command::new(env!("CARGO_BIN_EXE_trajadv"))
            .current_dir(d)
            .args(["replay", "--manifest", m])
            .output()
            .unwrap()
            .status;
        replay_failed += usize::from(!status.success());
        for (o, old) in outputs.iter().zip(before) {
            let path = d.join(o);
            let new = std::fs::read(&path).unwrap();
            compared += 1;
            if untimed(&path, &new) != untimed(&path, &old) {
                differing.push(o.clone());
            }
        }
    }
    verdict(
        differing.is_empty() && replay_failed == 0,
        format!(
            "{} commands replayed ({replay_failed} failed), {compared} outputs compared, differing: {differing:?}",
            manifests.len()
        ),
    )
}

fn run(id: u32, name: &str, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let label = match outcome.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::NotApplicable => "N/A ",
    };
    println!(
        "criterion {id:>2} {label} {name}: {} [{:.1}s]",
        outcome.detail,
        start.elapsed().as_secs_f64()
    );
    !matches!(outcome.verdict, Verdict::Fail)
}

fn main() {
    // Criteria failures are reported, not raised as panics on stderr.
    panic::set_hook(Box::new(|_| {}));
    let mut ok = Vec::new();
    ok.push(run(1, "benchmark table values", || Outcome {
        verdict: Verdict::NotApplicable,
        detail: "absolute values need the original models and datasets; criteria 2-10 stand in".into(),
    }));
    ok.push(run(2, "gradient correctness", gradient_correctness));
    ok.push(run(3, "projection optimality", projection_optimality));
    let start = Instant::now();
    let shared = panic::catch_unwind(pipeline);
    println!("shared suite pipeline built in {:.1}s", start.elapsed().as_secs_f64());
    match &shared {
        Ok(p) => {
            ok.push(run(4, "feasibility guarantee", || feasibility_guarantee(p)));
            ok.push(run(5, "closed-form convergence", closed_form_convergence));
            ok.push(run(6, "attack effectiveness", || attack_effectiveness(p)));
            ok.push(run(7, "optimizer ablation", || optimizer_ablation(p)));
            ok.push(run(8, "noise protocols", || noise_protocols(p)));
        }
        Err(_) => {
            for (id, name) in [(4, "feasibility guarantee"), (6, "attack effectiveness"), (7, "optimizer ablation"), (8, "noise protocols")] {
                ok.push(run(id, name, || verdict(false, "shared pipeline failed".into())));
            }
            ok.push(run(5, "closed-form convergence", closed_form_convergence));
        }
    }
    ok.push(run(9, "determinism", determinism));
    ok.push(run(10, "weight-scheme contract", weight_contract));
    let passed = ok.iter().filter(|&&x| x).count();
    println!("acceptance: {passed}/{} criteria passed or not applicable", ok.len());
    if passed < ok.len() && std::env::var("ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
