//! `trajadv`: generate data, train predictors, derive bounds, run targeted
//! attacks and evaluate them. Every command writes a run manifest next to
//! its output so the run can be replayed and checked.

mod manifest;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use trajadv_core::attack::{make_weights, AttackConfig, InitKind, OptimizerKind, StepSchedule, WeightKind};
use trajadv_core::constraints::{compute_bounds, KinematicBounds, DEFAULT_SIGMA_MULTIPLIER};
use trajadv_core::dataset::{generate_synthetic_dataset, read_dataset, write_dataset, GenConfig};
use trajadv_core::eval::{noise_robustness, run_suite, NoiseConfig, SuiteSetup, TargetSpec};
use trajadv_core::predictor::{load_predictor, predict, save_predictor, train_mlp, PredictorSpec, TrainConfig};
use trajadv_core::{Scenario, Trajectory};

use manifest::{digest, manifest_path, unix_now, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trajadv_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<CliError>,
    },
    #[error("input changed since the recorded run: {0}")]
    InputChanged(String),
    #[error("replay did not reproduce: {0}")]
    ReplayMismatch(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "missing_file",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Context { source, .. } => source.kind(),
            CliError::InputChanged(_) => "input_changed",
            CliError::ReplayMismatch(_) => "replay_mismatch",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "usage" | "invalid_config" => 2,
            _ => 1,
        }
    }

    fn context(self, context: impl Into<String>) -> Self {
        CliError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "trajadv", version, about = "Targeted, constraint-feasible attacks on trajectory predictors")]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-scenario parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print errors to stderr as JSON objects.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic driving dataset (JSON lines).
    Gen(GenArgs),
    /// Fit a predictor to a dataset.
    Train(TrainArgs),
    /// Derive kinematic bounds (mean +- k sigma) from a dataset.
    Stats(StatsArgs),
    /// Write a predictor's forecasts as a per-scenario target file.
    Predict(PredictArgs),
    /// Attack every scenario and write one result per line.
    Attack(AttackCmdArgs),
    /// Attack every scenario and write metric tables.
    Eval(EvalArgs),
    /// Compare clean and adversarial inputs under random waypoint noise.
    NoiseEval(NoiseArgs),
    /// Re-run a recorded command and check that its outputs match.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Generator settings as JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    /// Past horizon P (the past holds P + 1 states).
    #[arg(long)]
    past: Option<usize>,
    /// Future horizon F.
    #[arg(long)]
    future: Option<usize>,
    /// Time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelKind {
    Mlp,
    ConstantVelocity,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Mlp)]
    kind: ModelKind,
    /// Training settings as JSON; flags override individual fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Optional CSV of per-epoch losses.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Band half-width in standard deviations.
    #[arg(long, default_value_t = DEFAULT_SIGMA_MULTIPLIER)]
    k: f64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct TargetArgs {
    /// Target specification (JSON object) or per-scenario targets (JSON lines).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Shift the ground truth this many meters to the left of travel.
    #[arg(long, allow_hyphen_values = true)]
    lateral_shift: Option<f64>,
    /// Scale future displacements from the last observed state.
    #[arg(long)]
    speedup: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OptimizerArg {
    Adam,
    GradientDescent,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScheduleArg {
    Constant,
    InverseSqrt,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitArg {
    Zero,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum WeightArg {
    Uniform,
    Exponential,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// Attack settings as JSON; flags override individual fields.
    #[arg(long)]
    attack_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Initial step size in meters [default: 0.05].
    #[arg(long)]
    step: Option<f64>,
    /// Step schedule [default: constant for adam, inverse-sqrt otherwise].
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    /// Loss threshold in meters [default: 0.02].
    #[arg(long)]
    tau: Option<f64>,
    /// Iteration cap [default: 100].
    #[arg(long)]
    kmax: Option<usize>,
    /// Initial perturbation [default: random].
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Standard deviation of the random initial perturbation [default: 0.01].
    #[arg(long)]
    init_scale: Option<f64>,
    /// Projection grid resolution G [default: 100].
    #[arg(long)]
    grid: Option<u32>,
    /// Node budget of the exact projection search [default: 20000].
    #[arg(long)]
    projection_budget: Option<usize>,
    /// Position ball radius in meters.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, value_enum, default_value_t = WeightArg::Exponential)]
    weights: WeightArg,
    /// Decay of the exponential weights.
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Kinematic bounds from `stats`; without it only the position ball applies.
    #[arg(long)]
    bounds: Option<PathBuf>,
    /// Number of leading scenarios to use.
    #[arg(long, default_value_t = 100)]
    limit: usize,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    attack: AttackArgs,
}

#[derive(Args, Debug)]
struct AttackCmdArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Output file, one JSON object per scenario.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Directory for metrics.csv, metrics.json, traces.csv and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// Noise disc radius as a multiple of the mean step length.
    #[arg(long, default_value_t = 0.02)]
    radius_factor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// One line of a per-scenario target file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetRecord {
    scenario_id: String,
    target: Trajectory,
}

struct Recorder {
    argv: Vec<String>,
    command: &'static str,
    seed: u64,
    threads: Option<usize>,
    started: f64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(self, config: Value, primary: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.to_string(),
            argv: self.argv,
            cwd: std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?,
            seed: self.seed,
            threads: self.threads,
            config,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            started_unix_s: self.started,
            finished_unix_s: unix_now(),
        };
        let path = manifest_path(primary);
        fs::write(&path, pretty(&manifest)).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        trajadv_core::Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        }
        .into()
    })
}

fn gen(rec: &mut Recorder, seed: Option<u64>, a: &GenArgs) -> Result<Value> {
    let mut cfg: GenConfig = match &a.config {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => GenConfig::default(),
    };
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.past = a.past.unwrap_or(cfg.past);
    cfg.future = a.future.unwrap_or(cfg.future);
    cfg.dt = a.dt.unwrap_or(cfg.dt);
    cfg.seed = seed.unwrap_or(cfg.seed);
    rec.seed = cfg.seed;
    let data = generate_synthetic_dataset(&cfg)?;
    write_dataset(&data, &a.out)?;
    rec.outputs.push(a.out.clone());
    println!("wrote {} scenarios to {}", data.len(), a.out.display());
    Ok(json!({ "gen": cfg }))
}

fn load_data(rec: &mut Recorder, path: &Path) -> Result<Vec<Scenario>> {
    rec.input(path);
    let data = read_dataset(path)?;
    if data.is_empty() {
        return Err(trajadv_core::Error::EmptyDataset.into());
    }
    Ok(data)
}

fn train(rec: &mut Recorder, seed: Option<u64>, a: &TrainArgs) -> Result<Value> {
    let data = load_data(rec, &a.data)?;
    let (spec, config) = match a.kind {
        ModelKind::ConstantVelocity => {
            let s = &data[0];
            let spec = PredictorSpec::constant_velocity(s.past_horizon(), s.future_horizon())?.with_dt_hint(s.dt());
            (spec, json!({ "kind": "constant_velocity" }))
        }
        ModelKind::Mlp => {
            let mut cfg: TrainConfig = match &a.config {
                Some(p) => {
                    rec.input(p);
                    read_json(p)?
                }
                None => TrainConfig::default(),
            };
            if let Some(h) = &a.hidden {
                cfg.hidden.clone_from(h);
            }
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
            cfg.validation_fraction = a.validation_fraction.unwrap_or(cfg.validation_fraction);
            cfg.seed = seed.unwrap_or(cfg.seed);
            rec.seed = cfg.seed;
            let outcome = train_mlp(&data, &cfg)?;
            if let Some(last) = outcome.curve.last() {
                match last.validation_ade {
                    Some(ade) => println!("epoch {}: train mse {:.6}, validation ade {:.4} m", last.epoch, last.train_mse, ade),
                    None => println!("epoch {}: train mse {:.6}", last.epoch, last.train_mse),
                }
            }
            if let Some(curve_path) = &a.curve {
                let mut csv = String::from("epoch,train_mse,validation_mse,validation_ade\n");
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                for e in &outcome.curve {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        e.epoch,
                        e.train_mse,
                        opt(e.validation_mse),
                        opt(e.validation_ade)
                    ));
                }
                rec.write(curve_path, &csv)?;
            }
            (outcome.spec, json!({ "kind": "mlp", "train": cfg }))
        }
    };
    save_predictor(&spec, &a.out)?;
    rec.outputs.push(a.out.clone());
    println!("wrote {} predictor to {}", spec.label(), a.out.display());
    Ok(config)
}

fn stats(rec: &mut Recorder, a: &StatsArgs) -> Result<Value> {
    let data = load_data(rec, &a.data)?;
    let bounds = compute_bounds(&data, a.k)?;
    rec.write(&a.out, &pretty(&bounds))?;
    println!("wrote bounds over {} scenarios to {}", data.len(), a.out.display());
    Ok(json!({ "k": a.k }))
}

fn load_model(rec: &mut Recorder, path: &Path) -> Result<PredictorSpec> {
    rec.input(path);
    Ok(load_predictor(path)?)
}

fn check_horizons(spec: &PredictorSpec, data: &[Scenario]) -> Result<()> {
    let s = &data[0];
    if s.past_horizon() != spec.past_horizon() {
        return Err(CliError::from(trajadv_core::Error::HorizonMismatch {
            expected: spec.past_horizon() + 1,
            actual: s.past.len(),
        })
        .context(format!("past of scenario {} does not fit the model", s.id)));
    }
    if s.future_horizon() != spec.future_horizon() {
        return Err(CliError::from(trajadv_core::Error::HorizonMismatch {
            expected: spec.future_horizon(),
            actual: s.future_horizon(),
        })
        .context(format!("future of scenario {} does not fit the model", s.id)));
    }
    Ok(())
}

fn predict_cmd(rec: &mut Recorder, a: &PredictArgs) -> Result<Value> {
    let data = load_data(rec, &a.data)?;
    let spec = load_model(rec, &a.model)?;
    check_horizons(&spec, &data)?;
    let mut out = String::new();
    for s in &data {
        let record = TargetRecord {
            scenario_id: s.id.clone(),
            target: predict(&spec, &s.past)?,
        };
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    rec.write(&a.out, &out)?;
    println!("wrote {} predictions to {}", data.len(), a.out.display());
    Ok(json!({}))
}

fn load_targets(rec: &mut Recorder, a: &TargetArgs, data: &[Scenario]) -> Result<(Vec<Trajectory>, Value)> {
    let spec = match (&a.target, a.lateral_shift, a.speedup) {
        (_, Some(d), _) => TargetSpec::LateralShift { d },
        (_, _, Some(factor)) => TargetSpec::Speedup { factor },
        (Some(path), _, _) => {
            rec.input(path);
            let text = read_text(path)?;
            if let Ok(spec) = serde_json::from_str::<TargetSpec>(&text) {
                spec
            } else {
                let mut by_id = HashMap::new();
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let r: TargetRecord = serde_json::from_str(line).map_err(|e| trajadv_core::Error::Parse {
                        path: path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    by_id.insert(r.scenario_id, r.target);
                }
                let targets = data
                    .iter()
                    .map(|s| {
                        by_id.remove(&s.id).ok_or_else(|| {
                            CliError::from(trajadv_core::Error::Schema {
                                field: "scenario_id".into(),
                                message: format!("{} has no target for scenario {}", path.display(), s.id),
                            })
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                return Ok((targets, json!({ "kind": "per_scenario_file" })));
            }
        }
        (None, None, None) => return Err(CliError::Usage("a target is required".into())),
    };
    let targets = data.iter().map(|s| spec.apply(s)).collect::<trajadv_core::Result<Vec<_>>>()?;
    Ok((targets, serde_json::to_value(&spec).expect("serializable")))
}

fn attack_config(rec: &mut Recorder, seed: Option<u64>, a: &AttackArgs) -> Result<AttackConfig> {
    let mut cfg: AttackConfig = match &a.attack_config {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => AttackConfig::default(),
    };
    if let Some(o) = a.optimizer {
        cfg.optimizer = match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::GradientDescent => OptimizerKind::GradientDescent,
        };
    }
    if let Some(s) = a.schedule {
        cfg.schedule = Some(match s {
            ScheduleArg::Constant => StepSchedule::Constant,
            ScheduleArg::InverseSqrt => StepSchedule::InverseSqrt,
        });
    }
    cfg.initial_step = a.step.unwrap_or(cfg.initial_step);
    cfg.tau = a.tau.unwrap_or(cfg.tau);
    cfg.max_iterations = a.kmax.unwrap_or(cfg.max_iterations);
    cfg.projection_grid = a.grid.unwrap_or(cfg.projection_grid);
    cfg.projection_budget = a.projection_budget.unwrap_or(cfg.projection_budget);
    let scale = match cfg.init {
        InitKind::Random { scale } => scale,
        InitKind::Zero => 0.01,
    };
    cfg.init = match (a.init, a.init_scale) {
        (Some(InitArg::Zero), _) => InitKind::Zero,
        (Some(InitArg::Random), s) => InitKind::Random { scale: s.unwrap_or(scale) },
        (None, Some(s)) => InitKind::Random { scale: s },
        (None, None) => cfg.init,
    };
    cfg.seed = seed.unwrap_or(cfg.seed);
    rec.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

struct Prepared {
    data: Vec<Scenario>,
    spec: PredictorSpec,
    bounds: KinematicBounds,
    targets: Vec<Trajectory>,
    weights: trajadv_core::attack::WeightScheme,
    cfg: AttackConfig,
    config: Value,
}

impl Prepared {
    fn setup(&self, radius: f64) -> SuiteSetup<'_> {
        SuiteSetup {
            spec: &self.spec,
            bounds: &self.bounds,
            position_radius: radius,
            weights: &self.weights,
            attack: &self.cfg,
        }
    }
}

fn prepare(rec: &mut Recorder, seed: Option<u64>, a: &SuiteArgs) -> Result<Prepared> {
    let mut data = load_data(rec, &a.data)?;
    data.truncate(a.limit);
    let spec = load_model(rec, &a.model)?;
    check_horizons(&spec, &data)?;
    let bounds = match &a.bounds {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => KinematicBounds::disabled(),
    };
    let (targets, target_desc) = load_targets(rec, &a.target, &data)?;
    let kind = match a.attack.weights {
        WeightArg::Uniform => WeightKind::Uniform,
        WeightArg::Exponential => WeightKind::Exponential { alpha: a.attack.alpha },
    };
    let weights = make_weights(kind, spec.future_horizon())?;
    let cfg = attack_config(rec, seed, &a.attack)?;
    let config = json!({
        "attack": cfg,
        "weights": kind,
        "position_radius": a.attack.radius,
        "bounds": bounds,
        "target": target_desc,
        "scenarios": data.len(),
    });
    Ok(Prepared {
        data,
        spec,
        bounds,
        targets,
        weights,
        cfg,
        config,
    })
}

fn attack_cmd(rec: &mut Recorder, seed: Option<u64>, a: &AttackCmdArgs) -> Result<Value> {
    let p = prepare(rec, seed, &a.suite)?;
    let run = run_suite(&p.setup(a.suite.attack.radius), &p.data, &p.targets)?;
    let mut attacks: HashMap<&str, _> = run.attacks.iter().map(|x| (x.scenario_id.as_str(), x)).collect();
    let failures: HashMap<&str, &str> = run
        .report
        .failures
        .iter()
        .map(|f| (f.scenario_id.as_str(), f.error.as_str()))
        .collect();
    let mut out = String::new();
    for s in &p.data {
        let line = match attacks.remove(s.id.as_str()) {
            Some(x) => serde_json::to_string(x).expect("serializable"),
            None => json!({ "scenario_id": s.id, "error": failures.get(s.id.as_str()) }).to_string(),
        };
        out.push_str(&line);
        out.push('\n');
    }
    rec.write(&a.out, &out)?;
    report_summary(&run.report);
    Ok(p.config)
}

fn report_summary(r: &trajadv_core::eval::MetricsReport) {
    println!(
        "attacked {} scenarios: mean J_bar {:.4} m, mean J_acc_nom {:.4} m, mean J_GY {:.4} m, {} failed",
        r.rows.len(),
        r.mean.j_bar,
        r.mean.j_acc_nom,
        r.mean.j_gy,
        r.failures.len()
    );
    for f in &r.failures {
        eprintln!("scenario {} failed: {}", f.scenario_id, f.error);
    }
}

fn eval_cmd(rec: &mut Recorder, seed: Option<u64>, a: &EvalArgs) -> Result<Value> {
    let p = prepare(rec, seed, &a.suite)?;
    let run = run_suite(&p.setup(a.suite.attack.radius), &p.data, &p.targets)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    rec.write(&a.out_dir.join("metrics.csv"), &run.report.to_csv())?;
    rec.write(&a.out_dir.join("metrics.json"), &pretty(&run.report))?;
    rec.write(&a.out_dir.join("traces.csv"), &run.report.traces_csv())?;
    report_summary(&run.report);
    Ok(p.config)
}

fn noise_cmd(rec: &mut Recorder, seed: Option<u64>, a: &NoiseArgs) -> Result<Value> {
    let p = prepare(rec, seed, &a.suite)?;
    let nc = NoiseConfig {
        radius_factor: a.radius_factor,
        seed: seed.unwrap_or(0),
    };
    let report = noise_robustness(&p.setup(a.suite.attack.radius), &p.data, &p.targets, &nc)?;
    rec.write(&a.out, &pretty(&report))?;
    println!(
        "noisy clean J {:.4} m (clean {:.4} m), noisy adversarial J {:.4} m (adversarial {:.4} m)",
        report.mean.noisy_clean_j, report.mean.clean_j, report.mean.noisy_adversarial_j, report.mean.adversarial_j
    );
    let mut config = p.config;
    config["noise"] = serde_json::to_value(nc).expect("serializable");
    Ok(config)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let recorded: RunManifest = read_json(&a.manifest)?;
    if recorded.command == "replay" {
        return Err(CliError::Usage("a replay manifest cannot be replayed".into()));
    }
    std::env::set_current_dir(&recorded.cwd).map_err(|e| CliError::io(&recorded.cwd, e))?;
    for input in &recorded.inputs {
        let now = digest(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(CliError::InputChanged(input.path.display().to_string()));
        }
    }
    if recorded.version != env!("CARGO_PKG_VERSION") {
        eprintln!("warning: recorded with version {}, replaying with {}", recorded.version, env!("CARGO_PKG_VERSION"));
    }
    run(recorded.argv.clone())?;
    let mut mismatched = Vec::new();
    for output in &recorded.outputs {
        let now = digest(&output.path)?;
        if now.stable_sha256 == output.stable_sha256 {
            println!("reproduced {}", output.path.display());
        } else {
            mismatched.push(output.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::ReplayMismatch(mismatched.join(", ")));
    }
    Ok(())
}

fn run(argv: Vec<String>) -> Result<()> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool built by an earlier command of this process is reused.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut rec = Recorder {
        argv,
        command: "",
        seed: cli.seed.unwrap_or(0),
        threads: cli.threads,
        started: unix_now(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let seed = cli.seed;
    let (config, primary) = match &cli.command {
        Command::Gen(a) => {
            rec.command = "gen";
            (gen(&mut rec, seed, a)?, a.out.clone())
        }
        Command::Train(a) => {
            rec.command = "train";
            (train(&mut rec, seed, a)?, a.out.clone())
        }
        Command::Stats(a) => {
            rec.command = "stats";
            (stats(&mut rec, a)?, a.out.clone())
        }
        Command::Predict(a) => {
            rec.command = "predict";
            (predict_cmd(&mut rec, a)?, a.out.clone())
        }
        Command::Attack(a) => {
            rec.command = "attack";
            (attack_cmd(&mut rec, seed, a)?, a.out.clone())
        }
        Command::Eval(a) => {
            rec.command = "eval";
            (eval_cmd(&mut rec, seed, a)?, a.out_dir.clone())
        }
        Command::NoiseEval(a) => {
            rec.command = "noise-eval";
            (noise_cmd(&mut rec, seed, a)?, a.out.clone())
        }
        Command::Replay(a) => return replay(a),
    };
    rec.finish(config, &primary)?;
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_errors {
                let msg = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
                eprintln!("{msg}");
            } else if matches!(e, CliError::Usage(_)) {
                eprint!("{e}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
