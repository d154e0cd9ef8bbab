//! Synthetic driving scenarios and the JSON-lines dataset format.
//!
//! Each line holds one scenario:
//! `{"id": .., "dt": .., "P": .., "F": .., "past": [[x, y], ..], "future": [[x, y], ..]}`
//! where `past` has `P + 1` states and `future` has `F`.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Point2, Scenario, Trajectory};

/// Synthetic generator settings.
///
/// Vehicles follow a unicycle model: a path speed in
/// `[speed_min, speed_max]` with bounded longitudinal acceleration and a
/// heading that is constant (straight), turns at a constant yaw rate
/// (curve), or swings through a smooth `sin^2` bump that shifts the vehicle
/// by one lane (lane change). Every sampled waypoint is then displaced
/// uniformly within a disc of radius `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub count: usize,
    /// Past horizon `P` (the past holds `P + 1` states).
    pub past: usize,
    /// Future horizon `F`.
    pub future: usize,
    pub dt: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Bound on the magnitude of the longitudinal acceleration, m/s^2.
    pub max_accel: f64,
    /// Fraction of scenarios that follow a constant-yaw-rate curve.
    pub turn_rate: f64,
    /// Fraction of scenarios containing a lane change.
    pub lane_change_rate: f64,
    /// Bound on the yaw rate of curving scenarios, rad/s.
    pub max_yaw_rate: f64,
    pub lane_width: f64,
    /// Duration of a lane change, seconds.
    pub lane_change_duration: f64,
    /// Radius of the per-waypoint position noise disc, meters.
    pub noise: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            count: 100,
            past: 4,
            future: 12,
            dt: 0.5,
            speed_min: 5.0,
            speed_max: 15.0,
            max_accel: 1.0,
            turn_rate: 0.3,
            lane_change_rate: 0.3,
            max_yaw_rate: 0.1,
            lane_width: 3.7,
            lane_change_duration: 4.0,
            noise: 0.02,
            seed: 0,
        }
    }
}

const SUBSTEPS: usize = 20;

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if self.past == 0 || self.future == 0 {
            return bad(format!(
                "horizons must be positive, got P={} F={}",
                self.past, self.future
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.speed_min > 0.0 && self.speed_min <= self.speed_max && self.speed_max.is_finite()) {
            return bad(format!(
                "speed range [{}, {}] is invalid",
                self.speed_min, self.speed_max
            ));
        }
        for (name, v) in [
            ("max_accel", self.max_accel),
            ("max_yaw_rate", self.max_yaw_rate),
            ("lane_width", self.lane_width),
            ("noise", self.noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.lane_change_duration.is_finite() && self.lane_change_duration > 0.0) {
            return bad("lane_change_duration must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.turn_rate)
            || !(0.0..=1.0).contains(&self.lane_change_rate)
            || self.turn_rate + self.lane_change_rate > 1.0
        {
            return bad("turn_rate and lane_change_rate must be fractions summing to at most 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Maneuver {
    Straight,
    Curve { yaw_rate: f64 },
    LaneChange { start: f64, peak: f64 },
}

fn sample_track(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let n = cfg.past + 1 + cfg.future;
    let horizon = (n - 1) as f64 * cfg.dt;

    let u: f64 = rng.random();
    let maneuver = if u < cfg.lane_change_rate {
        let latest = (horizon - cfg.lane_change_duration).max(0.0);
        let start = rng.random_range(0.0..=latest);
        Maneuver::LaneChange { start, peak: 0.0 }
    } else if u < cfg.lane_change_rate + cfg.turn_rate {
        let mag = cfg.max_yaw_rate * rng.random_range(0.2..=1.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Maneuver::Curve { yaw_rate: sign * mag }
    } else {
        Maneuver::Straight
    };

    let origin = Point2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    let heading0 = rng.random_range(0.0..2.0 * PI);
    let v0 = rng.random_range(cfg.speed_min..=cfg.speed_max);
    let accel = if cfg.max_accel > 0.0 {
        rng.random_range(-cfg.max_accel..=cfg.max_accel)
    } else {
        0.0
    };
    let speed_at = |t: f64| (v0 + accel * t).clamp(cfg.speed_min, cfg.speed_max);

    // Lateral offset of a lane change is approximately v * T * peak / 2.
    let maneuver = match maneuver {
        Maneuver::LaneChange { start, .. } => {
            let v_ref = speed_at(start + 0.5 * cfg.lane_change_duration);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let peak = sign * 2.0 * cfg.lane_width / (v_ref * cfg.lane_change_duration);
            Maneuver::LaneChange { start, peak }
        }
        m => m,
    };
    let heading_at = |t: f64| -> f64 {
        heading0
            + match maneuver {
                Maneuver::Straight => 0.0,
                Maneuver::Curve { yaw_rate } => yaw_rate * t,
                Maneuver::LaneChange { start, peak } => {
                    let s = ((t - start) / cfg.lane_change_duration).clamp(0.0, 1.0);
                    peak * (PI * s).sin().powi(2)
                }
            }
    };

    let h = cfg.dt / SUBSTEPS as f64;
    let mut pos = origin;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n);
    out.push(pos);
    for _ in 1..n {
        for _ in 0..SUBSTEPS {
            let tm = t + 0.5 * h;
            let (s, c) = heading_at(tm).sin_cos();
            pos += Point2::new(c, s) * (speed_at(tm) * h);
            t += h;
        }
        out.push(pos);
    }

    if cfg.noise > 0.0 {
        for p in &mut out {
            let r = cfg.noise * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..2.0 * PI);
            *p += Point2::new(r * phi.cos(), r * phi.sin());
        }
    }
    out
}

/// Generates `cfg.count` scenarios; identical configs give identical output.
pub fn generate_synthetic_dataset(cfg: &GenConfig) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| {
            let track = sample_track(cfg, &mut rng);
            let (past, future) = track.split_at(cfg.past + 1);
            Scenario::new(
                format!("s{i:05}"),
                Trajectory::new(past.to_vec(), cfg.dt)?,
                Trajectory::new(future.to_vec(), cfg.dt)?,
            )
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    dt: f64,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    past_horizon: Option<usize>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    future_horizon: Option<usize>,
    past: Vec<Point2>,
    future: Vec<Point2>,
}

impl Record {
    fn from_scenario(s: &Scenario) -> Self {
        Record {
            id: s.id.clone(),
            dt: s.dt(),
            past_horizon: Some(s.past_horizon()),
            future_horizon: Some(s.future_horizon()),
            past: s.past.states().to_vec(),
            future: s.future_truth.states().to_vec(),
        }
    }

    fn into_scenario(self) -> std::result::Result<Scenario, String> {
        let id = self.id;
        if let Some(p) = self.past_horizon {
            if self.past.len() != p + 1 {
                return Err(format!(
                    "scenario {id}: declared P={p} needs {} past states, found {}",
                    p + 1,
                    self.past.len()
                ));
            }
        }
        if let Some(f) = self.future_horizon {
            if self.future.len() != f {
                return Err(format!(
                    "scenario {id}: declared F={f} but found {} future states",
                    self.future.len()
                ));
            }
        }
        let past = Trajectory::new(self.past, self.dt).map_err(|e| format!("scenario {id}: past: {e}"))?;
        let future =
            Trajectory::new(self.future, self.dt).map_err(|e| format!("scenario {id}: future: {e}"))?;
        Scenario::new(id, past, future).map_err(|e| e.to_string())
    }
}

/// Serializes scenarios to the JSON-lines format. Floats are written with
/// the shortest representation that parses back to the same bits.
pub fn to_jsonl(scenarios: &[Scenario]) -> String {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&serde_json::to_string(&Record::from_scenario(s)).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses the JSON-lines format, rejecting scenarios whose horizons differ
/// from the first one. `source` only labels error messages.
pub fn parse_jsonl(text: &str, source: &Path) -> Result<Vec<Scenario>> {
    read_records(BufReader::new(text.as_bytes()), source)
}

fn read_records(reader: impl BufRead, source: &Path) -> Result<Vec<Scenario>> {
    let mut out: Vec<Scenario> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let scenario = record.into_scenario().map_err(parse_err)?;
        if let Some(first) = out.first() {
            if first.past_horizon() != scenario.past_horizon()
                || first.future_horizon() != scenario.future_horizon()
            {
                return Err(parse_err(format!(
                    "scenario {}: horizons P={} F={} differ from the dataset's P={} F={}",
                    scenario.id,
                    scenario.past_horizon(),
                    scenario.future_horizon(),
                    first.past_horizon(),
                    first.future_horizon()
                )));
            }
        }
        out.push(scenario);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Scenario>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), path)
}

pub fn write_dataset(scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_jsonl(scenarios).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
