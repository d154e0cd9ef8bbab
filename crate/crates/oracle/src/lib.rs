//! Reference computations used to check `trajadv-core` in tests.
//!
//! Only core's data types and the black-box [`predict`] call are used.
//! Losses, kinematics, feasibility, finite differences and the
//! constant-velocity optimum are all recomputed here from scratch.

pub mod instances;

use trajadv_core::constraints::ConstraintSet;
use trajadv_core::kinematics::Quantity;
use trajadv_core::predictor::{predict, PredictorSpec};
use trajadv_core::{Point2, Trajectory};

/// Slack on every inequality, matching the documented feasibility contract.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Core(#[from] trajadv_core::Error),
    #[error("invalid oracle input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// A reference value with a note on how and where it was computed.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    pub method: &'static str,
    pub instance: String,
}

fn flat(t: &Trajectory) -> Vec<f64> {
    t.states().iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflat(v: &[f64], dt: f64) -> Result<Trajectory> {
    let pts: Vec<(f64, f64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
    Ok(Trajectory::from_xy(&pts, dt)?)
}

/// Central-difference Jacobian of `predict`, rows `2F`, columns `2(P+1)`.
pub fn fd_jacobian(spec: &PredictorSpec, past: &Trajectory, h: f64) -> Result<OracleResult<Vec<Vec<f64>>>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(OracleError::Invalid(format!("step must be positive, got {h}")));
    }
    let x = flat(past);
    let out = 2 * spec.future_horizon();
    let mut jac = vec![vec![0.0; x.len()]; out];
    for c in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[c] += h;
        minus[c] -= h;
        let fp = flat(&predict(spec, &unflat(&plus, past.dt())?)?);
        let fm = flat(&predict(spec, &unflat(&minus, past.dt())?)?);
        for r in 0..out {
            let v = (fp[r] - fm[r]) / (2.0 * h);
            if !v.is_finite() {
                return Err(OracleError::NonFinite(format!("jacobian entry ({r}, {c})")));
            }
            jac[r][c] = v;
        }
    }
    Ok(OracleResult {
        value: jac,
        method: "central finite differences of predict",
        instance: format!("P={} F={} h={h}", spec.past_horizon(), spec.future_horizon()),
    })
}

/// Jacobian of `p_t + k (p_t - p_{t-1})` written out entry by entry.
pub fn cv_jacobian(past: usize, future: usize) -> Vec<Vec<f64>> {
    let cols = 2 * (past + 1);
    let mut jac = vec![vec![0.0; cols]; 2 * future];
    for k in 1..=future {
        for axis in 0..2 {
            let row = 2 * (k - 1) + axis;
            jac[row][2 * past + axis] = 1.0 + k as f64;
            jac[row][2 * (past - 1) + axis] = -(k as f64);
        }
    }
    jac
}

/// Weighted sum of distances, computed independently of the main crate.
pub fn reference_loss(pred: &[Point2], target: &[Point2], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        let dx = pred[i].x - target[i].x;
        let dy = pred[i].y - target[i].y;
        total += w[i] * dx.hypot(dy);
    }
    total
}

/// `alpha^(F - j)` normalized, by explicit summation.
pub fn reference_weights(alpha: f64, future: usize) -> Vec<f64> {
    let mut raw = Vec::with_capacity(future);
    let mut p = 1.0;
    for _ in 0..future {
        raw.push(p);
        p *= alpha;
    }
    raw.reverse();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Central-difference gradient of the attack loss over the perturbation.
pub fn fd_loss_gradient(
    spec: &PredictorSpec,
    nominal: &Trajectory,
    delta: &[f64],
    target: &Trajectory,
    w: &[f64],
    h: f64,
) -> Result<OracleResult<Vec<f64>>> {
    let x = flat(nominal);
    if delta.len() != x.len() {
        return Err(OracleError::Invalid("perturbation length".into()));
    }
    let eval = |d: &[f64]| -> Result<f64> {
        let input: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + b).collect();
        let pred = predict(spec, &unflat(&input, nominal.dt())?)?;
        Ok(reference_loss(pred.states(), target.states(), w))
    };
    let mut grad = Vec::with_capacity(x.len());
    for c in 0..x.len() {
        let mut plus = delta.to_vec();
        let mut minus = delta.to_vec();
        plus[c] += h;
        minus[c] -= h;
        let g = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        if !g.is_finite() {
            return Err(OracleError::NonFinite(format!("gradient entry {c}")));
        }
        grad.push(g);
    }
    Ok(OracleResult {
        value: grad,
        method: "central finite differences of the loss",
        instance: format!("h={h}"),
    })
}

/// Speed, longitudinal/lateral acceleration and jerk, one list per quantity
/// in the order speed, accel_lon, accel_lat, jerk_lon, jerk_lat.
pub fn reference_kinematics(states: &[Point2], dt: f64) -> [Vec<f64>; 5] {
    let n = states.len();
    let mut speed = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let dx = states[i + 1].x - states[i].x;
        let dy = states[i + 1].y - states[i].y;
        speed.push(dx.hypot(dy) / dt);
    }
    let mut lon = Vec::new();
    let mut lat = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let ax = (states[i + 1].x - 2.0 * states[i].x + states[i - 1].x) / (dt * dt);
        let ay = (states[i + 1].y - 2.0 * states[i].y + states[i - 1].y) / (dt * dt);
        let hx = states[i + 1].x - states[i - 1].x;
        let hy = states[i + 1].y - states[i - 1].y;
        let len = hx.hypot(hy);
        let (ux, uy) = if len == 0.0 { (1.0, 0.0) } else { (hx / len, hy / len) };
        lon.push(ax * ux + ay * uy);
        lat.push(-ax * uy + ay * ux);
    }
    let diff = |v: &[f64]| -> Vec<f64> { v.windows(2).map(|p| (p[1] - p[0]) / dt).collect() };
    let jerk_lon = diff(&lon);
    let jerk_lat = diff(&lat);
    [speed, lon, lat, jerk_lon, jerk_lat]
}

/// Feasibility recomputed from the constraint set's radius and effective
/// bands.
pub fn reference_feasible(cs: &ConstraintSet, candidate: &[Point2]) -> bool {
    let nominal = cs.nominal().states();
    let r = cs.position_radius();
    for (c, n) in candidate.iter().zip(nominal) {
        if (c.x - n.x).hypot(c.y - n.y) > r + SLACK {
            return false;
        }
    }
    let profile = reference_kinematics(candidate, cs.nominal().dt());
    for (q, values) in Quantity::ALL.iter().zip(&profile) {
        if let Some(band) = cs.band(*q) {
            if values.iter().any(|&v| v < band.lo - SLACK || v > band.hi + SLACK) {
                return false;
            }
        }
    }
    true
}

fn scaled(nominal: &[Point2], delta: &[Point2], steps: &[u32], grid: u32) -> Vec<Point2> {
    nominal
        .iter()
        .zip(delta)
        .zip(steps)
        .map(|((n, d), &s)| {
            let t = f64::from(s) / f64::from(grid);
            Point2::new(n.x + t * d.x, n.y + t * d.y)
        })
        .collect()
}

/// Exhaustive grid maximizer of `sum(theta)` subject to feasibility.
///
/// Sums are visited from largest to smallest; within a sum, tuples are
/// visited in decreasing lexicographic order, so the first feasible tuple
/// is the lexicographically largest global maximizer.
pub fn brute_force_theta(cs: &ConstraintSet, delta: &[Point2], grid: u32) -> Result<OracleResult<Vec<f64>>> {
    let nominal = cs.nominal().states();
    let n = nominal.len();
    if n > 4 {
        return Err(OracleError::Invalid(format!("{n} states is too many to enumerate")));
    }
    if grid < 1 || delta.len() != n {
        return Err(OracleError::Invalid("grid or perturbation shape".into()));
    }

    fn visit(
        prefix: &mut Vec<u32>,
        remaining: u32,
        slots: usize,
        grid: u32,
        accept: &mut dyn FnMut(&[u32]) -> bool,
    ) -> bool {
        if slots == 0 {
            return remaining == 0 && accept(prefix);
        }
        let max_rest = grid * (slots as u32 - 1);
        let hi = remaining.min(grid);
        let lo = remaining.saturating_sub(max_rest);
        for v in (lo..=hi).rev() {
            prefix.push(v);
            if visit(prefix, remaining - v, slots - 1, grid, accept) {
                return true;
            }
            prefix.pop();
        }
        false
    }

    for total in (0..=grid * n as u32).rev() {
        let mut prefix = Vec::with_capacity(n);
        let mut found = None;
        let mut accept = |steps: &[u32]| {
            if reference_feasible(cs, &scaled(nominal, delta, steps, grid)) {
                found = Some(steps.to_vec());
                true
            } else {
                false
            }
        };
        if visit(&mut prefix, total, n, grid, &mut accept) {
            let steps = found.expect("accepted tuple recorded");
            return Ok(OracleResult {
                value: steps.iter().map(|&s| f64::from(s) / f64::from(grid)).collect(),
                method: "exhaustive grid enumeration",
                instance: format!("{n} states, G={grid}"),
            });
        }
    }
    Err(OracleError::Invalid("no feasible grid point, nominal itself infeasible".into()))
}

/// Unconstrained optimum of the attack loss for a constant-velocity
/// predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOptimum {
    /// Optimal perturbation of the last two past states, `[p_{t-1}, p_t]`.
    pub delta_last_two: [Point2; 2],
    pub loss: f64,
    pub iterations: usize,
}

/// With `a` the shift of `p_t` and `u` the added velocity, the perturbed
/// constant-velocity prediction is `c_k + a + k u`. The loss
/// `sum_k w_k |c_k + a + k u - y_k|` is minimized by iteratively reweighted
/// least squares; x and y decouple in each weighted solve.
pub fn linear_attack_optimum(
    past: &Trajectory,
    target: &Trajectory,
    w: &[f64],
) -> Result<OracleResult<LinearOptimum>> {
    let n = past.len();
    let f = target.len();
    if n < 2 || w.len() != f {
        return Err(OracleError::Invalid("shapes".into()));
    }
    let pt = past.states()[n - 1];
    let pt1 = past.states()[n - 2];
    // Residual target per step: y_k - c_k.
    let b: Vec<(f64, f64)> = (1..=f)
        .map(|k| {
            let k = k as f64;
            let cx = pt.x + k * (pt.x - pt1.x);
            let cy = pt.y + k * (pt.y - pt1.y);
            let y = target.states()[k as usize - 1];
            (y.x - cx, y.y - cy)
        })
        .collect();

    let solve = |omega: &[f64]| -> ((f64, f64), (f64, f64)) {
        // Normal equations for min sum omega_k (a + k u - b_k)^2 per axis.
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let (mut rx0, mut rx1, mut ry0, mut ry1) = (0.0, 0.0, 0.0, 0.0);
        for (i, &o) in omega.iter().enumerate() {
            let k = (i + 1) as f64;
            s0 += o;
            s1 += o * k;
            s2 += o * k * k;
            rx0 += o * b[i].0;
            rx1 += o * k * b[i].0;
            ry0 += o * b[i].1;
            ry1 += o * k * b[i].1;
        }
        let det = s0 * s2 - s1 * s1;
        if det.abs() < 1e-300 {
            // One effective step: only a matters.
            return ((rx0 / s0, 0.0), (ry0 / s0, 0.0));
        }
        let ax = (s2 * rx0 - s1 * rx1) / det;
        let ux = (s0 * rx1 - s1 * rx0) / det;
        let ay = (s2 * ry0 - s1 * ry1) / det;
        let uy = (s0 * ry1 - s1 * ry0) / det;
        ((ax, ux), (ay, uy))
    };
    let objective = |x: (f64, f64), y: (f64, f64)| -> f64 {
        (0..f)
            .map(|i| {
                let k = (i + 1) as f64;
                w[i] * (x.0 + k * x.1 - b[i].0).hypot(y.0 + k * y.1 - b[i].1)
            })
            .sum()
    };

    let (mut x, mut y) = solve(w);
    let mut iterations = 0;
    for _ in 0..20_000 {
        iterations += 1;
        let omega: Vec<f64> = (0..f)
            .map(|i| {
                let k = (i + 1) as f64;
                let r = (x.0 + k * x.1 - b[i].0).hypot(y.0 + k * y.1 - b[i].1);
                w[i] / r.max(1e-14)
            })
            .collect();
        let (nx, ny) = solve(&omega);
        let change = (nx.0 - x.0).abs() + (nx.1 - x.1).abs() + (ny.0 - y.0).abs() + (ny.1 - y.1).abs();
        x = nx;
        y = ny;
        if change < 1e-13 {
            break;
        }
    }
    // Past state shifts: a on p_t and a - u on p_{t-1}.
    let a = Point2::new(x.0, y.0);
    let u = Point2::new(x.1, y.1);
    let value = LinearOptimum {
        delta_last_two: [Point2::new(a.x - u.x, a.y - u.y), a],
        loss: objective(x, y),
        iterations,
    };
    if !value.loss.is_finite() {
        return Err(OracleError::NonFinite("linear optimum".into()));
    }
    Ok(OracleResult {
        value,
        method: "iteratively reweighted least squares",
        instance: format!("F={f}"),
    })
}
