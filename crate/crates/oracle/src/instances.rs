//! Random instance generators shared by the reference checks.

use rand::Rng;
use trajadv_core::constraints::{ConstraintSet, KinematicBounds, QuantityBound};
use trajadv_core::predictor::{predict, Dense, Mlp, PredictorSpec};
use trajadv_core::{Perturbation, Point2, Trajectory};

/// Random tanh network with biases, first layer scaled for inputs of a few
/// meters.
pub fn random_mlp<R: Rng>(rng: &mut R, past: usize, future: usize, hidden: &[usize]) -> PredictorSpec {
    let mut widths = vec![2 * past];
    widths.extend_from_slice(hidden);
    widths.push(2 * future);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let gain = if i == 0 { 0.2 } else { 1.0 };
            let mut d = Dense::glorot(w[1], w[0], gain, rng);
            for b in &mut d.bias {
                *b = rng.random_range(-0.5..0.5);
            }
            d
        })
        .collect();
    PredictorSpec::mlp(past, future, Mlp { layers }).expect("consistent widths")
}

/// Smoothly curving track with `n` states.
pub fn random_track<R: Rng>(rng: &mut R, n: usize, dt: f64) -> Trajectory {
    let mut p = Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let mut heading: f64 = rng.random_range(-3.1..3.1);
    let mut speed: f64 = rng.random_range(3.0..12.0);
    let mut states = vec![p];
    for _ in 1..n {
        heading += rng.random_range(-0.1..0.1);
        speed = (speed + rng.random_range(-0.5..0.5)).max(0.5);
        p += Point2::new(heading.cos(), heading.sin()) * (speed * dt);
        states.push(p);
    }
    Trajectory::new(states, dt).expect("finite track")
}

/// Uniform point in a disc of the given radius.
pub fn disc_point<R: Rng>(rng: &mut R, radius: f64) -> Point2 {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    Point2::new(r * phi.cos(), r * phi.sin())
}

/// `traj` with every state displaced within `radius`.
pub fn jittered<R: Rng>(rng: &mut R, traj: &Trajectory, radius: f64) -> Trajectory {
    let states = traj.states().iter().map(|&p| p + disc_point(rng, radius)).collect();
    Trajectory::new(states, traj.dt()).expect("finite track")
}

fn bound(mu: f64, sigma: f64) -> QuantityBound {
    QuantityBound {
        mu,
        sigma,
        k: 3.0,
        enabled: true,
        two_sided: true,
    }
}

/// A 3 or 4 state nominal with a 1 m ball, tight kinematic bands and a
/// candidate perturbation of up to 2 m per state.
pub fn projection_case<R: Rng>(rng: &mut R) -> (ConstraintSet, Vec<Point2>) {
    let n = rng.random_range(3..=4);
    let nominal = random_track(rng, n, 0.5);
    let mean_speed = nominal
        .states()
        .windows(2)
        .map(|w| (w[1] - w[0]).norm() / 0.5)
        .sum::<f64>()
        / (n - 1) as f64;
    let mut bounds = KinematicBounds::disabled();
    bounds.speed = bound(mean_speed, rng.random_range(0.05..0.5));
    bounds.accel_lon = bound(0.0, rng.random_range(0.2..1.0));
    bounds.accel_lat = bound(0.0, rng.random_range(0.2..1.0));
    if rng.random_bool(0.5) {
        bounds.jerk_lon = bound(0.0, rng.random_range(0.5..2.0));
        bounds.jerk_lat = bound(0.0, rng.random_range(0.5..2.0));
    }
    let cs = ConstraintSet::new(nominal, bounds, 1.0).expect("valid constraint set");
    let delta = (0..n)
        .map(|_| {
            let radius = rng.random_range(0.0..2.0);
            disc_point(rng, radius)
        })
        .collect();
    (cs, delta)
}

/// Target reached exactly by moving the last two past states, so the
/// unconstrained optimum is zero and lies inside the 1 m ball.
pub fn reachable_cv_case<R: Rng>(rng: &mut R) -> (PredictorSpec, Trajectory, Trajectory) {
    let p = rng.random_range(2..=6);
    let f = rng.random_range(3..=12);
    let spec = PredictorSpec::constant_velocity(p, f).unwrap();
    let past = random_track(rng, p + 1, 0.5);
    let mut d = vec![Point2::ZERO; p + 1];
    d[p - 1] = disc_point(rng, 0.6);
    d[p] = disc_point(rng, 0.6);
    let target = predict(&spec, &past.perturbed(&Perturbation::new(d)).unwrap()).unwrap();
    (spec, past, target)
}
