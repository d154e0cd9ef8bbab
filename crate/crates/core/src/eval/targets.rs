use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Point2, Scenario, Trajectory};

/// How a target future is derived from a scenario's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Rigid offset of `d` meters along the left normal of the travel
    /// direction (negative `d` shifts right).
    LateralShift { d: f64 },
    /// Scales every future displacement from the last observed state.
    Speedup { factor: f64 },
    Custom { trajectory: Trajectory },
}

/// Unit direction of travel: last observed state towards the final ground
/// truth state, then the last observed step, then +x.
fn travel_direction(s: &Scenario) -> Point2 {
    let anchor = s.past.last();
    for v in [s.future_truth.last() - anchor, anchor - s.past.states()[s.past.len() - 2]] {
        let n = v.norm();
        if n > 1e-9 {
            return v * (1.0 / n);
        }
    }
    Point2::new(1.0, 0.0)
}

impl TargetSpec {
    pub fn apply(&self, s: &Scenario) -> Result<Trajectory> {
        match self {
            TargetSpec::LateralShift { d } => {
                if !d.is_finite() {
                    return Err(Error::InvalidConfig(format!("lateral shift must be finite, got {d}")));
                }
                Ok(s.future_truth.translated(travel_direction(s).perp() * *d))
            }
            TargetSpec::Speedup { factor } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "speedup factor must be non-negative, got {factor}"
                    )));
                }
                let anchor = s.past.last();
                let states = s
                    .future_truth
                    .states()
                    .iter()
                    .map(|&g| anchor + (g - anchor) * *factor)
                    .collect();
                Trajectory::new(states, s.dt())
            }
            TargetSpec::Custom { trajectory } => {
                if trajectory.len() != s.future_horizon() {
                    return Err(Error::HorizonMismatch {
                        expected: s.future_horizon(),
                        actual: trajectory.len(),
                    });
                }
                Ok(trajectory.clone())
            }
        }
    }
}

/// Applies `spec` to every scenario.
pub fn make_targets(spec: &TargetSpec, scenarios: &[Scenario]) -> Result<Vec<Trajectory>> {
    scenarios.iter().map(|s| spec.apply(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Scenario {
        Scenario::new(
            "a",
            Trajectory::from_xy(&[(-2.0, 0.0), (-1.0, 0.0), (0.0, 0.0)], 0.5).unwrap(),
            Trajectory::from_xy(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn lateral_shift_moves_left() {
        let y = TargetSpec::LateralShift { d: 1.0 }.apply(&straight()).unwrap();
        assert_eq!(y.states()[0], Point2::new(1.0, 1.0));
        assert_eq!(y.states()[2], Point2::new(3.0, 1.0));
    }

    #[test]
    fn speedup_scales_from_anchor() {
        let y = TargetSpec::Speedup { factor: 1.5 }.apply(&straight()).unwrap();
        assert_eq!(y.states()[2], Point2::new(4.5, 0.0));
    }

    #[test]
    fn custom_length_checked() {
        let t = Trajectory::from_xy(&[(0.0, 0.0)], 0.5).unwrap();
        assert!(TargetSpec::Custom { trajectory: t }.apply(&straight()).is_err());
    }

    #[test]
    fn stationary_scenario_falls_back_to_x_axis() {
        let s = Scenario::new(
            "b",
            Trajectory::from_xy(&[(0.0, 0.0), (0.0, 0.0)], 0.5).unwrap(),
            Trajectory::from_xy(&[(0.0, 0.0)], 0.5).unwrap(),
        )
        .unwrap();
        let y = TargetSpec::LateralShift { d: 2.0 }.apply(&s).unwrap();
        assert_eq!(y.states()[0], Point2::new(0.0, 2.0));
    }
}
