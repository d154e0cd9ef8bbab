//! Permissible-set construction and feasibility checks.
//!
//! A candidate past trajectory is feasible when every state stays within
//! `position_radius` of its nominal counterpart and every derived kinematic
//! entry lies inside the `mu +/- k sigma` band of its quantity. Kinematic
//! entries couple neighbouring states; each violation is attributed to the
//! state in its stencil that deviates most from the nominal trajectory.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{derive_kinematics, Quantity};
use crate::trajectory::{Scenario, Trajectory};

/// Numerical slack applied to every bound, in the bound's own units.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

pub const DEFAULT_POSITION_RADIUS: f64 = 1.0;
pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityBound {
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
    pub enabled: bool,
    /// When false only the upper limit `mu + k sigma` is enforced.
    #[serde(default = "default_true")]
    pub two_sided: bool,
}

fn default_true() -> bool {
    true
}

impl QuantityBound {
    pub fn disabled() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.0,
            k: DEFAULT_SIGMA_MULTIPLIER,
            enabled: false,
            two_sided: true,
        }
    }

    /// The `[lo, hi]` interval before any slack, or `None` when disabled.
    pub fn band(&self) -> Option<Band> {
        if !self.enabled {
            return None;
        }
        let half = self.k * self.sigma;
        let lo = if self.two_sided {
            self.mu - half
        } else {
            f64::NEG_INFINITY
        };
        Some(Band {
            lo,
            hi: self.mu + half,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// Distance outside the slack-widened band; zero or negative inside.
    pub fn excess(&self, value: f64) -> f64 {
        (self.lo - FEASIBILITY_SLACK - value).max(value - self.hi - FEASIBILITY_SLACK)
    }

    fn scale(&self, fallback: f64) -> f64 {
        let w = if self.lo.is_finite() {
            0.5 * (self.hi - self.lo)
        } else {
            fallback
        };
        w.max(FEASIBILITY_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicBounds {
    pub speed: QuantityBound,
    pub accel_lon: QuantityBound,
    pub accel_lat: QuantityBound,
    pub jerk_lon: QuantityBound,
    pub jerk_lat: QuantityBound,
    /// Quantities that had no samples and were therefore disabled.
    #[serde(default)]
    pub unavailable: Vec<Quantity>,
}

impl KinematicBounds {
    /// No kinematic restriction at all; only the position ball applies.
    pub fn disabled() -> Self {
        Self {
            speed: QuantityBound::disabled(),
            accel_lon: QuantityBound::disabled(),
            accel_lat: QuantityBound::disabled(),
            jerk_lon: QuantityBound::disabled(),
            jerk_lat: QuantityBound::disabled(),
            unavailable: Vec::new(),
        }
    }

    pub fn get(&self, q: Quantity) -> &QuantityBound {
        match q {
            Quantity::Speed => &self.speed,
            Quantity::AccelLon => &self.accel_lon,
            Quantity::AccelLat => &self.accel_lat,
            Quantity::JerkLon => &self.jerk_lon,
            Quantity::JerkLat => &self.jerk_lat,
        }
    }

    pub fn get_mut(&mut self, q: Quantity) -> &mut QuantityBound {
        match q {
            Quantity::Speed => &mut self.speed,
            Quantity::AccelLon => &mut self.accel_lon,
            Quantity::AccelLat => &mut self.accel_lat,
            Quantity::JerkLon => &mut self.jerk_lon,
            Quantity::JerkLat => &mut self.jerk_lat,
        }
    }

    /// Sets every band to one- or two-sided.
    pub fn with_two_sided(mut self, two_sided: bool) -> Self {
        for q in Quantity::ALL {
            self.get_mut(q).two_sided = two_sided;
        }
        self
    }
}

/// Population mean and standard deviation of each kinematic quantity,
/// pooled over the concatenated past and future of every scenario.
pub fn compute_bounds(dataset: &[Scenario], k: f64) -> Result<KinematicBounds> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma multiplier must be positive, got {k}")));
    }
    let mut pooled: [Vec<f64>; 5] = Default::default();
    for s in dataset {
        let track = s.full_track();
        if track.len() < 2 {
            continue;
        }
        let prof = derive_kinematics(&track)?;
        for (i, q) in Quantity::ALL.iter().enumerate() {
            pooled[i].extend_from_slice(prof.values(*q));
        }
    }
    let mut bounds = KinematicBounds::disabled();
    for (i, q) in Quantity::ALL.iter().enumerate() {
        let v = &pooled[i];
        let b = bounds.get_mut(*q);
        b.k = k;
        if v.is_empty() {
            bounds.unavailable.push(*q);
            continue;
        }
        let n = v.len() as f64;
        let mu = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        let b = bounds.get_mut(*q);
        b.mu = mu;
        b.sigma = var.sqrt();
        b.enabled = true;
    }
    Ok(bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Position,
    Speed,
    AccelLon,
    AccelLat,
    JerkLon,
    JerkLat,
}

impl From<Quantity> for ConstraintKind {
    fn from(q: Quantity) -> Self {
        match q {
            Quantity::Speed => ConstraintKind::Speed,
            Quantity::AccelLon => ConstraintKind::AccelLon,
            Quantity::AccelLat => ConstraintKind::AccelLat,
            Quantity::JerkLon => ConstraintKind::JerkLon,
            Quantity::JerkLat => ConstraintKind::JerkLat,
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConstraintKind::Position => "position",
            ConstraintKind::Speed => "speed",
            ConstraintKind::AccelLon => "accel_lon",
            ConstraintKind::AccelLat => "accel_lat",
            ConstraintKind::JerkLon => "jerk_lon",
            ConstraintKind::JerkLat => "jerk_lat",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// State the violation is attributed to.
    pub state: usize,
    pub constraint: ConstraintKind,
    /// Amount outside the bound, in the constraint's units.
    pub amount: f64,
    /// `amount` divided by the bound's half-width (or radius); used to rank
    /// violations across quantities with different units.
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst(&self) -> Option<&Violation> {
        self.violations
            .iter()
            .max_by(|a, b| a.severity.total_cmp(&b.severity))
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("feasible");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "state {} {} by {:.6}", v.state, v.constraint, v.amount)?;
        }
        Ok(())
    }
}

/// Records a band widened so the nominal trajectory fits inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAdjustment {
    pub quantity: Quantity,
    pub original: Band,
    pub widened: Band,
}

/// The permissible sets for one nominal past trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintSet {
    position_radius: f64,
    bounds: KinematicBounds,
    nominal: Trajectory,
    bands: [Option<Band>; 5],
    adjustments: Vec<BandAdjustment>,
}

impl ConstraintSet {
    /// Anchors the bounds to `nominal`. Bands the nominal profile falls
    /// outside of are widened just enough to contain it, and the widening is
    /// recorded in [`ConstraintSet::adjustments`].
    pub fn new(nominal: Trajectory, bounds: KinematicBounds, position_radius: f64) -> Result<Self> {
        if !(position_radius.is_finite() && position_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "position radius must be positive, got {position_radius}"
            )));
        }
        for q in Quantity::ALL {
            let b = bounds.get(q);
            if b.enabled && !(b.sigma >= 0.0 && b.k > 0.0 && b.mu.is_finite() && b.sigma.is_finite()) {
                return Err(Error::InvalidConfig(format!("invalid bound for {q}: {b:?}")));
            }
        }
        let profile = derive_kinematics(&nominal)?;
        let mut bands = [None; 5];
        let mut adjustments = Vec::new();
        for (i, q) in Quantity::ALL.iter().enumerate() {
            let Some(original) = bounds.get(*q).band() else {
                continue;
            };
            let mut band = original;
            for &v in profile.values(*q) {
                if v < band.lo {
                    band.lo = v;
                }
                if v > band.hi {
                    band.hi = v;
                }
            }
            if band != original {
                adjustments.push(BandAdjustment {
                    quantity: *q,
                    original,
                    widened: band,
                });
            }
            bands[i] = Some(band);
        }
        let cs = Self {
            position_radius,
            bounds,
            nominal,
            bands,
            adjustments,
        };
        debug_assert!(is_feasible(&cs, &cs.nominal).map(|r| r.is_feasible()).unwrap_or(false));
        Ok(cs)
    }

    /// Position ball only, no kinematic bands.
    pub fn position_only(nominal: Trajectory, position_radius: f64) -> Result<Self> {
        Self::new(nominal, KinematicBounds::disabled(), position_radius)
    }

    pub fn position_radius(&self) -> f64 {
        self.position_radius
    }

    pub fn bounds(&self) -> &KinematicBounds {
        &self.bounds
    }

    pub fn nominal(&self) -> &Trajectory {
        &self.nominal
    }

    /// Effective band of a quantity after any widening; `None` if disabled.
    pub fn band(&self, q: Quantity) -> Option<Band> {
        self.bands[Quantity::ALL.iter().position(|x| *x == q).unwrap()]
    }

    pub fn adjustments(&self) -> &[BandAdjustment] {
        &self.adjustments
    }
}

pub fn is_feasible(cs: &ConstraintSet, candidate: &Trajectory) -> Result<FeasibilityReport> {
    if candidate.len() != cs.nominal.len() {
        return Err(Error::HorizonMismatch {
            expected: cs.nominal.len(),
            actual: candidate.len(),
        });
    }
    check(cs, candidate)
}

/// Feasibility of the leading states alone: every constraint whose stencil
/// lies inside the prefix. A kinematic entry only reads states of its own
/// stencil, so the prefix profile is the prefix of the full profile.
pub(crate) fn prefix_is_feasible(cs: &ConstraintSet, prefix: &Trajectory) -> Result<bool> {
    if prefix.len() > cs.nominal.len() {
        return Err(Error::HorizonMismatch {
            expected: cs.nominal.len(),
            actual: prefix.len(),
        });
    }
    Ok(check(cs, prefix)?.is_feasible())
}

fn check(cs: &ConstraintSet, candidate: &Trajectory) -> Result<FeasibilityReport> {
    let nominal = &cs.nominal;
    if candidate.dt() != nominal.dt() {
        return Err(Error::ShapeMismatch(format!(
            "candidate dt {} differs from nominal dt {}",
            candidate.dt(),
            nominal.dt()
        )));
    }
    let deviation: Vec<f64> = candidate
        .states()
        .iter()
        .zip(nominal.states())
        .map(|(&c, &n)| (c - n).norm())
        .collect();

    let mut violations = Vec::new();
    for (state, &d) in deviation.iter().enumerate() {
        let amount = d - cs.position_radius - FEASIBILITY_SLACK;
        if amount > 0.0 {
            violations.push(Violation {
                state,
                constraint: ConstraintKind::Position,
                amount,
                severity: amount / cs.position_radius,
            });
        }
    }

    if candidate.len() >= 2 && cs.bands.iter().any(Option::is_some) {
        let profile = derive_kinematics(candidate)?;
        for (qi, q) in Quantity::ALL.iter().enumerate() {
            let Some(band) = cs.bands[qi] else { continue };
            let b = cs.bounds.get(*q);
            let scale = band.scale(b.k * b.sigma);
            for (entry, &v) in profile.values(*q).iter().enumerate() {
                let amount = band.excess(v);
                if amount > 0.0 {
                    let support = q.support(entry);
                    // Latest state wins ties.
                    let state = support
                        .clone()
                        .max_by(|&a, &b| deviation[a].total_cmp(&deviation[b]).then(a.cmp(&b)))
                        .expect("non-empty stencil");
                    violations.push(Violation {
                        state,
                        constraint: (*q).into(),
                        amount,
                        severity: amount / scale,
                    });
                }
            }
        }
    }
    Ok(FeasibilityReport { violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Point2;

    fn straight(n: usize, speed: f64, dt: f64) -> Trajectory {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * speed * dt, 0.0)).collect();
        Trajectory::from_xy(&pts, dt).unwrap()
    }

    fn scenario(id: &str, n_past: usize, n_future: usize, speed: f64) -> Scenario {
        let t = straight(n_past + n_future, speed, 1.0);
        let (p, f) = t.states().split_at(n_past);
        Scenario::new(id, Trajectory::new(p.to_vec(), 1.0).unwrap(), Trajectory::new(f.to_vec(), 1.0).unwrap()).unwrap()
    }

    #[test]
    fn identical_lines_have_zero_spread() {
        let data: Vec<Scenario> = (0..5).map(|i| scenario(&i.to_string(), 3, 4, 1.0)).collect();
        let b = compute_bounds(&data, 3.0).unwrap();
        assert_eq!(b.speed.mu, 1.0);
        assert_eq!(b.speed.sigma, 0.0);
        for q in [Quantity::AccelLon, Quantity::AccelLat, Quantity::JerkLon, Quantity::JerkLat] {
            assert_eq!(b.get(q).mu, 0.0);
            assert_eq!(b.get(q).sigma, 0.0);
            assert!(b.get(q).enabled);
        }
        assert_eq!(b.speed.k, 3.0);
        assert!(b.unavailable.is_empty());
    }

    #[test]
    fn two_scenario_statistics_match_hand_computation() {
        // Tracks (0,0),(1,0),(3,0) and (0,0),(2,0),(4,0) with dt = 1.
        // speeds {1, 2, 2, 2}: mu = 1.75, var = (0.5625 + 3 * 0.0625) / 4.
        // accel_lon {1, 0}: mu = 0.5, sigma = 0.5. No jerk samples.
        let mk = |id: &str, pts: &[(f64, f64)]| {
            Scenario::new(
                id,
                Trajectory::from_xy(&pts[..2], 1.0).unwrap(),
                Trajectory::from_xy(&pts[2..], 1.0).unwrap(),
            )
            .unwrap()
        };
        let data = [mk("a", &[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]), mk("b", &[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0)])];
        let b = compute_bounds(&data, 2.0).unwrap();
        assert!((b.speed.mu - 1.75).abs() < 1e-15);
        assert!((b.speed.sigma - (0.75f64 / 4.0).sqrt()).abs() < 1e-15);
        assert!((b.accel_lon.mu - 0.5).abs() < 1e-15);
        assert!((b.accel_lon.sigma - 0.5).abs() < 1e-15);
        assert_eq!(b.unavailable, vec![Quantity::JerkLon, Quantity::JerkLat]);
        assert!(!b.jerk_lon.enabled);
    }

    #[test]
    fn empty_dataset_and_bad_k_rejected() {
        assert!(compute_bounds(&[], 3.0).is_err());
        assert!(compute_bounds(&[scenario("a", 3, 3, 1.0)], 0.0).is_err());
    }

    #[test]
    fn nominal_is_feasible() {
        let nominal = straight(5, 10.0, 0.5);
        let cs = ConstraintSet::new(nominal.clone(), KinematicBounds::disabled(), 1.0).unwrap();
        assert!(is_feasible(&cs, &nominal).unwrap().is_feasible());
    }

    #[test]
    fn displaced_state_reports_excess() {
        let nominal = straight(5, 10.0, 0.5);
        let cs = ConstraintSet::position_only(nominal.clone(), 1.0).unwrap();
        let mut pts = nominal.states().to_vec();
        pts[2] += Point2::new(0.0, 1.5);
        let report = is_feasible(&cs, &Trajectory::new(pts, 0.5).unwrap()).unwrap();
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.state, 2);
        assert_eq!(v.constraint, ConstraintKind::Position);
        assert!((v.amount - 0.5).abs() < 1e-8);
    }

    #[test]
    fn speed_violation_flagged() {
        // Band built from a spread of straight-line speeds.
        let data: Vec<Scenario> = [8.0, 9.0, 10.0, 11.0, 12.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let t = straight(8, v, 0.5);
                let (p, f) = t.states().split_at(4);
                Scenario::new(i.to_string(), Trajectory::new(p.to_vec(), 0.5).unwrap(), Trajectory::new(f.to_vec(), 0.5).unwrap()).unwrap()
            })
            .collect();
        let bounds = compute_bounds(&data, 3.0).unwrap();
        let upper = bounds.speed.mu + 3.0 * bounds.speed.sigma;
        let nominal = straight(4, 10.0, 0.5);
        let cs = ConstraintSet::new(nominal.clone(), bounds, 100.0).unwrap();
        // Push the last state forward so the final transition exceeds the band by 1 m/s.
        let mut pts = nominal.states().to_vec();
        let needed = (upper + 1.0) * 0.5 - (pts[3].x - pts[2].x);
        pts[3].x += needed;
        let report = is_feasible(&cs, &Trajectory::new(pts, 0.5).unwrap()).unwrap();
        let speed: Vec<_> = report.violations.iter().filter(|v| v.constraint == ConstraintKind::Speed).collect();
        assert_eq!(speed.len(), 1);
        assert_eq!(speed[0].state, 3);
        assert!((speed[0].amount - 1.0).abs() < 1e-6);
    }

    #[test]
    fn out_of_band_nominal_widens_band() {
        let data: Vec<Scenario> = (0..3).map(|i| scenario(&i.to_string(), 3, 3, 1.0)).collect();
        let bounds = compute_bounds(&data, 3.0).unwrap();
        let nominal = straight(4, 2.0, 1.0);
        let cs = ConstraintSet::new(nominal.clone(), bounds, 1.0).unwrap();
        assert_eq!(cs.adjustments().len(), 1);
        assert_eq!(cs.adjustments()[0].quantity, Quantity::Speed);
        assert_eq!(cs.band(Quantity::Speed).unwrap(), Band { lo: 1.0, hi: 2.0 });
        assert!(is_feasible(&cs, &nominal).unwrap().is_feasible());
    }

    #[test]
    fn one_sided_band_ignores_low_speed() {
        let data: Vec<Scenario> = (0..3).map(|i| scenario(&i.to_string(), 3, 3, 2.0)).collect();
        let nominal = straight(4, 2.0, 1.0);
        let slow = straight(4, 1.9, 1.0);
        let two = ConstraintSet::new(nominal.clone(), compute_bounds(&data, 3.0).unwrap(), 5.0).unwrap();
        let one = ConstraintSet::new(nominal, compute_bounds(&data, 3.0).unwrap().with_two_sided(false), 5.0).unwrap();
        assert!(!is_feasible(&two, &slow).unwrap().is_feasible());
        assert!(is_feasible(&one, &slow).unwrap().is_feasible());
    }

    #[test]
    fn length_mismatch_rejected() {
        let cs = ConstraintSet::position_only(straight(4, 1.0, 1.0), 1.0).unwrap();
        assert!(is_feasible(&cs, &straight(3, 1.0, 1.0)).is_err());
        assert!(is_feasible(&cs, &straight(4, 1.0, 0.5)).is_err());
    }

    #[test]
    fn bounds_json_round_trip() {
        let data: Vec<Scenario> = (0..3).map(|i| scenario(&i.to_string(), 3, 3, 1.0)).collect();
        let b = compute_bounds(&data, 3.0).unwrap();
        let text = serde_json::to_string(&b).unwrap();
        assert!(text.contains("\"mu\"") && text.contains("\"enabled\""));
        assert_eq!(serde_json::from_str::<KinematicBounds>(&text).unwrap(), b);
    }
}
