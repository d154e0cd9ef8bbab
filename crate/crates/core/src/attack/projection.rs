//! Per-state shrinkage of an infeasible perturbation back into the
//! permissible sets.
//!
//! The search works on the grid `theta_n in {0, 1/G, ..., 1}` and maximizes
//! `sum(theta)`. Starting from all ones it repeatedly lowers the `theta` of
//! the state blamed for the most severe violation by one grid step until
//! the candidate is feasible. A raising sweep then pushes each `theta_n`
//! back up while feasibility holds.
//!
//! The feasible grid points of coupled kinematic constraints form a
//! non-convex set, so the descent can stop well short of the maximum. Its
//! result seeds a depth-first branch and bound over the states in order:
//! a partial assignment is pruned as soon as a constraint inside the
//! assigned prefix fails, or when the remaining states at the largest `theta`
//! their position balls allow cannot beat the incumbent. The search is exact
//! unless it exhausts [`SEARCH_BUDGET`], in which case the best point found so
//! far is returned.
//! `theta = 0` is always feasible, so a result always exists.

use crate::constraints::{is_feasible, prefix_is_feasible, ConstraintKind, ConstraintSet, FeasibilityReport};
use crate::error::{Error, Result};
use crate::trajectory::{Perturbation, Point2, Trajectory};

/// Default number of partial assignments the branch and bound may test.
pub const SEARCH_BUDGET: usize = 200_000;

struct Search<'a> {
    cs: &'a ConstraintSet,
    nominal: &'a Trajectory,
    delta: &'a Perturbation,
    grid: u32,
}

impl Search<'_> {
    /// Largest grid step each state may take inside its position ball,
    /// ignoring every other constraint.
    fn ball_caps(&self) -> Result<Vec<u32>> {
        (0..self.nominal.len())
            .map(|i| {
                let mut steps = vec![0; self.nominal.len()];
                let mut lo = 0;
                let mut hi = self.grid;
                while lo < hi {
                    let mid = (lo + hi).div_ceil(2);
                    steps[i] = mid;
                    let inside = self.report(&steps)?.violations.iter().all(|v| v.state != i || v.constraint != ConstraintKind::Position);
                    if inside {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                Ok(lo)
            })
            .collect()
    }

    fn states(&self, steps: &[u32]) -> Vec<Point2> {
        steps
            .iter()
            .zip(self.nominal.states())
            .zip(self.delta.as_slice())
            .map(|((&s, &p), &d)| p + d * (f64::from(s) / f64::from(self.grid)))
            .collect()
    }

    fn report(&self, steps: &[u32]) -> Result<FeasibilityReport> {
        is_feasible(self.cs, &Trajectory::new(self.states(steps), self.nominal.dt())?)
    }

    fn feasible(&self, steps: &[u32]) -> Result<bool> {
        Ok(self.report(steps)?.is_feasible())
    }

    fn prefix_feasible(&self, prefix: &[u32]) -> Result<bool> {
        prefix_is_feasible(self.cs, &Trajectory::new(self.states(prefix), self.nominal.dt())?)
    }

    /// Lowers the state blamed for the most severe violation until feasible.
    fn descend(&self, steps: &mut [u32]) -> Result<()> {
        loop {
            let report = self.report(steps)?;
            if report.is_feasible() {
                return Ok(());
            }
            let mut ranked: Vec<_> = report.violations.iter().collect();
            ranked.sort_by(|a, b| b.severity.total_cmp(&a.severity).then(a.state.cmp(&b.state)));
            let Some(v) = ranked.into_iter().find(|v| steps[v.state] > 0) else {
                return Err(Error::InfeasibleNominal(format!(
                    "zero perturbation still violates: {report}"
                )));
            };
            steps[v.state] -= 1;
        }
    }

    /// Raises every state as far as feasibility allows, sweeping until
    /// nothing moves.
    fn raise(&self, steps: &mut [u32]) -> Result<()> {
        loop {
            let mut raised = false;
            for i in 0..steps.len() {
                while steps[i] < self.grid {
                    steps[i] += 1;
                    if self.feasible(steps)? {
                        raised = true;
                    } else {
                        steps[i] -= 1;
                        break;
                    }
                }
            }
            if !raised {
                return Ok(());
            }
        }
    }

    fn branch_and_bound(&self, incumbent: Vec<u32>, budget: usize) -> Result<Vec<u32>> {
        let caps = self.ball_caps()?;
        let mut tail = vec![0; caps.len() + 1];
        for i in (0..caps.len()).rev() {
            tail[i] = tail[i + 1] + caps[i];
        }
        let mut bb = BranchAndBound {
            search: self,
            caps,
            tail,
            best_sum: incumbent.iter().sum(),
            best: incumbent,
            current: vec![0; self.nominal.len()],
            nodes: 0,
            budget,
        };
        bb.visit(0, 0)?;
        Ok(bb.best)
    }
}

struct BranchAndBound<'a, 'b> {
    search: &'a Search<'b>,
    caps: Vec<u32>,
    /// `tail[i]` is the sum of the caps of states `i..`.
    tail: Vec<u32>,
    best: Vec<u32>,
    best_sum: u32,
    current: Vec<u32>,
    nodes: usize,
    budget: usize,
}

impl BranchAndBound<'_, '_> {
    fn visit(&mut self, i: usize, sum: u32) -> Result<()> {
        if i == self.current.len() {
            if sum > self.best_sum {
                self.best_sum = sum;
                self.best.clone_from(&self.current);
            }
            return Ok(());
        }
        let rest = self.tail[i + 1];
        for v in (0..=self.caps[i]).rev() {
            if sum + v + rest <= self.best_sum || self.nodes >= self.budget {
                return Ok(());
            }
            self.nodes += 1;
            self.current[i] = v;
            if self.search.prefix_feasible(&self.current[..=i])? {
                self.visit(i + 1, sum + v)?;
            }
        }
        Ok(())
    }
}

/// Returns `theta` such that `nominal + theta o delta` is feasible.
pub fn project_line_search(
    cs: &ConstraintSet,
    nominal: &Trajectory,
    delta: &Perturbation,
    grid: u32,
) -> Result<Vec<f64>> {
    project_with_budget(cs, nominal, delta, grid, SEARCH_BUDGET)
}

/// As [`project_line_search`] with an explicit branch and bound budget.
/// A budget of zero keeps the descent result.
pub fn project_with_budget(
    cs: &ConstraintSet,
    nominal: &Trajectory,
    delta: &Perturbation,
    grid: u32,
    budget: usize,
) -> Result<Vec<f64>> {
    if grid < 1 {
        return Err(Error::InvalidConfig("projection grid must be at least 1".into()));
    }
    if delta.len() != nominal.len() {
        return Err(Error::ShapeMismatch(format!(
            "perturbation has {} states, nominal has {}",
            delta.len(),
            nominal.len()
        )));
    }
    let search = Search {
        cs,
        nominal,
        delta,
        grid,
    };
    let mut steps = vec![grid; nominal.len()];
    search.descend(&mut steps)?;
    search.raise(&mut steps)?;
    let steps = search.branch_and_bound(steps, budget)?;
    Ok(steps.iter().map(|&s| f64::from(s) / f64::from(grid)).collect())
}
