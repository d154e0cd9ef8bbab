use crate::error::{Error, Result};
use crate::predictor::{predict_with_gradient, PredictorSpec};
use crate::trajectory::{Perturbation, Point2, Trajectory};

use super::weights::WeightScheme;

/// Residual norms below this are treated as zero; the subgradient there is
/// the zero vector.
pub const COINCIDENT_TOLERANCE: f64 = 1e-12;

fn check_lengths(pred: &Trajectory, target: &Trajectory, w: &WeightScheme) -> Result<()> {
    if pred.len() != target.len() || pred.len() != w.len() {
        return Err(Error::HorizonMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if w.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} target states",
            w.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Weighted sum of Euclidean distances between predicted and target states.
pub fn loss(pred: &Trajectory, target: &Trajectory, w: &WeightScheme) -> Result<f64> {
    check_lengths(pred, target, w)?;
    Ok(pred
        .states()
        .iter()
        .zip(target.states())
        .zip(w.as_slice())
        .map(|((&p, &y), &wm)| wm * (p - y).norm())
        .sum())
}

#[derive(Debug, Clone)]
pub struct LossGradient {
    pub loss: f64,
    pub prediction: Trajectory,
    /// d loss / d perturbation, flattened `[x0, y0, x1, y1, ...]`.
    pub gradient: Vec<f64>,
}

/// Loss at `nominal + delta` and its exact gradient with respect to
/// `delta`: the predictor Jacobian transposed times d loss / d prediction.
pub fn loss_gradient(
    spec: &PredictorSpec,
    nominal: &Trajectory,
    delta: &Perturbation,
    target: &Trajectory,
    w: &WeightScheme,
) -> Result<LossGradient> {
    let input = nominal.perturbed(delta)?;
    loss_gradient_at(spec, &input, target, w)
}

/// As [`loss_gradient`], evaluated directly at the perturbed input.
pub(crate) fn loss_gradient_at(
    spec: &PredictorSpec,
    input: &Trajectory,
    target: &Trajectory,
    w: &WeightScheme,
) -> Result<LossGradient> {
    let pg = predict_with_gradient(spec, input)?;
    check_lengths(&pg.prediction, target, w)?;
    let mut d_pred = Vec::with_capacity(2 * target.len());
    let mut total = 0.0;
    for ((&p, &y), &wm) in pg.prediction.states().iter().zip(target.states()).zip(w.as_slice()) {
        let r = p - y;
        let n = r.norm();
        total += wm * n;
        let g = if n < COINCIDENT_TOLERANCE {
            Point2::ZERO
        } else {
            r * (wm / n)
        };
        d_pred.push(g.x);
        d_pred.push(g.y);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss is {total}")));
    }
    let gradient = pg.jacobian.transpose_mul_vec(&d_pred);
    Ok(LossGradient {
        loss: total,
        prediction: pg.prediction,
        gradient,
    })
}
