//! Trajectory predictors with exact input gradients.
//!
//! Two models are provided:
//!
//! * constant velocity: `p_{t+k} = p_t + k (p_t - p_{t-1})`;
//! * an MLP over displacements: the `P` consecutive past displacements are
//!   fed to the network, whose `F` output displacements are accumulated
//!   from the last observed position. The relative encoding makes the
//!   model translation-equivariant.
//!
//! Both expose [`predict_with_gradient`], which returns the Jacobian of
//! the `2F` predicted coordinates with respect to the `2(P+1)` input
//! coordinates, ordered `[x0, y0, x1, y1, ...]`.

mod io;
mod mlp;
mod train;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trajectory::{Point2, Trajectory};

pub use io::{load_predictor, predictor_from_json, predictor_to_json, save_predictor};
pub use mlp::{Dense, ForwardCache, Mlp};
pub use train::{train_mlp, EpochLoss, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    ConstantVelocity,
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    past: usize,
    future: usize,
    dt_hint: Option<f64>,
    kind: PredictorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWithGradient {
    pub prediction: Trajectory,
    /// `2F x 2(P+1)` matrix of d(predicted coordinate)/d(input coordinate).
    pub jacobian: Matrix,
}

impl PredictorSpec {
    pub fn constant_velocity(past: usize, future: usize) -> Result<Self> {
        if past == 0 || future == 0 {
            return Err(Error::InvalidConfig(format!(
                "horizons must be at least 1, got P={past} F={future}"
            )));
        }
        Ok(Self {
            past,
            future,
            dt_hint: None,
            kind: PredictorKind::ConstantVelocity,
        })
    }

    /// Wraps a network, checking that it maps `2P` displacement inputs to
    /// `2F` displacement outputs with finite weights.
    pub fn mlp(past: usize, future: usize, net: Mlp) -> Result<Self> {
        if past == 0 || future == 0 {
            return Err(Error::InvalidConfig(format!(
                "horizons must be at least 1, got P={past} F={future}"
            )));
        }
        if net.layers.is_empty() {
            return Err(Error::InvalidConfig("network has no layers".into()));
        }
        if net.input_width() != 2 * past {
            return Err(Error::ShapeMismatch(format!(
                "network input width {} != 2P = {}",
                net.input_width(),
                2 * past
            )));
        }
        if net.output_width() != 2 * future {
            return Err(Error::ShapeMismatch(format!(
                "network output width {} != 2F = {}",
                net.output_width(),
                2 * future
            )));
        }
        for (i, pair) in net.layers.windows(2).enumerate() {
            if pair[1].cols != pair[0].rows {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} has {} inputs but layer {i} has {} outputs",
                    i + 1,
                    pair[1].cols,
                    pair[0].rows
                )));
            }
        }
        for (i, l) in net.layers.iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(Error::ShapeMismatch(format!("layer {i} payload does not match {}x{}", l.rows, l.cols)));
            }
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(Self {
            past,
            future,
            dt_hint: None,
            kind: PredictorKind::Mlp(net),
        })
    }

    pub fn with_dt_hint(mut self, dt: f64) -> Self {
        self.dt_hint = Some(dt);
        self
    }

    /// Past horizon `P`; inputs hold `P + 1` states.
    pub fn past_horizon(&self) -> usize {
        self.past
    }

    pub fn future_horizon(&self) -> usize {
        self.future
    }

    pub fn dt_hint(&self) -> Option<f64> {
        self.dt_hint
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PredictorKind::ConstantVelocity => "constant_velocity",
            PredictorKind::Mlp(_) => "mlp",
        }
    }

    fn check_input(&self, past: &Trajectory) -> Result<()> {
        if past.len() != self.past + 1 {
            return Err(Error::HorizonMismatch {
                expected: self.past + 1,
                actual: past.len(),
            });
        }
        Ok(())
    }
}

/// Flattened displacements `p_{i+1} - p_i` of the past states.
pub(crate) fn displacement_features(past: &[Point2]) -> Vec<f64> {
    past.windows(2)
        .flat_map(|w| {
            let d = w[1] - w[0];
            [d.x, d.y]
        })
        .collect()
}

/// Accumulates output displacements from the anchor position.
pub(crate) fn accumulate(anchor: Point2, displacements: &[f64]) -> Vec<Point2> {
    let mut pos = anchor;
    displacements
        .chunks_exact(2)
        .map(|d| {
            pos += Point2::new(d[0], d[1]);
            pos
        })
        .collect()
}

pub fn predict(spec: &PredictorSpec, past: &Trajectory) -> Result<Trajectory> {
    spec.check_input(past)?;
    let states = past.states();
    let anchor = past.last();
    let out = match &spec.kind {
        PredictorKind::ConstantVelocity => {
            let v = anchor - states[states.len() - 2];
            (1..=spec.future).map(|k| anchor + v * k as f64).collect()
        }
        PredictorKind::Mlp(net) => accumulate(anchor, &net.forward(&displacement_features(states))),
    };
    Trajectory::new(out, past.dt()).map_err(|e| Error::NonFinite(format!("prediction: {e}")))
}

pub fn predict_with_gradient(spec: &PredictorSpec, past: &Trajectory) -> Result<PredictionWithGradient> {
    spec.check_input(past)?;
    let n_in = past.len();
    let f = spec.future;
    let t = n_in - 1;
    let mut jac = Matrix::zeros(2 * f, 2 * n_in);

    let prediction = match &spec.kind {
        PredictorKind::ConstantVelocity => {
            for k in 1..=f {
                for c in 0..2 {
                    let row = 2 * (k - 1) + c;
                    jac[(row, 2 * t + c)] = 1.0 + k as f64;
                    jac[(row, 2 * (t - 1) + c)] = -(k as f64);
                }
            }
            predict(spec, past)?
        }
        PredictorKind::Mlp(net) => {
            let states = past.states();
            let (out, net_jac) = net.input_jacobian(&displacement_features(states));
            // d(output)/d(state n) = J[:, n-1] - J[:, n] over displacement
            // blocks. Predicted state k is the anchor plus outputs 1..=k, so
            // its row is the previous row plus this output's row.
            for k in 0..f {
                for c in 0..2 {
                    let r = 2 * k + c;
                    let net_row = net_jac.row(r);
                    for n in 0..n_in {
                        for cc in 0..2 {
                            let mut v = if k == 0 {
                                if n == t && cc == c {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                jac[(r - 2, 2 * n + cc)]
                            };
                            if n >= 1 {
                                v += net_row[2 * (n - 1) + cc];
                            }
                            if n < n_in - 1 {
                                v -= net_row[2 * n + cc];
                            }
                            jac[(r, 2 * n + cc)] = v;
                        }
                    }
                }
            }
            let states_out = accumulate(past.last(), &out);
            Trajectory::new(states_out, past.dt()).map_err(|e| Error::NonFinite(format!("prediction: {e}")))?
        }
    };
    if !jac.is_finite() {
        return Err(Error::NonFinite("predictor jacobian".into()));
    }
    Ok(PredictionWithGradient {
        prediction,
        jacobian: jac,
    })
}
