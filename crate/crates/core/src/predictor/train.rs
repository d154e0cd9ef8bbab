use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accumulate, displacement_features, Dense, Mlp, PredictorSpec};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamParams};
use crate::trajectory::{Point2, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hidden layer widths; input `2P` and output `2F` are implied.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Trailing fraction of the dataset held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean squared position error over the training split, m^2.
    pub train_mse: f64,
    pub validation_mse: Option<f64>,
    /// Average displacement error over the validation split, m.
    pub validation_ade: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub spec: PredictorSpec,
    pub curve: Vec<EpochLoss>,
}

struct Sample {
    features: Vec<f64>,
    anchor: Point2,
    truth: Vec<Point2>,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    if n == 0 {
        1.0
    } else {
        (sum / n as f64).sqrt().max(1e-6)
    }
}

/// The network in raw units: the first layer absorbs the input scaling,
/// the last layer the output scaling.
fn fold_scales(net: &Mlp, in_scale: f64, out_scale: f64) -> Mlp {
    let mut net = net.clone();
    net.layers[0].weights.iter_mut().for_each(|w| *w /= in_scale);
    let last = net.layers.last_mut().expect("at least one layer");
    last.weights.iter_mut().for_each(|w| *w *= out_scale);
    last.bias.iter_mut().for_each(|b| *b *= out_scale);
    net
}

/// Mean squared error and average displacement error over `samples`.
fn evaluate(net: &Mlp, samples: &[Sample]) -> (f64, f64) {
    let (mut se, mut de, mut n) = (0.0, 0.0, 0usize);
    for s in samples {
        let pred = accumulate(s.anchor, &net.forward(&s.features));
        for (p, g) in pred.iter().zip(&s.truth) {
            let d = (*p - *g).norm();
            se += d * d;
            de += d;
            n += 1;
        }
    }
    (se / n as f64, de / n as f64)
}

/// Fits a displacement-encoded MLP to the dataset by minimizing the mean
/// squared position error with Adam. The step size starts at
/// `learning_rate` and follows a cosine decay to zero over the run.
///
/// Training runs in normalized units: inputs are divided by the RMS of the
/// input displacements and outputs are in units of the RMS target
/// displacement, so Adam's fixed step size is matched to the data's scale.
/// Both scales are folded into the first and last layers of the returned
/// network, which therefore maps raw meters to raw meters.
pub fn train_mlp(dataset: &[Scenario], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let (p, f) = (first.past_horizon(), first.future_horizon());
    if p == 0 {
        return Err(Error::InvalidConfig("past horizon must be at least 1".into()));
    }
    if let Some(s) = dataset
        .iter()
        .find(|s| s.past_horizon() != p || s.future_horizon() != f)
    {
        return Err(Error::ShapeMismatch(format!(
            "scenario {} has horizons P={} F={}, expected P={p} F={f}",
            s.id,
            s.past_horizon(),
            s.future_horizon()
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig("batch_size and epochs must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(Error::InvalidConfig(format!("invalid learning rate {}", cfg.learning_rate)));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::InvalidConfig("validation_fraction must lie in [0, 1)".into()));
    }
    if cfg.hidden.contains(&0) {
        return Err(Error::InvalidConfig("hidden widths must be positive".into()));
    }

    let samples: Vec<Sample> = dataset
        .iter()
        .map(|s| Sample {
            features: displacement_features(s.past.states()),
            anchor: s.past.last(),
            truth: s.future_truth.states().to_vec(),
        })
        .collect();
    let n_val = ((samples.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(samples.len() - 1);
    let (train, val) = samples.split_at(samples.len() - n_val);

    let in_scale = rms(train.iter().flat_map(|s| s.features.iter().copied()));
    let out_scale = rms(train.iter().flat_map(|s| {
        let mut prev = s.anchor;
        s.truth
            .iter()
            .flat_map(move |&g| {
                let d = g - prev;
                prev = g;
                [d.x, d.y]
            })
            .collect::<Vec<_>>()
    }));
    let inputs: Vec<Vec<f64>> = train
        .iter()
        .map(|s| s.features.iter().map(|v| v / in_scale).collect())
        .collect();
    let targets: Vec<Vec<Point2>> = train
        .iter()
        .map(|s| s.truth.iter().map(|&g| (g - s.anchor) * (1.0 / out_scale)).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut widths = vec![2 * p];
    widths.extend(&cfg.hidden);
    widths.push(2 * f);
    let layers: Vec<Dense> = widths
        .windows(2)
        .map(|w| Dense::glorot(w[1], w[0], 1.0, &mut rng))
        .collect();
    let mut net = Mlp { layers };

    let mut adams: Vec<(Adam, Adam)> = net
        .layers
        .iter()
        .map(|l| {
            (
                Adam::new(l.weights.len(), AdamParams::default()),
                Adam::new(l.bias.len(), AdamParams::default()),
            )
        })
        .collect();

    let mut steps = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let norm = 1.0 / f as f64;
    let total_steps = cfg.epochs * train.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_se = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = net.zero_grads();
            let mut batch_se = 0.0;
            let scale = norm / batch.len() as f64;
            for &idx in batch {
                let cache = net.forward_cached(&inputs[idx]);
                let pred = accumulate(Point2::ZERO, cache.output());
                // d(mean sq. error)/d(pred_k) = 2 (pred_k - g_k) / (F B); each
                // output displacement j feeds every pred_k with k >= j.
                let mut g_out = vec![0.0; 2 * f];
                let mut running = [0.0; 2];
                for k in (0..f).rev() {
                    let d = pred[k] - targets[idx][k];
                    batch_se += d.dot(d);
                    running[0] += 2.0 * d.x * scale;
                    running[1] += 2.0 * d.y * scale;
                    g_out[2 * k] = running[0];
                    g_out[2 * k + 1] = running[1];
                }
                net.backward(&cache, &g_out, &mut grads);
            }
            if !batch_se.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss is {batch_se} at epoch {epoch}, batch {b}"
                )));
            }
            epoch_se += batch_se;
            let lr = cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * steps as f64 / total_steps as f64).cos());
            for ((layer, g), (aw, ab)) in net.layers.iter_mut().zip(&grads).zip(adams.iter_mut()) {
                aw.update(lr, &mut layer.weights, &g.weights);
                ab.update(lr, &mut layer.bias, &g.bias);
            }
            steps += 1;
        }
        let train_mse = epoch_se * out_scale * out_scale / (train.len() * f) as f64;
        let (validation_mse, validation_ade) = if val.is_empty() {
            (None, None)
        } else {
            let (mse, ade) = evaluate(&fold_scales(&net, in_scale, out_scale), val);
            (Some(mse), Some(ade))
        };
        curve.push(EpochLoss {
            epoch,
            train_mse,
            validation_mse,
            validation_ade,
        });
    }
    let net = fold_scales(&net, in_scale, out_scale);
    if !net.is_finite() {
        return Err(Error::NonFinite("trained weights".into()));
    }
    let spec = PredictorSpec::mlp(p, f, net)?.with_dt_hint(first.dt());
    Ok(TrainOutcome { spec, curve })
}
