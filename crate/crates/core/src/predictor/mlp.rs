//! Fully connected tanh network with exact input Jacobians and
//! reverse-mode parameter gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Affine layer `z = W a + b` with `W` stored row-major (`rows` outputs,
/// `cols` inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Glorot-uniform weights multiplied by `gain`, zero bias.
    pub fn glorot<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Self {
        let limit = gain * (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            rows,
            cols,
            weights,
            bias: vec![0.0; rows],
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let w = &self.weights[r * self.cols..(r + 1) * self.cols];
                self.bias[r] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// Hidden layers use tanh; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer outputs of a forward pass; `activations[0]` is the input.
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

impl Mlp {
    pub fn input_width(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Layer widths from input to output, e.g. `[8, 64, 64, 24]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.rows));
        w
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(activations.last().unwrap());
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        ForwardCache { activations }
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).activations.pop().unwrap()
    }

    /// Exact `d output / d input`, accumulated in forward mode.
    pub fn input_jacobian(&self, input: &[f64]) -> (Vec<f64>, Matrix) {
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        let mut tangent = Matrix::identity(input.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let w = Matrix::from_row_major(layer.rows, layer.cols, layer.weights.clone());
            let mut z = layer.apply(&a);
            tangent = w.matmul(&tangent);
            if i < last {
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr = zr.tanh();
                    let d = 1.0 - *zr * *zr;
                    for c in 0..tangent.cols() {
                        tangent[(r, c)] *= d;
                    }
                }
            }
            a = z;
        }
        (a, tangent)
    }

    /// Backpropagates `grad_out = dL/d output` through a cached forward
    /// pass, accumulating parameter gradients into `grads` (same layout as
    /// `self.layers`).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [Dense]) {
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                let a = &cache.activations[i + 1];
                for (d, &ai) in delta.iter_mut().zip(a) {
                    *d *= 1.0 - ai * ai;
                }
            }
            let input = &cache.activations[i];
            let g = &mut grads[i];
            for ((&dr, b), row) in delta.iter().zip(&mut g.bias).zip(g.weights.chunks_mut(layer.cols)) {
                *b += dr;
                if dr == 0.0 {
                    continue;
                }
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += dr * x;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.cols];
                for (&dr, row) in delta.iter().zip(layer.weights.chunks(layer.cols)) {
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += dr * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn zero_grads(&self) -> Vec<Dense> {
        self.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp {
            layers: vec![
                Dense::glorot(5, 3, 1.0, &mut rng),
                Dense::glorot(4, 5, 1.0, &mut rng),
                Dense::glorot(2, 4, 1.0, &mut rng),
            ],
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = net(1);
        let x = [0.3, -0.7, 1.1];
        let (_, jac) = m.input_jacobian(&x);
        let h = 1e-6;
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (m.forward(&xp), m.forward(&xm));
            for r in 0..2 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - jac[(r, c)]).abs() < 1e-8, "({r},{c}) {fd} vs {}", jac[(r, c)]);
            }
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let m = net(2);
        let x = [0.5, 0.2, -0.4];
        let target = [0.1, -0.3];
        let loss = |m: &Mlp| -> f64 {
            m.forward(&x).iter().zip(&target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
        };
        let cache = m.forward_cached(&x);
        let g_out: Vec<f64> = cache.output().iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grads = m.zero_grads();
        m.backward(&cache, &g_out, &mut grads);
        let h = 1e-6;
        #[allow(clippy::needless_range_loop)]
        for li in 0..m.layers.len() {
            for wi in 0..m.layers[li].weights.len() {
                let mut mp = m.clone();
                let mut mm = m.clone();
                mp.layers[li].weights[wi] += h;
                mm.layers[li].weights[wi] -= h;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
                assert!((fd - grads[li].weights[wi]).abs() < 1e-8);
            }
            for bi in 0..m.layers[li].bias.len() {
                let mut mp = m.clone();
                let mut mm = m.clone();
                mp.layers[li].bias[bi] += h;
                mm.layers[li].bias[bi] -= h;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * h);
                assert!((fd - grads[li].bias[bi]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn forward_agrees_with_jacobian_pass() {
        let m = net(3);
        let x = [1.0, 2.0, -3.0];
        assert_eq!(m.input_jacobian(&x).0, m.forward(&x));
        assert_eq!(m.widths(), vec![3, 5, 4, 2]);
    }
}
