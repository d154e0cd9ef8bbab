use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Uniform,
    /// `w_j` proportional to `alpha^(F - j)`, favouring the final states.
    Exponential { alpha: f64 },
}

impl Default for WeightKind {
    fn default() -> Self {
        WeightKind::Exponential { alpha: 0.7 }
    }
}

/// Per-future-state loss weights, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub kind: WeightKind,
    pub weights: Vec<f64>,
}

impl WeightScheme {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn make_weights(kind: WeightKind, future: usize) -> Result<WeightScheme> {
    if future == 0 {
        return Err(Error::InvalidConfig("future horizon must be at least 1".into()));
    }
    let weights = match kind {
        WeightKind::Uniform => vec![1.0 / future as f64; future],
        WeightKind::Exponential { alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "exponential decay must lie in (0, 1), got {alpha}"
                )));
            }
            let raw: Vec<f64> = (1..=future).map(|j| alpha.powi((future - j) as i32)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        }
    };
    Ok(WeightScheme { kind, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_quarters() {
        assert_eq!(make_weights(WeightKind::Uniform, 4).unwrap().weights, vec![0.25; 4]);
    }

    #[test]
    fn exponential_half() {
        let w = make_weights(WeightKind::Exponential { alpha: 0.5 }, 3).unwrap();
        let expected = [0.25 / 1.75, 0.5 / 1.75, 1.0 / 1.75];
        for (a, b) in w.weights.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn near_one_decay_is_nearly_uniform() {
        let w = make_weights(WeightKind::Exponential { alpha: 0.999 }, 5).unwrap();
        let dev = w.weights.iter().map(|x| (x - 0.2).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(make_weights(WeightKind::Exponential { alpha: 1.0 }, 3).is_err());
        assert!(make_weights(WeightKind::Exponential { alpha: 0.0 }, 3).is_err());
        assert!(make_weights(WeightKind::Uniform, 0).is_err());
    }

    proptest! {
        #[test]
        fn weights_form_increasing_distribution(alpha in 0.01f64..0.99, f in 1usize..=50) {
            let w = make_weights(WeightKind::Exponential { alpha }, f).unwrap();
            let sum: f64 = w.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(w.weights.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(w.weights.windows(2).all(|p| p[0] < p[1]));
        }
    }
}
