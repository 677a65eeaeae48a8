//! On-device model training.
//!
//! Mini-batch gradient descent on a linear model. The reference objective
//! is least squares, `L(w) = (1/2n) * sum (x.w - y)^2`, whose pooled
//! optimum has a closed form the acceptance suite checks against; an
//! optional logistic objective covers binary targets.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{LocalDataset, ModelParameters, ModelUpdate};
use crate::PflError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainSpec {
    pub objective: Objective,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
}

/// Mean gradient of the objective over the given examples at `weights`.
pub fn gradient(
    objective: Objective,
    weights: &[f64],
    features: &[Vec<f64>],
    targets: &[f64],
) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    for (x, y) in features.iter().zip(targets) {
        let dot: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
        let error = match objective {
            Objective::LeastSquares => dot - y,
            Objective::Logistic => 1.0 / (1.0 + (-dot).exp()) - y,
        };
        for (g, v) in grad.iter_mut().zip(x) {
            *g += error * v;
        }
    }
    let n = targets.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    grad
}

/// Mean loss of the objective over a dataset.
pub fn loss(objective: Objective, weights: &[f64], data: &LocalDataset) -> f64 {
    let mut total = 0.0;
    for (x, y) in data.features.iter().zip(&data.targets) {
        let dot: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
        total += match objective {
            Objective::LeastSquares => 0.5 * (dot - y) * (dot - y),
            Objective::Logistic => {
                let p = (1.0 / (1.0 + (-dot).exp())).clamp(1e-12, 1.0 - 1e-12);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
        };
    }
    total / data.targets.len().max(1) as f64
}

/// Trains locally from the published global model and returns the delta
/// `trained - global` with the device's sample count.
pub fn local_train<R: Rng + ?Sized>(
    global: &ModelParameters,
    data: &LocalDataset,
    spec: &TrainSpec,
    rng: &mut R,
) -> Result<ModelUpdate, PflError> {
    if data.is_empty() {
        return Err(PflError::EmptyDataset);
    }
    global.validate()?;
    let dim = global.weights.len();
    for x in &data.features {
        if x.len() != dim {
            return Err(PflError::DimensionMismatch { expected: dim, actual: x.len() });
        }
    }

    let mut weights = global.weights.clone();
    let n = data.len();
    let batch = spec.batch_size.unwrap_or(n).max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..spec.epochs {
        if batch < n {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let features: Vec<Vec<f64>> = chunk.iter().map(|&i| data.features[i].clone()).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| data.targets[i]).collect();
            let grad = gradient(spec.objective, &weights, &features, &targets);
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= spec.learning_rate * g;
            }
        }
    }

    let delta: Vec<f64> = weights.iter().zip(&global.weights).map(|(w, g)| w - g).collect();
    let update = ModelUpdate { delta, sample_count: n as u64, round: global.version };
    update.validate()?;
    Ok(update)
}
