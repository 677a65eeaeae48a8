//! Model parameters, updates and local datasets.

use serde::{Deserialize, Serialize};

use crate::PflError;

/// The global model: a flat weight vector plus its training-round version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub weights: Vec<f64>,
    pub version: u64,
}

impl ModelParameters {
    pub fn zeros(dim: usize) -> Self {
        ModelParameters { weights: vec![0.0; dim], version: 0 }
    }

    pub fn validate(&self) -> Result<(), PflError> {
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(PflError::NonFinite("model weights"));
        }
        Ok(())
    }

    /// Applies an aggregated delta, advancing the version to `round + 1`.
    pub fn apply(&mut self, update: &ModelUpdate) -> Result<(), PflError> {
        if update.delta.len() != self.weights.len() {
            return Err(PflError::DimensionMismatch {
                expected: self.weights.len(),
                actual: update.delta.len(),
            });
        }
        for (w, d) in self.weights.iter_mut().zip(&update.delta) {
            *w += d;
        }
        self.version = update.round + 1;
        Ok(())
    }
}

/// A model delta with the sample count that weights it in federated
/// averaging, keyed to its training round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub delta: Vec<f64>,
    pub sample_count: u64,
    pub round: u64,
}

impl ModelUpdate {
    pub fn validate(&self) -> Result<(), PflError> {
        if self.delta.iter().any(|d| !d.is_finite()) {
            return Err(PflError::NonFinite("update delta"));
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.delta.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

/// Supervised examples held on one device.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LocalDataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_advances_version() {
        let mut model = ModelParameters::zeros(2);
        let update = ModelUpdate { delta: vec![1.0, -2.0], sample_count: 3, round: 0 };
        model.apply(&update).unwrap();
        assert_eq!(model.weights, vec![1.0, -2.0]);
        assert_eq!(model.version, 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut model = ModelParameters::zeros(2);
        let update = ModelUpdate { delta: vec![1.0], sample_count: 1, round: 0 };
        assert!(model.apply(&update).is_err());
    }

    #[test]
    fn non_finite_update_rejected() {
        let update = ModelUpdate { delta: vec![f64::NAN], sample_count: 1, round: 0 };
        assert!(update.validate().is_err());
    }
}
