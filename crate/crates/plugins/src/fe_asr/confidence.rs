//! Word confidence models.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::wer::correctness_labels;
use super::{FeError, Utterance};

/// A global logistic scorer over decode-time word features, with optional
/// Gaussian score noise to model estimator uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub noise_scale: f64,
}

/// Noisy probability that a hypothesized word was correctly recognized,
/// clamped to [0, 1].
pub fn word_confidence<R: Rng + ?Sized>(
    model: &ConfidenceModel,
    features: &[f64],
    rng: &mut R,
) -> Result<f64, FeError> {
    if features.len() != model.weights.len() {
        return Err(FeError::DimensionMismatch {
            model: model.weights.len(),
            features: features.len(),
        });
    }
    let logit: f64 =
        model.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + model.bias;
    let mut confidence = 1.0 / (1.0 + (-logit).exp());
    if model.noise_scale > 0.0 {
        let noise = Normal::new(0.0, model.noise_scale).expect("valid noise scale").sample(rng);
        confidence += noise;
    }
    Ok(confidence.clamp(0.0, 1.0))
}

/// Where per-word confidences come from during evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceSource {
    /// The learned global model, applied to word features.
    Model(ConfidenceModel),
    /// Oracle confidences from the hidden reference: 1 iff the word is
    /// correct under alignment. Simulation-only.
    Perfect,
}

impl ConfidenceSource {
    pub fn confidences<R: Rng + ?Sized>(
        &self,
        utterance: &Utterance,
        rng: &mut R,
    ) -> Result<Vec<f64>, FeError> {
        match self {
            ConfidenceSource::Model(model) => utterance
                .word_features
                .iter()
                .map(|features| word_confidence(model, features, rng))
                .collect(),
            ConfidenceSource::Perfect => {
                Ok(correctness_labels(&utterance.hypothesis_words, &utterance.reference_words)
                    .into_iter()
                    .map(|correct| if correct { 1.0 } else { 0.0 })
                    .collect())
            }
        }
    }
}

/// Fits the logistic scorer to (features, correct) examples by full-batch
/// gradient descent. The returned model is noiseless; set `noise_scale`
/// for deployment.
pub fn train_confidence_model(
    examples: &[(Vec<f64>, bool)],
    feature_dim: usize,
    epochs: usize,
    learning_rate: f64,
) -> ConfidenceModel {
    let mut weights = vec![0.0; feature_dim];
    let mut bias = 0.0;
    if examples.is_empty() {
        return ConfidenceModel { weights, bias, noise_scale: 0.0 };
    }
    let n = examples.len() as f64;
    for _ in 0..epochs {
        let mut grad_w = vec![0.0; feature_dim];
        let mut grad_b = 0.0;
        for (features, correct) in examples {
            let logit: f64 =
                weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + bias;
            let p = 1.0 / (1.0 + (-logit).exp());
            let error = p - if *correct { 1.0 } else { 0.0 };
            for (g, x) in grad_w.iter_mut().zip(features) {
                *g += error * x;
            }
            grad_b += error;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g / n;
        }
        bias -= learning_rate * grad_b / n;
    }
    ConfidenceModel { weights, bias, noise_scale: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_model_yields_half() {
        let model = ConfidenceModel { weights: vec![0.0, 0.0], bias: 0.0, noise_scale: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(word_confidence(&model, &[3.0, -1.0], &mut rng).unwrap(), 0.5);
    }

    #[test]
    fn saturated_logit_approaches_one() {
        let model = ConfidenceModel { weights: vec![50.0], bias: 0.0, noise_scale: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let c = word_confidence(&model, &[1.0], &mut rng).unwrap();
        assert!(c > 0.999999);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let model = ConfidenceModel { weights: vec![1.0], bias: 0.0, noise_scale: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            word_confidence(&model, &[1.0, 2.0], &mut rng),
            Err(FeError::DimensionMismatch { .. })
        ));
    }

    /// Monte Carlo against an independent sampling oracle: the empirical
    /// mean of the noisy confidence matches the oracle's within 3 sigma,
    /// and (away from the clamp boundary) the noiseless value.
    #[test]
    fn noisy_confidence_tracks_sampling_oracle() {
        let noise_scale = 0.1;
        let model = ConfidenceModel { weights: vec![0.8], bias: -0.2, noise_scale };
        let features = [0.5];
        let noiseless = 1.0 / (1.0 + (0.2f64 - 0.8 * 0.5).exp());
        assert!(noiseless > 0.4 && noiseless < 0.7);

        let trials = 100_000;
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut sum = 0.0;
        for _ in 0..trials {
            sum += word_confidence(&model, &features, &mut rng).unwrap();
        }
        let mean = sum / trials as f64;

        // Independent oracle: draw clamp(noiseless + N(0, scale)) with a
        // Box-Muller sampler coded separately from rand_distr.
        let mut oracle_rng = ChaCha12Rng::seed_from_u64(22);
        let mut oracle_sum = 0.0;
        let mut draws = 0;
        while draws < trials {
            let u1: f64 = oracle_rng.random::<f64>().max(1e-300);
            let u2: f64 = oracle_rng.random::<f64>();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            oracle_sum += (noiseless + noise_scale * z).clamp(0.0, 1.0);
            draws += 1;
        }
        let oracle_mean = oracle_sum / trials as f64;

        let sigma = noise_scale / (trials as f64).sqrt();
        assert!((mean - noiseless).abs() < 3.0 * sigma, "mean {mean} vs noiseless {noiseless}");
        assert!(
            (mean - oracle_mean).abs() < 3.0 * (2.0f64).sqrt() * sigma,
            "mean {mean} vs oracle {oracle_mean}"
        );
    }

    #[test]
    fn training_learns_a_separable_rule() {
        // Words with positive feature are correct, negative incorrect.
        let mut examples = Vec::new();
        for i in 0..200 {
            let x = (i as f64 / 100.0) - 1.0 + 0.005;
            examples.push((vec![x], x > 0.0));
        }
        let model = train_confidence_model(&examples, 1, 500, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let high = word_confidence(&model, &[0.9], &mut rng).unwrap();
        let low = word_confidence(&model, &[-0.9], &mut rng).unwrap();
        assert!(high > 0.8, "high {high}");
        assert!(low < 0.2, "low {low}");
    }
}
