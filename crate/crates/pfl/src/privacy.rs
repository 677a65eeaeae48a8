//! Local and global privacy managers.
//!
//! The local manager clips each update to an L2 bound and adds per-coordinate
//! Gaussian noise before the update leaves the device. The global manager
//! adds central Gaussian noise to the aggregated update before release.
//! Reported privacy parameters are (clip_bound, sigma); formal epsilon
//! accounting is out of scope.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::ModelUpdate;
use crate::PflError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub clip_bound: f64,
    pub sigma_local: f64,
    pub sigma_central: f64,
}

impl PrivacyConfig {
    pub fn validate(&self) -> Result<(), PflError> {
        if !(self.clip_bound > 0.0) || !self.clip_bound.is_finite() {
            return Err(PflError::InvalidPrivacyConfig("clip_bound must be > 0".into()));
        }
        if self.sigma_local < 0.0 || self.sigma_central < 0.0 {
            return Err(PflError::InvalidPrivacyConfig("sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// Scales the vector to L2 norm at most `bound` (direction preserved).
/// The rare rounding overshoot is rescaled away so the bound holds exactly.
pub fn clip_to_norm(vector: &mut [f64], bound: f64) {
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= bound || norm == 0.0 {
        return;
    }
    let scale = bound / norm;
    for v in vector.iter_mut() {
        *v *= scale;
    }
    for _ in 0..4 {
        let new_norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if new_norm <= bound {
            return;
        }
        let correction = bound / new_norm;
        for v in vector.iter_mut() {
            *v *= correction;
        }
    }
}

/// Clip to the configured bound, then add i.i.d. Gaussian(0, sigma_local^2)
/// per coordinate.
pub fn privatize_local<R: Rng + ?Sized>(
    mut update: ModelUpdate,
    cfg: &PrivacyConfig,
    rng: &mut R,
) -> Result<ModelUpdate, PflError> {
    cfg.validate()?;
    update.validate()?;
    clip_to_norm(&mut update.delta, cfg.clip_bound);
    if cfg.sigma_local > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma_local).expect("valid sigma");
        for d in &mut update.delta {
            *d += noise.sample(rng);
        }
    }
    Ok(update)
}

/// Adds central Gaussian(0, sigma_central^2) noise to the released update.
pub fn privatize_central<R: Rng + ?Sized>(
    mut update: ModelUpdate,
    cfg: &PrivacyConfig,
    rng: &mut R,
) -> Result<ModelUpdate, PflError> {
    cfg.validate()?;
    update.validate()?;
    if cfg.sigma_central > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma_central).expect("valid sigma");
        for d in &mut update.delta {
            *d += noise.sample(rng);
        }
    }
    Ok(update)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg(clip: f64, local: f64, central: f64) -> PrivacyConfig {
        PrivacyConfig { clip_bound: clip, sigma_local: local, sigma_central: central }
    }

    fn update(delta: Vec<f64>) -> ModelUpdate {
        ModelUpdate { delta, sample_count: 1, round: 0 }
    }

    #[test]
    fn within_bound_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let u = update(vec![0.3, 0.4]);
        let out = privatize_local(u.clone(), &cfg(5.0, 0.0, 0.0), &mut rng).unwrap();
        assert_eq!(out.delta, u.delta);
    }

    #[test]
    fn oversized_vector_scaled_to_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        // Norm 10 clipped to 5: halved, direction preserved.
        let out = privatize_local(update(vec![6.0, 8.0]), &cfg(5.0, 0.0, 0.0), &mut rng).unwrap();
        assert!((out.l2_norm() - 5.0).abs() < 1e-12);
        assert!((out.delta[0] / out.delta[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_central_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let u = update(vec![1.0, 2.0]);
        let out = privatize_central(u.clone(), &cfg(1.0, 0.0, 0.0), &mut rng).unwrap();
        assert_eq!(out.delta, u.delta);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(cfg(0.0, 0.0, 0.0).validate().is_err());
        assert!(cfg(1.0, -0.1, 0.0).validate().is_err());
        assert!(cfg(1.0, 0.0, 0.0).validate().is_ok());
    }

    #[test]
    fn zero_vector_untouched() {
        let mut v = vec![0.0; 4];
        clip_to_norm(&mut v, 1.0);
        assert_eq!(v, vec![0.0; 4]);
    }
}
