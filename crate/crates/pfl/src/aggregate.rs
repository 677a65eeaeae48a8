//! The central aggregation service.
//!
//! Aggregation kicks off only once the training script's predefined number
//! of updates is available. Envelopes are shuffled, decrypted in memory
//! with the ephemerally held round private key, and combined into the
//! sample-count-weighted average. Summation runs in canonical ciphertext
//! order so the aggregate is independent of arrival order, bit for bit.
//! Decrypted individual updates are never persisted, and the private key
//! is discarded once the round's aggregation attempt finishes.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::ModelUpdate;
use crate::seal::{unseal, RoundKeypair, RoundPublicKey, UpdateEnvelope};
use crate::PflError;

#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub update: ModelUpdate,
    /// Updates that entered the average.
    pub used: usize,
    /// Envelopes excluded as undecryptable or mis-keyed (telemetry).
    pub excluded: usize,
}

/// Sample-count-weighted average over already-decrypted updates, in the
/// order given: `sum(n_k * delta_k) / sum(n_k)`.
pub fn average_updates(updates: &[ModelUpdate], round: u64) -> Result<ModelUpdate, PflError> {
    let dim = updates[0].delta.len();
    let mut sum = vec![0.0; dim];
    let mut total_weight = 0.0;
    let mut total_samples = 0u64;
    for update in updates {
        if update.delta.len() != dim {
            return Err(PflError::DimensionMismatch { expected: dim, actual: update.delta.len() });
        }
        let weight = update.sample_count as f64;
        for (s, d) in sum.iter_mut().zip(&update.delta) {
            *s += weight * d;
        }
        total_weight += weight;
        total_samples += update.sample_count;
    }
    for s in &mut sum {
        *s /= total_weight;
    }
    Ok(ModelUpdate { delta: sum, sample_count: total_samples, round })
}

/// Decrypts and averages exactly `target_count` updates.
pub fn aggregate<R: Rng + ?Sized>(
    envelopes: &[UpdateEnvelope],
    target_count: usize,
    keypair: &RoundKeypair,
    rng: &mut R,
) -> Result<AggregateOutcome, PflError> {
    if envelopes.len() < target_count || target_count == 0 {
        return Err(PflError::TriggerNotMet { available: envelopes.len(), target: target_count });
    }

    // Envelopes reach the service in random order.
    let mut shuffled: Vec<&UpdateEnvelope> = envelopes.iter().collect();
    shuffled.shuffle(rng);

    let mut decrypted: Vec<(&UpdateEnvelope, ModelUpdate)> = Vec::new();
    let mut excluded = 0usize;
    for envelope in shuffled {
        match unseal(envelope, keypair) {
            Ok(update) if update.round == keypair.round => decrypted.push((envelope, update)),
            Ok(_) | Err(_) => excluded += 1,
        }
    }
    if decrypted.len() < target_count {
        return Err(PflError::RoundFailed { valid: decrypted.len(), target: target_count });
    }

    // Canonical order and trim to exactly the trigger count; later valid
    // arrivals in the same round are discarded.
    decrypted.sort_by(|(a, _), (b, _)| a.ciphertext.cmp(&b.ciphertext));
    decrypted.truncate(target_count);
    let updates: Vec<ModelUpdate> = decrypted.into_iter().map(|(_, update)| update).collect();
    let update = average_updates(&updates, keypair.round)?;
    Ok(AggregateOutcome { update, used: target_count, excluded })
}

/// Holds the round private key ephemerally: one aggregation attempt, then
/// the key is gone.
pub struct AggregationService {
    keypair: Option<RoundKeypair>,
}

impl AggregationService {
    pub fn new(keypair: RoundKeypair) -> Self {
        AggregationService { keypair: Some(keypair) }
    }

    pub fn round_public_key(&self) -> Result<RoundPublicKey, PflError> {
        Ok(self.keypair.as_ref().ok_or(PflError::KeyDiscarded)?.public())
    }

    /// Runs the round's aggregation and discards the private key whether or
    /// not it succeeds.
    pub fn aggregate_and_discard<R: Rng + ?Sized>(
        &mut self,
        envelopes: &[UpdateEnvelope],
        target_count: usize,
        rng: &mut R,
    ) -> Result<AggregateOutcome, PflError> {
        let keypair = self.keypair.take().ok_or(PflError::KeyDiscarded)?;
        aggregate(envelopes, target_count, &keypair, rng)
    }

    pub fn key_discarded(&self) -> bool {
        self.keypair.is_none()
    }
}
