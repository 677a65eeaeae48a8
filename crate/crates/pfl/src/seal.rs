//! Round-keyed sealing of model updates.
//!
//! Updates are encrypted on-device with the training round's public key
//! (an authenticated sealed-box construction). The aggregation service
//! holds the private key ephemerally; once the round completes the key is
//! discarded and nothing can decrypt the stored envelopes. Unsealing with
//! any other round's key fails.

use base64::Engine;
use crypto_box::{PublicKey, SecretKey};
// crypto_box is built on rand_core 0.6; sealing randomness comes from a
// ChaCha stream of that lineage, seeded by the caller.
use rand_chacha06::rand_core::SeedableRng as _;
use serde::{Deserialize, Serialize};

use fedtask_core::wire::{content_hash, to_canonical_json};

use crate::model::ModelUpdate;
use crate::PflError;

/// A sealed model update as transported and stored centrally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEnvelope {
    pub round_key_id: String,
    /// Base64 sealed-box bytes.
    pub ciphertext: String,
}

impl UpdateEnvelope {
    pub fn ciphertext_bytes(&self) -> Result<Vec<u8>, PflError> {
        base64::engine::general_purpose::STANDARD
            .decode(&self.ciphertext)
            .map_err(|e| PflError::SealFailure(format!("invalid base64: {e}")))
    }
}

/// Public half of a round key, published inside the FL task payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPublicKey {
    pub round: u64,
    pub key_id: String,
    /// 32-byte X25519 public key, hex encoded.
    pub public_key_hex: String,
}

impl RoundPublicKey {
    fn key(&self) -> Result<PublicKey, PflError> {
        let bytes = hex::decode(&self.public_key_hex)
            .map_err(|e| PflError::SealFailure(format!("invalid public key hex: {e}")))?;
        let bytes: [u8; 32] =
            bytes.try_into().map_err(|_| PflError::SealFailure("public key must be 32 bytes".into()))?;
        Ok(PublicKey::from_bytes(bytes))
    }
}

/// The full round keypair. Lives only inside the aggregation service.
pub struct RoundKeypair {
    pub round: u64,
    pub key_id: String,
    secret: SecretKey,
}

impl RoundKeypair {
    /// Deterministically generates the round keypair from a seed.
    pub fn generate(round: u64, seed: [u8; 32]) -> Self {
        let mut rng = rand_chacha06::ChaCha12Rng::from_seed(seed);
        let secret = SecretKey::generate(&mut rng);
        let key_id = format!("round-{round}-{}", &content_hash(secret.public_key().as_bytes())[..12]);
        RoundKeypair { round, key_id, secret }
    }

    pub fn public(&self) -> RoundPublicKey {
        RoundPublicKey {
            round: self.round,
            key_id: self.key_id.clone(),
            public_key_hex: hex::encode(self.secret.public_key().as_bytes()),
        }
    }
}

/// Seals one update with the round's public key. The seed feeds the
/// ephemeral sender key, so sealing is reproducible in simulation.
pub fn seal(
    update: &ModelUpdate,
    public_key: &RoundPublicKey,
    seed: [u8; 32],
) -> Result<UpdateEnvelope, PflError> {
    update.validate()?;
    let plaintext = to_canonical_json(update).map_err(|e| PflError::SealFailure(e.to_string()))?;
    let mut rng = rand_chacha06::ChaCha12Rng::from_seed(seed);
    let ciphertext = public_key
        .key()?
        .seal(&mut rng, &plaintext)
        .map_err(|e| PflError::SealFailure(e.to_string()))?;
    Ok(UpdateEnvelope {
        round_key_id: public_key.key_id.clone(),
        ciphertext: base64::engine::general_purpose::STANDARD.encode(ciphertext),
    })
}

/// Opens a sealed envelope with the round's private key.
pub fn unseal(envelope: &UpdateEnvelope, keypair: &RoundKeypair) -> Result<ModelUpdate, PflError> {
    if envelope.round_key_id != keypair.key_id {
        return Err(PflError::WrongRoundKey {
            envelope: envelope.round_key_id.clone(),
            expected: keypair.key_id.clone(),
        });
    }
    let ciphertext = envelope.ciphertext_bytes()?;
    let plaintext = keypair
        .secret
        .unseal(&ciphertext)
        .map_err(|e| PflError::SealFailure(e.to_string()))?;
    let update: ModelUpdate =
        serde_json::from_slice(&plaintext).map_err(|e| PflError::SealFailure(e.to_string()))?;
    update.validate()?;
    Ok(update)
}
