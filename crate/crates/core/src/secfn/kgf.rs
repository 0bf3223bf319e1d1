use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::SecFnError;
use crate::fabric::NodeId;

pub const KEY_LEN: usize = 16;

/// 128-bit flow key shared by the two edge nodes of a secured flow.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    pub key_id: String,
    pub bytes: [u8; KEY_LEN],
    pub created_at_us: u64,
    pub endpoints: (NodeId, NodeId),
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricKey")
            .field("key_id", &self.key_id)
            .field("bytes", &"<redacted>")
            .field("created_at_us", &self.created_at_us)
            .field("endpoints", &self.endpoints)
            .finish()
    }
}

/// Seeded key generator. Key ids are unique per generator instance.
pub struct KeyGenerator {
    rng: ChaCha20Rng,
    issued: u64,
}

impl KeyGenerator {
    pub fn new(seed: u64) -> Self {
        KeyGenerator {
            rng: ChaCha20Rng::seed_from_u64(seed),
            issued: 0,
        }
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn generate(&mut self, endpoints: (NodeId, NodeId), now_us: u64) -> Result<SymmetricKey, SecFnError> {
        if endpoints.0 == endpoints.1 {
            return Err(SecFnError::SameEndpoints(endpoints.0.to_string()));
        }
        let mut bytes = [0u8; KEY_LEN];
        self.rng.fill_bytes(&mut bytes);
        self.issued += 1;
        Ok(SymmetricKey {
            key_id: format!("key-{:06}", self.issued),
            bytes,
            created_at_us: now_us,
            endpoints,
        })
    }
}

/// One-shot generation from a seed.
pub fn kgf_generate(endpoints: (NodeId, NodeId), seed: u64) -> Result<SymmetricKey, SecFnError> {
    KeyGenerator::new(seed).generate(endpoints, 0)
}
