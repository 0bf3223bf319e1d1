use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};

use super::kgf::SymmetricKey;
use super::SecFnError;

const MAGIC: &[u8; 4] = b"FSF1";
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Encrypted payload as carried between the ingress and egress edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherEnvelope {
    pub key_id: String,
    pub nonce: [u8; NONCE_LEN],
    /// Ciphertext followed by the 16-byte tag.
    pub body: Vec<u8>,
}

impl CipherEnvelope {
    /// `FSF1 ‖ len(key_id) ‖ key_id ‖ nonce ‖ body`
    pub fn to_bytes(&self) -> Vec<u8> {
        let id = self.key_id.as_bytes();
        let mut out = Vec::with_capacity(5 + id.len() + NONCE_LEN + self.body.len());
        out.extend_from_slice(MAGIC);
        out.push(id.len() as u8);
        out.extend_from_slice(id);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SecFnError> {
        let rest = bytes.strip_prefix(MAGIC).ok_or(SecFnError::MalformedEnvelope)?;
        let (&len, rest) = rest.split_first().ok_or(SecFnError::MalformedEnvelope)?;
        let len = len as usize;
        if rest.len() < len + NONCE_LEN + TAG_LEN {
            return Err(SecFnError::MalformedEnvelope);
        }
        let key_id = std::str::from_utf8(&rest[..len])
            .map_err(|_| SecFnError::MalformedEnvelope)?
            .to_string();
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&rest[len..len + NONCE_LEN]);
        Ok(CipherEnvelope {
            key_id,
            nonce,
            body: rest[len + NONCE_LEN..].to_vec(),
        })
    }
}

/// AES-128-GCM with the key id as associated data.
pub fn fsf_encrypt(key: &SymmetricKey, nonce: [u8; NONCE_LEN], payload: &[u8]) -> CipherEnvelope {
    let cipher = Aes128Gcm::new((&key.bytes).into());
    let body = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: payload,
                aad: key.key_id.as_bytes(),
            },
        )
        .expect("AES-GCM encryption of in-memory buffers cannot fail");
    CipherEnvelope {
        key_id: key.key_id.clone(),
        nonce,
        body,
    }
}

/// Fails on any mismatch (wrong key, altered id, nonce, ciphertext or tag);
/// never returns unauthenticated plaintext.
pub fn fsf_decrypt(key: &SymmetricKey, envelope: &CipherEnvelope) -> Result<Vec<u8>, SecFnError> {
    if envelope.key_id != key.key_id {
        return Err(SecFnError::AuthenticationFailed);
    }
    let cipher = Aes128Gcm::new((&key.bytes).into());
    cipher
        .decrypt(
            Nonce::from_slice(&envelope.nonce),
            Payload {
                msg: &envelope.body,
                aad: envelope.key_id.as_bytes(),
            },
        )
        .map_err(|_| SecFnError::AuthenticationFailed)
}

/// Per-sender encryptor. Nonces are `sender ‖ 0 0 0 ‖ counter_be64`, so the
/// two edges sharing a key never reuse a nonce.
pub struct FlowCipher {
    key: SymmetricKey,
    sender: u8,
    counter: u64,
}

impl FlowCipher {
    pub fn new(key: SymmetricKey, sender: u8) -> Self {
        FlowCipher {
            key,
            sender,
            counter: 0,
        }
    }

    pub fn key(&self) -> &SymmetricKey {
        &self.key
    }

    pub fn seal(&mut self, payload: &[u8]) -> CipherEnvelope {
        let mut nonce = [0u8; NONCE_LEN];
        nonce[0] = self.sender;
        nonce[4..].copy_from_slice(&self.counter.to_be_bytes());
        self.counter += 1;
        fsf_encrypt(&self.key, nonce, payload)
    }

    pub fn open(&self, envelope: &CipherEnvelope) -> Result<Vec<u8>, SecFnError> {
        fsf_decrypt(&self.key, envelope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secfn::kgf::kgf_generate;

    fn key(seed: u64) -> SymmetricKey {
        kgf_generate(("OVS1".into(), "OVS2".into()), seed).unwrap()
    }

    #[test]
    fn round_trip_and_ciphertext_differs() {
        let mut c = FlowCipher::new(key(1), 0);
        let p = b"MODBUS read holding registers 40001".to_vec();
        let env = c.seal(&p);
        assert_ne!(env.body, p);
        assert_eq!(c.open(&env).unwrap(), p);
        let env2 = c.seal(&p);
        assert_ne!(env.nonce, env2.nonce);
    }

    #[test]
    fn flipped_byte_fails_authentication() {
        let mut c = FlowCipher::new(key(1), 0);
        let mut env = c.seal(b"setpoint=42");
        env.body[0] ^= 0x80;
        assert!(matches!(c.open(&env), Err(SecFnError::AuthenticationFailed)));
    }

    #[test]
    fn wrong_key_fails() {
        let mut c = FlowCipher::new(key(1), 0);
        let env = c.seal(b"x");
        let mut other = key(2);
        assert!(fsf_decrypt(&other, &env).is_err());
        other.key_id = env.key_id.clone();
        assert!(fsf_decrypt(&other, &env).is_err());
    }

    #[test]
    fn envelope_bytes_round_trip() {
        let mut c = FlowCipher::new(key(3), 1);
        let env = c.seal(b"");
        let back = CipherEnvelope::from_bytes(&env.to_bytes()).unwrap();
        assert_eq!(back, env);
        assert_eq!(c.open(&back).unwrap(), b"");
        assert!(CipherEnvelope::from_bytes(b"FSF1").is_err());
        assert!(CipherEnvelope::from_bytes(b"nope").is_err());
    }
}
