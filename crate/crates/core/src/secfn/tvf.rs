use serde::{Deserialize, Serialize};

use crate::fabric::AttestationReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustVerdict {
    Trusted,
    Compromised,
    StaleNonce,
}

/// Compares an attestation report against the node's golden hash. Freshness
/// is checked first: a report that does not echo this challenge's nonce is
/// stale whatever hash it carries.
pub fn tvf_validate(expected_hash: &[u8; 32], report: &AttestationReport, nonce: &[u8; 16]) -> TrustVerdict {
    if &report.nonce != nonce {
        TrustVerdict::StaleNonce
    } else if &report.measured_hash != expected_hash {
        TrustVerdict::Compromised
    } else {
        TrustVerdict::Trusted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(hash: u8, nonce: u8) -> AttestationReport {
        AttestationReport {
            node_id: "srv".into(),
            measured_hash: [hash; 32],
            nonce: [nonce; 16],
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(tvf_validate(&[1; 32], &report(1, 9), &[9; 16]), TrustVerdict::Trusted);
        assert_eq!(tvf_validate(&[1; 32], &report(2, 9), &[9; 16]), TrustVerdict::Compromised);
        assert_eq!(tvf_validate(&[1; 32], &report(1, 8), &[9; 16]), TrustVerdict::StaleNonce);
        assert_eq!(tvf_validate(&[1; 32], &report(2, 8), &[9; 16]), TrustVerdict::StaleNonce);
    }
}
