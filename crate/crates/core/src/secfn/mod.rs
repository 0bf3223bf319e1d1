//! The deployable security functions: slice access (NSAF), flow validation
//! (FVF), trust validation (TVF), infrastructure monitoring (IMF), key
//! generation (KGF), flow security (FSF) and the device-specific function.
//!
//! Every function is a plain value plus a pure or single-writer operation;
//! the SMA owns the instances and wires them into the datapath.

mod device;
mod fsf;
mod fvf;
mod imf;
mod kgf;
mod nsaf;
mod tvf;

use thiserror::Error;

pub use device::{device_specific_check, DenyReason, DeviceGuard, DeviceVerdict, Fingerprint};
pub use fsf::{fsf_decrypt, fsf_encrypt, CipherEnvelope, FlowCipher, NONCE_LEN, TAG_LEN};
pub use fvf::{
    byte_entropy, fvf_validate, load_signatures, FlowFeatures, FlowScorer, FvfOutcome, FvfState,
    FvfVerdict, Signature, SignatureScope, DEFAULT_RATE_THRESHOLD, DEFAULT_WINDOW_US,
};
pub use imf::{imf_audit, render_diff, AuditResult, ModifiedRule};
pub use kgf::{kgf_generate, KeyGenerator, SymmetricKey, KEY_LEN};
pub use nsaf::{nsaf_check, NsafState, NsafVerdict};
pub use tvf::{tvf_validate, TrustVerdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SecFnError {
    #[error("key endpoints must differ (both are {0})")]
    SameEndpoints(String),
    #[error("audit compares {trusted} against a report from {observed}")]
    NodeMismatch { trusted: String, observed: String },
    #[error("flow payload failed authentication")]
    AuthenticationFailed,
    #[error("malformed cipher envelope")]
    MalformedEnvelope,
    #[error("signature set: {0}")]
    Signatures(String),
    #[error("anomaly threshold and window must be positive")]
    Threshold,
}

/// The canonical Shellshock probe, `() { :;};`.
pub const SHELLSHOCK_PATTERN: &[u8] = b"() { :;};";

#[cfg(test)]
pub(crate) mod tests {
    use crate::fabric::Packet;

    pub(crate) fn pkt(src: &str, mac: &str, dst: &str, payload: &[u8]) -> Packet {
        Packet {
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_mac: mac.parse().unwrap(),
            dst_mac: "00:00:00:ff".parse().unwrap(),
            slice: None,
            payload: payload.to_vec(),
            flow_id: format!("{src}->{dst}"),
            time_us: 0,
        }
    }
}
