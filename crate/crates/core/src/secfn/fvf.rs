use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SecFnError;
use crate::alert::{Alert, SecurityFunction, Severity};
use crate::fabric::{NodeId, Packet};
use crate::policy::DeviceId;

/// Default sliding window for the per-device rate detector.
pub const DEFAULT_WINDOW_US: u64 = 1_000_000;
/// Default packets tolerated per window.
pub const DEFAULT_RATE_THRESHOLD: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureScope {
    Payload,
    Header,
}

/// Literal byte pattern matched anywhere in the payload or the header bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub id: String,
    #[serde(rename = "pattern_hex", with = "hex::serde")]
    pub pattern: Vec<u8>,
    pub scope: SignatureScope,
}

impl Signature {
    pub fn payload(id: impl Into<String>, pattern: &[u8]) -> Self {
        Signature {
            id: id.into(),
            pattern: pattern.to_vec(),
            scope: SignatureScope::Payload,
        }
    }

    pub fn matches(&self, packet: &Packet) -> bool {
        match self.scope {
            SignatureScope::Payload => contains(&packet.payload, &self.pattern),
            SignatureScope::Header => contains(&packet.header().scan_bytes(), &self.pattern),
        }
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Parses a signature file: `[{"id", "pattern_hex", "scope"}]`.
pub fn load_signatures(text: &str) -> Result<Vec<Signature>, SecFnError> {
    let sigs: Vec<Signature> =
        serde_json::from_str(text).map_err(|e| SecFnError::Signatures(e.to_string()))?;
    validate_signatures(&sigs)?;
    Ok(sigs)
}

fn validate_signatures(sigs: &[Signature]) -> Result<(), SecFnError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in sigs {
        if s.pattern.is_empty() {
            return Err(SecFnError::Signatures(format!("signature {} is empty", s.id)));
        }
        if !seen.insert(s.id.as_str()) {
            return Err(SecFnError::Signatures(format!("duplicate signature id {}", s.id)));
        }
    }
    Ok(())
}

/// Per-flow features handed to a trained classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowFeatures {
    pub packet_rate: f64,
    pub byte_rate: f64,
    pub payload_entropy: f64,
    pub duration_s: f64,
}

impl FlowFeatures {
    pub fn as_row(&self) -> [f64; 4] {
        [
            self.packet_rate,
            self.byte_rate,
            self.payload_entropy,
            self.duration_s,
        ]
    }
}

/// Trained anomaly model consulted after the rate detector.
pub trait FlowScorer: Send + Sync {
    /// Probability that the flow is an attack.
    fn attack_probability(&self, features: &FlowFeatures) -> f64;
    fn threshold(&self) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FvfVerdict {
    Forward,
    DropSignature { sig_id: String },
    DropAnomaly { score: f64 },
}

impl FvfVerdict {
    pub fn is_drop(&self) -> bool {
        !matches!(self, FvfVerdict::Forward)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FvfOutcome {
    pub verdict: FvfVerdict,
    pub alert: Option<Alert>,
    pub signatures_scanned: usize,
}

#[derive(Clone, Default)]
struct DeviceWindow {
    // (time_us, payload bytes) of packets inside the window
    packets: VecDeque<(u64, usize)>,
    bytes: usize,
}

/// Flow validation state: ordered signatures plus per-device rate windows.
#[derive(Clone)]
pub struct FvfState {
    signatures: Vec<Signature>,
    window_us: u64,
    threshold: u32,
    classifier: Option<Arc<dyn FlowScorer>>,
    windows: BTreeMap<DeviceId, DeviceWindow>,
}

impl fmt::Debug for FvfState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FvfState")
            .field("signatures", &self.signatures.len())
            .field("window_us", &self.window_us)
            .field("threshold", &self.threshold)
            .field("classifier", &self.classifier.is_some())
            .finish()
    }
}

impl FvfState {
    pub fn new(mut signatures: Vec<Signature>, window_us: u64, threshold: u32) -> Result<Self, SecFnError> {
        if threshold == 0 || window_us == 0 {
            return Err(SecFnError::Threshold);
        }
        validate_signatures(&signatures)?;
        signatures.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(FvfState {
            signatures,
            window_us,
            threshold,
            classifier: None,
            windows: BTreeMap::new(),
        })
    }

    pub fn with_defaults(signatures: Vec<Signature>) -> Result<Self, SecFnError> {
        Self::new(signatures, DEFAULT_WINDOW_US, DEFAULT_RATE_THRESHOLD)
    }

    pub fn with_classifier(mut self, scorer: Arc<dyn FlowScorer>) -> Self {
        self.classifier = Some(scorer);
        self
    }

    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn window_us(&self) -> u64 {
        self.window_us
    }

    fn observe(&mut self, device: &DeviceId, packet: &Packet) -> (usize, FlowFeatures) {
        let w = self.windows.entry(device.clone()).or_default();
        let now = packet.time_us;
        while let Some(&(t, b)) = w.packets.front() {
            if t + self.window_us <= now {
                w.packets.pop_front();
                w.bytes -= b;
            } else {
                break;
            }
        }
        w.packets.push_back((now, packet.payload.len()));
        w.bytes += packet.payload.len();
        let secs = self.window_us as f64 / 1e6;
        let first = w.packets.front().map_or(now, |p| p.0);
        let features = FlowFeatures {
            packet_rate: w.packets.len() as f64 / secs,
            byte_rate: w.bytes as f64 / secs,
            payload_entropy: byte_entropy(&packet.payload),
            // a punted packet can carry a later clock than the ones behind it
            duration_s: now.saturating_sub(first) as f64 / 1e6,
        };
        (w.packets.len(), features)
    }
}

/// Shannon entropy of a byte string in bits per byte.
pub fn byte_entropy(bytes: &[u8]) -> f64 {
    if bytes.is_empty() {
        return 0.0;
    }
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Signatures first (lowest id wins), then the device's sliding-window
/// packet count, then the optional classifier. Drops carry an alert.
pub fn fvf_validate(state: &mut FvfState, packet: &Packet, node: &NodeId) -> FvfOutcome {
    let device = DeviceId::from_mac(&packet.src_mac);
    let alert = |reason: String| Alert {
        source: SecurityFunction::Fvf,
        device_id: Some(device.to_string()),
        node: Some(node.clone()),
        flow_id: Some(packet.flow_id.clone()),
        reason,
        severity: Severity::Critical,
        time_us: packet.time_us,
    };

    let mut scanned = 0;
    for sig in &state.signatures {
        scanned += 1;
        if sig.matches(packet) {
            let sig_id = sig.id.clone();
            return FvfOutcome {
                alert: Some(alert(format!("signature {sig_id}"))),
                verdict: FvfVerdict::DropSignature { sig_id },
                signatures_scanned: scanned,
            };
        }
    }

    let (count, features) = state.observe(&device, packet);
    if count > state.threshold as usize {
        return FvfOutcome {
            verdict: FvfVerdict::DropAnomaly {
                score: count as f64,
            },
            alert: Some(alert(format!(
                "rate {count} packets per {} ms exceeds {}",
                state.window_us / 1000,
                state.threshold
            ))),
            signatures_scanned: scanned,
        };
    }
    if let Some(scorer) = &state.classifier {
        let p = scorer.attack_probability(&features);
        if p >= scorer.threshold() {
            return FvfOutcome {
                verdict: FvfVerdict::DropAnomaly { score: p },
                alert: Some(alert(format!("classifier score {p:.3}"))),
                signatures_scanned: scanned,
            };
        }
    }
    FvfOutcome {
        verdict: FvfVerdict::Forward,
        alert: None,
        signatures_scanned: scanned,
    }
}
