//! Activity log: an append-only record of every SMA action, chained with
//! SHA-256 so any edit to a stored entry breaks verification.
//!
//! `entry_hash = SHA-256(seq_be ‖ event_json ‖ prev_hash)`, with an all-zero
//! `prev_hash` for the first entry. The expected state of a switch is
//! rebuilt by replaying the rule install/delete events recorded for it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::PolicyError;
use crate::alert::Alert;
use crate::fabric::{canonical_order, FlowMod, FlowRule, FlowTable, NodeId, ReportedRule};

pub const GENESIS_HASH: [u8; 32] = [0; 32];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlcEvent {
    RuleInstalled {
        node: NodeId,
        rule: FlowRule,
    },
    RuleDeleted {
        node: NodeId,
        rule_id: String,
    },
    ProfileExtracted {
        user_id: String,
        node: NodeId,
    },
    NsfDeployed {
        node: NodeId,
        users: Vec<String>,
    },
    FlowDecision {
        node: NodeId,
        flow_id: String,
        device_id: String,
        decision: String,
    },
    AlertRaised {
        alert: Alert,
    },
    DeviceBlacklisted {
        node: NodeId,
        device_id: String,
    },
    ServiceDeployed {
        host: NodeId,
        service: String,
        verdict: String,
    },
    KeyDistributed {
        key_id: String,
        endpoints: [NodeId; 2],
    },
    Handover {
        device_id: String,
        from: NodeId,
        to: NodeId,
    },
    AuditPerformed {
        node: NodeId,
        clean: bool,
    },
    DeviceRegistered {
        device_id: String,
        policy_id: String,
    },
}

impl AlcEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            AlcEvent::RuleInstalled { .. } => "rule_installed",
            AlcEvent::RuleDeleted { .. } => "rule_deleted",
            AlcEvent::ProfileExtracted { .. } => "profile_extracted",
            AlcEvent::NsfDeployed { .. } => "nsf_deployed",
            AlcEvent::FlowDecision { .. } => "flow_decision",
            AlcEvent::AlertRaised { .. } => "alert_raised",
            AlcEvent::DeviceBlacklisted { .. } => "device_blacklisted",
            AlcEvent::ServiceDeployed { .. } => "service_deployed",
            AlcEvent::KeyDistributed { .. } => "key_distributed",
            AlcEvent::Handover { .. } => "handover",
            AlcEvent::AuditPerformed { .. } => "audit_performed",
            AlcEvent::DeviceRegistered { .. } => "device_registered",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlcEntry {
    pub seq: u64,
    /// Canonical JSON of the event, exactly as hashed.
    pub event: Vec<u8>,
    pub prev_hash: [u8; 32],
    pub entry_hash: [u8; 32],
}

impl AlcEntry {
    pub fn decode(&self) -> Result<AlcEvent, PolicyError> {
        Ok(serde_json::from_slice(&self.event)?)
    }

    fn expected_hash(&self) -> [u8; 32] {
        chain_hash(self.seq, &self.event, &self.prev_hash)
    }
}

fn chain_hash(seq: u64, event: &[u8], prev: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seq.to_be_bytes());
    h.update(event);
    h.update(prev);
    h.finalize().into()
}

#[derive(Serialize, Deserialize)]
struct EntryLine<'a> {
    seq: u64,
    #[serde(borrow)]
    event: &'a RawValue,
    prev_hash: String,
    entry_hash: String,
}

/// Rules a switch should hold according to the log, in report order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustedReport {
    pub node_id: NodeId,
    pub rules: Vec<ReportedRule>,
}

#[derive(Clone, Debug, Default)]
pub struct ActivityLog {
    entries: Vec<AlcEntry>,
}

impl ActivityLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AlcEntry] {
        &self.entries
    }

    /// Mutable access to stored entries, for corruption experiments.
    pub fn entries_mut(&mut self) -> &mut [AlcEntry] {
        &mut self.entries
    }

    pub fn head_hash(&self) -> [u8; 32] {
        self.entries.last().map_or(GENESIS_HASH, |e| e.entry_hash)
    }

    pub fn append(&mut self, event: &AlcEvent) -> &AlcEntry {
        let seq = self.entries.last().map_or(0, |e| e.seq + 1);
        let prev_hash = self.head_hash();
        let bytes = serde_json::to_vec(event).expect("event serialization is infallible");
        let entry_hash = chain_hash(seq, &bytes, &prev_hash);
        self.entries.push(AlcEntry {
            seq,
            event: bytes,
            prev_hash,
            entry_hash,
        });
        self.entries.last().unwrap()
    }

    /// First entry at which the chain breaks, if any.
    pub fn first_break(&self) -> Option<u64> {
        let mut prev = GENESIS_HASH;
        for (i, e) in self.entries.iter().enumerate() {
            if e.seq != i as u64 || e.prev_hash != prev || e.expected_hash() != e.entry_hash {
                return Some(i as u64);
            }
            prev = e.entry_hash;
        }
        None
    }

    pub fn verify(&self) -> bool {
        self.first_break().is_none()
    }

    pub fn events(&self) -> impl Iterator<Item = AlcEvent> + '_ {
        self.entries.iter().filter_map(|e| e.decode().ok())
    }

    pub fn count_kind(&self, kind: &str) -> usize {
        self.events().filter(|e| e.kind() == kind).count()
    }

    /// Replays rule events for `node` into the table it should hold. Fails
    /// if the chain does not verify.
    pub fn expected_switch_state(&self, node: &NodeId) -> Result<TrustedReport, PolicyError> {
        if let Some(seq) = self.first_break() {
            return Err(PolicyError::BrokenChain(seq));
        }
        let mut table = FlowTable::new();
        for e in &self.entries {
            match e.decode()? {
                AlcEvent::RuleInstalled { node: n, rule } if &n == node => {
                    table.apply(FlowMod::Add { rule });
                }
                AlcEvent::RuleDeleted { node: n, rule_id } if &n == node => {
                    table.apply(FlowMod::Delete { rule_id });
                }
                _ => {}
            }
        }
        let mut rules = table.reported();
        canonical_order(&mut rules);
        Ok(TrustedReport {
            node_id: node.clone(),
            rules,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let text = std::str::from_utf8(&e.event)
                .map_err(|err| std::io::Error::new(std::io::ErrorKind::InvalidData, err))?;
            let raw = RawValue::from_string(text.to_string())?;
            let line = EntryLine {
                seq: e.seq,
                event: &raw,
                prev_hash: hex::encode(e.prev_hash),
                entry_hash: hex::encode(e.entry_hash),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("entries are UTF-8")
    }

    /// Loads a persisted log without verifying it.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, PolicyError> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| PolicyError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EntryLine = serde_json::from_str(&line)?;
            let decode32 = |s: &str| -> Result<[u8; 32], PolicyError> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s, &mut out)
                    .map_err(|e| PolicyError::Io(format!("bad hash: {e}")))?;
                Ok(out)
            };
            entries.push(AlcEntry {
                seq: parsed.seq,
                event: parsed.event.get().as_bytes().to_vec(),
                prev_hash: decode32(&parsed.prev_hash)?,
                entry_hash: decode32(&parsed.entry_hash)?,
            });
        }
        Ok(ActivityLog { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{Action, FlowKey};

    fn rule(id: &str, prio: u16) -> FlowRule {
        FlowRule::new(
            id,
            FlowKey {
                dst_ip: Some(format!("10.0.0.{prio}").parse().unwrap()),
                ..FlowKey::any()
            },
            Action::Drop,
            prio,
        )
    }

    fn install(log: &mut ActivityLog, node: &str, r: FlowRule) {
        log.append(&AlcEvent::RuleInstalled {
            node: node.into(),
            rule: r,
        });
    }

    #[test]
    fn fold_applies_deletes() {
        let mut log = ActivityLog::new();
        install(&mut log, "s1", rule("r1", 1));
        install(&mut log, "s1", rule("r2", 2));
        install(&mut log, "s2", rule("other", 3));
        log.append(&AlcEvent::RuleDeleted {
            node: "s1".into(),
            rule_id: "r1".into(),
        });
        let report = log.expected_switch_state(&"s1".into()).unwrap();
        let ids: Vec<&str> = report.rules.iter().map(|r| r.rule_id.as_str()).collect();
        assert_eq!(ids, ["r2"]);
    }

    #[test]
    fn empty_log_gives_empty_report() {
        let log = ActivityLog::new();
        assert!(log.verify());
        assert!(log
            .expected_switch_state(&"s1".into())
            .unwrap()
            .rules
            .is_empty());
    }

    #[test]
    fn chain_links_and_sequence() {
        let mut log = ActivityLog::new();
        for i in 0..5 {
            install(&mut log, "s1", rule(&format!("r{i}"), i));
        }
        assert_eq!(log.entries()[0].prev_hash, GENESIS_HASH);
        for w in log.entries().windows(2) {
            assert_eq!(w[1].seq, w[0].seq + 1);
            assert_eq!(w[1].prev_hash, w[0].entry_hash);
        }
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let mut log = ActivityLog::new();
        install(&mut log, "s1", rule("r1", 1));
        log.append(&AlcEvent::ProfileExtracted {
            user_id: "alice".into(),
            node: "s1".into(),
        });
        for entry in 0..log.len() {
            for pos in 0..log.entries()[entry].event.len() {
                let mut copy = log.clone();
                copy.entries_mut()[entry].event[pos] ^= 0x01;
                assert!(!copy.verify(), "flip at entry {entry} byte {pos} undetected");
            }
        }
    }

    #[test]
    fn broken_chain_refuses_replay() {
        let mut log = ActivityLog::new();
        install(&mut log, "s1", rule("r1", 1));
        log.entries_mut()[0].event[5] ^= 0x20;
        assert!(matches!(
            log.expected_switch_state(&"s1".into()),
            Err(PolicyError::BrokenChain(0))
        ));
    }

    #[test]
    fn jsonl_round_trip_keeps_chain_valid() {
        let mut log = ActivityLog::new();
        install(&mut log, "s1", rule("r1", 1));
        log.append(&AlcEvent::AuditPerformed {
            node: "s1".into(),
            clean: true,
        });
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let back = ActivityLog::read_jsonl(text.as_bytes()).unwrap();
        assert!(back.verify());
        assert_eq!(back.entries(), log.entries());

        let tampered = text.replacen("\"clean\":true", "\"clean\":false", 1);
        let back = ActivityLog::read_jsonl(tampered.as_bytes()).unwrap();
        assert!(!back.verify());
    }
}
