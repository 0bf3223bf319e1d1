use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::fabric::{DropReason, Fabric, NodeId, Outcome, Packet};
use crate::sma::{Delivery, Sma};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounts {
    pub injected: u64,
    pub delivered: u64,
    pub dropped_at_entry: u64,
    pub dropped_in_slice: u64,
}

impl PacketCounts {
    pub fn conserved(&self) -> bool {
        self.injected == self.delivered + self.dropped_at_entry + self.dropped_in_slice
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Fixed bytes; `{seq}` is replaced by the packet's sequence number.
    Text(String),
    Random(usize),
}

/// Constant-rate packet source from one host to one destination host.
#[derive(Clone, Debug)]
pub struct TrafficSource {
    pub host: NodeId,
    pub dst: NodeId,
    pub start_us: u64,
    pub interval_us: u64,
    pub count: usize,
    pub jitter_us: u64,
    pub payload: Payload,
}

impl TrafficSource {
    pub fn new(host: &str, dst: &str, start_us: u64, interval_us: u64, count: usize) -> Self {
        TrafficSource {
            host: NodeId::new(host),
            dst: NodeId::new(dst),
            start_us,
            interval_us,
            count,
            jitter_us: 0,
            payload: Payload::Text("GET /records/{seq} HTTP/1.1\r\nAccept: */*\r\n\r\n".into()),
        }
    }

    pub fn jitter(mut self, jitter_us: u64) -> Self {
        self.jitter_us = jitter_us;
        self
    }

    pub fn payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }
}

/// Builds a packet from `from` to the host `to` at time `t`.
pub(crate) fn packet_between(
    fabric: &Fabric,
    from: &NodeId,
    to: &NodeId,
    payload: Vec<u8>,
    t: u64,
) -> Result<Packet, ScenarioError> {
    let s = fabric.node(from)?;
    let d = fabric.node(to)?;
    let missing = |n: &NodeId| ScenarioError::MissingNode(format!("{n} (address)"));
    Ok(Packet {
        src_ip: s.ip.ok_or_else(|| missing(from))?,
        dst_ip: d.ip.ok_or_else(|| missing(to))?,
        src_mac: s.mac.clone().ok_or_else(|| missing(from))?,
        dst_mac: d.mac.clone().ok_or_else(|| missing(to))?,
        slice: None,
        payload,
        flow_id: format!("{}-{}", from.as_str().to_lowercase(), to.as_str().to_lowercase()),
        time_us: t,
    })
}

/// Expands the sources into one time-ordered packet list. Ties keep source
/// order, so the result depends only on the sources and the seed.
pub fn schedule(fabric: &Fabric, sources: &[TrafficSource], seed: u64) -> Result<Vec<(NodeId, Packet)>, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (si, src) in sources.iter().enumerate() {
        for seq in 0..src.count {
            let jitter = if src.jitter_us > 0 { rng.gen_range(0..=src.jitter_us) } else { 0 };
            let t = src.start_us + seq as u64 * src.interval_us + jitter;
            let payload = match &src.payload {
                Payload::Text(s) => s.replace("{seq}", &seq.to_string()).into_bytes(),
                Payload::Random(n) => {
                    let mut b = vec![0u8; *n];
                    rng.fill_bytes(&mut b);
                    b
                }
            };
            let p = packet_between(fabric, &src.host, &src.dst, payload, t)?;
            out.push((si, seq, src.host.clone(), p));
        }
    }
    out.sort_by_key(|(si, seq, _, p)| (p.time_us, *si, *seq));
    Ok(out.into_iter().map(|(_, _, h, p)| (h, p)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Fate {
    Delivered,
    DroppedAtEntry,
    DroppedInSlice,
}

#[derive(Clone, Debug)]
pub(crate) struct Record {
    pub host: NodeId,
    pub fate: Fate,
    pub reason: Option<String>,
}

/// Packet accounting for one run.
#[derive(Clone, Debug, Default)]
pub(crate) struct Tally {
    pub records: Vec<Record>,
    pub total: PacketCounts,
    pub per_host: BTreeMap<String, PacketCounts>,
    pub drop_reasons: BTreeMap<String, u64>,
}

pub(crate) fn drop_label(reason: &DropReason) -> String {
    match reason {
        DropReason::Rule { rule_id } => format!("rule:{rule_id}"),
        DropReason::TableMiss => "table_miss".into(),
        DropReason::SliceMismatch { .. } => "slice_mismatch".into(),
        DropReason::HopLimit => "hop_limit".into(),
        DropReason::PortDown { .. } => "port_down".into(),
        DropReason::Function { function, detail } => format!("{function}:{detail}"),
    }
}

impl Tally {
    pub fn host(&self, host: &str) -> PacketCounts {
        self.per_host.get(host).copied().unwrap_or_default()
    }

    pub fn of<'a>(&'a self, host: &'a str) -> impl Iterator<Item = &'a Record> + 'a {
        self.records.iter().filter(move |r| r.host.as_str() == host)
    }

    /// Sends one packet through the SMA and books its fate. A drop at the
    /// switch the host is attached to counts as an entry drop.
    pub fn send(&mut self, sma: &mut Sma, host: &NodeId, packet: Packet) -> Result<Delivery, ScenarioError> {
        let (entry, _) = sma.fabric().attachment(host)?;
        let d = sma.send(host, packet)?;
        let (fate, reason) = match &d.trace.outcome {
            Outcome::Delivered { .. } => (Fate::Delivered, None),
            Outcome::Dropped { node, reason } if *node == entry => (Fate::DroppedAtEntry, Some(drop_label(reason))),
            Outcome::Dropped { reason, .. } => (Fate::DroppedInSlice, Some(drop_label(reason))),
            // the SMA resolves every punt before returning
            Outcome::Punted { .. } => (Fate::DroppedAtEntry, Some("unresolved_punt".to_string())),
        };
        let c = self.per_host.entry(host.to_string()).or_default();
        for c in [c, &mut self.total] {
            c.injected += 1;
            match fate {
                Fate::Delivered => c.delivered += 1,
                Fate::DroppedAtEntry => c.dropped_at_entry += 1,
                Fate::DroppedInSlice => c.dropped_in_slice += 1,
            }
        }
        if let Some(r) = &reason {
            *self.drop_reasons.entry(r.clone()).or_default() += 1;
        }
        self.records.push(Record {
            host: host.clone(),
            fate,
            reason,
        });
        Ok(d)
    }

    pub fn send_all(&mut self, sma: &mut Sma, packets: Vec<(NodeId, Packet)>) -> Result<(), ScenarioError> {
        for (h, p) in packets {
            self.send(sma, &h, p)?;
        }
        Ok(())
    }
}
