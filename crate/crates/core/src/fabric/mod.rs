//! Simulated network substrate.
//!
//! Edge switches stand in for gNodeBs, core switches carry slice traffic and
//! host nodes are UEs or service endpoints. Slices are VLAN tags. Every switch
//! has one flow table; a packet is matched highest-priority-first and either
//! forwarded (tagged with its slice), dropped, or punted to the controller
//! with its header only.
//!
//! Time is virtual and measured in microseconds. Each link hop adds the
//! link's latency; security functions hooked into the datapath add their own
//! processing cost.

mod table;
mod topology;
mod types;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use table::{FlowMod, FlowTable, TableDelta};
pub use topology::{LinkSpec, NodeKind, NodeSpec, SliceSpec, TopologyDocument};
pub use types::{
    canonical_order, Action, AttestationReport, FlowKey, FlowRule, MacAddr, NodeId, Packet,
    PacketHeader, PortId, Provenance, ReportedRule, SliceId, SwitchStateReport,
};

/// Upper bound on switch traversals for one packet.
pub const MAX_HOPS: usize = 64;

/// Priority of the table-miss rule that punts new flows at edge switches.
pub const DEFAULT_PUNT_PRIORITY: u16 = 0;
pub const DEFAULT_PUNT_RULE_ID: &str = "default-punt";

const TAMPER_MARKER: &[u8] = b"|TAMPERED";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FabricError {
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("slice id {0} outside VLAN range 1-4094")]
    SliceOutOfRange(i64),
    #[error("duplicate slice {0}")]
    DuplicateSlice(u16),
    #[error("cannot parse slice label {0:?}")]
    BadSliceLabel(String),
    #[error("malformed MAC address {0:?}")]
    BadMac(String),
    #[error("invalid link {a} <-> {b}: {reason}")]
    InvalidLink { a: String, b: String, reason: String },
    #[error("slice member {0} is not a host")]
    SliceMemberNotHost(String),
    #[error("node {0} is not a switch")]
    NotASwitch(String),
    #[error("node {0} is not a host")]
    NotAHost(String),
    #[error("port {port} does not exist on {node}")]
    UnknownPort { node: String, port: u16 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortPeer {
    pub node: NodeId,
    pub port: PortId,
    pub latency_us: u64,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub ip: Option<Ipv4Addr>,
    pub mac: Option<MacAddr>,
    pub dpid: Option<u64>,
    pub software: String,
    pub tampered: bool,
    expected_hash: [u8; 32],
    ports: BTreeMap<PortId, PortPeer>,
    table: FlowTable,
}

impl Node {
    pub fn ports(&self) -> &BTreeMap<PortId, PortPeer> {
        &self.ports
    }

    pub fn table(&self) -> &FlowTable {
        &self.table
    }

    pub fn expected_hash(&self) -> [u8; 32] {
        self.expected_hash
    }

    fn descriptor(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Descriptor<'a> {
            id: &'a NodeId,
            kind: NodeKind,
            ip: Option<Ipv4Addr>,
            mac: Option<&'a MacAddr>,
            dpid: Option<u64>,
            software: &'a str,
        }
        serde_json::to_vec(&Descriptor {
            id: &self.id,
            kind: self.kind,
            ip: self.ip,
            mac: self.mac.as_ref(),
            dpid: self.dpid,
            software: &self.software,
        })
        .expect("descriptor serialization is infallible")
    }

    fn measure(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.descriptor());
        if self.tampered {
            h.update(TAMPER_MARKER);
        }
        h.finalize().into()
    }

    fn next_free_port(&self) -> PortId {
        PortId(self.ports.keys().next_back().map_or(1, |p| p.0 + 1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub id: SliceId,
    pub name: String,
    pub hosts: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropReason {
    Rule { rule_id: String },
    TableMiss,
    SliceMismatch { slice: Option<SliceId> },
    HopLimit,
    PortDown { port: PortId },
    Function { function: String, detail: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Delivered { host: NodeId },
    Dropped { node: NodeId, reason: DropReason },
    Punted { node: NodeId },
}

/// What a switch sends to the controller on a punt: header only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub node: NodeId,
    pub in_port: PortId,
    pub header: PacketHeader,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Arrive {
        node: NodeId,
        in_port: PortId,
        time_us: u64,
    },
    Matched {
        node: NodeId,
        rule_id: Option<String>,
    },
    Function {
        node: NodeId,
        function: String,
        verdict: String,
        time_us: u64,
    },
    Hop {
        from: NodeId,
        to: NodeId,
        slice: Option<SliceId>,
        #[serde(with = "hex::serde")]
        bytes: Vec<u8>,
        time_us: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingTrace {
    pub events: Vec<TraceEvent>,
    pub outcome: Outcome,
    pub controller_event: Option<ControllerEvent>,
    /// The packet as it stands at the end of the trace (payload may have been
    /// transformed by hooks).
    pub final_packet: Packet,
}

impl ForwardingTrace {
    pub fn delivered(&self) -> bool {
        matches!(self.outcome, Outcome::Delivered { .. })
    }

    pub fn hops(&self) -> impl Iterator<Item = (&NodeId, &NodeId, &[u8])> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Hop { from, to, bytes, .. } => Some((from, to, bytes.as_slice())),
            _ => None,
        })
    }
}

pub struct IngressContext<'a> {
    pub node: &'a NodeId,
    pub kind: NodeKind,
    pub in_port: PortId,
    /// Set when the packet arrived on an access port from this host.
    pub from_host: Option<&'a NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HookVerdict {
    Continue,
    Drop { function: String, detail: String },
}

/// Inline processing attached to the datapath (security functions).
pub trait DatapathHook {
    /// Called when a packet arrives at a switch, before table lookup.
    fn on_ingress(
        &mut self,
        _ctx: &IngressContext<'_>,
        _packet: &mut Packet,
        _events: &mut Vec<TraceEvent>,
    ) -> HookVerdict {
        HookVerdict::Continue
    }

    /// Called before a switch puts a packet on a link.
    fn on_send(
        &mut self,
        _node: &NodeId,
        _next: &NodeId,
        _next_is_host: bool,
        _packet: &mut Packet,
        _events: &mut Vec<TraceEvent>,
    ) -> HookVerdict {
        HookVerdict::Continue
    }
}

/// Hook that does nothing.
pub struct PlainDatapath;

impl DatapathHook for PlainDatapath {}

/// One step of a computed path: the switch and the port it sends out of.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathHop {
    pub node: NodeId,
    pub out_port: PortId,
}

#[derive(Clone, Debug, Default)]
pub struct Fabric {
    nodes: BTreeMap<NodeId, Node>,
    slices: BTreeMap<SliceId, Slice>,
}

impl Fabric {
    /// Builds a fabric from a topology document. Edge switches start with a
    /// single punt-to-controller rule; all other tables start empty.
    pub fn build(doc: &TopologyDocument) -> Result<Self, FabricError> {
        let mut nodes = BTreeMap::new();
        for spec in &doc.nodes {
            let id = NodeId::new(spec.id.clone());
            if nodes.contains_key(&id) {
                return Err(FabricError::DuplicateNode(spec.id.clone()));
            }
            let software = spec
                .software
                .clone()
                .unwrap_or_else(|| format!("{:?}-image-1.0", spec.kind).to_lowercase());
            let mut node = Node {
                id: id.clone(),
                kind: spec.kind,
                ip: spec.ip,
                mac: spec.mac.clone(),
                dpid: spec.dpid,
                software,
                tampered: false,
                expected_hash: [0; 32],
                ports: BTreeMap::new(),
                table: FlowTable::new(),
            };
            // golden value is the untampered measurement
            node.expected_hash = node.measure();
            node.tampered = spec.tampered;
            if spec.kind == NodeKind::Edge {
                node.table.apply(FlowMod::Add {
                    rule: default_punt_rule(),
                });
            }
            nodes.insert(id, node);
        }

        let mut fabric = Fabric {
            nodes,
            slices: BTreeMap::new(),
        };
        for link in &doc.links {
            fabric.add_link(&link.a, &link.b, link.latency_ms * 1000)?;
        }

        for s in &doc.slices {
            if !(SliceId::MIN as i64..=SliceId::MAX as i64).contains(&s.vlan) {
                return Err(FabricError::SliceOutOfRange(s.vlan));
            }
            let id = SliceId::new(s.vlan as u16)?;
            if fabric.slices.contains_key(&id) {
                return Err(FabricError::DuplicateSlice(id.vlan()));
            }
            let mut hosts = BTreeSet::new();
            for h in &s.hosts {
                let node = fabric
                    .nodes
                    .get(&NodeId::new(h.clone()))
                    .ok_or_else(|| FabricError::UnknownNode(h.clone()))?;
                if node.kind != NodeKind::Host {
                    return Err(FabricError::SliceMemberNotHost(h.clone()));
                }
                hosts.insert(node.id.clone());
            }
            fabric.slices.insert(
                id,
                Slice {
                    id,
                    name: s.name.clone(),
                    hosts,
                },
            );
        }
        Ok(fabric)
    }

    fn add_link(&mut self, a: &str, b: &str, latency_us: u64) -> Result<(), FabricError> {
        let (ida, idb) = (NodeId::new(a), NodeId::new(b));
        let kind_a = self.node(&ida)?.kind;
        let kind_b = self.node(&idb)?.kind;
        let invalid = |reason: &str| FabricError::InvalidLink {
            a: a.into(),
            b: b.into(),
            reason: reason.into(),
        };
        if ida == idb {
            return Err(invalid("self loop"));
        }
        if !kind_a.is_switch() && !kind_b.is_switch() {
            return Err(invalid("hosts must attach to a switch"));
        }
        for (host, kind) in [(&ida, kind_a), (&idb, kind_b)] {
            if !kind.is_switch() && !self.nodes[host].ports.is_empty() {
                return Err(invalid("host already attached"));
            }
        }
        let pa = self.nodes[&ida].next_free_port();
        let pb = self.nodes[&idb].next_free_port();
        self.nodes.get_mut(&ida).unwrap().ports.insert(
            pa,
            PortPeer {
                node: idb.clone(),
                port: pb,
                latency_us,
            },
        );
        self.nodes.get_mut(&idb).unwrap().ports.insert(
            pb,
            PortPeer {
                node: ida,
                port: pa,
                latency_us,
            },
        );
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Result<&Node, FabricError> {
        self.nodes
            .get(id)
            .ok_or_else(|| FabricError::UnknownNode(id.to_string()))
    }

    fn switch_mut(&mut self, id: &NodeId) -> Result<&mut Node, FabricError> {
        let node = self
            .nodes
            .get_mut(id)
            .ok_or_else(|| FabricError::UnknownNode(id.to_string()))?;
        if !node.kind.is_switch() {
            return Err(FabricError::NotASwitch(id.to_string()));
        }
        Ok(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn switches(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind.is_switch())
    }

    pub fn edges(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Edge)
    }

    pub fn slices(&self) -> &BTreeMap<SliceId, Slice> {
        &self.slices
    }

    pub fn slice_ids(&self) -> BTreeSet<SliceId> {
        self.slices.keys().copied().collect()
    }

    /// Resolves a node by id, falling back to a numeric datapath id.
    pub fn resolve(&self, name: &str) -> Option<NodeId> {
        let id = NodeId::new(name);
        if self.nodes.contains_key(&id) {
            return Some(id);
        }
        let dpid: u64 = name.parse().ok()?;
        self.nodes
            .values()
            .find(|n| n.dpid == Some(dpid))
            .map(|n| n.id.clone())
    }

    pub fn host_by_ip(&self, ip: Ipv4Addr) -> Option<&Node> {
        self.nodes
            .values()
            .find(|n| n.kind == NodeKind::Host && n.ip == Some(ip))
    }

    pub fn host_slices(&self, host: &NodeId) -> BTreeSet<SliceId> {
        self.slices
            .values()
            .filter(|s| s.hosts.contains(host))
            .map(|s| s.id)
            .collect()
    }

    /// The switch and switch port a host hangs off.
    pub fn attachment(&self, host: &NodeId) -> Result<(NodeId, PortId), FabricError> {
        let node = self.node(host)?;
        if node.kind != NodeKind::Host {
            return Err(FabricError::NotAHost(host.to_string()));
        }
        node.ports
            .values()
            .next()
            .map(|peer| (peer.node.clone(), peer.port))
            .ok_or_else(|| FabricError::InvalidLink {
                a: host.to_string(),
                b: "-".into(),
                reason: "host is not attached".into(),
            })
    }

    /// Moves a host's access link to another switch, keeping its latency.
    pub fn relink_host(
        &mut self,
        host: &NodeId,
        new_switch: &NodeId,
    ) -> Result<(NodeId, PortId), FabricError> {
        if !self.node(new_switch)?.kind.is_switch() {
            return Err(FabricError::NotASwitch(new_switch.to_string()));
        }
        let (old_switch, old_port) = self.attachment(host)?;
        let latency_us = self.nodes[&old_switch].ports[&old_port].latency_us;
        self.nodes.get_mut(&old_switch).unwrap().ports.remove(&old_port);
        self.nodes.get_mut(host).unwrap().ports.clear();
        self.add_link(host.as_str(), new_switch.as_str(), latency_us)?;
        self.attachment(host)
    }

    pub fn set_tampered(&mut self, node: &NodeId, tampered: bool) -> Result<(), FabricError> {
        self.nodes
            .get_mut(node)
            .ok_or_else(|| FabricError::UnknownNode(node.to_string()))?
            .tampered = tampered;
        Ok(())
    }

    pub fn expected_hash(&self, node: &NodeId) -> Result<[u8; 32], FabricError> {
        Ok(self.node(node)?.expected_hash)
    }

    /// The node's attestation: a digest of its software descriptor (plus a
    /// tamper marker when compromised) and the challenge nonce echoed back.
    pub fn measure_attestation(
        &self,
        node: &NodeId,
        nonce: [u8; 16],
    ) -> Result<AttestationReport, FabricError> {
        let n = self.node(node)?;
        Ok(AttestationReport {
            node_id: n.id.clone(),
            measured_hash: n.measure(),
            nonce,
        })
    }

    pub fn apply_flow_mod(
        &mut self,
        node: &NodeId,
        flow_mod: FlowMod,
        provenance: Provenance,
    ) -> Result<TableDelta, FabricError> {
        let sw = self.switch_mut(node)?;
        let flow_mod = match flow_mod {
            FlowMod::Add { mut rule } => {
                rule.provenance = provenance;
                FlowMod::Add { rule }
            }
            del => del,
        };
        Ok(sw.table.apply(flow_mod))
    }

    pub fn report_flow_rules(
        &self,
        node: &NodeId,
        report_time_us: u64,
    ) -> Result<SwitchStateReport, FabricError> {
        let n = self.node(node)?;
        if !n.kind.is_switch() {
            return Err(FabricError::NotASwitch(node.to_string()));
        }
        Ok(SwitchStateReport {
            node_id: n.id.clone(),
            rules: n.table.reported(),
            report_time_us,
        })
    }

    pub fn inject_packet(
        &self,
        packet: Packet,
        ingress: (&NodeId, PortId),
    ) -> Result<ForwardingTrace, FabricError> {
        self.inject_packet_with(packet, ingress, &mut PlainDatapath)
    }

    pub fn inject_packet_with(
        &self,
        packet: Packet,
        ingress: (&NodeId, PortId),
        hook: &mut dyn DatapathHook,
    ) -> Result<ForwardingTrace, FabricError> {
        self.forward(packet, ingress, hook, false)
    }

    /// Controller packet-out through the table at `ingress`. The ingress hook
    /// is skipped at the first switch since the packet was already processed
    /// there before it was punted.
    pub fn packet_out(
        &self,
        packet: Packet,
        ingress: (&NodeId, PortId),
        hook: &mut dyn DatapathHook,
    ) -> Result<ForwardingTrace, FabricError> {
        self.forward(packet, ingress, hook, true)
    }

    fn forward(
        &self,
        mut packet: Packet,
        ingress: (&NodeId, PortId),
        hook: &mut dyn DatapathHook,
        skip_first_ingress: bool,
    ) -> Result<ForwardingTrace, FabricError> {
        let start = self.node(ingress.0)?;
        if !start.kind.is_switch() {
            return Err(FabricError::NotASwitch(ingress.0.to_string()));
        }
        if !start.ports.contains_key(&ingress.1) {
            return Err(FabricError::UnknownPort {
                node: ingress.0.to_string(),
                port: ingress.1 .0,
            });
        }

        let mut events = Vec::new();
        let mut node = start;
        let mut in_port = ingress.1;
        let finish = |events, outcome, controller_event, packet| ForwardingTrace {
            events,
            outcome,
            controller_event,
            final_packet: packet,
        };

        for hop in 0..MAX_HOPS {
            events.push(TraceEvent::Arrive {
                node: node.id.clone(),
                in_port,
                time_us: packet.time_us,
            });
            let from_host = node
                .ports
                .get(&in_port)
                .map(|p| &p.node)
                .filter(|peer| self.nodes[*peer].kind == NodeKind::Host);
            if !(skip_first_ingress && hop == 0) {
                let ctx = IngressContext {
                    node: &node.id,
                    kind: node.kind,
                    in_port,
                    from_host,
                };
                if let HookVerdict::Drop { function, detail } =
                    hook.on_ingress(&ctx, &mut packet, &mut events)
                {
                    let reason = DropReason::Function { function, detail };
                    let outcome = Outcome::Dropped {
                        node: node.id.clone(),
                        reason,
                    };
                    return Ok(finish(events, outcome, None, packet));
                }
            }

            let rule = node.table.lookup(&packet);
            events.push(TraceEvent::Matched {
                node: node.id.clone(),
                rule_id: rule.map(|r| r.rule_id.clone()),
            });
            let Some(rule) = rule else {
                let outcome = Outcome::Dropped {
                    node: node.id.clone(),
                    reason: DropReason::TableMiss,
                };
                return Ok(finish(events, outcome, None, packet));
            };
            match &rule.action {
                Action::PuntToController => {
                    let ev = ControllerEvent {
                        node: node.id.clone(),
                        in_port,
                        header: packet.header(),
                    };
                    let outcome = Outcome::Punted {
                        node: node.id.clone(),
                    };
                    return Ok(finish(events, outcome, Some(ev), packet));
                }
                Action::Drop => {
                    let outcome = Outcome::Dropped {
                        node: node.id.clone(),
                        reason: DropReason::Rule {
                            rule_id: rule.rule_id.clone(),
                        },
                    };
                    return Ok(finish(events, outcome, None, packet));
                }
                Action::Forward { port, slice } => {
                    let Some(peer) = node.ports.get(port) else {
                        let outcome = Outcome::Dropped {
                            node: node.id.clone(),
                            reason: DropReason::PortDown { port: *port },
                        };
                        return Ok(finish(events, outcome, None, packet));
                    };
                    packet.slice = Some(*slice);
                    let next = &self.nodes[&peer.node];
                    let next_is_host = next.kind == NodeKind::Host;
                    if let HookVerdict::Drop { function, detail } =
                        hook.on_send(&node.id, &next.id, next_is_host, &mut packet, &mut events)
                    {
                        let outcome = Outcome::Dropped {
                            node: node.id.clone(),
                            reason: DropReason::Function { function, detail },
                        };
                        return Ok(finish(events, outcome, None, packet));
                    }
                    packet.time_us += peer.latency_us;
                    events.push(TraceEvent::Hop {
                        from: node.id.clone(),
                        to: next.id.clone(),
                        slice: packet.slice,
                        bytes: packet.payload.clone(),
                        time_us: packet.time_us,
                    });
                    if next_is_host {
                        let accepts = packet
                            .slice
                            .and_then(|s| self.slices.get(&s))
                            .is_some_and(|s| s.hosts.contains(&next.id));
                        let outcome = if accepts {
                            packet.slice = None;
                            Outcome::Delivered {
                                host: next.id.clone(),
                            }
                        } else {
                            Outcome::Dropped {
                                node: next.id.clone(),
                                reason: DropReason::SliceMismatch {
                                    slice: packet.slice,
                                },
                            }
                        };
                        return Ok(finish(events, outcome, None, packet));
                    }
                    in_port = peer.port;
                    node = next;
                }
            }
        }
        let outcome = Outcome::Dropped {
            node: node.id.clone(),
            reason: DropReason::HopLimit,
        };
        Ok(finish(events, outcome, None, packet))
    }

    /// Lowest-latency switch path from `from` to the switch serving `host`,
    /// ending with the port facing the host. Ties resolve by fewer hops and
    /// then by node id.
    pub fn shortest_path(
        &self,
        from: &NodeId,
        host: &NodeId,
    ) -> Result<Option<Vec<PathHop>>, FabricError> {
        if !self.node(from)?.kind.is_switch() {
            return Err(FabricError::NotASwitch(from.to_string()));
        }
        let (target, host_port) = self.attachment(host)?;

        let mut best: HashMap<&NodeId, (u64, usize)> = HashMap::new();
        let mut prev: HashMap<&NodeId, (&NodeId, PortId)> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(from, (0, 0));
        heap.push(Reverse((0u64, 0usize, from)));
        while let Some(Reverse((cost, hops, id))) = heap.pop() {
            if best.get(id).is_some_and(|&b| b < (cost, hops)) {
                continue;
            }
            if *id == target {
                break;
            }
            let node = &self.nodes[id];
            // hosts are leaves; never route through one
            if !node.kind.is_switch() {
                continue;
            }
            for (port, peer) in &node.ports {
                let cand = (cost + peer.latency_us, hops + 1);
                if best.get(&peer.node).map_or(true, |&b| cand < b) {
                    best.insert(&peer.node, cand);
                    prev.insert(&peer.node, (id, *port));
                    heap.push(Reverse((cand.0, cand.1, &peer.node)));
                }
            }
        }
        if !best.contains_key(&target) {
            return Ok(None);
        }
        let mut path = vec![PathHop {
            node: target.clone(),
            out_port: host_port,
        }];
        let mut cur = &target;
        while let Some((p, port)) = prev.get(cur) {
            path.push(PathHop {
                node: (*p).clone(),
                out_port: *port,
            });
            cur = p;
        }
        path.reverse();
        Ok(Some(path))
    }
}

pub fn default_punt_rule() -> FlowRule {
    FlowRule::new(
        DEFAULT_PUNT_RULE_ID,
        FlowKey::any(),
        Action::PuntToController,
        DEFAULT_PUNT_PRIORITY,
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn packet(src: &str, dst: &str) -> Packet {
        Packet {
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_mac: "00:09:00:aa".parse().unwrap(),
            dst_mac: "00:09:00:bb".parse().unwrap(),
            slice: None,
            payload: b"hello".to_vec(),
            flow_id: "78b34x".into(),
            time_us: 0,
        }
    }

    fn doc(text: &str) -> TopologyDocument {
        TopologyDocument::from_json(text).unwrap()
    }

    pub(crate) fn fig2() -> TopologyDocument {
        doc(r#"{
            "nodes": [
                {"id": "OVS1", "kind": "edge", "dpid": 3346},
                {"id": "CORE", "kind": "core"},
                {"id": "UE1", "kind": "host", "ip": "10.0.0.1", "mac": "00:09:00:aa"},
                {"id": "SRV1", "kind": "host", "ip": "10.0.0.8", "mac": "00:09:00:bb"},
                {"id": "SRV2", "kind": "host", "ip": "10.0.0.5"},
                {"id": "SRV3", "kind": "host", "ip": "10.0.0.6"},
                {"id": "SRV4", "kind": "host", "ip": "10.0.0.7"}
            ],
            "links": [
                {"a": "UE1", "b": "OVS1"},
                {"a": "OVS1", "b": "CORE", "latency_ms": 2},
                {"a": "CORE", "b": "SRV1"},
                {"a": "CORE", "b": "SRV2"},
                {"a": "CORE", "b": "SRV3"},
                {"a": "CORE", "b": "SRV4"}
            ],
            "slices": [
                {"vlan": 100, "name": "home", "hosts": ["SRV2"]},
                {"vlan": 200, "name": "enterprise", "hosts": ["SRV1"]},
                {"vlan": 300, "name": "healthcare", "hosts": ["SRV3"]},
                {"vlan": 400, "name": "financial", "hosts": ["SRV4"]}
            ]
        }"#)
    }

    fn vlan(v: u16) -> SliceId {
        SliceId::new(v).unwrap()
    }

    fn install_path(f: &mut Fabric, dst: &str, slice: SliceId) {
        let host = f.host_by_ip(dst.parse().unwrap()).unwrap().id.clone();
        let path = f.shortest_path(&"OVS1".into(), &host).unwrap().unwrap();
        for (i, hop) in path.iter().enumerate() {
            let rule = FlowRule::new(
                format!("fwd-{}", hop.node),
                FlowKey {
                    dst_ip: Some(dst.parse().unwrap()),
                    slice: (i > 0).then_some(slice),
                    ..FlowKey::any()
                },
                Action::Forward {
                    port: hop.out_port,
                    slice,
                },
                100,
            );
            f.apply_flow_mod(&hop.node, FlowMod::Add { rule }, Provenance::Controller)
                .unwrap();
        }
    }

    #[test]
    fn builds_fig2_with_default_punt_rules() {
        let f = Fabric::build(&fig2()).unwrap();
        assert_eq!(f.slices().len(), 4);
        assert!(f.slice_ids().contains(&vlan(200)));
        let edge = f.node(&"OVS1".into()).unwrap();
        assert_eq!(edge.table().len(), 1);
        assert_eq!(
            edge.table().rules().next().unwrap().action,
            Action::PuntToController
        );
        assert!(f.node(&"CORE".into()).unwrap().table().is_empty());
        assert_eq!(f.resolve("3346"), Some(NodeId::new("OVS1")));
    }

    #[test]
    fn empty_topology_is_valid() {
        let f = Fabric::build(&TopologyDocument::default()).unwrap();
        assert_eq!(f.nodes().count(), 0);
        assert!(f.slices().is_empty());
    }

    #[test]
    fn build_errors() {
        let dup = doc(r#"{"nodes":[{"id":"OVS1","kind":"edge"},{"id":"OVS1","kind":"core"}]}"#);
        assert_eq!(
            Fabric::build(&dup).unwrap_err(),
            FabricError::DuplicateNode("OVS1".into())
        );
        let dangling = doc(r#"{"nodes":[{"id":"OVS1","kind":"edge"}],"links":[{"a":"OVS1","b":"X"}]}"#);
        assert_eq!(
            Fabric::build(&dangling).unwrap_err(),
            FabricError::UnknownNode("X".into())
        );
        let vlan_range = doc(r#"{"slices":[{"vlan":4095,"name":"x"}]}"#);
        assert_eq!(
            Fabric::build(&vlan_range).unwrap_err(),
            FabricError::SliceOutOfRange(4095)
        );
    }

    #[test]
    fn first_packet_is_punted_with_header_only() {
        let f = Fabric::build(&fig2()).unwrap();
        let (sw, port) = f.attachment(&"UE1".into()).unwrap();
        let trace = f.inject_packet(packet("10.0.0.1", "10.0.0.8"), (&sw, port)).unwrap();
        assert_eq!(trace.outcome, Outcome::Punted { node: "OVS1".into() });
        let ev = trace.controller_event.unwrap();
        assert_eq!(ev.header.payload_len, 5);
        assert_eq!(ev.header.dst_ip, "10.0.0.8".parse::<Ipv4Addr>().unwrap());
    }

    #[test]
    fn forward_rule_delivers_with_vlan_tag_on_every_hop() {
        let mut f = Fabric::build(&fig2()).unwrap();
        install_path(&mut f, "10.0.0.8", vlan(200));
        let (sw, port) = f.attachment(&"UE1".into()).unwrap();
        let trace = f.inject_packet(packet("10.0.0.1", "10.0.0.8"), (&sw, port)).unwrap();
        assert_eq!(trace.outcome, Outcome::Delivered { host: "SRV1".into() });
        let hops: Vec<_> = trace
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Hop { slice, time_us, .. } => Some((*slice, *time_us)),
                _ => None,
            })
            .collect();
        assert_eq!(hops.len(), 2);
        assert!(hops.iter().all(|(s, _)| *s == Some(vlan(200))));
        // 2 ms core link + 1 ms access link
        assert_eq!(hops.last().unwrap().1, 3000);
    }

    #[test]
    fn forwarding_into_the_wrong_slice_is_not_delivered() {
        let mut f = Fabric::build(&fig2()).unwrap();
        install_path(&mut f, "10.0.0.8", vlan(300));
        let (sw, port) = f.attachment(&"UE1".into()).unwrap();
        let trace = f.inject_packet(packet("10.0.0.1", "10.0.0.8"), (&sw, port)).unwrap();
        assert!(matches!(
            trace.outcome,
            Outcome::Dropped { reason: DropReason::SliceMismatch { .. }, .. }
        ));
    }

    #[test]
    fn drop_rule_stops_at_node() {
        let mut f = Fabric::build(&fig2()).unwrap();
        let rule = FlowRule::new("deny", FlowKey::any(), Action::Drop, 50);
        f.apply_flow_mod(&"OVS1".into(), FlowMod::Add { rule }, Provenance::Controller)
            .unwrap();
        let (sw, port) = f.attachment(&"UE1".into()).unwrap();
        let trace = f.inject_packet(packet("10.0.0.1", "10.0.0.8"), (&sw, port)).unwrap();
        assert_eq!(
            trace.outcome,
            Outcome::Dropped {
                node: "OVS1".into(),
                reason: DropReason::Rule { rule_id: "deny".into() }
            }
        );
        assert_eq!(trace.hops().count(), 0);
    }

    #[test]
    fn unknown_ingress_is_an_error() {
        let f = Fabric::build(&fig2()).unwrap();
        let err = f
            .inject_packet(packet("10.0.0.1", "10.0.0.8"), (&"nope".into(), PortId(1)))
            .unwrap_err();
        assert_eq!(err, FabricError::UnknownNode("nope".into()));
    }

    #[test]
    fn external_flow_mods_show_up_in_reports() {
        let mut f = Fabric::build(&fig2()).unwrap();
        let rule = FlowRule::new("evil", FlowKey::any(), Action::Drop, 10);
        f.apply_flow_mod(&"OVS1".into(), FlowMod::Add { rule }, Provenance::External)
            .unwrap();
        let node = f.node(&"OVS1".into()).unwrap();
        assert_eq!(node.table().get("evil").unwrap().provenance, Provenance::External);
        let report = f.report_flow_rules(&"OVS1".into(), 0).unwrap();
        assert_eq!(report.rules[0].rule_id, "evil");
        assert_eq!(report.rules[1].rule_id, DEFAULT_PUNT_RULE_ID);
    }

    #[test]
    fn reports_are_ordered_and_stable() {
        let mut f = Fabric::build(&fig2()).unwrap();
        let core = NodeId::new("CORE");
        assert!(f.report_flow_rules(&core, 0).unwrap().rules.is_empty());
        for (id, prio) in [("low", 5), ("high", 10)] {
            let rule = FlowRule::new(id, FlowKey::any(), Action::Drop, prio);
            f.apply_flow_mod(&core, FlowMod::Add { rule }, Provenance::Controller)
                .unwrap();
        }
        let a = f.report_flow_rules(&core, 7).unwrap();
        let b = f.report_flow_rules(&core, 7).unwrap();
        assert_eq!(a.rules[0].rule_id, "high");
        assert_eq!(a.rules[1].rule_id, "low");
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn attestation_tracks_tamper_flag_and_echoes_nonce() {
        let mut f = Fabric::build(&fig2()).unwrap();
        let id = NodeId::new("SRV1");
        let expected = f.expected_hash(&id).unwrap();
        let r1 = f.measure_attestation(&id, [1; 16]).unwrap();
        let r2 = f.measure_attestation(&id, [2; 16]).unwrap();
        assert_eq!(r1.measured_hash, expected);
        assert_eq!(r1.measured_hash, r2.measured_hash);
        assert_ne!(r1.nonce, r2.nonce);
        f.set_tampered(&id, true).unwrap();
        assert_ne!(f.measure_attestation(&id, [1; 16]).unwrap().measured_hash, expected);
        assert!(f.measure_attestation(&"nope".into(), [0; 16]).is_err());
    }

    #[test]
    fn relinking_moves_the_access_port() {
        let mut f = Fabric::build(&doc(r#"{
            "nodes": [{"id":"A","kind":"edge"},{"id":"B","kind":"edge"},{"id":"H","kind":"host"}],
            "links": [{"a":"H","b":"A"},{"a":"A","b":"B"}]
        }"#))
        .unwrap();
        let (sw, _) = f.relink_host(&"H".into(), &"B".into()).unwrap();
        assert_eq!(sw, NodeId::new("B"));
        assert_eq!(f.node(&"A".into()).unwrap().ports().len(), 1);
    }
}
