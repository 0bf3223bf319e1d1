//! Security Management Application: composes and deploys per-edge security
//! functions on demand, reacts to alerts, gates service deployment on
//! attestation, provisions flow keys and carries authorizations across
//! handovers. Every action is recorded in the activity log.

mod config;
mod control;
mod datapath;
mod deployment;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use config::{CostModel, SmaConfig};
pub use control::{AuditOutcome, DeployResult, HandoverResult, ReconfigAction};
pub use datapath::SecuredFlow;
pub use deployment::{compose_nsf, DeploymentSummary, NsfDeployment};

use crate::alert::{Alert, SecurityFunction};
use crate::fabric::{
    Action, ControllerEvent, DropReason, Fabric, FabricError, FlowKey, FlowMod, FlowRule, ForwardingTrace, MacAddr,
    NodeId, NodeKind, Outcome, Packet, PacketHeader, PathHop, Provenance, SliceId,
};
use crate::policy::{
    extract_profile, ActivityLog, AlcEvent, DeviceId, FlowTuple, MatchResult, PolicyError, PolicyRepository,
    ProfileLookup,
};
use crate::secfn::{
    device_specific_check, nsaf_check, DeviceVerdict, FlowCipher, FlowScorer, FvfState, KeyGenerator, NsafVerdict,
    SecFnError, Signature, SymmetricKey, TrustVerdict,
};
use datapath::{deny_label, Datapath};

pub const FORWARD_PRIORITY: u16 = 100;
pub const DROP_PRIORITY: u16 = 200;

#[derive(Debug, thiserror::Error)]
pub enum SmaError {
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    SecFn(#[from] SecFnError),
    #[error("device {device} is unknown at {node}")]
    UnknownDevice { device: String, node: String },
    #[error("{0} is not an edge switch")]
    NotAnEdge(String),
    #[error("flow {0} has no confidentiality requirement")]
    NotConfidential(String),
    #[error("endpoint {node} failed attestation ({verdict:?})")]
    EndpointUntrusted { node: String, verdict: TrustVerdict },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum FlowDecision {
    Installed {
        flow_id: String,
        device_id: String,
        slice: SliceId,
        service: Option<String>,
        generic: bool,
        path: Vec<NodeId>,
        rules: usize,
        punt_us: u64,
        installed_us: u64,
        setup_us: u64,
    },
    Denied {
        flow_id: String,
        device_id: String,
        function: SecurityFunction,
        reason: String,
    },
    Rejected {
        flow_id: String,
        reason: String,
    },
}

impl FlowDecision {
    pub fn label(&self) -> String {
        match self {
            FlowDecision::Installed { generic: true, .. } => "generic".into(),
            FlowDecision::Installed { .. } => "permit".into(),
            FlowDecision::Denied { reason, .. } => format!("deny:{reason}"),
            FlowDecision::Rejected { reason, .. } => format!("reject:{reason}"),
        }
    }
}

/// Timing of one flow setup, punt to last rule installed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSetup {
    pub flow_id: String,
    pub device_id: String,
    pub node: NodeId,
    pub punt_us: u64,
    pub installed_us: u64,
    pub setup_us: u64,
}

/// Rules the SMA installed for one device towards one destination.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveFlow {
    pub device: DeviceId,
    pub src_host: Option<NodeId>,
    pub edge: NodeId,
    pub dst_ip: Ipv4Addr,
    pub dst_host: NodeId,
    pub slice: SliceId,
    pub generic: bool,
    pub rules: Vec<(NodeId, String)>,
}

/// Result of pushing one packet through the fabric under the SMA.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub trace: ForwardingTrace,
    pub decision: Option<FlowDecision>,
    pub reconfig: Vec<ReconfigAction>,
}

pub struct Sma {
    fabric: Fabric,
    repo: PolicyRepository,
    alc: ActivityLog,
    config: SmaConfig,
    signatures: Vec<Signature>,
    classifier: Option<Arc<dyn FlowScorer>>,
    deployments: BTreeMap<NodeId, NsfDeployment>,
    relocated_fvf: Option<FvfState>,
    kgf: KeyGenerator,
    key_stores: BTreeMap<NodeId, BTreeMap<String, SymmetricKey>>,
    ciphers: BTreeMap<(String, NodeId), FlowCipher>,
    secured: BTreeMap<String, SecuredFlow>,
    active: BTreeMap<(DeviceId, Ipv4Addr), ActiveFlow>,
    setups: Vec<FlowSetup>,
    alerts: Vec<Alert>,
    admin: Vec<String>,
    services: BTreeMap<NodeId, BTreeSet<String>>,
    nonce_rng: ChaCha20Rng,
    controller_free_us: u64,
    next_audit_us: Option<u64>,
    now_us: u64,
}

fn half(rtt: u64) -> (u64, u64) {
    (rtt / 2, rtt - rtt / 2)
}

fn header_packet(h: &PacketHeader) -> Packet {
    Packet {
        src_ip: h.src_ip,
        dst_ip: h.dst_ip,
        src_mac: h.src_mac.clone(),
        dst_mac: h.dst_mac.clone(),
        slice: h.slice,
        payload: Vec::new(),
        flow_id: h.flow_id.clone(),
        time_us: h.time_us,
    }
}

impl Sma {
    /// Takes ownership of the fabric and records its bootstrap rules so the
    /// log can vouch for them later.
    pub fn new(
        fabric: Fabric,
        repo: PolicyRepository,
        signatures: Vec<Signature>,
        config: SmaConfig,
    ) -> Result<Self, SmaError> {
        // reject bad thresholds up front rather than at first deployment
        FvfState::new(signatures.clone(), config.window_us, config.rate_threshold)?;
        let relocated_fvf = match &config.fvf_node {
            Some(n) => {
                if !fabric.node(n)?.kind.is_switch() {
                    return Err(FabricError::NotASwitch(n.to_string()).into());
                }
                Some(FvfState::new(signatures.clone(), config.window_us, config.rate_threshold)?)
            }
            None => None,
        };
        let mut alc = ActivityLog::new();
        for sw in fabric.switches() {
            for rule in sw.table().rules() {
                alc.append(&AlcEvent::RuleInstalled {
                    node: sw.id.clone(),
                    rule: rule.clone(),
                });
            }
        }
        Ok(Sma {
            kgf: KeyGenerator::new(config.seed ^ 0x6b67_6600),
            nonce_rng: ChaCha20Rng::seed_from_u64(config.seed ^ 0x7476_6600),
            next_audit_us: config.audit_period_us,
            fabric,
            repo,
            alc,
            config,
            signatures,
            classifier: None,
            deployments: BTreeMap::new(),
            relocated_fvf,
            key_stores: BTreeMap::new(),
            ciphers: BTreeMap::new(),
            secured: BTreeMap::new(),
            active: BTreeMap::new(),
            setups: Vec::new(),
            alerts: Vec::new(),
            admin: Vec::new(),
            services: BTreeMap::new(),
            controller_free_us: 0,
            now_us: 0,
        })
    }

    /// Attaches a trained classifier to every FVF instance, present and future.
    pub fn with_classifier(mut self, scorer: Arc<dyn FlowScorer>) -> Self {
        for dep in self.deployments.values_mut() {
            dep.fvf = dep.fvf.clone().with_classifier(scorer.clone());
        }
        if let Some(f) = self.relocated_fvf.take() {
            self.relocated_fvf = Some(f.with_classifier(scorer.clone()));
        }
        self.classifier = Some(scorer);
        self
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    /// Direct access for experiments that tamper with switches behind the
    /// SMA's back.
    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn repo(&self) -> &PolicyRepository {
        &self.repo
    }

    pub fn alc(&self) -> &ActivityLog {
        &self.alc
    }

    pub fn config(&self) -> &SmaConfig {
        &self.config
    }

    pub fn deployment(&self, node: &NodeId) -> Option<&NsfDeployment> {
        self.deployments.get(node)
    }

    pub fn deployments(&self) -> impl Iterator<Item = &NsfDeployment> {
        self.deployments.values()
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn setups(&self) -> &[FlowSetup] {
        &self.setups
    }

    pub fn active_flows(&self) -> impl Iterator<Item = &ActiveFlow> {
        self.active.values()
    }

    pub fn secured_flows(&self) -> impl Iterator<Item = &SecuredFlow> {
        self.secured.values()
    }

    pub fn key_store(&self, node: &NodeId) -> Option<&BTreeMap<String, SymmetricKey>> {
        self.key_stores.get(node)
    }

    pub fn deployed_services(&self, host: &NodeId) -> BTreeSet<String> {
        self.services.get(host).cloned().unwrap_or_default()
    }

    /// Administrator event stream, one JSON object per line.
    pub fn admin_events(&self) -> &[String] {
        &self.admin
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn host_by_mac(&self, mac: &MacAddr) -> Option<NodeId> {
        self.fabric
            .nodes()
            .find(|n| n.kind == NodeKind::Host && n.mac.as_ref() == Some(mac))
            .map(|n| n.id.clone())
    }

    fn host_of_device(&self, device: &DeviceId) -> Option<NodeId> {
        device.as_str().parse::<MacAddr>().ok().and_then(|m| self.host_by_mac(&m))
    }

    fn install(&mut self, node: &NodeId, mut rule: FlowRule) -> Result<(), SmaError> {
        rule.provenance = Provenance::Controller;
        self.fabric
            .apply_flow_mod(node, FlowMod::Add { rule: rule.clone() }, Provenance::Controller)?;
        self.alc.append(&AlcEvent::RuleInstalled {
            node: node.clone(),
            rule,
        });
        Ok(())
    }

    fn remove(&mut self, node: &NodeId, rule_id: &str) -> Result<(), SmaError> {
        self.fabric.apply_flow_mod(
            node,
            FlowMod::Delete {
                rule_id: rule_id.to_string(),
            },
            Provenance::Controller,
        )?;
        self.alc.append(&AlcEvent::RuleDeleted {
            node: node.clone(),
            rule_id: rule_id.to_string(),
        });
        Ok(())
    }

    fn compose(&self, lookup: &ProfileLookup, node: &NodeId) -> Result<NsfDeployment, SmaError> {
        let mut dep = compose_nsf(lookup, node, &self.signatures, &self.config, self.now_us)?;
        if let Some(s) = &self.classifier {
            dep.fvf = dep.fvf.with_classifier(s.clone());
        }
        Ok(dep)
    }

    /// Injects a packet sent by `from` (a host). A punt goes to the
    /// controller and, once rules are in place, the packet continues from
    /// the switch that punted it. Alerts raised on the way are handled
    /// before returning.
    pub fn send(&mut self, from: &NodeId, mut packet: Packet) -> Result<Delivery, SmaError> {
        self.run_due_audits(packet.time_us)?;
        self.now_us = self.now_us.max(packet.time_us);
        let (edge, port) = self.fabric.attachment(from)?;
        let access = self.fabric.node(from)?.ports().values().next().map_or(0, |p| p.latency_us);
        packet.time_us += access;

        let (mut trace, validated, mut alerts) = self.forward(packet, &edge, port, false)?;
        let mut decision = None;
        if let (Outcome::Punted { .. }, Some(ev)) = (&trace.outcome, trace.controller_event.clone()) {
            let d = self.handle_new_flow(&ev)?;
            match &d {
                FlowDecision::Installed { installed_us, .. } => {
                    let mut p = trace.final_packet.clone();
                    p.time_us = p.time_us.max(*installed_us);
                    let (rest, _, more) = self.forward(p, &ev.node, ev.in_port, validated)?;
                    alerts.extend(more);
                    let mut events = std::mem::take(&mut trace.events);
                    events.extend(rest.events);
                    trace = ForwardingTrace { events, ..rest };
                }
                FlowDecision::Denied { function, reason, .. } => {
                    trace.outcome = Outcome::Dropped {
                        node: ev.node.clone(),
                        reason: DropReason::Function {
                            function: function.to_string(),
                            detail: reason.clone(),
                        },
                    };
                }
                FlowDecision::Rejected { reason, .. } => {
                    trace.outcome = Outcome::Dropped {
                        node: ev.node.clone(),
                        reason: DropReason::Function {
                            function: SecurityFunction::Sma.to_string(),
                            detail: reason.clone(),
                        },
                    };
                }
            }
            decision = Some(d);
        }
        let mut reconfig = Vec::new();
        for a in alerts {
            reconfig.push(self.handle_alert(a)?);
        }
        Ok(Delivery {
            trace,
            decision,
            reconfig,
        })
    }

    fn forward(
        &mut self,
        packet: Packet,
        node: &NodeId,
        port: crate::fabric::PortId,
        skip_ingress: bool,
    ) -> Result<(ForwardingTrace, bool, Vec<Alert>), SmaError> {
        let mut hook = Datapath {
            repo: &self.repo,
            config: &self.config,
            deployments: &mut self.deployments,
            relocated_fvf: self.relocated_fvf.as_mut(),
            secured: &self.secured,
            ciphers: &mut self.ciphers,
            key_stores: &self.key_stores,
            alerts: Vec::new(),
            validated_at: None,
        };
        let trace = if skip_ingress {
            self.fabric.packet_out(packet, (node, port), &mut hook)?
        } else {
            self.fabric.inject_packet_with(packet, (node, port), &mut hook)?
        };
        let validated = hook.validated_at.as_ref() == Some(node);
        Ok((trace, validated, hook.alerts))
    }

    /// Controller side of a punt: profile lookup and NSF deployment when the
    /// device is new to this edge, access decision, then rules along the
    /// slice path in both directions.
    pub fn handle_new_flow(&mut self, event: &ControllerEvent) -> Result<FlowDecision, SmaError> {
        let h = &event.header;
        let edge = event.node.clone();
        let device = DeviceId::from_mac(&h.src_mac);
        let flow_id = h.flow_id.clone();
        let c = self.config.costs.clone();
        let (up, down) = half(c.control_rtt_us);
        let punt_us = h.time_us;
        self.now_us = self.now_us.max(punt_us);
        let mut t = (punt_us + up).max(self.controller_free_us);

        let Some(dst_host) = self.fabric.host_by_ip(h.dst_ip).map(|n| n.id.clone()) else {
            return Ok(self.reject(&edge, &device, flow_id, "unknown_destination"));
        };

        let (slice, service, generic) = if !self.config.security {
            match self.policy_route(h, &dst_host) {
                Some(r) => r,
                None => return Ok(self.deny(&edge, &device, flow_id, SecurityFunction::Sma, "no_policy")),
            }
        } else if self.repo.is_service_address(h.src_ip) {
            match self.common_slice(h, &dst_host) {
                Some(s) => (s, None, false),
                None => {
                    return Ok(self.deny(&edge, &device, flow_id, SecurityFunction::Sma, "no_common_slice"));
                }
            }
        } else {
            t += c.dispatch_us;
            t += self.ensure_deployment(&edge, &device)?;
            let dep = &self.deployments[&edge];
            let packet = header_packet(h);
            let requested = self.repo.requested_grant(&device, h.dst_ip);
            t += c.nsaf_us;
            let verdict = nsaf_check(&dep.nsaf, &packet, requested.as_ref());
            let route = match verdict {
                NsafVerdict::Permit => {
                    let g = requested.expect("permit implies a requested grant");
                    (g.slice, Some(g.service), false)
                }
                NsafVerdict::RouteGeneric { slice } => (slice, None, true),
                NsafVerdict::DenyUnauthorized | NsafVerdict::DenyBlacklisted => {
                    return Ok(self.deny(&edge, &device, flow_id, SecurityFunction::Nsaf, verdict.label()));
                }
            };
            if let Some(guard) = dep.guards.get(&device) {
                t += c.device_check_us;
                if let DeviceVerdict::Deny(r) = device_specific_check(guard, &packet) {
                    return Ok(self.deny(&edge, &device, flow_id, SecurityFunction::DeviceSpecific, deny_label(r)));
                }
            }
            if route.2 && !self.fabric.slices()[&route.0].hosts.contains(&dst_host) {
                // park the flow on a drop rule so it stops punting
                let rule = FlowRule::new(
                    format!("drop/{device}/{}/{edge}", h.dst_ip),
                    FlowKey {
                        src_mac: Some(h.src_mac.clone()),
                        dst_ip: Some(h.dst_ip),
                        ..FlowKey::any()
                    },
                    Action::Drop,
                    DROP_PRIORITY,
                );
                self.install(&edge, rule)?;
                return Ok(self.deny(&edge, &device, flow_id, SecurityFunction::Nsaf, "generic_unreachable"));
            }
            route
        };

        let switches = self.fabric.switches().count() as u64;
        t += c.path_compute_us + c.path_per_switch_us * switches;
        let src_host = self.host_by_mac(&h.src_mac).or_else(|| self.fabric.host_by_ip(h.src_ip).map(|n| n.id.clone()));
        let Some(rules) = self.flow_rules(&device, &edge, h.src_ip, &h.src_mac, src_host.as_ref(), &dst_host, h.dst_ip, slice)? else {
            return Ok(self.reject(&edge, &device, flow_id, "no_path"));
        };
        let path: Vec<NodeId> = rules
            .iter()
            .filter(|(_, r)| r.rule_id.starts_with("fwd/"))
            .map(|(n, _)| n.clone())
            .collect();
        let n_rules = rules.len();
        let mut ids = Vec::with_capacity(n_rules);
        for (node, rule) in rules {
            t += c.flow_mod_us;
            ids.push((node.clone(), rule.rule_id.clone()));
            self.install(&node, rule)?;
        }
        self.controller_free_us = t;
        let installed_us = t + down;
        let setup_us = installed_us - punt_us;
        self.setups.push(FlowSetup {
            flow_id: flow_id.clone(),
            device_id: device.to_string(),
            node: edge.clone(),
            punt_us,
            installed_us,
            setup_us,
        });
        self.active.insert(
            (device.clone(), h.dst_ip),
            ActiveFlow {
                device: device.clone(),
                src_host,
                edge: edge.clone(),
                dst_ip: h.dst_ip,
                dst_host,
                slice,
                generic,
                rules: ids,
            },
        );
        let decision = FlowDecision::Installed {
            flow_id: flow_id.clone(),
            device_id: device.to_string(),
            slice,
            service,
            generic,
            path,
            rules: n_rules,
            punt_us,
            installed_us,
            setup_us,
        };
        self.alc.append(&AlcEvent::FlowDecision {
            node: edge,
            flow_id,
            device_id: device.to_string(),
            decision: decision.label(),
        });
        Ok(decision)
    }

    /// Makes sure `edge` has an NSF that knows `device`, extracting the
    /// owner's profile when needed. Returns the virtual time spent.
    fn ensure_deployment(&mut self, edge: &NodeId, device: &DeviceId) -> Result<u64, SmaError> {
        let c = &self.config.costs;
        let (extract, build) = (c.profile_extract_us, c.nsf_compose_us + c.nsf_deploy_us);
        let known = self.deployments.get(edge).is_some_and(|d| d.nsaf.knows(device));
        if known {
            return Ok(0);
        }
        let owner = self.repo.owner_of(device).map(str::to_string);
        let Some(user) = owner else {
            if self.deployments.contains_key(edge) {
                return Ok(0);
            }
            let dep = self.compose(&ProfileLookup::NoProfile, edge)?;
            self.deployments.insert(edge.clone(), dep);
            self.alc.append(&AlcEvent::NsfDeployed {
                node: edge.clone(),
                users: Vec::new(),
            });
            return Ok(build);
        };
        let lookup = extract_profile(&self.repo, &user);
        self.alc.append(&AlcEvent::ProfileExtracted {
            user_id: user.clone(),
            node: edge.clone(),
        });
        let dep = self.compose(&lookup, edge)?;
        let merged = match self.deployments.get_mut(edge) {
            Some(existing) => {
                existing.absorb(dep);
                existing
            }
            None => self.deployments.entry(edge.clone()).or_insert(dep),
        };
        let users = merged.covered_users.iter().cloned().collect();
        self.alc.append(&AlcEvent::NsfDeployed {
            node: edge.clone(),
            users,
        });
        Ok(extract + build)
    }

    fn policy_route(&self, h: &PacketHeader, dst_host: &NodeId) -> Option<(SliceId, Option<String>, bool)> {
        let tuple = FlowTuple {
            src_ip: h.src_ip,
            src_mac: h.src_mac.clone(),
            dst_ip: h.dst_ip,
        };
        match self.repo.match_policy(&tuple) {
            MatchResult::Authorized { slice, service, .. } => Some((slice, Some(service), false)),
            MatchResult::Unknown if self.repo.is_service_address(h.src_ip) => {
                self.common_slice(h, dst_host).map(|s| (s, None, false))
            }
            MatchResult::Unknown => {
                let g = self.config.generic_slice;
                self.fabric
                    .slices()
                    .get(&g)
                    .filter(|s| s.hosts.contains(dst_host))
                    .map(|_| (g, None, true))
            }
            MatchResult::Unauthorized => None,
        }
    }

    fn common_slice(&self, h: &PacketHeader, dst_host: &NodeId) -> Option<SliceId> {
        let src = self.fabric.host_by_ip(h.src_ip)?.id.clone();
        let a = self.fabric.host_slices(&src);
        let b = self.fabric.host_slices(dst_host);
        a.intersection(&b).next().copied()
    }

    /// Forward rules from the device's edge to the destination and reverse
    /// rules back to the device, or `None` when either path is missing.
    #[allow(clippy::too_many_arguments)]
    fn flow_rules(
        &self,
        device: &DeviceId,
        edge: &NodeId,
        src_ip: Ipv4Addr,
        src_mac: &MacAddr,
        src_host: Option<&NodeId>,
        dst_host: &NodeId,
        dst_ip: Ipv4Addr,
        slice: SliceId,
    ) -> Result<Option<Vec<(NodeId, FlowRule)>>, SmaError> {
        let Some(fwd) = self.fabric.shortest_path(edge, dst_host)? else {
            return Ok(None);
        };
        let mut out = path_rules("fwd", device, dst_ip, &fwd, slice, |first| FlowKey {
            src_mac: first.then(|| src_mac.clone()),
            src_ip: (!first).then_some(src_ip),
            dst_ip: Some(dst_ip),
            ..FlowKey::any()
        });
        if let Some(src_host) = src_host {
            let (dst_edge, _) = self.fabric.attachment(dst_host)?;
            let Some(rev) = self.fabric.shortest_path(&dst_edge, src_host)? else {
                return Ok(None);
            };
            out.extend(path_rules("rev", device, dst_ip, &rev, slice, |_| FlowKey {
                src_ip: Some(dst_ip),
                dst_ip: Some(src_ip),
                ..FlowKey::any()
            }));
        }
        Ok(Some(out))
    }

    fn deny(
        &mut self,
        edge: &NodeId,
        device: &DeviceId,
        flow_id: String,
        function: SecurityFunction,
        reason: &str,
    ) -> FlowDecision {
        let d = FlowDecision::Denied {
            flow_id: flow_id.clone(),
            device_id: device.to_string(),
            function,
            reason: reason.to_string(),
        };
        self.alc.append(&AlcEvent::FlowDecision {
            node: edge.clone(),
            flow_id,
            device_id: device.to_string(),
            decision: d.label(),
        });
        d
    }

    fn reject(&mut self, edge: &NodeId, device: &DeviceId, flow_id: String, reason: &str) -> FlowDecision {
        let d = FlowDecision::Rejected {
            flow_id: flow_id.clone(),
            reason: reason.to_string(),
        };
        self.alc.append(&AlcEvent::FlowDecision {
            node: edge.clone(),
            flow_id,
            device_id: device.to_string(),
            decision: d.label(),
        });
        d
    }
}

/// One rule per hop. The first hop matches the untagged packet, later hops
/// also match the slice tag.
fn path_rules(
    tag: &str,
    device: &DeviceId,
    dst_ip: Ipv4Addr,
    path: &[PathHop],
    slice: SliceId,
    key: impl Fn(bool) -> FlowKey,
) -> Vec<(NodeId, FlowRule)> {
    path.iter()
        .enumerate()
        .map(|(i, hop)| {
            let mut k = key(i == 0);
            if i > 0 {
                k.slice = Some(slice);
            }
            let rule = FlowRule::new(
                format!("{tag}/{device}/{dst_ip}/{}", hop.node),
                k,
                Action::Forward {
                    port: hop.out_port,
                    slice,
                },
                FORWARD_PRIORITY,
            );
            (hop.node.clone(), rule)
        })
        .collect()
}
