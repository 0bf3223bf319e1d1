use std::collections::BTreeMap;

use super::config::SmaConfig;
use super::deployment::NsfDeployment;
use crate::alert::{Alert, SecurityFunction};
use crate::fabric::{DatapathHook, HookVerdict, IngressContext, NodeId, NodeKind, Packet, TraceEvent};
use crate::policy::{DeviceId, PolicyRepository};
use crate::secfn::{
    device_specific_check, fsf_decrypt, fvf_validate, nsaf_check, CipherEnvelope, DenyReason, DeviceVerdict,
    FlowCipher, FvfState, FvfVerdict, NsafVerdict, SymmetricKey,
};

/// A flow whose payload travels encrypted between two edges.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SecuredFlow {
    pub flow_id: String,
    pub key_id: String,
    pub endpoints: (NodeId, NodeId),
}

/// The SMA's security functions as seen by the datapath for one packet.
pub(crate) struct Datapath<'a> {
    pub repo: &'a PolicyRepository,
    pub config: &'a SmaConfig,
    pub deployments: &'a mut BTreeMap<NodeId, NsfDeployment>,
    pub relocated_fvf: Option<&'a mut FvfState>,
    pub secured: &'a BTreeMap<String, SecuredFlow>,
    pub ciphers: &'a mut BTreeMap<(String, NodeId), FlowCipher>,
    pub key_stores: &'a BTreeMap<NodeId, BTreeMap<String, SymmetricKey>>,
    pub alerts: Vec<Alert>,
    /// Edge where the ingress checks ran, if any.
    pub validated_at: Option<NodeId>,
}

fn record(events: &mut Vec<TraceEvent>, node: &NodeId, f: SecurityFunction, verdict: impl Into<String>, t: u64) {
    events.push(TraceEvent::Function {
        node: node.clone(),
        function: f.to_string(),
        verdict: verdict.into(),
        time_us: t,
    });
}

fn drop(f: SecurityFunction, detail: impl Into<String>) -> HookVerdict {
    HookVerdict::Drop {
        function: f.to_string(),
        detail: detail.into(),
    }
}

fn fvf_label(v: &FvfVerdict) -> String {
    match v {
        FvfVerdict::Forward => "forward".into(),
        FvfVerdict::DropSignature { sig_id } => format!("signature:{sig_id}"),
        FvfVerdict::DropAnomaly { .. } => "anomaly".into(),
    }
}

pub(crate) fn deny_label(r: DenyReason) -> &'static str {
    match r {
        DenyReason::Blacklisted => "blacklisted_destination",
        DenyReason::Spoof => "spoofed_source",
    }
}

impl Datapath<'_> {
    fn run_fvf(
        state: &mut FvfState,
        config: &SmaConfig,
        alerts: &mut Vec<Alert>,
        node: &NodeId,
        packet: &mut Packet,
        events: &mut Vec<TraceEvent>,
    ) -> HookVerdict {
        let out = fvf_validate(state, packet, node);
        let c = &config.costs;
        packet.time_us += c.fvf_base_us + c.fvf_per_signature_us * out.signatures_scanned as u64;
        let label = fvf_label(&out.verdict);
        record(events, node, SecurityFunction::Fvf, &label, packet.time_us);
        if out.verdict.is_drop() {
            alerts.extend(out.alert);
            return drop(SecurityFunction::Fvf, label);
        }
        HookVerdict::Continue
    }
}

impl DatapathHook for Datapath<'_> {
    fn on_ingress(&mut self, ctx: &IngressContext<'_>, packet: &mut Packet, events: &mut Vec<TraceEvent>) -> HookVerdict {
        if !self.config.security {
            return HookVerdict::Continue;
        }
        let node = ctx.node;
        let c = &self.config.costs;
        let from_access =
            ctx.from_host.is_some() && ctx.kind == NodeKind::Edge && !self.repo.is_service_address(packet.src_ip);

        if from_access {
            if let Some(dep) = self.deployments.get_mut(node) {
                self.validated_at = Some(node.clone());
                let device = DeviceId::from_mac(&packet.src_mac);
                let requested = self.repo.requested_grant(&device, packet.dst_ip);
                packet.time_us += c.nsaf_us;
                let verdict = nsaf_check(&dep.nsaf, packet, requested.as_ref());
                record(events, node, SecurityFunction::Nsaf, verdict.label(), packet.time_us);
                match verdict {
                    NsafVerdict::DenyUnauthorized | NsafVerdict::DenyBlacklisted => {
                        return drop(SecurityFunction::Nsaf, verdict.label());
                    }
                    NsafVerdict::RouteGeneric { .. } if !self.repo.knows_device(&device) => {
                        let out = fvf_validate(&mut dep.guest, packet, node);
                        if out.verdict.is_drop() {
                            record(events, node, SecurityFunction::Nsaf, "generic_rate_cap", packet.time_us);
                            return drop(SecurityFunction::Nsaf, "generic_rate_cap");
                        }
                    }
                    _ => {}
                }
                if let Some(guard) = dep.guards.get(&device) {
                    packet.time_us += c.device_check_us;
                    if let DeviceVerdict::Deny(r) = device_specific_check(guard, packet) {
                        record(events, node, SecurityFunction::DeviceSpecific, deny_label(r), packet.time_us);
                        return drop(SecurityFunction::DeviceSpecific, deny_label(r));
                    }
                }
                if self.config.fvf_node.is_none() {
                    let v = Self::run_fvf(&mut dep.fvf, self.config, &mut self.alerts, node, packet, events);
                    if v != HookVerdict::Continue {
                        return v;
                    }
                }
            }
        }

        if self.config.fvf_node.as_ref() == Some(node) && !self.repo.is_service_address(packet.src_ip) {
            if let Some(state) = self.relocated_fvf.as_deref_mut() {
                return Self::run_fvf(state, self.config, &mut self.alerts, node, packet, events);
            }
        }
        HookVerdict::Continue
    }

    fn on_send(
        &mut self,
        node: &NodeId,
        _next: &NodeId,
        next_is_host: bool,
        packet: &mut Packet,
        events: &mut Vec<TraceEvent>,
    ) -> HookVerdict {
        let Some(flow) = self.secured.get(&packet.flow_id) else {
            return HookVerdict::Continue;
        };
        if *node != flow.endpoints.0 && *node != flow.endpoints.1 {
            return HookVerdict::Continue;
        }
        let envelope = CipherEnvelope::from_bytes(&packet.payload).ok();
        match (next_is_host, envelope) {
            (false, None) => {
                let Some(cipher) = self.ciphers.get_mut(&(flow.flow_id.clone(), node.clone())) else {
                    return HookVerdict::Continue;
                };
                packet.payload = cipher.seal(&packet.payload).to_bytes();
                packet.time_us += self.config.costs.fsf_us;
                record(events, node, SecurityFunction::Fsf, "encrypt", packet.time_us);
                HookVerdict::Continue
            }
            (true, Some(env)) => {
                let Some(key) = self.key_stores.get(node).and_then(|s| s.get(&env.key_id)) else {
                    record(events, node, SecurityFunction::Fsf, "no_key", packet.time_us);
                    return drop(SecurityFunction::Fsf, "no_key");
                };
                packet.time_us += self.config.costs.fsf_us;
                match fsf_decrypt(key, &env) {
                    Ok(plain) => {
                        packet.payload = plain;
                        record(events, node, SecurityFunction::Fsf, "decrypt", packet.time_us);
                        HookVerdict::Continue
                    }
                    Err(_) => {
                        record(events, node, SecurityFunction::Fsf, "authentication_failed", packet.time_us);
                        drop(SecurityFunction::Fsf, "authentication_failed")
                    }
                }
            }
            _ => HookVerdict::Continue,
        }
    }
}
