use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Sma, SmaError, DROP_PRIORITY};
use crate::alert::{Alert, SecurityFunction, Severity};
use crate::fabric::{
    Action, AttestationReport, Fabric, FabricError, FlowKey, FlowMod, FlowRule, MacAddr, NodeId, NodeKind, Provenance,
};
use crate::policy::{AlcEvent, DeviceId, FlowTuple, Grant, MatchResult, PolicyRule, ProfileLookup, SecurityReq};
use crate::secfn::{imf_audit, render_diff, tvf_validate, AuditResult, FlowCipher, TrustVerdict};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReconfigAction {
    Blacklisted {
        device_id: String,
        node: NodeId,
        rules_replaced: usize,
    },
    AlreadyBlacklisted {
        device_id: String,
        node: NodeId,
    },
    SwitchRestored {
        node: NodeId,
        deleted: Vec<String>,
        reinstalled: Vec<String>,
    },
    /// Logged and forwarded to the administrator, nothing reconfigured.
    AdminOnly {
        reason: String,
    },
    /// Blacklisting on alert is switched off in the configuration.
    FeedbackDisabled {
        device_id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub result: AuditResult,
    pub diff: String,
    pub restore: Option<ReconfigAction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeployResult {
    pub host: NodeId,
    pub service: String,
    pub verdict: TrustVerdict,
    pub deployed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverResult {
    pub device_id: String,
    pub from: NodeId,
    pub to: NodeId,
    pub grants_before: BTreeSet<Grant>,
    pub grants_after: BTreeSet<Grant>,
    pub blacklisted: bool,
    pub flows_reanchored: usize,
    pub profile_extractions: usize,
}

pub(crate) fn trust_label(v: TrustVerdict) -> &'static str {
    match v {
        TrustVerdict::Trusted => "trusted",
        TrustVerdict::Compromised => "compromised",
        TrustVerdict::StaleNonce => "stale_nonce",
    }
}

impl Sma {
    /// Records an alert in the log and the administrator stream.
    fn raise(&mut self, alert: &Alert) {
        self.alc.append(&AlcEvent::AlertRaised { alert: alert.clone() });
        self.admin.push(serde_json::json!({"type": "alert", "alert": alert}).to_string());
        self.alerts.push(alert.clone());
    }

    /// FVF alerts blacklist the device at its entry NSAF and swap its rules
    /// for a drop rule; IMF alerts converge the switch back to the trusted
    /// state. Anything else only reaches the administrator.
    pub fn handle_alert(&mut self, alert: Alert) -> Result<ReconfigAction, SmaError> {
        self.raise(&alert);
        match alert.source {
            SecurityFunction::Fvf => {
                let device = alert
                    .device_id
                    .as_deref()
                    .and_then(|d| d.parse::<MacAddr>().ok())
                    .map(|m| DeviceId::from_mac(&m));
                let Some(device) = device else {
                    return Ok(ReconfigAction::AdminOnly {
                        reason: "alert names no device".into(),
                    });
                };
                if !self.config.blacklist_on_alert {
                    return Ok(ReconfigAction::FeedbackDisabled {
                        device_id: device.to_string(),
                    });
                }
                let Some(entry) = self.entry_edge(&device, alert.node.as_ref()) else {
                    return Ok(ReconfigAction::AdminOnly {
                        reason: format!("device {device} has no entry NSAF"),
                    });
                };
                self.blacklist(&device, &entry)
            }
            SecurityFunction::Imf => match alert.node.clone() {
                Some(node) => self.restore_switch(&node),
                None => Ok(ReconfigAction::AdminOnly {
                    reason: "audit alert names no switch".into(),
                }),
            },
            _ => Ok(ReconfigAction::AdminOnly {
                reason: alert.reason.clone(),
            }),
        }
    }

    /// Edge whose NSAF knows the device: the alerting node if it qualifies,
    /// otherwise the switch the device's host hangs off.
    fn entry_edge(&self, device: &DeviceId, hint: Option<&NodeId>) -> Option<NodeId> {
        let knows = |n: &NodeId| self.deployments.get(n).is_some_and(|d| d.nsaf.knows(device));
        if let Some(n) = hint.filter(|n| knows(n)) {
            return Some(n.clone());
        }
        let host = self.host_of_device(device)?;
        let (sw, _) = self.fabric.attachment(&host).ok()?;
        knows(&sw).then_some(sw)
    }

    fn blacklist(&mut self, device: &DeviceId, node: &NodeId) -> Result<ReconfigAction, SmaError> {
        let dep = self.deployments.get_mut(node).expect("entry edge has a deployment");
        if !dep.nsaf.blacklist.insert(device.clone()) {
            return Ok(ReconfigAction::AlreadyBlacklisted {
                device_id: device.to_string(),
                node: node.clone(),
            });
        }
        self.alc.append(&AlcEvent::DeviceBlacklisted {
            node: node.clone(),
            device_id: device.to_string(),
        });
        let flows: Vec<_> = self
            .active
            .keys()
            .filter(|(d, _)| d == device)
            .cloned()
            .collect();
        let mut replaced = 0;
        for key in flows {
            let flow = self.active.remove(&key).expect("listed above");
            for (n, id) in &flow.rules {
                self.remove(n, id)?;
                replaced += 1;
            }
        }
        self.install_device_drop(device, node)?;
        Ok(ReconfigAction::Blacklisted {
            device_id: device.to_string(),
            node: node.clone(),
            rules_replaced: replaced,
        })
    }

    fn install_device_drop(&mut self, device: &DeviceId, node: &NodeId) -> Result<(), SmaError> {
        let mac = device
            .as_str()
            .parse()
            .map_err(|_| SmaError::UnknownDevice {
                device: device.to_string(),
                node: node.to_string(),
            })?;
        let rule = FlowRule::new(
            format!("drop/{device}/{node}"),
            FlowKey {
                src_mac: Some(mac),
                ..FlowKey::any()
            },
            Action::Drop,
            DROP_PRIORITY,
        );
        self.install(node, rule)
    }

    /// Deletes rules the log does not vouch for and re-installs missing or
    /// altered ones.
    fn restore_switch(&mut self, node: &NodeId) -> Result<ReconfigAction, SmaError> {
        let trusted = self.alc.expected_switch_state(node)?;
        let observed = self.fabric.report_flow_rules(node, self.now_us)?;
        let result = imf_audit(&trusted, &observed)?;
        let mut deleted = Vec::new();
        for r in &result.extra_rules {
            self.remove(node, &r.rule_id)?;
            deleted.push(r.rule_id.clone());
        }
        let mut reinstalled = Vec::new();
        let missing = result.missing_rules.iter();
        let modified = result.modified_rules.iter().map(|m| &m.trusted);
        for r in missing.chain(modified) {
            let rule = FlowRule::new(r.rule_id.clone(), r.key.clone(), r.action.clone(), r.priority);
            // the log already holds this rule, so only the switch changes
            self.fabric.apply_flow_mod(node, FlowMod::Add { rule }, Provenance::Controller)?;
            reinstalled.push(r.rule_id.clone());
        }
        Ok(ReconfigAction::SwitchRestored {
            node: node.clone(),
            deleted,
            reinstalled,
        })
    }

    /// Compares the switch's reported rules with the log's replay. A dirty
    /// result raises an IMF alert, which restores the switch.
    pub fn audit_now(&mut self, node: &NodeId) -> Result<AuditOutcome, SmaError> {
        let trusted = self.alc.expected_switch_state(node)?;
        let observed = self.fabric.report_flow_rules(node, self.now_us)?;
        let result = imf_audit(&trusted, &observed)?;
        let diff = render_diff(&trusted, &observed);
        self.alc.append(&AlcEvent::AuditPerformed {
            node: node.clone(),
            clean: result.clean,
        });
        if !result.clean {
            self.admin
                .push(serde_json::json!({"type": "audit", "result": &result, "diff": &diff}).to_string());
        }
        let restore = match result.admin_alert(self.now_us) {
            Some(alert) => Some(self.handle_alert(alert)?),
            None => None,
        };
        Ok(AuditOutcome { result, diff, restore })
    }

    /// Periodic audit of every switch, on the configured cadence.
    pub(crate) fn run_due_audits(&mut self, now_us: u64) -> Result<(), SmaError> {
        let Some(period) = self.config.audit_period_us.filter(|p| *p > 0) else {
            return Ok(());
        };
        while let Some(due) = self.next_audit_us.filter(|d| *d <= now_us) {
            self.now_us = self.now_us.max(due);
            let switches: Vec<NodeId> = self.fabric.switches().map(|n| n.id.clone()).collect();
            for sw in switches {
                self.audit_now(&sw)?;
            }
            self.next_audit_us = Some(due + period);
        }
        Ok(())
    }

    fn fresh_nonce(&mut self) -> [u8; 16] {
        let mut n = [0u8; 16];
        self.nonce_rng.fill_bytes(&mut n);
        n
    }

    /// Challenges `node` with a fresh nonce and checks the answer.
    pub fn attest(&mut self, node: &NodeId) -> Result<TrustVerdict, SmaError> {
        self.attest_with(node, |f, n, nonce| f.measure_attestation(n, nonce))
    }

    fn attest_with<F>(&mut self, node: &NodeId, attestor: F) -> Result<TrustVerdict, SmaError>
    where
        F: FnOnce(&Fabric, &NodeId, [u8; 16]) -> Result<AttestationReport, FabricError>,
    {
        let expected = self.fabric.expected_hash(node)?;
        let nonce = self.fresh_nonce();
        let report = attestor(&self.fabric, node, nonce)?;
        Ok(tvf_validate(&expected, &report, &nonce))
    }

    pub fn deploy_service_gated(&mut self, host: &NodeId, service: &str) -> Result<DeployResult, SmaError> {
        self.deploy_service_gated_with(host, service, |f, n, nonce| f.measure_attestation(n, nonce))
    }

    /// As [`Sma::deploy_service_gated`], with the node's answer to the
    /// challenge produced by `attestor`.
    pub fn deploy_service_gated_with<F>(
        &mut self,
        host: &NodeId,
        service: &str,
        attestor: F,
    ) -> Result<DeployResult, SmaError>
    where
        F: FnOnce(&Fabric, &NodeId, [u8; 16]) -> Result<AttestationReport, FabricError>,
    {
        let verdict = self.attest_with(host, attestor)?;
        let deployed = verdict == TrustVerdict::Trusted;
        if deployed {
            self.services.entry(host.clone()).or_default().insert(service.to_string());
        } else {
            let alert = Alert {
                source: SecurityFunction::Tvf,
                device_id: None,
                node: Some(host.clone()),
                flow_id: None,
                reason: format!("deployment of {service} refused: {}", trust_label(verdict)),
                severity: Severity::Critical,
                time_us: self.now_us,
            };
            self.handle_alert(alert)?;
        }
        self.alc.append(&AlcEvent::ServiceDeployed {
            host: host.clone(),
            service: service.to_string(),
            verdict: trust_label(verdict).to_string(),
        });
        Ok(DeployResult {
            host: host.clone(),
            service: service.to_string(),
            verdict,
            deployed,
        })
    }

    /// Generates a key for `flow_id` from `src` to `dst`, hands it to both
    /// edge switches and turns on encryption between them. Both edges must
    /// pass attestation first.
    pub fn provision_flow_security(&mut self, flow_id: &str, src: &NodeId, dst: &NodeId) -> Result<String, SmaError> {
        let s = self.fabric.node(src)?;
        let (Some(src_ip), Some(src_mac)) = (s.ip, s.mac.clone()) else {
            return Err(FabricError::NotAHost(src.to_string()).into());
        };
        let dst_ip = self
            .fabric
            .node(dst)?
            .ip
            .ok_or_else(|| FabricError::NotAHost(dst.to_string()))?;
        let tuple = FlowTuple {
            src_ip,
            src_mac,
            dst_ip,
        };
        let confidential = matches!(
            self.repo.match_policy(&tuple),
            MatchResult::Authorized { security_reqs, .. } if security_reqs.contains(&SecurityReq::Confidentiality)
        );
        if !confidential {
            return Err(SmaError::NotConfidential(flow_id.to_string()));
        }
        let (a, _) = self.fabric.attachment(src)?;
        let (b, _) = self.fabric.attachment(dst)?;
        for n in [&a, &b] {
            let verdict = self.attest(n)?;
            if verdict != TrustVerdict::Trusted {
                let alert = Alert {
                    source: SecurityFunction::Kgf,
                    device_id: None,
                    node: Some(n.clone()),
                    flow_id: Some(flow_id.to_string()),
                    reason: format!("key provisioning refused: {}", trust_label(verdict)),
                    severity: Severity::Critical,
                    time_us: self.now_us,
                };
                self.handle_alert(alert)?;
                return Err(SmaError::EndpointUntrusted {
                    node: n.to_string(),
                    verdict,
                });
            }
        }
        let key = self.kgf.generate((a.clone(), b.clone()), self.now_us)?;
        let key_id = key.key_id.clone();
        for (sender, n) in [(0u8, &a), (1u8, &b)] {
            self.key_stores.entry(n.clone()).or_default().insert(key_id.clone(), key.clone());
            self.ciphers
                .insert((flow_id.to_string(), n.clone()), FlowCipher::new(key.clone(), sender));
            if let Some(dep) = self.deployments.get_mut(n) {
                dep.fsf.get_or_insert_with(Default::default).insert(flow_id.to_string(), key_id.clone());
            }
        }
        self.secured.insert(
            flow_id.to_string(),
            super::SecuredFlow {
                flow_id: flow_id.to_string(),
                key_id: key_id.clone(),
                endpoints: (a.clone(), b.clone()),
            },
        );
        self.alc.append(&AlcEvent::KeyDistributed {
            key_id: key_id.clone(),
            endpoints: [a, b],
        });
        Ok(key_id)
    }

    /// Moves a device's host to edge `to` and carries its NSAF entries,
    /// blacklist status and flows along without consulting the repository.
    pub fn handover(&mut self, device: &DeviceId, from: &NodeId, to: &NodeId) -> Result<HandoverResult, SmaError> {
        let unknown = || SmaError::UnknownDevice {
            device: device.to_string(),
            node: from.to_string(),
        };
        let src = self.deployments.get(from).filter(|d| d.nsaf.knows(device)).ok_or_else(unknown)?;
        if self.fabric.node(to)?.kind != NodeKind::Edge {
            return Err(SmaError::NotAnEdge(to.to_string()));
        }
        let host = self.host_of_device(device).ok_or_else(unknown)?;
        let grants_before = src.nsaf.allowed.get(device).cloned();
        let blacklisted = src.nsaf.blacklist.contains(device);
        let guard = src.guards.get(device).cloned();
        let fsf = src.fsf.is_some();
        let extractions = self.alc.count_kind("profile_extracted");

        if !self.deployments.contains_key(to) {
            let dep = self.compose(&ProfileLookup::NoProfile, to)?;
            self.deployments.insert(to.clone(), dep);
            self.alc.append(&AlcEvent::NsfDeployed {
                node: to.clone(),
                users: Vec::new(),
            });
        }
        let dst = self.deployments.get_mut(to).expect("ensured above");
        match &grants_before {
            Some(g) => {
                dst.nsaf.allowed.insert(device.clone(), g.clone());
            }
            None => {
                dst.nsaf.allowed.remove(device);
            }
        }
        if blacklisted {
            dst.nsaf.blacklist.insert(device.clone());
        }
        if let Some(g) = guard {
            dst.guards.insert(device.clone(), g);
        }
        if fsf {
            dst.fsf.get_or_insert_with(Default::default);
        }
        let grants_after = dst.nsaf.allowed.get(device).cloned().unwrap_or_default();

        self.fabric.relink_host(&host, to)?;
        let keys: Vec<_> = self.active.keys().filter(|(d, _)| d == device).cloned().collect();
        let mut reanchored = 0;
        for key in keys {
            let mut flow = self.active.remove(&key).expect("listed above");
            for (n, id) in &flow.rules {
                self.remove(n, id)?;
            }
            let mac = device.as_str().parse().map_err(|_| unknown())?;
            let src_ip = self.fabric.node(&host)?.ip.ok_or_else(unknown)?;
            if let Some(rules) =
                self.flow_rules(device, to, src_ip, &mac, Some(&host), &flow.dst_host, flow.dst_ip, flow.slice)?
            {
                flow.rules = rules.iter().map(|(n, r)| (n.clone(), r.rule_id.clone())).collect();
                for (n, r) in rules {
                    self.install(&n, r)?;
                }
                flow.edge = to.clone();
                self.active.insert(key, flow);
                reanchored += 1;
            }
        }
        if blacklisted {
            self.install_device_drop(device, to)?;
        }
        self.alc.append(&AlcEvent::Handover {
            device_id: device.to_string(),
            from: from.clone(),
            to: to.clone(),
        });
        Ok(HandoverResult {
            device_id: device.to_string(),
            from: from.clone(),
            to: to.clone(),
            grants_before: grants_before.unwrap_or_default(),
            grants_after,
            blacklisted,
            flows_reanchored: reanchored,
            profile_extractions: self.alc.count_kind("profile_extracted") - extractions,
        })
    }

    /// Out-of-band registration: the rule goes straight into the repository.
    pub fn register_device(&mut self, rule: PolicyRule) -> Result<(), SmaError> {
        let device_id = rule.device.device_id.to_string();
        let policy_id = rule.policy_id.clone();
        self.repo.insert(rule)?;
        self.alc.append(&AlcEvent::DeviceRegistered { device_id, policy_id });
        Ok(())
    }
}
