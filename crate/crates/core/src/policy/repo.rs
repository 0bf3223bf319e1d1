use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::fabric::{MacAddr, SliceId};

/// Device identity. The MAC address is authoritative; IPs may change.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(String);

impl DeviceId {
    pub fn from_mac(mac: &MacAddr) -> Self {
        DeviceId(mac.as_str().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityReq {
    Confidentiality,
    Integrity,
    Authentication,
    Accountability,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserInfo {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub role: String,
    #[serde(default)]
    pub organization: String,
}

/// A (slice, service) authorization.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Grant {
    pub slice: SliceId,
    pub service: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub service: String,
    pub slice: SliceId,
    pub security_reqs: BTreeSet<SecurityReq>,
    pub whitelist: BTreeSet<Ipv4Addr>,
    pub blacklist: BTreeSet<Ipv4Addr>,
}

impl PolicyAction {
    pub fn grant(&self) -> Grant {
        Grant {
            slice: self.slice,
            service: self.service.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRef {
    pub device_id: DeviceId,
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub device_type: String,
}

/// One stored policy rule: request, device, user, services and actions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub policy_id: String,
    pub request_id: Option<String>,
    pub device: DeviceRef,
    pub dest_ip: Ipv4Addr,
    pub dest_mac: MacAddr,
    pub flow_id: Option<String>,
    pub user: UserInfo,
    pub contract_id: String,
    pub actions: Vec<PolicyAction>,
}

impl PolicyRule {
    pub fn services(&self) -> BTreeSet<&str> {
        self.actions.iter().map(|a| a.service.as_str()).collect()
    }
}

// On-disk shape. Field names follow the sample policy format.
#[derive(Deserialize, Serialize)]
struct PolicyDoc {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
    hostip: Ipv4Addr,
    hostmac: String,
    destip: Ipv4Addr,
    dstmac: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flowid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    device_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user: Option<UserInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contract_id: Option<String>,
    actions: Vec<ActionDoc>,
}

#[derive(Deserialize, Serialize)]
struct ActionDoc {
    #[serde(rename = "Service")]
    service: String,
    #[serde(rename = "Slice-id")]
    slice: SliceLabel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    security: Vec<SecurityReq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    whitelist: Option<Vec<Ipv4Addr>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blacklist: Option<Vec<Ipv4Addr>>,
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum SliceLabel {
    Number(i64),
    Text(String),
}

impl SliceLabel {
    fn parse(&self) -> Result<SliceId, crate::fabric::FabricError> {
        match self {
            SliceLabel::Number(n) => SliceId::parse_label(&n.to_string()),
            SliceLabel::Text(t) => SliceId::parse_label(t),
        }
    }
}

impl PolicyDoc {
    fn into_rule(self) -> Result<PolicyRule, PolicyError> {
        let field = |e: crate::fabric::FabricError| PolicyError::Field {
            policy: self.id.clone(),
            reason: e.to_string(),
        };
        let mac: MacAddr = self.hostmac.parse().map_err(field)?;
        let dest_mac: MacAddr = self.dstmac.parse().map_err(field)?;
        if self.actions.is_empty() {
            return Err(PolicyError::NoServices(self.id.clone()));
        }
        let mut actions = Vec::with_capacity(self.actions.len());
        for a in &self.actions {
            actions.push(PolicyAction {
                service: a.service.clone(),
                slice: a.slice.parse().map_err(field)?,
                security_reqs: a.security.iter().copied().collect(),
                whitelist: a.whitelist.iter().flatten().copied().collect(),
                blacklist: a.blacklist.iter().flatten().copied().collect(),
            });
        }
        let device_id = DeviceId::from_mac(&mac);
        // sample policies carry no user block; such a rule belongs to a
        // personal user keyed by the device
        let user = self.user.clone().unwrap_or_else(|| UserInfo {
            id: format!("device:{device_id}"),
            name: String::new(),
            role: PERSONAL_ROLE.to_string(),
            organization: String::new(),
        });
        Ok(PolicyRule {
            policy_id: self.id.clone(),
            request_id: self.request_id.clone(),
            device: DeviceRef {
                device_id,
                ip: self.hostip,
                mac,
                device_type: self.device_type.clone().unwrap_or_else(|| "ue".into()),
            },
            dest_ip: self.destip,
            dest_mac,
            flow_id: self.flowid.clone(),
            user,
            contract_id: self.contract_id.clone().unwrap_or_else(|| "default".into()),
            actions,
        })
    }

    fn from_rule(rule: &PolicyRule) -> Self {
        PolicyDoc {
            id: rule.policy_id.clone(),
            request_id: rule.request_id.clone(),
            hostip: rule.device.ip,
            hostmac: rule.device.mac.to_string(),
            destip: rule.dest_ip,
            dstmac: rule.dest_mac.to_string(),
            flowid: rule.flow_id.clone(),
            device_type: Some(rule.device.device_type.clone()),
            user: Some(rule.user.clone()),
            contract_id: Some(rule.contract_id.clone()),
            actions: rule
                .actions
                .iter()
                .map(|a| ActionDoc {
                    service: a.service.clone(),
                    slice: SliceLabel::Text(a.slice.to_string()),
                    security: a.security_reqs.iter().copied().collect(),
                    whitelist: (!a.whitelist.is_empty())
                        .then(|| a.whitelist.iter().copied().collect()),
                    blacklist: (!a.blacklist.is_empty())
                        .then(|| a.blacklist.iter().copied().collect()),
                })
                .collect(),
        }
    }
}

/// Role name for contracts a user holds on their own behalf.
pub const PERSONAL_ROLE: &str = "Personal-Role";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowTuple {
    pub src_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_ip: Ipv4Addr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum MatchResult {
    Authorized {
        slice: SliceId,
        service: String,
        security_reqs: BTreeSet<SecurityReq>,
        policy_id: String,
    },
    Unauthorized,
    Unknown,
}

/// Policy store indexed by device, device IP and user.
#[derive(Clone, Debug, Default)]
pub struct PolicyRepository {
    rules: BTreeMap<String, PolicyRule>,
    by_device: BTreeMap<DeviceId, BTreeSet<String>>,
    by_ip: BTreeMap<Ipv4Addr, DeviceId>,
    by_user: BTreeMap<String, BTreeSet<String>>,
    services: BTreeMap<Ipv4Addr, BTreeSet<Grant>>,
}

impl PolicyRepository {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a JSON array of policies. When `known_slices` is given, every
    /// referenced slice must be one of them.
    pub fn load(text: &str, known_slices: Option<&BTreeSet<SliceId>>) -> Result<Self, PolicyError> {
        let docs: Vec<PolicyDoc> = serde_json::from_str(text)?;
        let mut repo = PolicyRepository::new();
        for doc in docs {
            let rule = doc.into_rule()?;
            if let Some(known) = known_slices {
                if let Some(a) = rule.actions.iter().find(|a| !known.contains(&a.slice)) {
                    return Err(PolicyError::UnknownSlice {
                        policy: rule.policy_id.clone(),
                        slice: a.slice.vlan(),
                    });
                }
            }
            repo.insert(rule)?;
        }
        Ok(repo)
    }

    pub fn to_json(&self) -> String {
        let docs: Vec<PolicyDoc> = self.rules.values().map(PolicyDoc::from_rule).collect();
        serde_json::to_string_pretty(&docs).expect("policy serialization is infallible")
    }

    /// Adds one rule (also used for out-of-band device registration).
    pub fn insert(&mut self, rule: PolicyRule) -> Result<(), PolicyError> {
        if self.rules.contains_key(&rule.policy_id) {
            return Err(PolicyError::DuplicatePolicy(rule.policy_id));
        }
        if rule.actions.is_empty() {
            return Err(PolicyError::NoServices(rule.policy_id));
        }
        let id = rule.policy_id.clone();
        self.by_device
            .entry(rule.device.device_id.clone())
            .or_default()
            .insert(id.clone());
        self.by_ip.insert(rule.device.ip, rule.device.device_id.clone());
        self.by_user
            .entry(rule.user.id.clone())
            .or_default()
            .insert(id.clone());
        self.services
            .entry(rule.dest_ip)
            .or_default()
            .extend(rule.actions.iter().map(PolicyAction::grant));
        self.rules.insert(id, rule);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = &PolicyRule> {
        self.rules.values()
    }

    pub fn rule(&self, policy_id: &str) -> Option<&PolicyRule> {
        self.rules.get(policy_id)
    }

    pub fn device_rules<'a>(&'a self, device: &DeviceId) -> impl Iterator<Item = &'a PolicyRule> {
        self.by_device
            .get(device)
            .into_iter()
            .flatten()
            .map(move |id| &self.rules[id])
    }

    pub fn user_rules<'a>(&'a self, user_id: &str) -> impl Iterator<Item = &'a PolicyRule> {
        self.by_user
            .get(user_id)
            .into_iter()
            .flatten()
            .map(move |id| &self.rules[id])
    }

    pub fn knows_device(&self, device: &DeviceId) -> bool {
        self.by_device.contains_key(device)
    }

    pub fn device_by_ip(&self, ip: Ipv4Addr) -> Option<&DeviceId> {
        self.by_ip.get(&ip)
    }

    /// Owning user of a device; a device belongs to the user of its lowest
    /// policy id.
    pub fn owner_of(&self, device: &DeviceId) -> Option<&str> {
        self.device_rules(device).next().map(|r| r.user.id.as_str())
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.by_user.keys().map(String::as_str)
    }

    /// Services offered at a destination address, across all policies.
    pub fn services_at(&self, ip: Ipv4Addr) -> Option<&BTreeSet<Grant>> {
        self.services.get(&ip)
    }

    pub fn is_service_address(&self, ip: Ipv4Addr) -> bool {
        self.services.contains_key(&ip)
    }

    /// The (slice, service) a device is asking for when it sends to `dst`:
    /// its own grant there when it has one, otherwise whatever the address
    /// offers.
    pub fn requested_grant(&self, device: &DeviceId, dst: Ipv4Addr) -> Option<Grant> {
        let own = self
            .device_rules(device)
            .filter(|r| r.dest_ip == dst)
            .flat_map(|r| r.actions.iter().map(PolicyAction::grant))
            .min();
        own.or_else(|| self.services_at(dst).and_then(|g| g.iter().next().cloned()))
    }

    /// Total: never fails, and depends only on repository contents.
    pub fn match_policy(&self, flow: &FlowTuple) -> MatchResult {
        let device = DeviceId::from_mac(&flow.src_mac);
        if !self.knows_device(&device) {
            return MatchResult::Unknown;
        }
        let hit = self
            .device_rules(&device)
            .filter(|r| r.dest_ip == flow.dst_ip)
            .flat_map(|r| r.actions.iter().map(move |a| (r, a)))
            .min_by(|x, y| x.1.grant().cmp(&y.1.grant()));
        match hit {
            Some((rule, action)) => MatchResult::Authorized {
                slice: action.slice,
                service: action.service.clone(),
                security_reqs: action.security_reqs.clone(),
                policy_id: rule.policy_id.clone(),
            },
            None => MatchResult::Unauthorized,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LISTING: &str = r#"[{
        "id": "02",
        "hostip": "10.0.0.1",
        "hostmac": "00:09:00:AA",
        "destip": "10.0.0.8",
        "dstmac": "00:09:00:BB",
        "flowid": "78b34x",
        "actions": [{"Service": "Service1", "Slice-id": "VLAN200"}]
    }]"#;

    fn tuple(src: &str, mac: &str, dst: &str) -> FlowTuple {
        FlowTuple {
            src_ip: src.parse().unwrap(),
            src_mac: mac.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
        }
    }

    #[test]
    fn loads_sample_policy() {
        let repo = PolicyRepository::load(LISTING, None).unwrap();
        assert_eq!(repo.len(), 1);
        let dev = repo.device_by_ip("10.0.0.1".parse().unwrap()).unwrap().clone();
        let rule = repo.device_rules(&dev).next().unwrap();
        assert_eq!(rule.actions[0].service, "Service1");
        assert_eq!(rule.actions[0].slice.vlan(), 200);
        assert_eq!(rule.flow_id.as_deref(), Some("78b34x"));
        match repo.match_policy(&tuple("10.0.0.1", "00:09:00:aa", "10.0.0.8")) {
            MatchResult::Authorized { slice, service, .. } => {
                assert_eq!(slice.vlan(), 200);
                assert_eq!(service, "Service1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_repository_matches_nothing() {
        let repo = PolicyRepository::load("[]", None).unwrap();
        assert!(repo.is_empty());
        assert_eq!(
            repo.match_policy(&tuple("10.0.0.1", "00:09:00:aa", "10.0.0.8")),
            MatchResult::Unknown
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let two = format!("[{0},{0}]", LISTING.trim().trim_start_matches('[').trim_end_matches(']'));
        assert!(matches!(
            PolicyRepository::load(&two, None),
            Err(PolicyError::DuplicatePolicy(id)) if id == "02"
        ));
    }

    #[test]
    fn unknown_slice_and_schema_errors() {
        let known: BTreeSet<SliceId> = [SliceId::new(100).unwrap()].into();
        assert!(matches!(
            PolicyRepository::load(LISTING, Some(&known)),
            Err(PolicyError::UnknownSlice { slice: 200, .. })
        ));
        assert!(matches!(
            PolicyRepository::load(r#"[{"id":"1"}]"#, None),
            Err(PolicyError::Json(_))
        ));
        let no_actions = LISTING.replace(
            r#"[{"Service": "Service1", "Slice-id": "VLAN200"}]"#,
            "[]",
        );
        assert!(matches!(
            PolicyRepository::load(&no_actions, None),
            Err(PolicyError::NoServices(_))
        ));
    }

    #[test]
    fn unauthorized_and_unknown() {
        let repo = PolicyRepository::load(LISTING, None).unwrap();
        assert_eq!(
            repo.match_policy(&tuple("10.0.0.1", "00:09:00:aa", "10.0.0.6")),
            MatchResult::Unauthorized
        );
        assert_eq!(
            repo.match_policy(&tuple("10.0.0.1", "00:09:00:ff", "10.0.0.8")),
            MatchResult::Unknown
        );
    }

    #[test]
    fn json_round_trip_preserves_rules() {
        let repo = PolicyRepository::load(LISTING, None).unwrap();
        let again = PolicyRepository::load(&repo.to_json(), None).unwrap();
        assert_eq!(
            repo.rules().collect::<Vec<_>>(),
            again.rules().collect::<Vec<_>>()
        );
    }
}
