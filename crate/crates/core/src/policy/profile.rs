use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::repo::{DeviceId, Grant, PolicyRepository, SecurityReq};
use crate::fabric::MacAddr;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device_id: DeviceId,
    pub device_type: String,
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
}

/// Per-device white and black lists of destination addresses.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceLists {
    pub whitelist: BTreeSet<Ipv4Addr>,
    pub blacklist: BTreeSet<Ipv4Addr>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    pub contract_id: String,
    pub role: String,
    pub devices: Vec<DeviceEntry>,
    pub allowed: BTreeMap<DeviceId, BTreeSet<Grant>>,
    pub security_reqs: BTreeMap<String, BTreeSet<SecurityReq>>,
    pub lists: BTreeMap<DeviceId, DeviceLists>,
}

/// Everything the PRE knows about one user: all contracts, all devices, and
/// every slice/service each device may use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityProfile {
    pub user_id: String,
    pub contracts: Vec<Contract>,
}

impl SecurityProfile {
    pub fn devices(&self) -> BTreeMap<&DeviceId, &DeviceEntry> {
        self.contracts
            .iter()
            .flat_map(|c| c.devices.iter().map(|d| (&d.device_id, d)))
            .collect()
    }

    /// Union of the device's grants over all contracts.
    pub fn allowed_pairs(&self, device: &DeviceId) -> BTreeSet<Grant> {
        self.contracts
            .iter()
            .filter_map(|c| c.allowed.get(device))
            .flatten()
            .cloned()
            .collect()
    }

    pub fn service_reqs(&self, service: &str) -> BTreeSet<SecurityReq> {
        self.contracts
            .iter()
            .filter_map(|c| c.security_reqs.get(service))
            .flatten()
            .copied()
            .collect()
    }

    pub fn requires_any(&self, req: SecurityReq) -> bool {
        self.contracts
            .iter()
            .flat_map(|c| c.security_reqs.values())
            .any(|reqs| reqs.contains(&req))
    }

    pub fn lists(&self, device: &DeviceId) -> DeviceLists {
        let mut out = DeviceLists::default();
        for l in self.contracts.iter().filter_map(|c| c.lists.get(device)) {
            out.whitelist.extend(l.whitelist.iter().copied());
            out.blacklist.extend(l.blacklist.iter().copied());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "lookup", rename_all = "snake_case")]
pub enum ProfileLookup {
    Found(SecurityProfile),
    /// The user has no contracts; callers fall back to the generic slice.
    NoProfile,
}

impl ProfileLookup {
    pub fn profile(&self) -> Option<&SecurityProfile> {
        match self {
            ProfileLookup::Found(p) => Some(p),
            ProfileLookup::NoProfile => None,
        }
    }
}

/// Builds the full profile for `user_id`, covering all of the user's devices
/// rather than only the one that triggered the request.
pub fn extract_profile(repo: &PolicyRepository, user_id: &str) -> ProfileLookup {
    let mut contracts: BTreeMap<&str, Contract> = BTreeMap::new();
    for rule in repo.user_rules(user_id) {
        let c = contracts
            .entry(rule.contract_id.as_str())
            .or_insert_with(|| Contract {
                contract_id: rule.contract_id.clone(),
                role: rule.user.role.clone(),
                devices: Vec::new(),
                allowed: BTreeMap::new(),
                security_reqs: BTreeMap::new(),
                lists: BTreeMap::new(),
            });
        let dev = &rule.device;
        if !c.devices.iter().any(|d| d.device_id == dev.device_id) {
            c.devices.push(DeviceEntry {
                device_id: dev.device_id.clone(),
                device_type: dev.device_type.clone(),
                ip: dev.ip,
                mac: dev.mac.clone(),
            });
        }
        let grants = c.allowed.entry(dev.device_id.clone()).or_default();
        let lists = c.lists.entry(dev.device_id.clone()).or_default();
        for a in &rule.actions {
            grants.insert(a.grant());
            c.security_reqs
                .entry(a.service.clone())
                .or_default()
                .extend(a.security_reqs.iter().copied());
            lists.whitelist.extend(a.whitelist.iter().copied());
            lists.blacklist.extend(a.blacklist.iter().copied());
        }
    }
    if contracts.is_empty() {
        return ProfileLookup::NoProfile;
    }
    let mut contracts: Vec<Contract> = contracts.into_values().collect();
    for c in &mut contracts {
        c.devices.sort_by(|a, b| a.device_id.cmp(&b.device_id));
        c.lists.retain(|_, l| !l.whitelist.is_empty() || !l.blacklist.is_empty());
    }
    ProfileLookup::Found(SecurityProfile {
        user_id: user_id.to_string(),
        contracts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::SliceId;

    const TWO_DEVICES: &str = r#"[
        {"id": "p1", "hostip": "10.0.0.1", "hostmac": "00:00:00:01",
         "destip": "10.0.0.6", "dstmac": "00:00:00:06",
         "user": {"id": "alice", "name": "Alice", "role": "employee", "organization": "Acme"},
         "contract_id": "acme-1",
         "actions": [{"Service": "Healthcare", "Slice-id": "VLAN300", "security": ["confidentiality"]}]},
        {"id": "p2", "hostip": "10.0.0.2", "hostmac": "00:00:00:02",
         "destip": "10.0.0.7", "dstmac": "00:00:00:07",
         "user": {"id": "alice", "name": "Alice", "role": "employee", "organization": "Acme"},
         "contract_id": "acme-1",
         "actions": [{"Service": "Finance", "Slice-id": "VLAN400"}]},
        {"id": "p3", "hostip": "10.0.0.1", "hostmac": "00:00:00:01",
         "destip": "10.0.0.6", "dstmac": "00:00:00:06",
         "user": {"id": "alice", "name": "Alice", "role": "Personal-Role", "organization": ""},
         "contract_id": "personal",
         "actions": [{"Service": "Healthcare", "Slice-id": "VLAN300"},
                     {"Service": "Home", "Slice-id": "VLAN100"}]}
    ]"#;

    fn dev(mac: &str) -> DeviceId {
        DeviceId::from_mac(&mac.parse().unwrap())
    }

    fn grant(vlan: u16, service: &str) -> Grant {
        Grant {
            slice: SliceId::new(vlan).unwrap(),
            service: service.into(),
        }
    }

    #[test]
    fn profile_covers_every_device_of_the_user() {
        let repo = PolicyRepository::load(TWO_DEVICES, None).unwrap();
        let ProfileLookup::Found(p) = extract_profile(&repo, "alice") else {
            panic!("expected profile");
        };
        let devices = p.devices();
        assert_eq!(devices.len(), 2);
        assert!(p.allowed_pairs(&dev("00:00:00:02")).contains(&grant(400, "Finance")));
        assert!(p.allowed_pairs(&dev("00:00:00:01")).contains(&grant(300, "Healthcare")));
        assert!(p.requires_any(SecurityReq::Confidentiality));
    }

    #[test]
    fn grants_union_across_contracts_without_duplicates() {
        let repo = PolicyRepository::load(TWO_DEVICES, None).unwrap();
        let p = extract_profile(&repo, "alice");
        let p = p.profile().unwrap();
        // oracle: plain set union of the per-contract lists
        let mut expected = BTreeSet::new();
        for c in &p.contracts {
            for g in c.allowed.get(&dev("00:00:00:01")).into_iter().flatten() {
                expected.insert(g.clone());
            }
        }
        let got = p.allowed_pairs(&dev("00:00:00:01"));
        assert_eq!(got, expected);
        assert_eq!(got.len(), 2);
        let roles: BTreeSet<&str> = p.contracts.iter().map(|c| c.role.as_str()).collect();
        assert!(roles.contains("Personal-Role"));
    }

    #[test]
    fn unknown_user_has_no_profile() {
        let repo = PolicyRepository::load(TWO_DEVICES, None).unwrap();
        assert_eq!(extract_profile(&repo, "mallory"), ProfileLookup::NoProfile);
    }
}
