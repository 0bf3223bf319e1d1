use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::SmaConfig;
use super::SmaError;
use crate::fabric::NodeId;
use crate::policy::{DeviceId, Grant, ProfileLookup, SecurityReq};
use crate::secfn::{DeviceGuard, Fingerprint, FvfState, NsafState, Signature};

/// The security functions the SMA has placed on one edge node.
#[derive(Clone, Debug)]
pub struct NsfDeployment {
    pub node: NodeId,
    pub nsaf: NsafState,
    pub fvf: FvfState,
    /// Rate limiter for devices routed to the generic slice.
    pub guest: FvfState,
    pub guards: BTreeMap<DeviceId, DeviceGuard>,
    /// Present when some covered service needs confidentiality; maps flow
    /// id to key id.
    pub fsf: Option<BTreeMap<String, String>>,
    pub deployed_at_us: u64,
    pub covered_users: BTreeSet<String>,
}

/// Serializable view of a deployment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub node: NodeId,
    pub allowed: BTreeMap<DeviceId, BTreeSet<Grant>>,
    pub blacklist: BTreeSet<DeviceId>,
    pub fsf: Option<BTreeMap<String, String>>,
    pub deployed_at_us: u64,
    pub covered_users: BTreeSet<String>,
    pub signatures: usize,
}

impl NsfDeployment {
    pub fn summary(&self) -> DeploymentSummary {
        DeploymentSummary {
            node: self.node.clone(),
            allowed: self.nsaf.allowed.clone(),
            blacklist: self.nsaf.blacklist.clone(),
            fsf: self.fsf.clone(),
            deployed_at_us: self.deployed_at_us,
            covered_users: self.covered_users.clone(),
            signatures: self.fvf.signatures().len(),
        }
    }

    /// Folds a freshly composed deployment into this one, keeping the
    /// running FVF windows.
    pub fn absorb(&mut self, other: NsfDeployment) {
        for (dev, grants) in other.nsaf.allowed {
            self.nsaf.allowed.entry(dev).or_default().extend(grants);
        }
        self.guards.extend(other.guards);
        if let Some(slot) = other.fsf {
            self.fsf.get_or_insert_with(BTreeMap::new).extend(slot);
        }
        self.covered_users.extend(other.covered_users);
    }
}

/// NSAF loaded with every device of the profile, FVF with the global
/// signature set, and an FSF slot if any service needs confidentiality.
pub fn compose_nsf(
    lookup: &ProfileLookup,
    node: &NodeId,
    signatures: &[Signature],
    config: &SmaConfig,
    now_us: u64,
) -> Result<NsfDeployment, SmaError> {
    let mut nsaf = NsafState::new(node.clone(), config.generic_slice);
    let mut guards = BTreeMap::new();
    let mut covered_users = BTreeSet::new();
    let mut fsf = None;
    if let ProfileLookup::Found(profile) = lookup {
        covered_users.insert(profile.user_id.clone());
        for (dev, entry) in profile.devices() {
            nsaf.allowed.insert(dev.clone(), profile.allowed_pairs(dev));
            guards.insert(
                dev.clone(),
                DeviceGuard {
                    fingerprint: Some(Fingerprint {
                        ip: entry.ip,
                        mac: entry.mac.clone(),
                    }),
                    lists: profile.lists(dev),
                },
            );
        }
        if profile.requires_any(SecurityReq::Confidentiality) {
            fsf = Some(BTreeMap::new());
        }
    }
    Ok(NsfDeployment {
        node: node.clone(),
        nsaf,
        fvf: FvfState::new(signatures.to_vec(), config.window_us, config.rate_threshold)?,
        guest: FvfState::new(Vec::new(), config.window_us, config.generic_rate_cap)?,
        guards,
        fsf,
        deployed_at_us: now_us,
        covered_users,
    })
}
