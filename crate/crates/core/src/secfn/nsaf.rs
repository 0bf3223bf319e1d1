use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::fabric::{NodeId, Packet, SliceId};
use crate::policy::{DeviceId, Grant};

/// Slice-entry authorization state for one edge node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NsafState {
    pub node: NodeId,
    pub allowed: BTreeMap<DeviceId, BTreeSet<Grant>>,
    pub blacklist: BTreeSet<DeviceId>,
    pub generic_slice: SliceId,
}

impl NsafState {
    pub fn new(node: NodeId, generic_slice: SliceId) -> Self {
        NsafState {
            node,
            allowed: BTreeMap::new(),
            blacklist: BTreeSet::new(),
            generic_slice,
        }
    }

    pub fn knows(&self, device: &DeviceId) -> bool {
        self.allowed.contains_key(device) || self.blacklist.contains(device)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NsafVerdict {
    Permit,
    DenyUnauthorized,
    DenyBlacklisted,
    RouteGeneric { slice: SliceId },
}

impl NsafVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            NsafVerdict::Permit => "permit",
            NsafVerdict::DenyUnauthorized => "deny_unauthorized",
            NsafVerdict::DenyBlacklisted => "deny_blacklisted",
            NsafVerdict::RouteGeneric { .. } => "route_generic",
        }
    }
}

/// Blacklist first, then the allowed map; devices the node has no entry for
/// go to the generic slice. `requested` is `None` when the destination
/// offers no known service.
pub fn nsaf_check(state: &NsafState, packet: &Packet, requested: Option<&Grant>) -> NsafVerdict {
    let device = DeviceId::from_mac(&packet.src_mac);
    if state.blacklist.contains(&device) {
        return NsafVerdict::DenyBlacklisted;
    }
    match state.allowed.get(&device) {
        None => NsafVerdict::RouteGeneric {
            slice: state.generic_slice,
        },
        Some(grants) => match requested {
            Some(g) if grants.contains(g) => NsafVerdict::Permit,
            _ => NsafVerdict::DenyUnauthorized,
        },
    }
}
