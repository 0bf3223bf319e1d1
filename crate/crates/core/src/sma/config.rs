use serde::{Deserialize, Serialize};

use crate::fabric::{NodeId, SliceId};
use crate::secfn::{DEFAULT_RATE_THRESHOLD, DEFAULT_WINDOW_US};

/// Virtual processing costs in microseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    /// Switch to controller and back.
    pub control_rtt_us: u64,
    /// Slice-selection hop that hands the request to the SMA.
    pub dispatch_us: u64,
    pub path_compute_us: u64,
    pub path_per_switch_us: u64,
    pub flow_mod_us: u64,
    pub profile_extract_us: u64,
    pub nsf_compose_us: u64,
    pub nsf_deploy_us: u64,
    pub nsaf_us: u64,
    pub device_check_us: u64,
    pub fvf_base_us: u64,
    pub fvf_per_signature_us: u64,
    pub fsf_us: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            control_rtt_us: 1_000,
            dispatch_us: 120,
            path_compute_us: 1_000,
            path_per_switch_us: 8,
            flow_mod_us: 750,
            profile_extract_us: 100,
            nsf_compose_us: 60,
            nsf_deploy_us: 60,
            nsaf_us: 5,
            device_check_us: 5,
            fvf_base_us: 10,
            fvf_per_signature_us: 1,
            fsf_us: 15,
        }
    }
}

impl CostModel {
    /// Everything zero except the controller round trip.
    pub fn round_trip_only(control_rtt_us: u64) -> Self {
        CostModel {
            control_rtt_us,
            dispatch_us: 0,
            path_compute_us: 0,
            path_per_switch_us: 0,
            flow_mod_us: 0,
            profile_extract_us: 0,
            nsf_compose_us: 0,
            nsf_deploy_us: 0,
            nsaf_us: 0,
            device_check_us: 0,
            fvf_base_us: 0,
            fvf_per_signature_us: 0,
            fsf_us: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmaConfig {
    /// When off the controller only routes by policy; no NSF is composed and
    /// the datapath runs no security functions.
    pub security: bool,
    pub generic_slice: SliceId,
    /// Packets per window allowed for devices on the generic slice.
    pub generic_rate_cap: u32,
    pub window_us: u64,
    pub rate_threshold: u32,
    pub audit_period_us: Option<u64>,
    /// Run FVF at this switch instead of at each edge.
    pub fvf_node: Option<NodeId>,
    /// Blacklist a device at its entry NSAF when FVF alerts on it.
    pub blacklist_on_alert: bool,
    pub seed: u64,
    pub costs: CostModel,
}

impl Default for SmaConfig {
    fn default() -> Self {
        SmaConfig {
            security: true,
            generic_slice: SliceId::new(4094).expect("4094 is a valid VLAN"),
            generic_rate_cap: 20,
            window_us: DEFAULT_WINDOW_US,
            rate_threshold: DEFAULT_RATE_THRESHOLD,
            audit_period_us: Some(1_000_000),
            fvf_node: None,
            blacklist_on_alert: true,
            seed: 0,
            costs: CostModel::default(),
        }
    }
}
