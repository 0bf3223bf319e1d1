//! Policy Repository and Engine (PRE) plus the Activity Logs Component (ALC).

mod alc;
mod profile;
mod repo;

use thiserror::Error;

pub use alc::{ActivityLog, AlcEntry, AlcEvent, TrustedReport, GENESIS_HASH};
pub use profile::{
    extract_profile, Contract, DeviceEntry, DeviceLists, ProfileLookup, SecurityProfile,
};
pub use repo::{
    DeviceId, DeviceRef, FlowTuple, Grant, MatchResult, PolicyAction, PolicyRepository,
    PolicyRule, SecurityReq, UserInfo, PERSONAL_ROLE,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate policy id {0}")]
    DuplicatePolicy(String),
    #[error("policy {policy} references unknown slice {slice}")]
    UnknownSlice { policy: String, slice: u16 },
    #[error("policy {0} grants no services")]
    NoServices(String),
    #[error("policy {policy}: {reason}")]
    Field { policy: String, reason: String },
    #[error("activity log chain broken at entry {0}")]
    BrokenChain(u64),
    #[error("activity log i/o: {0}")]
    Io(String),
}
