use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fabric::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityFunction {
    Nsaf,
    Fvf,
    Tvf,
    Imf,
    Kgf,
    Fsf,
    DeviceSpecific,
    Sma,
}

impl fmt::Display for SecurityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SecurityFunction::Nsaf => "NSAF",
            SecurityFunction::Fvf => "FVF",
            SecurityFunction::Tvf => "TVF",
            SecurityFunction::Imf => "IMF",
            SecurityFunction::Kgf => "KGF",
            SecurityFunction::Fsf => "FSF",
            SecurityFunction::DeviceSpecific => "DSF",
            SecurityFunction::Sma => "SMA",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Critical,
}

/// A security event raised by one of the functions and handled by the SMA.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub source: SecurityFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_id: Option<String>,
    pub reason: String,
    pub severity: Severity,
    pub time_us: u64,
}
