use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FabricError;

/// Identifier of a node in the fabric (switch or host).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Switch port number. Ports are numbered from 1 in link declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortId(pub u16);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A slice is a VLAN; the tag must lie in 1..=4094.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct SliceId(u16);

impl SliceId {
    pub const MIN: u16 = 1;
    pub const MAX: u16 = 4094;

    pub fn new(vlan: u16) -> Result<Self, FabricError> {
        if (Self::MIN..=Self::MAX).contains(&vlan) {
            Ok(SliceId(vlan))
        } else {
            Err(FabricError::SliceOutOfRange(vlan as i64))
        }
    }

    pub fn vlan(self) -> u16 {
        self.0
    }

    /// Parses `"VLAN200"`, `"vlan200"` or `"200"`.
    pub fn parse_label(label: &str) -> Result<Self, FabricError> {
        let trimmed = label.trim();
        let digits = trimmed
            .strip_prefix("VLAN")
            .or_else(|| trimmed.strip_prefix("vlan"))
            .unwrap_or(trimmed);
        let vlan: i64 = digits
            .parse()
            .map_err(|_| FabricError::BadSliceLabel(label.to_string()))?;
        if !(Self::MIN as i64..=Self::MAX as i64).contains(&vlan) {
            return Err(FabricError::SliceOutOfRange(vlan));
        }
        Ok(SliceId(vlan as u16))
    }
}

impl TryFrom<u16> for SliceId {
    type Error = FabricError;

    fn try_from(v: u16) -> Result<Self, Self::Error> {
        SliceId::new(v)
    }
}

impl From<SliceId> for u16 {
    fn from(s: SliceId) -> u16 {
        s.0
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VLAN{}", self.0)
    }
}

/// Hardware address, normalized to lowercase colon-separated octets.
///
/// Any length from 1 to 8 octets is accepted; sample policies use short
/// addresses such as `00:09:00:AA`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddr(String);

impl MacAddr {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for MacAddr {
    type Err = FabricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let octets: Vec<&str> = s.trim().split(':').collect();
        let well_formed = (1..=8).contains(&octets.len())
            && octets
                .iter()
                .all(|o| o.len() == 2 && o.chars().all(|c| c.is_ascii_hexdigit()));
        if !well_formed {
            return Err(FabricError::BadMac(s.to_string()));
        }
        Ok(MacAddr(s.trim().to_ascii_lowercase()))
    }
}

impl TryFrom<String> for MacAddr {
    type Error = FabricError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MacAddr> for String {
    fn from(m: MacAddr) -> String {
        m.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A simulated packet. Timestamps are virtual microseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub slice: Option<SliceId>,
    #[serde(with = "hex::serde")]
    pub payload: Vec<u8>,
    pub flow_id: String,
    pub time_us: u64,
}

impl Packet {
    pub fn header(&self) -> PacketHeader {
        PacketHeader {
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            src_mac: self.src_mac.clone(),
            dst_mac: self.dst_mac.clone(),
            slice: self.slice,
            flow_id: self.flow_id.clone(),
            payload_len: self.payload.len(),
            time_us: self.time_us,
        }
    }
}

/// Everything in a packet except its payload; this is what a switch punts to
/// the controller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub slice: Option<SliceId>,
    pub flow_id: String,
    pub payload_len: usize,
    pub time_us: u64,
}

impl PacketHeader {
    /// Byte rendering used by header-scoped signatures.
    pub fn scan_bytes(&self) -> Vec<u8> {
        format!(
            "{} {} {} {} {}",
            self.src_ip, self.dst_ip, self.src_mac, self.dst_mac, self.flow_id
        )
        .into_bytes()
    }
}

/// Match part of a flow rule. `None` fields are wildcards.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_ip: Option<Ipv4Addr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_ip: Option<Ipv4Addr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_mac: Option<MacAddr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_mac: Option<MacAddr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceId>,
}

impl FlowKey {
    pub fn any() -> Self {
        FlowKey::default()
    }

    pub fn matches(&self, p: &Packet) -> bool {
        self.src_ip.map_or(true, |ip| ip == p.src_ip)
            && self.dst_ip.map_or(true, |ip| ip == p.dst_ip)
            && self.src_mac.as_ref().map_or(true, |m| *m == p.src_mac)
            && self.dst_mac.as_ref().map_or(true, |m| *m == p.dst_mac)
            && self.slice.map_or(true, |s| p.slice == Some(s))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Forward { port: PortId, slice: SliceId },
    Drop,
    PuntToController,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Controller,
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRule {
    pub rule_id: String,
    #[serde(rename = "match")]
    pub key: FlowKey,
    pub action: Action,
    pub priority: u16,
    pub provenance: Provenance,
}

impl FlowRule {
    pub fn new(rule_id: impl Into<String>, key: FlowKey, action: Action, priority: u16) -> Self {
        FlowRule {
            rule_id: rule_id.into(),
            key,
            action,
            priority,
            provenance: Provenance::Controller,
        }
    }

    pub fn reported(&self) -> ReportedRule {
        ReportedRule {
            rule_id: self.rule_id.clone(),
            key: self.key.clone(),
            action: self.action.clone(),
            priority: self.priority,
        }
    }
}

/// A flow rule as a switch reports it: provenance is not visible to the
/// switch and therefore not part of the report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedRule {
    pub rule_id: String,
    #[serde(rename = "match")]
    pub key: FlowKey,
    pub action: Action,
    pub priority: u16,
}

impl ReportedRule {
    pub fn same_content(&self, other: &ReportedRule) -> bool {
        self.key == other.key && self.action == other.action && self.priority == other.priority
    }
}

/// Sorts rules into report order: priority descending, then rule id.
pub fn canonical_order(rules: &mut [ReportedRule]) {
    rules.sort_by(|a, b| {
        b.priority
            .cmp(&a.priority)
            .then_with(|| a.rule_id.cmp(&b.rule_id))
    });
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchStateReport {
    pub node_id: NodeId,
    pub rules: Vec<ReportedRule>,
    pub report_time_us: u64,
}

impl SwitchStateReport {
    /// Canonical JSON bytes; identical tables give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("report serialization is infallible")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    pub node_id: NodeId,
    #[serde(with = "hex::serde")]
    pub measured_hash: [u8; 32],
    #[serde(with = "hex::serde")]
    pub nonce: [u8; 16],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_labels() {
        assert_eq!(SliceId::parse_label("VLAN200").unwrap().vlan(), 200);
        assert_eq!(SliceId::parse_label("4094").unwrap().vlan(), 4094);
        assert!(SliceId::parse_label("VLAN0").is_err());
        assert!(SliceId::parse_label("VLAN4095").is_err());
        assert!(SliceId::parse_label("blue").is_err());
        assert!(serde_json::from_str::<SliceId>("5000").is_err());
    }

    #[test]
    fn mac_normalization() {
        let m: MacAddr = "00:09:00:AA".parse().unwrap();
        assert_eq!(m.as_str(), "00:09:00:aa");
        assert!("00:9:00".parse::<MacAddr>().is_err());
        assert!("zz:00".parse::<MacAddr>().is_err());
    }

    #[test]
    fn wildcard_key_matches_everything() {
        let p = Packet {
            src_ip: "10.0.0.1".parse().unwrap(),
            dst_ip: "10.0.0.8".parse().unwrap(),
            src_mac: "00:09:00:aa".parse().unwrap(),
            dst_mac: "00:09:00:bb".parse().unwrap(),
            slice: None,
            payload: vec![],
            flow_id: "78b34x".into(),
            time_us: 0,
        };
        assert!(FlowKey::any().matches(&p));
        let tagged = FlowKey {
            slice: Some(SliceId::new(200).unwrap()),
            ..FlowKey::any()
        };
        assert!(!tagged.matches(&p));
    }
}
