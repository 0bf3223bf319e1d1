//! Reproducible experiment harness: attack scenarios against the bundled
//! topology, the signature and audit runs, the flow-encryption path and the
//! two latency benchmarks. Every report is a pure function of the scenario
//! id, the configuration and the seed.

mod bench;
mod runs;
mod traffic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bench::{
    bench_flow_setup, bench_signature_latency, star_topology, BenchPoint, BenchReport, FlowSetupBench,
    ScanOrderResult, SignatureBench, SignatureBenchReport, SignaturePoint,
};
pub use traffic::{PacketCounts, Payload, TrafficSource};

use crate::alert::Alert;
use crate::fabric::{Fabric, FabricError, TopologyDocument};
use crate::policy::{PolicyError, PolicyRepository};
use crate::secfn::{load_signatures, AuditResult, SecFnError, Signature};
use crate::sma::{Sma, SmaConfig, SmaError};

pub const BUNDLED_TOPOLOGY: &str = include_str!("../../configs/topology.json");
pub const BUNDLED_POLICIES: &str = include_str!("../../configs/policies.json");
pub const BUNDLED_SIGNATURES: &str = include_str!("../../configs/signatures.json");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    SecFn(#[from] SecFnError),
    #[error(transparent)]
    Sma(#[from] SmaError),
    #[error("scenario needs node {0} in the topology")]
    MissingNode(String),
    #[error("invalid scenario config: {0}")]
    Config(String),
}

impl ScenarioError {
    /// True for problems with the inputs rather than with the run itself.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, ScenarioError::Sma(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Attack1,
    Attack2,
    Attack3,
    Attack4,
    Shellshock,
    FlowmodAudit,
    FsfPath,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Attack1,
        ScenarioId::Attack2,
        ScenarioId::Attack3,
        ScenarioId::Attack4,
        ScenarioId::Shellshock,
        ScenarioId::FlowmodAudit,
        ScenarioId::FsfPath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Attack1 => "attack1",
            ScenarioId::Attack2 => "attack2",
            ScenarioId::Attack3 => "attack3",
            ScenarioId::Attack4 => "attack4",
            ScenarioId::Shellshock => "shellshock",
            ScenarioId::FlowmodAudit => "flowmod_audit",
            ScenarioId::FsfPath => "fsf_path",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

/// Topology, policies and signatures a scenario runs against.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub topology: TopologyDocument,
    pub policies: String,
    pub signatures: Vec<Signature>,
}

impl Inputs {
    /// The configuration files shipped with the crate.
    pub fn bundled() -> Self {
        Inputs {
            topology: TopologyDocument::from_json(BUNDLED_TOPOLOGY).expect("bundled topology parses"),
            policies: BUNDLED_POLICIES.to_string(),
            signatures: load_signatures(BUNDLED_SIGNATURES).expect("bundled signatures parse"),
        }
    }

    /// Bundled inputs with any of the three files replaced.
    pub fn load(topology: Option<&Path>, policies: Option<&Path>, signatures: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut inputs = Inputs::bundled();
        if let Some(p) = topology {
            inputs.topology = TopologyDocument::from_json(&read(p)?).map_err(|e| ScenarioError::Topology(e.to_string()))?;
        }
        if let Some(p) = policies {
            inputs.policies = read(p)?;
        }
        if let Some(p) = signatures {
            inputs.signatures = load_signatures(&read(p)?)?;
        }
        // surface parse problems before any scenario starts
        let fabric = Fabric::build(&inputs.topology)?;
        PolicyRepository::load(&inputs.policies, Some(&fabric.slice_ids()))?;
        Ok(inputs)
    }

    pub fn build_sma(&self, config: &SmaConfig) -> Result<Sma, ScenarioError> {
        self.build_sma_with(config, self.signatures.clone())
    }

    pub fn build_sma_with(&self, config: &SmaConfig, signatures: Vec<Signature>) -> Result<Sma, ScenarioError> {
        let fabric = Fabric::build(&self.topology)?;
        let repo = PolicyRepository::load(&self.policies, Some(&fabric.slice_ids()))?;
        Ok(Sma::new(fabric, repo, signatures, config.clone())?)
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Knobs shared by all scenarios. Rates are derived from the anomaly
/// threshold so that a flood is always `flood_factor` times over it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub sma: SmaConfig,
    pub flood_factor: u32,
    pub attack_packets: usize,
    pub benign_packets: usize,
    /// Gap between packets of a benign source.
    pub benign_interval_us: u64,
    /// Upper bound of the random offset added to each benign packet.
    pub jitter_us: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sma: SmaConfig::default(),
            flood_factor: 10,
            attack_packets: 2_000,
            benign_packets: 100,
            benign_interval_us: 100_000,
            jitter_us: 5_000,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.flood_factor == 0 || self.sma.rate_threshold == 0 || self.sma.window_us == 0 {
            return Err(ScenarioError::Config(
                "flood_factor, rate_threshold and window_us must be positive".into(),
            ));
        }
        if self.benign_interval_us == 0 {
            return Err(ScenarioError::Config("benign_interval_us must be positive".into()));
        }
        Ok(())
    }

    /// Spacing of flood packets.
    pub fn flood_interval_us(&self) -> u64 {
        let per_window = self.flood_factor as u64 * self.sma.rate_threshold as u64;
        (self.sma.window_us / per_window).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTiming {
    pub flow_id: String,
    pub device_id: String,
    pub node: String,
    pub setup_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub flows: Vec<FlowTiming>,
    pub mean_setup_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub seed: u64,
    pub packets: PacketCounts,
    pub per_host: BTreeMap<String, PacketCounts>,
    /// Per-host delivery in the matching run without the attack, when the
    /// scenario has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<BTreeMap<String, PacketCounts>>,
    pub drop_reasons: BTreeMap<String, u64>,
    pub alerts: Vec<Alert>,
    pub audits: Vec<AuditResult>,
    pub timings: Timings,
    pub details: BTreeMap<String, serde_json::Value>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per host: host, injected, delivered, dropped_at_entry,
    /// dropped_in_slice.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["host", "injected", "delivered", "dropped_at_entry", "dropped_in_slice"])
            .expect("in-memory write");
        let total = ("*".to_string(), self.packets);
        for (host, c) in self.per_host.iter().map(|(h, c)| (h.clone(), *c)).chain([total]) {
            w.write_record([
                host,
                c.injected.to_string(),
                c.delivered.to_string(),
                c.dropped_at_entry.to_string(),
                c.dropped_in_slice.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }
}

pub fn run_scenario(id: ScenarioId, config: &ScenarioConfig, inputs: &Inputs, seed: u64) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let mut config = config.clone();
    config.sma.seed = seed;
    match id {
        ScenarioId::Attack1 => runs::attack1(&config, inputs, seed),
        ScenarioId::Attack2 => runs::attack2(&config, inputs, seed),
        ScenarioId::Attack3 => runs::attack3(&config, inputs, seed),
        ScenarioId::Attack4 => runs::attack4(&config, inputs, seed),
        ScenarioId::Shellshock => runs::shellshock(&config, inputs, seed),
        ScenarioId::FlowmodAudit => runs::flowmod_audit(&config, inputs, seed),
        ScenarioId::FsfPath => runs::fsf_path(&config, inputs, seed),
    }
}
