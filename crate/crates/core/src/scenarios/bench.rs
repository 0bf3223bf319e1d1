use std::net::Ipv4Addr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::traffic::packet_between;
use super::{Inputs, ScenarioError};
use crate::fabric::{Fabric, LinkSpec, NodeId, NodeKind, NodeSpec, SliceSpec, TopologyDocument};
use crate::policy::PolicyRepository;
use crate::secfn::{Signature, SHELLSHOCK_PATTERN};
use crate::sma::{CostModel, Sma, SmaConfig};

const BENCH_VLAN: i64 = 10;

/// Star of `n` edge switches around one core switch. Each edge serves one
/// UE owned by its own user; a further edge hosts the server every UE talks
/// to. Returns the topology and a matching policy file.
pub fn star_topology(n: usize, latency_ms: u64) -> (TopologyDocument, String) {
    let mut nodes = vec![
        switch("CORE", NodeKind::Core, 1),
        switch("SVC-EDGE", NodeKind::Edge, 2),
        host("SERVER", Ipv4Addr::new(10, 0, 0, 1), "02:00:00:01"),
    ];
    let link = |a: &str, b: &str| LinkSpec {
        a: a.into(),
        b: b.into(),
        latency_ms,
    };
    let mut links = vec![link("SVC-EDGE", "CORE"), link("SERVER", "SVC-EDGE")];
    let mut members = vec!["SERVER".to_string()];
    let mut policies = Vec::new();
    for i in 0..n {
        let (edge, ue) = (format!("GNB{i}"), format!("UE{i}"));
        let ip = Ipv4Addr::new(10, 1, (i / 250) as u8, (i % 250 + 1) as u8);
        let mac = format!("02:01:{:02x}:{:02x}", i / 256, i % 256);
        nodes.push(switch(&edge, NodeKind::Edge, 100 + i as u64));
        nodes.push(host(&ue, ip, &mac));
        links.push(link(&ue, &edge));
        links.push(link(&edge, "CORE"));
        members.push(ue.clone());
        policies.push(json!({
            "id": format!("b{i}"),
            "hostip": ip.to_string(),
            "hostmac": mac,
            "destip": "10.0.0.1",
            "dstmac": "02:00:00:01",
            "device_type": "phone",
            "user": {"id": format!("user{i}"), "name": format!("User {i}"), "role": "subscriber", "organization": ""},
            "actions": [{"Service": "Bench", "Slice-id": format!("VLAN{BENCH_VLAN}")}]
        }));
    }
    let doc = TopologyDocument {
        nodes,
        links,
        slices: vec![SliceSpec {
            vlan: BENCH_VLAN,
            name: "bench".into(),
            hosts: members,
        }],
    };
    (doc, serde_json::Value::Array(policies).to_string())
}

fn switch(id: &str, kind: NodeKind, dpid: u64) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind,
        ip: None,
        mac: None,
        dpid: Some(dpid),
        software: Some("ovs-2.5.0".into()),
        tampered: false,
    }
}

fn host(id: &str, ip: Ipv4Addr, mac: &str) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind: NodeKind::Host,
        ip: Some(ip),
        mac: Some(mac.parse().expect("valid mac")),
        dpid: None,
        software: None,
        tampered: false,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowSetupBench {
    pub sizes: Vec<usize>,
    pub runs: usize,
    /// Security settings to sweep; `false` is the plain controller.
    pub security: Vec<bool>,
    pub costs: CostModel,
    pub latency_ms: u64,
    /// UEs start their first flow uniformly within this span.
    pub start_spread_us: u64,
}

impl Default for FlowSetupBench {
    fn default() -> Self {
        FlowSetupBench {
            sizes: vec![100, 200, 300, 400, 500],
            runs: 10,
            security: vec![false, true],
            costs: CostModel::default(),
            latency_ms: 1,
            start_spread_us: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n: usize,
    pub security: bool,
    pub runs: usize,
    pub mean_ms: f64,
    pub stdev_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub config: FlowSetupBench,
    pub points: Vec<BenchPoint>,
}

impl BenchReport {
    pub fn point(&self, n: usize, security: bool) -> Option<&BenchPoint> {
        self.points.iter().find(|p| p.n == n && p.security == security)
    }

    /// (on - off) / off at size `n`.
    pub fn relative_overhead(&self, n: usize) -> Option<f64> {
        let off = self.point(n, false)?.mean_ms;
        let on = self.point(n, true)?.mean_ms;
        (off > 0.0).then(|| (on - off) / off)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "mean_ms", "stdev_ms", "security"]).expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.n.to_string(),
                format!("{:.3}", p.mean_ms),
                format!("{:.3}", p.stdev_ms),
                if p.security { "on" } else { "off" }.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }
}

fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

/// Mean setup time of one run: every UE opens one flow at a seeded start time.
fn one_setup_run(n: usize, security: bool, cfg: &FlowSetupBench, seed: u64) -> Result<f64, ScenarioError> {
    let (doc, policies) = star_topology(n, cfg.latency_ms);
    let fabric = Fabric::build(&doc)?;
    let repo = PolicyRepository::load(&policies, Some(&fabric.slice_ids()))?;
    let sma_cfg = SmaConfig {
        security,
        audit_period_us: None,
        costs: cfg.costs.clone(),
        seed,
        ..SmaConfig::default()
    };
    // arrivals depend on the seed only, so both security settings see the
    // same load
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(u64, usize)> = (0..n).map(|i| (rng.gen_range(0..=cfg.start_spread_us), i)).collect();
    starts.sort();
    let mut sma = Sma::new(fabric, repo, Vec::new(), sma_cfg)?;
    let server = NodeId::new("SERVER");
    for (t, i) in starts {
        let ue = NodeId::new(format!("UE{i}"));
        let p = packet_between(sma.fabric(), &ue, &server, b"hello".to_vec(), t)?;
        sma.send(&ue, p)?;
    }
    let setups = sma.setups();
    if setups.is_empty() {
        return Ok(0.0);
    }
    Ok(setups.iter().map(|s| s.setup_us as f64 / 1000.0).sum::<f64>() / setups.len() as f64)
}

/// Flow setup time against the number of gNodeBs, with and without the
/// security functions.
pub fn bench_flow_setup(cfg: &FlowSetupBench, seed: u64) -> Result<BenchReport, ScenarioError> {
    let mut points = Vec::new();
    for &security in &cfg.security {
        for &n in &cfg.sizes {
            let mut means = Vec::with_capacity(cfg.runs);
            for run in 0..cfg.runs {
                let run_seed = seed.wrapping_mul(0x9e37_79b9).wrapping_add(((n as u64) << 20) | run as u64);
                means.push(one_setup_run(n.max(1), security, cfg, run_seed)?);
            }
            let (mean_ms, stdev_ms) = mean_stdev(&means);
            points.push(BenchPoint {
                n,
                security,
                runs: cfg.runs,
                mean_ms,
                stdev_ms,
            });
        }
    }
    Ok(BenchReport {
        seed,
        config: cfg.clone(),
        points,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureBench {
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub packets_per_run: usize,
    /// Signature-set size for the first-versus-last match comparison.
    pub scan_order_size: usize,
    pub sma: SmaConfig,
}

impl Default for SignatureBench {
    fn default() -> Self {
        SignatureBench {
            sizes: vec![0, 10, 100, 500, 1000],
            runs: 10,
            packets_per_run: 10,
            scan_order_size: 1000,
            sma: SmaConfig {
                audit_period_us: None,
                ..SmaConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignaturePoint {
    pub n_signatures: usize,
    pub mean_us: f64,
    pub stdev_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOrderResult {
    pub n_signatures: usize,
    pub first_match_us: u64,
    pub last_match_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureBenchReport {
    pub seed: u64,
    pub config: SignatureBench,
    pub points: Vec<SignaturePoint>,
    pub scan_order: ScanOrderResult,
}

impl SignatureBenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n_signatures", "mean_us", "stdev_us"]).expect("in-memory write");
        for p in &self.points {
            w.write_record([p.n_signatures.to_string(), format!("{:.3}", p.mean_us), format!("{:.3}", p.stdev_us)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
    }
}

/// `n` random signatures. Patterns start with 0xff so they never occur in
/// the ASCII test traffic.
fn random_signatures(n: usize, rng: &mut ChaCha8Rng) -> Vec<Signature> {
    (0..n)
        .map(|i| {
            let mut pattern = vec![0xffu8; 12];
            rng.fill_bytes(&mut pattern[1..]);
            Signature::payload(format!("sig-{i:05}"), &pattern)
        })
        .collect()
}

/// Ingress-to-delivery latency of established-flow packets for growing
/// signature sets, plus the cost of matching the first versus the last
/// signature in the scan order.
pub fn bench_signature_latency(cfg: &SignatureBench, seed: u64) -> Result<SignatureBenchReport, ScenarioError> {
    let inputs = Inputs::bundled();
    let (ue, svc) = (NodeId::new("UE1"), NodeId::new("SERVICE1"));
    let mut points = Vec::new();
    for &n in &cfg.sizes {
        let mut means = Vec::new();
        for run in 0..cfg.runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 16) ^ run as u64);
            let mut sma = inputs.build_sma_with(&cfg.sma, random_signatures(n, &mut rng))?;
            let mut lat = Vec::new();
            for k in 0..=cfg.packets_per_run {
                let t = k as u64 * 50_000 + rng.gen_range(0..1_000);
                let mut payload = format!("GET /item/{k} HTTP/1.1\r\n\r\n").into_bytes();
                payload.resize(64 + rng.gen_range(0..64), b'.');
                let p = packet_between(sma.fabric(), &ue, &svc, payload, t)?;
                let d = sma.send(&ue, p)?;
                // the first packet carries the flow setup
                if k > 0 && d.trace.delivered() {
                    lat.push((d.trace.final_packet.time_us - t) as f64);
                }
            }
            means.push(mean_stdev(&lat).0);
        }
        let (mean_us, stdev_us) = mean_stdev(&means);
        points.push(SignaturePoint {
            n_signatures: n,
            mean_us,
            stdev_us,
        });
    }

    let exploit_latency = |first: bool| -> Result<u64, ScenarioError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca0);
        let size = cfg.scan_order_size.max(1);
        let mut sigs = random_signatures(size, &mut rng);
        let slot = if first { 0 } else { size - 1 };
        sigs[slot].pattern = SHELLSHOCK_PATTERN.to_vec();
        let mut sma = inputs.build_sma_with(&cfg.sma, sigs)?;
        let warmup = packet_between(sma.fabric(), &ue, &svc, b"GET / HTTP/1.1\r\n\r\n".to_vec(), 0)?;
        sma.send(&ue, warmup)?;
        let t = 50_000;
        let exploit = packet_between(sma.fabric(), &ue, &svc, b"User-Agent: () { :;}; /bin/id".to_vec(), t)?;
        let d = sma.send(&ue, exploit)?;
        Ok(d.trace.final_packet.time_us - t)
    };
    let scan_order = ScanOrderResult {
        n_signatures: cfg.scan_order_size,
        first_match_us: exploit_latency(true)?,
        last_match_us: exploit_latency(false)?,
    };
    Ok(SignatureBenchReport {
        seed,
        config: cfg.clone(),
        points,
        scan_order,
    })
}
