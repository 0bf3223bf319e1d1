use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use slice_sentinel::anomaly::{run_pipeline, synthetic_flows, Classifier, Dataset, PipelineConfig, Selector};
use slice_sentinel::fabric::NodeId;
use slice_sentinel::scenarios::{
    bench_flow_setup, bench_signature_latency, run_scenario, FlowSetupBench, Inputs, ScenarioConfig, ScenarioId,
    SignatureBench,
};
use slice_sentinel::sma::SmaConfig;

const OUT_ENV: &str = "SLICE_SENTINEL_OUT";

#[derive(Parser, Debug)]
#[command(name = "slice-sentinel", version, about = "Secure network-slice fabric simulator")]
struct Cli {
    /// Output directory (SLICE_SENTINEL_OUT takes precedence).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print a JSON-lines event stream on stdout.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct InputArgs {
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    policies: Option<PathBuf>,
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Scenario or benchmark configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one attack or validation scenario.
    Run {
        scenario: String,
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Run a latency benchmark.
    Bench {
        kind: BenchKind,
        /// Comma-separated sweep values (gNodeB counts or signature-set sizes).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Train and evaluate a classifier.
    Ml {
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        synthetic: bool,
        /// Rows in the synthetic dataset.
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value = "nb")]
        classifier: String,
        #[arg(long, default_value = "chi:5")]
        select: String,
    },
    /// Audit one switch against the activity log.
    Audit {
        /// Switch name or datapath id.
        #[arg(long)]
        node: String,
        #[command(flatten)]
        inputs: InputArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BenchKind {
    FlowSetup,
    Signatures,
}

#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    config_paths: InputArgs,
    seed: u64,
    out: PathBuf,
    timestamp_unix: u64,
}

/// Failure classes mapped onto the exit-code contract.
enum Failure {
    Config(String),
    Oracle(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let p = self.out.join(name);
        fs::write(&p, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display())))
    }

    fn event(&self, value: serde_json::Value) {
        if self.verbose {
            println!("{value}");
        }
    }
}

fn read_to_string(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))
}

fn load_inputs(a: &InputArgs) -> Result<Inputs, Failure> {
    Ok(Inputs::load(a.topology.as_deref(), a.policies.as_deref(), a.signatures.as_deref())?)
}

fn cmd_run(ctx: &Ctx, scenario: &str, a: &InputArgs) -> Result<(), Failure> {
    let id: ScenarioId = scenario.parse()?;
    let inputs = load_inputs(a)?;
    let cfg = match &a.config {
        Some(p) => ScenarioConfig::from_json(&read_to_string(p)?)?,
        None => ScenarioConfig::default(),
    };
    let report = run_scenario(id, &cfg, &inputs, ctx.seed)?;
    for alert in &report.alerts {
        ctx.event(serde_json::json!({"event": "alert", "alert": alert}));
    }
    for c in &report.checks {
        ctx.event(serde_json::json!({"event": "check", "check": c}));
    }
    ctx.event(serde_json::json!({"event": "verdict", "scenario": id.as_str(), "verdict": report.verdict}));
    ctx.write("report.json", &report.to_json())?;
    ctx.write("report.csv", &report.to_csv())?;
    if !report.passed() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(Failure::Oracle(format!("{id}: failed checks {failed:?}")));
    }
    Ok(())
}

fn cmd_bench(ctx: &Ctx, kind: BenchKind, sizes: Option<Vec<usize>>, runs: Option<usize>, a: &InputArgs) -> Result<(), Failure> {
    let text = a.config.as_deref().map(read_to_string).transpose()?;
    match kind {
        BenchKind::FlowSetup => {
            let mut cfg: FlowSetupBench = match text {
                Some(t) => serde_json::from_str(&t)?,
                None => FlowSetupBench::default(),
            };
            cfg.sizes = sizes.unwrap_or(cfg.sizes);
            cfg.runs = runs.unwrap_or(cfg.runs);
            if cfg.sizes.contains(&0) || cfg.runs == 0 {
                return Err(Failure::Config("sizes and runs must be at least 1".into()));
            }
            let r = bench_flow_setup(&cfg, ctx.seed)?;
            for p in &r.points {
                ctx.event(serde_json::json!({"event": "bench_point", "point": p}));
            }
            ctx.write("flow_setup.json", &r.to_json())?;
            ctx.write("flow_setup.csv", &r.to_csv())?;
        }
        BenchKind::Signatures => {
            let mut cfg: SignatureBench = match text {
                Some(t) => serde_json::from_str(&t)?,
                None => SignatureBench::default(),
            };
            cfg.sizes = sizes.unwrap_or(cfg.sizes);
            cfg.runs = runs.unwrap_or(cfg.runs);
            let r = bench_signature_latency(&cfg, ctx.seed)?;
            for p in &r.points {
                ctx.event(serde_json::json!({"event": "bench_point", "point": p}));
            }
            ctx.write("signature_latency.json", &r.to_json())?;
            ctx.write("signature_latency.csv", &r.to_csv())?;
        }
    }
    Ok(())
}

fn cmd_ml(ctx: &Ctx, dataset: Option<&Path>, rows: usize, classifier: &str, select: &str) -> Result<(), Failure> {
    let classifier: Classifier = classifier.parse()?;
    let selector: Selector = select.parse()?;
    let data = match dataset {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            Dataset::from_csv(f)?
        }
        None => synthetic_flows(rows, ctx.seed),
    };
    let report = run_pipeline(&data, &PipelineConfig::new(classifier, selector, ctx.seed))?;
    let identities = report.metrics.row().identities();
    ctx.event(serde_json::json!({"event": "metrics", "metrics": report.metrics.row(), "identities": identities}));
    ctx.write("ml_metrics.json", &serde_json::to_string_pretty(&report)?)?;
    ctx.write("roc.csv", &report.metrics.roc_csv())?;
    if !identities.holds(1e-6) {
        return Err(Failure::Oracle(format!("metric identities violated: {identities:?}")));
    }
    Ok(())
}

fn cmd_audit(ctx: &Ctx, node: &str, a: &InputArgs) -> Result<(), Failure> {
    let inputs = load_inputs(a)?;
    let cfg: SmaConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_to_string(p)?)?,
        None => SmaConfig::default(),
    };
    let mut sma = inputs.build_sma(&cfg)?;
    let id: NodeId = sma
        .fabric()
        .resolve(node)
        .ok_or_else(|| Failure::Config(format!("unknown node {node}")))?;
    let outcome = sma.audit_now(&id)?;
    let status = if outcome.result.clean { "clean" } else { "dirty" };
    ctx.event(serde_json::json!({"event": "audit", "node": id, "status": status}));
    let doc = serde_json::json!({"node": id, "status": status, "result": outcome.result, "diff": outcome.diff});
    ctx.write("audit.json", &serde_json::to_string_pretty(&doc)?)?;
    if !outcome.result.clean {
        return Err(Failure::Oracle(format!("{id} deviates from the trusted state")));
    }
    Ok(())
}

fn execute(cli: &Cli, out: PathBuf) -> Result<(), Failure> {
    fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    let ctx = Ctx {
        out,
        seed: cli.seed,
        verbose: cli.verbose,
    };
    let no_inputs = InputArgs {
        topology: None,
        policies: None,
        signatures: None,
        config: None,
    };
    let (inputs, dataset) = match &cli.command {
        Command::Run { inputs, .. } | Command::Bench { inputs, .. } | Command::Audit { inputs, .. } => (inputs.clone(), None),
        Command::Ml { dataset, .. } => (no_inputs, dataset.clone()),
    };
    let manifest = RunManifest {
        command: std::env::args().skip(1).collect(),
        config_paths: InputArgs {
            config: inputs.config.clone().or(dataset),
            ..inputs
        },
        seed: cli.seed,
        out: ctx.out.clone(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    ctx.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;

    match &cli.command {
        Command::Run { scenario, inputs } => cmd_run(&ctx, scenario, inputs),
        Command::Bench { kind, sizes, runs, inputs } => cmd_bench(&ctx, *kind, sizes.clone(), *runs, inputs),
        Command::Ml {
            dataset,
            synthetic: _,
            rows,
            classifier,
            select,
        } => cmd_ml(&ctx, dataset.as_deref(), *rows, classifier, select),
        Command::Audit { node, inputs } => cmd_audit(&ctx, node, inputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| cli.out.clone());
    match execute(&cli, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Oracle(msg)) => {
            eprintln!("oracle failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
