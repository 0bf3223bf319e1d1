use slice_sentinel::scenarios::{
    bench_flow_setup, bench_signature_latency, run_scenario, FlowSetupBench, Inputs, ScenarioConfig, ScenarioId,
    SignatureBench,
};

fn run(id: ScenarioId, cfg: &ScenarioConfig, seed: u64) -> slice_sentinel::scenarios::ScenarioReport {
    let r = run_scenario(id, cfg, &Inputs::bundled(), seed).unwrap();
    for c in r.checks.iter().filter(|c| !c.passed) {
        eprintln!("{id} seed {seed}: {} failed: {}", c.name, c.detail);
    }
    r
}

#[test]
fn every_scenario_passes_on_bundled_configs() {
    let cfg = ScenarioConfig::default();
    for id in ScenarioId::ALL {
        let r = run(id, &cfg, 7);
        assert!(r.passed(), "{id} failed");
        assert!(r.packets.conserved());
    }
}

#[test]
fn report_csv_rows_conserve_packets() {
    let r = run(ScenarioId::Attack2, &ScenarioConfig::default(), 3);
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("host,injected,delivered,dropped_at_entry,dropped_in_slice"));
    let mut total = None;
    for l in lines {
        let cols: Vec<&str> = l.split(',').collect();
        let n: Vec<u64> = cols[1..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(n[0], n[1] + n[2] + n[3], "{l}");
        if cols[0] == "*" {
            total = Some(n[0]);
        }
    }
    assert_eq!(total, Some(r.packets.injected));
}

#[test]
fn bad_scenario_config_is_rejected() {
    assert!(ScenarioConfig::from_json(r#"{"flood_factor": 0}"#).is_err());
    assert!("attack0".parse::<ScenarioId>().is_err());
}

#[test]
fn small_bench_sweep_is_monotone() {
    let cfg = FlowSetupBench {
        sizes: vec![5, 20, 40],
        runs: 3,
        ..FlowSetupBench::default()
    };
    let r = bench_flow_setup(&cfg, 2).unwrap();
    for sec in [false, true] {
        let means: Vec<f64> = cfg.sizes.iter().map(|&n| r.point(n, sec).unwrap().mean_ms).collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    }
    for &n in &cfg.sizes {
        assert!(r.point(n, true).unwrap().mean_ms >= r.point(n, false).unwrap().mean_ms);
    }
    let s = bench_signature_latency(
        &SignatureBench {
            sizes: vec![0, 50, 200],
            runs: 2,
            ..SignatureBench::default()
        },
        2,
    )
    .unwrap();
    assert!(s.points.windows(2).all(|w| w[0].mean_us <= w[1].mean_us));
}
