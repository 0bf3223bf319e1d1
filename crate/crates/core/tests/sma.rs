use slice_sentinel::alert::SecurityFunction;
use slice_sentinel::fabric::{Action, DropReason, FlowMod, NodeId, Outcome, Packet, Provenance, SliceId};
use slice_sentinel::policy::{AlcEvent, DeviceId};
use slice_sentinel::scenarios::Inputs;
use slice_sentinel::secfn::TrustVerdict;
use slice_sentinel::sma::{Delivery, FlowDecision, ReconfigAction, Sma, SmaConfig, SmaError, DROP_PRIORITY};

fn sma() -> Sma {
    sma_with(SmaConfig::default())
}

fn sma_with(cfg: SmaConfig) -> Sma {
    Inputs::bundled().build_sma(&cfg).unwrap()
}

fn n(s: &str) -> NodeId {
    NodeId::new(s)
}

fn packet(sma: &Sma, from: &str, to: &str, payload: &[u8], t: u64) -> Packet {
    let f = sma.fabric().node(&n(from)).unwrap();
    let d = sma.fabric().node(&n(to)).unwrap();
    Packet {
        src_ip: f.ip.unwrap(),
        dst_ip: d.ip.unwrap(),
        src_mac: f.mac.clone().unwrap(),
        dst_mac: d.mac.clone().unwrap(),
        slice: None,
        payload: payload.to_vec(),
        flow_id: format!("{from}-{to}"),
        time_us: t,
    }
}

fn send(sma: &mut Sma, from: &str, to: &str, t: u64) -> Delivery {
    let p = packet(sma, from, to, b"hello", t);
    sma.send(&n(from), p).unwrap()
}

fn dropped_by(d: &Delivery) -> Option<(String, String)> {
    match &d.trace.outcome {
        Outcome::Dropped {
            reason: DropReason::Function { function, detail },
            ..
        } => Some((function.clone(), detail.clone())),
        _ => None,
    }
}

fn dev(sma: &Sma, host: &str) -> DeviceId {
    DeviceId::from_mac(sma.fabric().node(&n(host)).unwrap().mac.as_ref().unwrap())
}

#[test]
fn authorized_flow_is_installed_on_its_slice() {
    let mut s = sma();
    let d = send(&mut s, "UE1", "HEALTH", 0);
    assert!(d.trace.delivered());
    let Some(FlowDecision::Installed { slice, service, path, setup_us, .. }) = d.decision else {
        panic!("expected install, got {:?}", d.decision);
    };
    assert_eq!(slice, SliceId::new(300).unwrap());
    assert_eq!(service.as_deref(), Some("Healthcare"));
    assert_eq!(path, [n("OVS1"), n("CORE1"), n("OVS2")]);
    assert!(setup_us >= s.config().costs.control_rtt_us);
    // the second packet rides the installed rules
    let d2 = send(&mut s, "UE1", "HEALTH", 50_000);
    assert!(d2.trace.delivered());
    assert!(d2.decision.is_none());
    assert_eq!(s.alc().count_kind("profile_extracted"), 1);
    assert!(s.alc().verify());
}

#[test]
fn one_extraction_covers_all_devices_of_the_user() {
    let mut s = sma();
    send(&mut s, "UE1", "HEALTH", 0);
    let d = send(&mut s, "UE2", "FINANCE", 10_000);
    assert!(d.trace.delivered(), "{:?}", d.trace.outcome);
    assert_eq!(s.alc().count_kind("profile_extracted"), 1);
    // UE2 holds no healthcare grant
    let d = send(&mut s, "UE2", "HEALTH", 20_000);
    assert_eq!(dropped_by(&d), Some(("NSAF".into(), "deny_unauthorized".into())));
    assert_eq!(s.alc().count_kind("profile_extracted"), 1);
    // a different user on another edge gets an extraction of their own
    send(&mut s, "PLC", "SCADA", 30_000);
    assert_eq!(s.alc().count_kind("profile_extracted"), 2);
}

#[test]
fn security_adds_setup_cost() {
    let mut on = sma();
    let mut off = sma_with(SmaConfig {
        security: false,
        ..SmaConfig::default()
    });
    let a = send(&mut on, "UE1", "HEALTH", 0);
    let b = send(&mut off, "UE1", "HEALTH", 0);
    assert!(b.trace.delivered());
    assert_eq!(off.deployments().count(), 0);
    assert!(on.setups()[0].setup_us > off.setups()[0].setup_us);
    assert!(a.trace.final_packet.time_us > b.trace.final_packet.time_us);
}

#[test]
fn unregistered_device_is_confined_to_the_generic_slice() {
    let mut s = sma();
    send(&mut s, "UE1", "HEALTH", 0);
    let d = send(&mut s, "GUEST", "GATEWAY", 1_000);
    assert!(d.trace.delivered(), "{:?}", d.trace.outcome);
    assert!(matches!(d.decision, Some(FlowDecision::Installed { generic: true, .. })));
    let d = send(&mut s, "GUEST", "HEALTH", 2_000);
    assert_eq!(dropped_by(&d), Some(("NSAF".into(), "generic_unreachable".into())));
    // the drop rule keeps later packets away from the controller
    let d = send(&mut s, "GUEST", "HEALTH", 3_000);
    assert!(matches!(&d.trace.outcome, Outcome::Dropped { reason: DropReason::Rule { .. }, .. }));
    assert!(d.decision.is_none());
}

#[test]
fn generic_slice_is_rate_capped() {
    let mut s = sma();
    let cap = s.config().generic_rate_cap as usize;
    let mut capped = 0;
    for i in 0..(cap * 3) {
        let d = send(&mut s, "GUEST", "GATEWAY", i as u64 * 1_000);
        if dropped_by(&d) == Some(("NSAF".into(), "generic_rate_cap".into())) {
            capped += 1;
        }
    }
    // all sends fall inside one window, the punted first packet included
    assert_eq!(capped, cap * 3 - cap);
}

#[test]
fn flood_from_authorized_device_blacklists_it_once() {
    let mut s = sma();
    let wearable = dev(&s, "WEARABLE");
    let threshold = s.config().rate_threshold as usize;
    let mut reconfigs = Vec::new();
    for i in 0..(threshold * 3) {
        let d = send(&mut s, "WEARABLE", "HEALTH", i as u64 * 1_000);
        reconfigs.extend(d.reconfig);
    }
    assert_eq!(reconfigs.len(), 1, "{reconfigs:?}");
    let ReconfigAction::Blacklisted { node, rules_replaced, .. } = &reconfigs[0] else {
        panic!("{reconfigs:?}");
    };
    assert_eq!(node, &n("OVS1"));
    assert!(*rules_replaced > 0);
    let table = s.fabric().node(&n("OVS1")).unwrap().table();
    let drop = table.get(&format!("drop/{wearable}/OVS1")).expect("drop rule");
    assert_eq!(drop.priority, DROP_PRIORITY);
    assert_eq!(drop.action, Action::Drop);
    assert!(s.active_flows().all(|f| f.device != wearable));
    assert_eq!(s.alc().count_kind("device_blacklisted"), 1);
    // reconfiguration went through the log, so the switch still audits clean
    for sw in ["OVS1", "CORE1", "OVS2"] {
        assert!(s.audit_now(&n(sw)).unwrap().result.clean, "{sw}");
    }
    // even a different destination is refused now
    let d = send(&mut s, "WEARABLE", "HOME", 400_000);
    assert!(!d.trace.delivered());
}

#[test]
fn disabled_feedback_keeps_alerting() {
    let mut s = sma_with(SmaConfig {
        blacklist_on_alert: false,
        ..SmaConfig::default()
    });
    for i in 0..150u64 {
        send(&mut s, "WEARABLE", "HEALTH", i * 1_000);
    }
    let fvf = s.alerts().iter().filter(|a| a.source == SecurityFunction::Fvf).count();
    assert_eq!(fvf, 50);
    assert_eq!(s.alc().count_kind("device_blacklisted"), 0);
}

#[test]
fn audit_restores_modified_and_missing_rules() {
    let mut s = sma();
    send(&mut s, "UE1", "HEALTH", 0);
    let core = n("CORE1");
    let victim = s.fabric().node(&core).unwrap().table().rules().find(|r| r.rule_id.starts_with("fwd/")).unwrap().clone();
    let gone = s.fabric().node(&core).unwrap().table().rules().find(|r| r.rule_id.starts_with("rev/")).unwrap().rule_id.clone();
    let mut evil = victim.clone();
    evil.action = Action::Drop;
    s.fabric_mut().apply_flow_mod(&core, FlowMod::Add { rule: evil }, Provenance::External).unwrap();
    s.fabric_mut().apply_flow_mod(&core, FlowMod::Delete { rule_id: gone.clone() }, Provenance::External).unwrap();

    let out = s.audit_now(&core).unwrap();
    assert!(out.result.extra_rules.is_empty());
    assert_eq!(out.result.modified_rules.len(), 1);
    assert_eq!(out.result.modified_rules[0].trusted.rule_id, victim.rule_id);
    assert_eq!(out.result.missing_rules.len(), 1);
    assert_eq!(out.result.missing_rules[0].rule_id, gone);
    let Some(ReconfigAction::SwitchRestored { reinstalled, .. }) = out.restore else {
        panic!("{:?}", out.restore);
    };
    assert_eq!(reinstalled.len(), 2);
    assert!(s.audit_now(&core).unwrap().result.clean);
    assert!(send(&mut s, "UE1", "HEALTH", 100_000).trace.delivered());
}

#[test]
fn periodic_audits_run_on_schedule() {
    let mut s = sma_with(SmaConfig {
        audit_period_us: Some(100_000),
        ..SmaConfig::default()
    });
    send(&mut s, "UE1", "HEALTH", 0);
    send(&mut s, "UE1", "HEALTH", 250_000);
    // audits due at 100 ms and 200 ms, four switches each
    assert_eq!(s.alc().count_kind("audit_performed"), 8);
}

#[test]
fn deployment_gated_on_attestation() {
    let mut s = sma();
    let ok = s.deploy_service_gated(&n("FINANCE"), "ledger").unwrap();
    assert!(ok.deployed);
    s.fabric_mut().set_tampered(&n("HOME"), true).unwrap();
    let bad = s.deploy_service_gated(&n("HOME"), "hub").unwrap();
    assert!(!bad.deployed);
    assert_eq!(bad.verdict, TrustVerdict::Compromised);
    assert!(s.deployed_services(&n("HOME")).is_empty());
    assert!(s.deployed_services(&n("FINANCE")).contains("ledger"));
    assert_eq!(s.alerts().last().unwrap().source, SecurityFunction::Tvf);
    assert_eq!(s.admin_events().len(), 1);
}

#[test]
fn flow_security_needs_confidentiality_and_trusted_edges() {
    let mut s = sma();
    assert!(matches!(
        s.provision_flow_security("x", &n("UE1"), &n("HOME")),
        Err(SmaError::NotConfidential(_))
    ));
    let key = s.provision_flow_security("ue2-finance", &n("UE2"), &n("FINANCE")).unwrap();
    assert!(s.key_store(&n("OVS1")).unwrap().contains_key(&key));
    assert!(s.key_store(&n("OVS2")).unwrap().contains_key(&key));
    assert!(s.key_store(&n("CORE1")).is_none());
    assert_eq!(s.alc().count_kind("key_distributed"), 1);

    let mut t = sma();
    t.fabric_mut().set_tampered(&n("OVS1"), true).unwrap();
    let err = t.provision_flow_security("ue2-finance", &n("UE2"), &n("FINANCE")).unwrap_err();
    assert!(matches!(err, SmaError::EndpointUntrusted { verdict: TrustVerdict::Compromised, .. }));
    assert_eq!(t.alerts().last().unwrap().source, SecurityFunction::Kgf);
}

#[test]
fn secured_flow_is_ciphertext_between_edges() {
    let mut s = sma();
    s.provision_flow_security("UE2-FINANCE", &n("UE2"), &n("FINANCE")).unwrap();
    let secret = b"account=12345678 amount=999.00";
    let p = packet(&s, "UE2", "FINANCE", secret, 0);
    let d = s.send(&n("UE2"), p).unwrap();
    assert!(d.trace.delivered());
    assert_eq!(d.trace.final_packet.payload, secret);
    let mut mid = 0;
    for (from, to, bytes) in d.trace.hops() {
        let on_core = [from, to].iter().all(|x| s.fabric().node(x).unwrap().kind.is_switch());
        let leaked = bytes.windows(secret.len()).any(|w| w == secret);
        if on_core {
            mid += 1;
            assert!(!leaked, "{from}->{to}");
        }
    }
    assert_eq!(mid, 2);
}

#[test]
fn handover_carries_grants_without_extraction() {
    let mut s = sma();
    send(&mut s, "UE1", "HEALTH", 0);
    let ue1 = dev(&s, "UE1");
    let before = s.alc().count_kind("profile_extracted");
    let r = s.handover(&ue1, &n("OVS1"), &n("OVS3")).unwrap();
    assert_eq!(r.grants_before, r.grants_after);
    assert_eq!(r.grants_before.len(), 3);
    assert_eq!(r.profile_extractions, 0);
    assert_eq!(r.flows_reanchored, 1);
    assert_eq!(s.alc().count_kind("profile_extracted"), before);
    assert_eq!(s.fabric().attachment(&n("UE1")).unwrap().0, n("OVS3"));
    let d = send(&mut s, "UE1", "HEALTH", 100_000);
    assert!(d.trace.delivered());
    assert!(d.decision.is_none(), "flow should not punt again");
    // a new destination after the move is still decided locally
    let d = send(&mut s, "UE1", "HOME", 200_000);
    assert!(d.trace.delivered(), "{:?}", d.trace.outcome);
    assert_eq!(s.alc().count_kind("profile_extracted"), before);
    assert!(s.audit_now(&n("OVS1")).unwrap().result.clean);
    assert!(s.audit_now(&n("OVS3")).unwrap().result.clean);
}

#[test]
fn handover_of_unknown_device_is_refused() {
    let mut s = sma();
    let ue1 = dev(&s, "UE1");
    assert!(matches!(
        s.handover(&ue1, &n("OVS1"), &n("OVS3")),
        Err(SmaError::UnknownDevice { .. })
    ));
    send(&mut s, "UE1", "HEALTH", 0);
    assert!(matches!(s.handover(&ue1, &n("OVS1"), &n("CORE1")), Err(SmaError::NotAnEdge(_))));
}

#[test]
fn log_records_every_rule_the_sma_touched() {
    let mut s = sma();
    send(&mut s, "UE1", "HEALTH", 0);
    send(&mut s, "GUEST", "HEALTH", 1_000);
    let installed = s
        .alc()
        .events()
        .filter(|e| matches!(e, AlcEvent::RuleInstalled { .. }))
        .count();
    let in_tables: usize = s.fabric().switches().map(|sw| sw.table().len()).sum();
    assert_eq!(installed, in_tables);
}
