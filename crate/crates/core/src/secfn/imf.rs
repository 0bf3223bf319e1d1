use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::SecFnError;
use crate::alert::{Alert, SecurityFunction, Severity};
use crate::fabric::{NodeId, ReportedRule, SwitchStateReport};
use crate::policy::TrustedReport;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifiedRule {
    pub trusted: ReportedRule,
    pub observed: ReportedRule,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditResult {
    pub node: NodeId,
    pub extra_rules: Vec<ReportedRule>,
    pub missing_rules: Vec<ReportedRule>,
    pub modified_rules: Vec<ModifiedRule>,
    pub clean: bool,
}

impl AuditResult {
    pub fn admin_alert(&self, time_us: u64) -> Option<Alert> {
        (!self.clean).then(|| Alert {
            source: SecurityFunction::Imf,
            device_id: None,
            node: Some(self.node.clone()),
            flow_id: None,
            reason: format!(
                "switch state diverges from trusted log: {} extra, {} missing, {} modified",
                self.extra_rules.len(),
                self.missing_rules.len(),
                self.modified_rules.len()
            ),
            severity: Severity::Critical,
            time_us,
        })
    }
}

/// Compares what the switch reports against what the log says it should
/// hold, keyed by rule id.
pub fn imf_audit(trusted: &TrustedReport, observed: &SwitchStateReport) -> Result<AuditResult, SecFnError> {
    if trusted.node_id != observed.node_id {
        return Err(SecFnError::NodeMismatch {
            trusted: trusted.node_id.to_string(),
            observed: observed.node_id.to_string(),
        });
    }
    let t: BTreeMap<&str, &ReportedRule> =
        trusted.rules.iter().map(|r| (r.rule_id.as_str(), r)).collect();
    let o: BTreeMap<&str, &ReportedRule> =
        observed.rules.iter().map(|r| (r.rule_id.as_str(), r)).collect();

    let extra_rules: Vec<ReportedRule> = observed
        .rules
        .iter()
        .filter(|r| !t.contains_key(r.rule_id.as_str()))
        .cloned()
        .collect();
    let missing_rules: Vec<ReportedRule> = trusted
        .rules
        .iter()
        .filter(|r| !o.contains_key(r.rule_id.as_str()))
        .cloned()
        .collect();
    let modified_rules: Vec<ModifiedRule> = t
        .iter()
        .filter_map(|(id, tr)| {
            o.get(id)
                .filter(|ob| !tr.same_content(ob))
                .map(|ob| ModifiedRule {
                    trusted: (*tr).clone(),
                    observed: (*ob).clone(),
                })
        })
        .collect();
    let clean = extra_rules.is_empty() && missing_rules.is_empty() && modified_rules.is_empty();
    Ok(AuditResult {
        node: trusted.node_id.clone(),
        extra_rules,
        missing_rules,
        modified_rules,
        clean,
    })
}

fn rule_line(r: &ReportedRule) -> String {
    let key = serde_json::to_string(&r.key).unwrap_or_default();
    let action = serde_json::to_string(&r.action).unwrap_or_default();
    format!("{} prio={} match={} action={}", r.rule_id, r.priority, key, action)
}

/// Side-by-side rendering: window A is the switch report, window B the
/// trusted report. Lines are marked `+` (only on the switch), `-` (only in
/// the log), `~` (content differs) or blank.
pub fn render_diff(trusted: &TrustedReport, observed: &SwitchStateReport) -> String {
    let t: BTreeMap<&str, &ReportedRule> =
        trusted.rules.iter().map(|r| (r.rule_id.as_str(), r)).collect();
    let o: BTreeMap<&str, &ReportedRule> =
        observed.rules.iter().map(|r| (r.rule_id.as_str(), r)).collect();
    let mut ids: Vec<&str> = t.keys().chain(o.keys()).copied().collect();
    ids.sort_unstable();
    ids.dedup();

    let rows: Vec<(char, String, String)> = ids
        .iter()
        .map(|id| {
            let a = o.get(id).map(|r| rule_line(r)).unwrap_or_default();
            let b = t.get(id).map(|r| rule_line(r)).unwrap_or_default();
            let mark = match (o.get(id), t.get(id)) {
                (Some(_), None) => '+',
                (None, Some(_)) => '-',
                (Some(x), Some(y)) if !x.same_content(y) => '~',
                _ => ' ',
            };
            (mark, a, b)
        })
        .collect();
    let width = rows
        .iter()
        .map(|r| r.1.len())
        .chain([40])
        .max()
        .unwrap_or(40);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "  {:<width$} | {}",
        format!("A: switch_state_report {}", observed.node_id),
        format!("B: trusted report {}", trusted.node_id)
    );
    let _ = writeln!(out, "  {}-+-{}", "-".repeat(width), "-".repeat(width));
    for (mark, a, b) in rows {
        let _ = writeln!(out, "{mark} {a:<width$} | {b}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{canonical_order, Action, FlowKey};

    fn r(id: &str, prio: u16) -> ReportedRule {
        ReportedRule {
            rule_id: id.into(),
            key: FlowKey {
                dst_ip: Some(format!("10.0.{}.{}", prio / 250, prio % 250).parse().unwrap()),
                ..FlowKey::any()
            },
            action: Action::Drop,
            priority: prio,
        }
    }

    fn reports(t: Vec<ReportedRule>, mut o: Vec<ReportedRule>) -> (TrustedReport, SwitchStateReport) {
        canonical_order(&mut o);
        (
            TrustedReport { node_id: "3346".into(), rules: t },
            SwitchStateReport { node_id: "3346".into(), rules: o, report_time_us: 0 },
        )
    }

    #[test]
    fn identical_reports_are_clean() {
        let (t, o) = reports(vec![r("a", 1)], vec![r("a", 1)]);
        let res = imf_audit(&t, &o).unwrap();
        assert!(res.clean);
        assert!(res.admin_alert(0).is_none());
    }

    #[test]
    fn injected_rule_is_extra() {
        let (t, o) = reports(vec![r("a", 1)], vec![r("a", 1), r("evil", 9)]);
        let res = imf_audit(&t, &o).unwrap();
        assert_eq!(res.extra_rules, vec![r("evil", 9)]);
        assert!(res.missing_rules.is_empty() && res.modified_rules.is_empty());
        assert!(!res.clean);
        assert_eq!(res.admin_alert(5).unwrap().source, SecurityFunction::Imf);
        let diff = render_diff(&t, &o);
        assert!(diff.lines().any(|l| l.starts_with('+') && l.contains("evil")));
    }

    #[test]
    fn missing_and_modified() {
        let mut changed = r("b", 2);
        changed.action = Action::PuntToController;
        let (t, o) = reports(vec![r("a", 1), r("b", 2)], vec![changed]);
        let res = imf_audit(&t, &o).unwrap();
        assert_eq!(res.missing_rules, vec![r("a", 1)]);
        assert_eq!(res.modified_rules.len(), 1);
        assert_eq!(res.modified_rules[0].trusted, r("b", 2));
    }

    #[test]
    fn node_mismatch() {
        let t = TrustedReport { node_id: "x".into(), rules: vec![] };
        let o = SwitchStateReport { node_id: "y".into(), rules: vec![], report_time_us: 0 };
        assert!(matches!(imf_audit(&t, &o), Err(SecFnError::NodeMismatch { .. })));
    }
}
