use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::types::{canonical_order, FlowRule, Packet, ReportedRule};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum FlowMod {
    Add { rule: FlowRule },
    Delete { rule_id: String },
}

/// Rules added and removed by one flow_mod. `warning` is set when a delete
/// named a rule the table does not hold.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDelta {
    pub added: Vec<FlowRule>,
    pub removed: Vec<FlowRule>,
    pub warning: bool,
}

impl TableDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// A single switch flow table.
///
/// Rule ids are unique, and so are `(match, priority)` pairs: adding a rule
/// that collides on either replaces the previous holder.
#[derive(Clone, Debug, Default)]
pub struct FlowTable {
    rules: BTreeMap<String, FlowRule>,
    // lookup order: priority desc, rule id asc
    order: BTreeSet<(Reverse<u16>, String)>,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, rule_id: &str) -> Option<&FlowRule> {
        self.rules.get(rule_id)
    }

    pub fn rules(&self) -> impl Iterator<Item = &FlowRule> {
        self.order.iter().map(move |(_, id)| &self.rules[id])
    }

    pub fn apply(&mut self, flow_mod: FlowMod) -> TableDelta {
        match flow_mod {
            FlowMod::Add { rule } => self.add(rule),
            FlowMod::Delete { rule_id } => self.delete(&rule_id),
        }
    }

    fn add(&mut self, rule: FlowRule) -> TableDelta {
        let mut delta = TableDelta::default();
        let clash: Vec<String> = self
            .rules
            .values()
            .filter(|r| {
                r.rule_id == rule.rule_id || (r.key == rule.key && r.priority == rule.priority)
            })
            .map(|r| r.rule_id.clone())
            .collect();
        for id in clash {
            if let Some(old) = self.rules.remove(&id) {
                self.order.remove(&(Reverse(old.priority), id));
                delta.removed.push(old);
            }
        }
        self.order.insert((Reverse(rule.priority), rule.rule_id.clone()));
        self.rules.insert(rule.rule_id.clone(), rule.clone());
        delta.added.push(rule);
        delta
    }

    fn delete(&mut self, rule_id: &str) -> TableDelta {
        match self.rules.remove(rule_id) {
            Some(old) => {
                self.order.remove(&(Reverse(old.priority), old.rule_id.clone()));
                TableDelta {
                    removed: vec![old],
                    ..TableDelta::default()
                }
            }
            None => TableDelta {
                warning: true,
                ..TableDelta::default()
            },
        }
    }

    /// Highest-priority matching rule; equal priorities resolve to the
    /// lexicographically lowest rule id.
    pub fn lookup(&self, packet: &Packet) -> Option<&FlowRule> {
        self.order
            .iter()
            .map(|(_, id)| &self.rules[id])
            .find(|r| r.key.matches(packet))
    }

    pub fn reported(&self) -> Vec<ReportedRule> {
        let mut out: Vec<ReportedRule> = self.rules.values().map(FlowRule::reported).collect();
        canonical_order(&mut out);
        out
    }
}
