//! Per-party knowledge audit over a run transcript.
//!
//! Each server's knowledge is what it generated itself plus what the labels
//! of its received messages say it was sent. The audit then checks that
//! permutations stay separated and that no masked value reaches a party that
//! also holds its mask.

use std::collections::{BTreeMap, BTreeSet};

use super::correlation::{seed_items, Item};
use crate::transport::{MsgKind, Role, TranscriptEntry};

#[derive(Clone, Debug, Default)]
pub struct AuditReport {
    pub knowledge: BTreeMap<Role, BTreeSet<Item>>,
    /// Labels of all messages each server received.
    pub received: BTreeMap<Role, BTreeSet<&'static str>>,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn knows(&self, role: Role, item: Item) -> bool {
        self.knowledge.get(&role).is_some_and(|k| k.contains(&item))
    }
}

/// Items a server derives locally from seeds it samples itself.
fn generated(role: Role) -> Vec<Item> {
    match role {
        Role::S1 => [seed_items("seed1"), seed_items("seed12")].concat(),
        Role::S2 => seed_items("seed2").to_vec(),
        _ => vec![],
    }
}

/// Masked values and the mask that would unmask them.
const MASKED: &[(&str, Item)] = &[("z2", Item::A1), ("z1", Item::A2Prime)];

const DELTA_INPUTS: [Item; 5] = [Item::Pi1, Item::Pi2, Item::A1, Item::A2Prime, Item::B2];

/// Labels that would carry an unmasked intermediate in the clear.
const CLEAR_INTERMEDIATES: &[&str] = &["y", "a1", "x_hat"];

pub fn audit_transcript(entries: &[TranscriptEntry]) -> AuditReport {
    let mut report = AuditReport::default();
    for role in Role::SERVERS {
        report.knowledge.insert(role, generated(role).into_iter().collect());
        report.received.insert(role, BTreeSet::new());
    }

    for e in entries {
        let to = e.channel.to;
        if to == Role::Client {
            continue;
        }
        report.received.entry(to).or_default().insert(e.label);
        let k = report.knowledge.entry(to).or_default();
        match (e.kind, e.label) {
            (MsgKind::SeedShare, label) => {
                let allowed = matches!(
                    (e.channel.from, to, label),
                    (Role::S1, Role::S3, "seed1") | (Role::S2, Role::S3, "seed2") | (Role::S1, Role::S2, "seed12")
                );
                if !allowed {
                    report.violations.push(format!("{} sent seed '{label}' to {to}", e.channel.from));
                }
                k.extend(seed_items(label));
            }
            (MsgKind::Delta, _) => {
                k.insert(Item::Delta);
            }
            _ => {}
        }
    }

    // Δ is computable by whoever holds all of its inputs.
    for k in report.knowledge.values_mut() {
        if DELTA_INPUTS.iter().all(|i| k.contains(i)) {
            k.insert(Item::Delta);
        }
    }

    let must_not_know = [(Role::S1, Item::Pi2), (Role::S2, Item::Pi1), (Role::S3, Item::Pi12)];
    for (role, item) in must_not_know {
        if report.knows(role, item) {
            report.violations.push(format!("{role} learned {item:?}"));
        }
    }
    for role in Role::SERVERS {
        let k = &report.knowledge[&role];
        if [Item::Pi1, Item::Pi2, Item::Pi12].iter().all(|i| k.contains(i)) {
            report.violations.push(format!("{role} holds all three permutations"));
        }
        let received = &report.received[&role];
        for (label, mask) in MASKED {
            if received.contains(label) && k.contains(mask) {
                report.violations.push(format!("{role} sees {label} and its mask {mask:?}"));
            }
        }
        for label in CLEAR_INTERMEDIATES {
            if received.contains(label) {
                report.violations.push(format!("{role} received '{label}' in the clear"));
            }
        }
    }
    report
}
