use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::Serialize;

use super::{Channel, MsgKind};
use crate::error::Error;

/// Accounting bucket for a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// Seeds, correlated masks and triples; independent of the data.
    Offline,
    /// Everything from client uploads to the model-hash exchange.
    Online,
    /// Model distribution from servers back to clients.
    Broadcast,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Online => "online",
            Phase::Broadcast => "broadcast",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counter {
    pub bytes: u64,
    pub rounds: u64,
}

/// Per (channel, phase) byte and frame counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Meter {
    counts: BTreeMap<(Channel, Phase), Counter>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MeterRow {
    pub channel: String,
    pub phase: &'static str,
    pub bytes: u64,
    pub rounds: u64,
}

impl Meter {
    pub fn record(&mut self, channel: Channel, phase: Phase, frame_bytes: usize) {
        let c = self.counts.entry((channel, phase)).or_default();
        c.bytes += frame_bytes as u64;
        c.rounds += 1;
    }

    pub fn get(&self, channel: Channel, phase: Phase) -> Counter {
        self.counts.get(&(channel, phase)).copied().unwrap_or_default()
    }

    pub fn bytes(&self, phase: Phase) -> u64 {
        self.counts.iter().filter(|((_, p), _)| *p == phase).map(|(_, c)| c.bytes).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.counts.values().map(|c| c.bytes).sum()
    }

    pub fn total_rounds(&self) -> u64 {
        self.counts.values().map(|c| c.rounds).sum()
    }

    pub fn merge(&mut self, other: &Meter) {
        for (k, c) in &other.counts {
            let e = self.counts.entry(*k).or_default();
            e.bytes += c.bytes;
            e.rounds += c.rounds;
        }
    }

    /// Wall-clock estimate when every round on the busiest channel of each
    /// phase costs `delay`.
    pub fn latency_estimate(&self, delay: Duration) -> Duration {
        let mut per_phase: BTreeMap<Phase, u64> = BTreeMap::new();
        for ((_, p), c) in &self.counts {
            let m = per_phase.entry(*p).or_default();
            *m = (*m).max(c.rounds);
        }
        delay * per_phase.values().sum::<u64>() as u32
    }

    pub fn report(&self) -> Vec<MeterRow> {
        self.counts
            .iter()
            .map(|((ch, p), c)| MeterRow {
                channel: ch.to_string(),
                phase: p.name(),
                bytes: c.bytes,
                rounds: c.rounds,
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.report() {
            w.serialize(row).map_err(|e| Error::Malformed(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// One sent frame as seen by the network layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub channel: Channel,
    pub kind: MsgKind,
    pub round: u16,
    pub frame_bytes: usize,
    pub phase: Phase,
    /// Names the protocol object carried, for knowledge audits.
    pub label: &'static str,
}
