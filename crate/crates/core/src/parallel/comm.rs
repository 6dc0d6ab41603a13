//! Message records, the communication log and the simulator cost model.

use super::decomp::{ColoringMode, DomainDecomposition};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    D1Round(usize),
    D2Round,
    CoarseSetup,
    Solve,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::D1Round(c) => write!(f, "d1-round-{c}"),
            Phase::D2Round => f.write_str("d2-round"),
            Phase::CoarseSetup => f.write_str("coarse-setup"),
            Phase::Solve => f.write_str("solve"),
        }
    }
}

/// One message as seen by the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub from: usize,
    pub to: usize,
    pub level: usize,
    pub phase: Phase,
    pub bytes: usize,
    /// Send time on the virtual clock (wall clock for the threaded backend).
    pub time: f64,
}

/// Time of a simulated run split into compute and waiting per worker.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerTime {
    pub busy: f64,
    pub idle: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLog {
    pub p: usize,
    pub coloring: Option<ColoringMode>,
    pub messages: Vec<MessageRecord>,
    /// Bytes received per worker per level, counted at delivery.
    pub received: BTreeMap<(usize, usize), usize>,
    pub workers: Vec<WorkerTime>,
    /// Elapsed time per phase label.
    pub phase_time: BTreeMap<String, f64>,
    /// End of the run on the clock.
    pub makespan: f64,
}

/// Per-worker totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerComm {
    pub messages: usize,
    pub bytes: usize,
}

impl CommLog {
    pub fn new(p: usize) -> Self {
        CommLog { p, workers: vec![WorkerTime::default(); p], ..Default::default() }
    }

    pub(crate) fn send(&mut self, rec: MessageRecord) {
        self.messages.push(rec);
    }

    pub(crate) fn deliver(&mut self, to: usize, level: usize, bytes: usize) {
        *self.received.entry((to, level)).or_default() += bytes;
    }

    pub(crate) fn add_phase_time(&mut self, phase: &str, t: f64) {
        *self.phase_time.entry(phase.to_string()).or_default() += t;
    }

    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.bytes).sum()
    }

    /// Messages and bytes sent by each worker.
    pub fn per_worker(&self) -> Vec<WorkerComm> {
        let mut out = vec![WorkerComm::default(); self.p];
        for m in &self.messages {
            out[m.from].messages += 1;
            out[m.from].bytes += m.bytes;
        }
        out
    }

    /// Largest per-worker message count and byte volume.
    pub fn max_per_worker(&self) -> WorkerComm {
        let w = self.per_worker();
        WorkerComm {
            messages: w.iter().map(|c| c.messages).max().unwrap_or(0),
            bytes: w.iter().map(|c| c.bytes).max().unwrap_or(0),
        }
    }

    pub fn total_idle(&self) -> f64 {
        self.workers.iter().map(|w| w.idle).sum()
    }

    /// Levels whose sent and delivered byte totals differ.
    pub fn conservation_errors(&self) -> Vec<usize> {
        let mut sent: BTreeMap<usize, usize> = BTreeMap::new();
        let mut recv: BTreeMap<usize, usize> = BTreeMap::new();
        for m in &self.messages {
            *sent.entry(m.level).or_default() += m.bytes;
        }
        for (&(_, level), &b) in &self.received {
            *recv.entry(level).or_default() += b;
        }
        let levels: std::collections::BTreeSet<usize> = sent.keys().chain(recv.keys()).copied().collect();
        levels.into_iter().filter(|l| sent.get(l) != recv.get(l)).collect()
    }

    /// Messages whose endpoints are not neighbors or neighbors of neighbors
    /// in the decomposition of their level.
    pub fn locality_violations(&self, decomps: &[DomainDecomposition]) -> Vec<&MessageRecord> {
        self.messages
            .iter()
            .filter(|m| match decomps.get(m.level) {
                Some(d) => !d.is_local_pair(m.from, m.to),
                None => m.from != m.to,
            })
            .collect()
    }

    pub fn append(&mut self, other: CommLog) {
        self.messages.extend(other.messages);
        for (k, v) in other.received {
            *self.received.entry(k).or_default() += v;
        }
        for (k, v) in other.phase_time {
            *self.phase_time.entry(k).or_default() += v;
        }
    }

    /// CSV with columns worker, level, phase, peer, bytes, virtual_time.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["worker", "level", "phase", "peer", "bytes", "virtual_time"]).map_err(err)?;
        for m in &self.messages {
            w.write_record([
                m.from.to_string(),
                m.level.to_string(),
                m.phase.to_string(),
                m.to.to_string(),
                m.bytes.to_string(),
                format!("{:e}", m.time),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear cost model of the simulator: seconds per flop, per message and
/// per byte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub flop: f64,
    pub latency: f64,
    pub byte: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { flop: 1e-9, latency: 1e-6, byte: 1e-9 }
    }
}

impl CostModel {
    pub fn message(&self, bytes: usize) -> f64 {
        self.latency + self.byte * bytes as f64
    }

    pub fn compute(&self, flops: u64) -> f64 {
        self.flop * flops as f64
    }
}
