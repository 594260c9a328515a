//! Run transcripts: the globally ordered event log of one simulation.
//!
//! A transcript serializes to newline-delimited JSON with one object per
//! event and a stable key order, so its SHA-256 digest is a pure function of
//! the run configuration. EVAL records double as the omniscient evaluation
//! oracle used by the consensus and optimality checkers.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::chain::Block;
use crate::harness::config::SimConfig;
use crate::params::Digest32;
use crate::score::Score256;
use crate::tob::{Tick, WorkerId};

/// Bumped when evaluation semantics change; transcripts from other versions
/// fail offline verification.
pub const ENGINE_VERSION: &str = "evosearch-core/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPurpose {
    /// Loss of an epoch's base point.
    Base,
    /// A search tick drawing a fresh candidate.
    Search,
    /// Re-evaluation of a peer's claim.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliverOutcome {
    Accept,
    Reject,
    Buffer,
    Duplicate,
}

/// One transcript event. Timestamps are simulated ticks and non-decreasing
/// across the record sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Record {
    #[serde(rename = "HEADER")]
    Header { engine: String, config: SimConfig },
    #[serde(rename = "EVAL")]
    Eval {
        t: Tick,
        worker: WorkerId,
        base: Digest32,
        seed: Option<u64>,
        loss: f64,
        score: Score256,
        valid: bool,
        purpose: EvalPurpose,
    },
    #[serde(rename = "BCAST")]
    Bcast { t: Tick, worker: WorkerId, bcast_id: u64, base: Digest32, seed: u64, suppressed: bool },
    #[serde(rename = "DELIVER")]
    Deliver { t: Tick, worker: WorkerId, bcast_id: u64, seq_no: u64, sender: WorkerId },
    #[serde(rename = "VALUE")]
    Value { t: Tick, from: WorkerId, origin: WorkerId, base: Digest32, seed: u64, declared_loss: f64 },
    #[serde(rename = "MINT")]
    Mint { t: Tick, miner: WorkerId, block_id: Digest32, block: Block },
    #[serde(rename = "BLOCK_DELIVER")]
    BlockDeliver {
        t: Tick,
        worker: WorkerId,
        from: WorkerId,
        block_id: Digest32,
        outcome: DeliverOutcome,
        head_after: Digest32,
    },
    #[serde(rename = "REORG")]
    Reorg { t: Tick, worker: WorkerId, old_head: Digest32, new_head: Digest32, abandoned: u64 },
    #[serde(rename = "ADVANCE")]
    Advance {
        t: Tick,
        worker: WorkerId,
        step: u64,
        base: Digest32,
        seed: u64,
        loss: f64,
        new_base: Digest32,
        bcast_id: u64,
    },
    #[serde(rename = "BAN")]
    Ban { t: Tick, voter: WorkerId, target: WorkerId, suppressed_now: bool },
    #[serde(rename = "DECIDE")]
    Decide { t: Tick, worker: WorkerId, steps: u64, theta: Digest32 },
    #[serde(rename = "DECIDE_PLESS")]
    DecidePless { t: Tick, worker: WorkerId, task: u64, theta: Digest32, block_id: Digest32 },
    #[serde(rename = "ABORT")]
    Abort { t: Tick, reason: String },
}

impl Record {
    pub fn time(&self) -> Option<Tick> {
        match self {
            Record::Header { .. } => None,
            Record::Eval { t, .. }
            | Record::Bcast { t, .. }
            | Record::Deliver { t, .. }
            | Record::Value { t, .. }
            | Record::Mint { t, .. }
            | Record::BlockDeliver { t, .. }
            | Record::Reorg { t, .. }
            | Record::Advance { t, .. }
            | Record::Ban { t, .. }
            | Record::Decide { t, .. }
            | Record::DecidePless { t, .. }
            | Record::Abort { t, .. } => Some(*t),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunTranscript {
    records: Vec<Record>,
}

impl RunTranscript {
    pub fn new() -> RunTranscript {
        RunTranscript { records: Vec::new() }
    }

    pub fn push(&mut self, record: Record) {
        debug_assert!(match (self.records.last().and_then(Record::time), record.time()) {
            (Some(prev), Some(next)) => prev <= next,
            _ => true,
        });
        self.records.push(record);
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn header_config(&self) -> Option<&SimConfig> {
        match self.records.first() {
            Some(Record::Header { config, .. }) => Some(config),
            _ => None,
        }
    }

    pub fn header_engine(&self) -> Option<&str> {
        match self.records.first() {
            Some(Record::Header { engine, .. }) => Some(engine),
            _ => None,
        }
    }

    pub fn aborted_reason(&self) -> Option<&str> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Abort { reason, .. } => Some(reason.as_str()),
            _ => None,
        })
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<RunTranscript, crate::error::Error> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| {
                crate::error::Error::Transcript(format!("line {}: {e}", i + 1))
            })?;
            records.push(rec);
        }
        Ok(RunTranscript { records })
    }

    /// SHA-256 of the NDJSON bytes.
    pub fn digest(&self) -> Digest32 {
        let mut h = Sha256::new();
        h.update(self.to_ndjson().as_bytes());
        Digest32(h.finalize().into())
    }
}
