//! Byzantine-resilient distributed (1,lambda) evolutionary search.
//!
//! Candidate parameter updates are tiny random seeds that expand
//! deterministically into perturbations, so any worker can verify any other
//! worker's claimed improvement with a single re-evaluation. On top of that
//! primitive this crate implements two coordination protocols — one ordering
//! accepted updates through a total order broadcast, one electing leaders by
//! hash lottery over a simulated proof-of-work chain — plus a deterministic
//! discrete-event harness that runs worker pools with injected Byzantine
//! strategies and checks liveness, consistency, validity and per-step
//! optimality against the measured probability bounds.

pub mod adversary;
pub mod chain;
pub mod error;
pub mod es;
pub mod harness;
pub mod landscape;
pub mod params;
pub mod perm;
pub mod pless;
pub mod rng;
pub mod score;
pub mod tob;

pub use adversary::{Strategy, StrategyKind};
pub use chain::{Block, ChainView, ReorgStats, ValueMsg};
pub use error::Error;
pub use es::{
    derive_perturbation, evaluate, follow, is_valid_update, score_block, Evaluation,
    SearchConfig, SearchEvent, Searcher, UpdateSeed,
};
pub use harness::config::{Mode, SimConfig};
pub use harness::run;
pub use harness::transcript::{Record, RunTranscript, ENGINE_VERSION};
pub use landscape::Landscape;
pub use params::{Digest32, ParamVector};
pub use score::Score256;
pub use tob::{Tick, WorkerId};
