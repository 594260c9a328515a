//! Byzantine worker strategies.
//!
//! Each strategy targets a specific verification path of the protocols:
//!
//! | strategy             | permissioned guard exercised            | permissionless guard exercised        |
//! |----------------------|-----------------------------------------|---------------------------------------|
//! | `LossLiar`           | invalid-seed re-evaluation -> ban        | declared/recomputed loss mismatch     |
//! | `InvalidSeedSpammer` | invalid-seed re-evaluation -> ban        | fabricated declared loss -> mismatch  |
//! | `Withholder`         | passive (withholds found seeds)          | delayed block propagation -> forks    |
//! | `StaleReplayer`      | stale seed replayed at new base -> ban   | stale value re-send -> mismatch/drop  |
//! | `SelfishMinter`      | passive (withholds found seeds)          | private branch mining -> reorgs       |
//! | `Crash`              | silent after the crash tick              | silent after the crash tick           |
//!
//! Adversaries cannot forge other workers' identities and cannot invert the
//! hash; they receive the same deliveries as correct workers so they can
//! craft deviations against the live protocol state. Their compute rate
//! equals a correct worker's unless `power_multiplier` scales it.

use serde::{Deserialize, Serialize};

use crate::tob::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    LossLiar,
    InvalidSeedSpammer,
    Withholder,
    StaleReplayer,
    SelfishMinter,
    Crash,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::LossLiar => "loss_liar",
            StrategyKind::InvalidSeedSpammer => "invalid_seed_spammer",
            StrategyKind::Withholder => "withholder",
            StrategyKind::StaleReplayer => "stale_replayer",
            StrategyKind::SelfishMinter => "selfish_minter",
            StrategyKind::Crash => "crash",
        }
    }

    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::LossLiar,
        StrategyKind::InvalidSeedSpammer,
        StrategyKind::Withholder,
        StrategyKind::StaleReplayer,
        StrategyKind::SelfishMinter,
        StrategyKind::Crash,
    ];
}

/// A strategy with its knobs; a Byzantine worker follows exactly one per run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Fabricated value messages per tick (spammer, permissionless mode).
    pub spam_rate: u32,
    /// How far below the true loss a liar's declared loss sits.
    pub lie_magnitude: f64,
    /// Delay applied to minted blocks before propagation (withholder).
    pub withhold_ticks: Tick,
    /// Tick at which a crashing worker goes silent.
    pub crash_tick: Tick,
    /// Evaluation-rate multiplier relative to a correct worker.
    pub power_multiplier: f64,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Strategy {
        Strategy {
            kind,
            spam_rate: 1,
            lie_magnitude: 1.0,
            withhold_ticks: 8,
            crash_tick: 0,
            power_multiplier: 1.0,
        }
    }
}
