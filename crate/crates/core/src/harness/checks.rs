//! Consensus property checkers, rate measurement and bound calculators.
//!
//! Everything here is computed from a finished transcript alone; the header
//! record carries the configuration needed to tell correct workers from
//! Byzantine ones and to reconstruct starting points.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{Block, ChainView, ReorgStats, ReorgTracker};
use crate::error::Error;
use crate::harness::config::{Mode, ResolvedConfig};
use crate::harness::transcript::{DeliverOutcome, EvalPurpose, Record, RunTranscript};
use crate::params::Digest32;
use crate::tob::{Tick, WorkerId};

/// The four run predicates plus the decided digests they were checked on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsensusChecks {
    /// Every correct worker decided (every task, in permissionless mode).
    pub liveness: bool,
    pub liveness_cause: Option<String>,
    /// All correct workers decided bitwise-identical parameters.
    pub consistency: bool,
    /// Every accepted update traces to a prior broadcast proposal and was
    /// re-verified by the accepting worker.
    pub extended_validity: bool,
    /// Worst per-step gap between the accepted loss and the oracle-best
    /// valid candidate evaluated before acceptance completed.
    pub epsilon_max: f64,
    pub decided: Vec<Option<Digest32>>,
}

/// One accepted permissioned step, with its broadcast race window.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u64,
    pub base: Digest32,
    pub seed: u64,
    pub loss: f64,
    pub bcast_time: Tick,
    /// Delivery completion at the last correct worker.
    pub window_end: Tick,
    /// A strictly better valid candidate was evaluated inside the window.
    pub nonoptimal: bool,
    pub epsilon: f64,
}

/// Rates measured from a transcript, in tick units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Rates {
    /// Search evaluations per validity-passing evaluation (correct workers).
    pub n_measured: Option<f64>,
    /// Mean gap between consecutive search evaluations per correct worker.
    pub t_eval_avg: Option<f64>,
    /// Mean broadcast-to-last-correct-delivery latency (or block
    /// mint-to-last-acceptance in permissionless mode).
    pub delta_avg: Option<f64>,
    /// Correct and Byzantine minting rates per tick.
    pub alpha: f64,
    pub gamma: f64,
    pub duration_ticks: Tick,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundValue {
    pub raw: f64,
    /// Raw value clamped into [0, 1].
    pub clamped: f64,
}

/// Safety condition of the mining race: with propagation penalty
/// g = exp(-alpha * delta), honest work must satisfy
/// g^2 * alpha > (1 + margin) * gamma.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MiningCondition {
    pub alpha: f64,
    pub gamma: f64,
    pub delta_margin: f64,
    pub delta_net: f64,
    pub g: f64,
    pub holds: bool,
}

/// Upper bound on the probability that a step is non-optimal: the chance a
/// better valid seed turns up while the accepted one is still in flight,
/// `delta * n / (N * t_eval)`.
pub fn race_bound(
    delta_avg: f64,
    n_workers: usize,
    n_measured: f64,
    t_eval_avg: f64,
) -> Result<BoundValue, Error> {
    if delta_avg < 0.0 {
        return Err(Error::config("race_bound.delta", "must be non-negative"));
    }
    if n_workers == 0 || !(n_measured > 0.0) || !(t_eval_avg > 0.0) {
        return Err(Error::config("race_bound", "pool size, tries and eval time must be positive"));
    }
    let raw = delta_avg * n_workers as f64 / (n_measured * t_eval_avg);
    Ok(BoundValue { raw, clamped: raw.clamp(0.0, 1.0) })
}

pub fn mining_condition(
    alpha: f64,
    gamma: f64,
    delta_margin: f64,
    delta_net: f64,
) -> MiningCondition {
    let g = (-alpha * delta_net).exp();
    MiningCondition {
        alpha,
        gamma,
        delta_margin,
        delta_net,
        g,
        holds: g * g * alpha > (1.0 + delta_margin) * gamma,
    }
}

/// 99% two-sided binomial confidence half-width around an observed fraction.
pub fn binomial_ci_halfwidth(p_hat: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    const Z_99: f64 = 2.5758293035489004;
    Z_99 * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

fn resolved(t: &RunTranscript) -> Result<ResolvedConfig, Error> {
    t.header_config()
        .ok_or_else(|| Error::Transcript("transcript has no header record".into()))?
        .resolve()
}

/// Accepted-step reconstruction for permissioned transcripts, including the
/// non-optimality race windows.
pub fn step_optimality(t: &RunTranscript) -> Result<Vec<StepRecord>, Error> {
    let rc = resolved(t)?;
    let records = t.records();

    let Some(reference) = rc.correct_workers().next() else {
        return Ok(Vec::new());
    };
    // Canonical accepted sequence: the first correct worker's advances.
    let mut steps: Vec<(u64, Digest32, u64, f64, u64)> = Vec::new();
    for r in records {
        if let Record::Advance { worker, step, base, seed, loss, bcast_id, .. } = r {
            if *worker == reference {
                steps.push((*step, *base, *seed, *loss, *bcast_id));
            }
        }
    }

    // Broadcast times and delivery completion per bcast id.
    let mut bcast_time: BTreeMap<u64, Tick> = BTreeMap::new();
    let mut last_correct_deliver: BTreeMap<u64, Tick> = BTreeMap::new();
    for r in records {
        match r {
            Record::Bcast { t, bcast_id, suppressed: false, .. } => {
                bcast_time.insert(*bcast_id, *t);
            }
            Record::Deliver { t, worker, bcast_id, .. } if rc.is_correct(*worker) => {
                let e = last_correct_deliver.entry(*bcast_id).or_insert(*t);
                *e = (*e).max(*t);
            }
            _ => {}
        }
    }

    let mut out = Vec::new();
    for (step, base, seed, loss, bcast_id) in steps {
        let start = *bcast_time.get(&bcast_id).ok_or_else(|| {
            Error::Transcript(format!(
                "advance at step {step} references unknown broadcast {bcast_id}"
            ))
        })?;
        let end = *last_correct_deliver.get(&bcast_id).unwrap_or(&start);
        let mut nonoptimal = false;
        let mut oracle_best = loss;
        for r in records {
            if let Record::Eval {
                t,
                worker,
                base: eb,
                loss: el,
                valid: true,
                purpose: EvalPurpose::Search,
                ..
            } = r
            {
                if *eb != base || !rc.is_correct(*worker) {
                    continue;
                }
                if *t <= end && *el < oracle_best {
                    oracle_best = *el;
                }
                if *t >= start && *t <= end && *el < loss {
                    nonoptimal = true;
                }
            }
        }
        let epsilon = (loss - oracle_best).max(0.0);
        out.push(StepRecord {
            step,
            base,
            seed,
            loss,
            bcast_time: start,
            window_end: end,
            nonoptimal,
            epsilon,
        });
    }
    Ok(out)
}

/// Per-epoch optimality gaps along the permissionless decided chain.
fn pless_epsilons(t: &RunTranscript, rc: &ResolvedConfig) -> Result<Vec<f64>, Error> {
    let records = t.records();
    let mut registry: BTreeMap<Digest32, (&Block, Tick)> = BTreeMap::new();
    for r in records {
        if let Record::Mint { block_id, block, t, .. } = r {
            registry.insert(*block_id, (block, *t));
        }
    }
    let Some(reference) = rc.correct_workers().next() else { return Ok(Vec::new()) };
    // The decided chain: walk back from the last task's decided block.
    let mut tip = None;
    for r in records {
        if let Record::DecidePless { worker, task, block_id, .. } = r {
            if *worker == reference && *task == rc.tasks.len() as u64 - 1 {
                tip = Some(*block_id);
            }
        }
    }
    let Some(tip) = tip else { return Ok(Vec::new()) };

    let genesis_id = Block::genesis(rc.tasks[0].theta0.digest()).id();
    let mut chain = Vec::new();
    let mut cur = tip;
    while cur != genesis_id {
        let Some((block, mint_t)) = registry.get(&cur) else {
            return Err(Error::Transcript(format!(
                "decided chain references unminted block {cur}"
            )));
        };
        chain.push((*block, *mint_t));
        cur = block.parent;
    }
    chain.reverse();

    // Base losses of task origins, from the base evaluations.
    let mut origin_loss: BTreeMap<Digest32, f64> = BTreeMap::new();
    for r in records {
        if let Record::Eval { base, loss, purpose: EvalPurpose::Base, .. } = r {
            origin_loss.entry(*base).or_insert(*loss);
        }
    }

    let mut out = Vec::new();
    let mut cur_loss = *origin_loss
        .get(&rc.tasks[0].theta0.digest())
        .ok_or_else(|| Error::Transcript("no base evaluation for the starting point".into()))?;
    for (block, mint_t) in chain {
        let task = ((block.steps - 1) / rc.z_steps) as usize;
        if task >= rc.tasks.len() {
            break; // continuation blocks are not steps
        }
        if (block.steps - 1) % rc.z_steps == 0 && block.steps > 1 {
            cur_loss = *origin_loss.get(&block.base).ok_or_else(|| {
                Error::Transcript("no base evaluation for a task origin".into())
            })?;
        }
        let accepted =
            if block.best_loss.seed.is_absent() { cur_loss } else { block.best_loss.loss };
        let mut oracle_best = accepted;
        for r in records {
            if let Record::Eval {
                t,
                worker,
                base,
                loss,
                valid: true,
                purpose: EvalPurpose::Search,
                ..
            } = r
            {
                if *base == block.base
                    && rc.is_correct(*worker)
                    && *t <= mint_t
                    && *loss < oracle_best
                {
                    oracle_best = *loss;
                }
            }
        }
        out.push((accepted - oracle_best).max(0.0));
        cur_loss = accepted;
    }
    Ok(out)
}

pub fn check_consensus(t: &RunTranscript) -> Result<ConsensusChecks, Error> {
    let rc = resolved(t)?;
    match rc.mode {
        Mode::Permissioned => check_permissioned(t, &rc),
        Mode::Permissionless => check_permissionless(t, &rc),
    }
}

fn check_permissioned(t: &RunTranscript, rc: &ResolvedConfig) -> Result<ConsensusChecks, Error> {
    let records = t.records();
    let mut decided: BTreeMap<WorkerId, Digest32> = BTreeMap::new();
    for r in records {
        if let Record::Decide { worker, theta, .. } = r {
            decided.insert(*worker, *theta);
        }
    }
    let correct: Vec<WorkerId> = rc.correct_workers().collect();
    let all_decided = correct.iter().all(|w| decided.contains_key(w));
    let liveness = all_decided && t.aborted_reason().is_none();
    let liveness_cause = if liveness {
        None
    } else if let Some(reason) = t.aborted_reason() {
        Some(format!("run aborted: {reason}"))
    } else {
        Some("some correct workers never decided".to_string())
    };
    let digests: BTreeSet<Digest32> =
        correct.iter().filter_map(|w| decided.get(w)).copied().collect();
    let consistency = digests.len() <= 1;

    // Every correct advance must re-verify a previously broadcast seed.
    let mut bcast_seen: BTreeSet<(Digest32, u64)> = BTreeSet::new();
    let mut verified: BTreeSet<(WorkerId, Digest32, u64)> = BTreeSet::new();
    let mut extended_validity = true;
    for r in records {
        match r {
            Record::Bcast { base, seed, suppressed: false, .. } => {
                bcast_seen.insert((*base, *seed));
            }
            Record::Eval {
                worker,
                base,
                seed: Some(seed),
                valid: true,
                purpose: EvalPurpose::Verify,
                ..
            } => {
                verified.insert((*worker, *base, *seed));
            }
            Record::Advance { worker, base, seed, .. } if rc.is_correct(*worker) => {
                if !bcast_seen.contains(&(*base, *seed))
                    || !verified.contains(&(*worker, *base, *seed))
                {
                    extended_validity = false;
                }
            }
            _ => {}
        }
    }

    let steps = step_optimality(t)?;
    let epsilon_max = steps.iter().map(|s| s.epsilon).fold(0.0, f64::max);
    let decided_digest = correct.first().and_then(|w| decided.get(w)).copied();
    Ok(ConsensusChecks {
        liveness,
        liveness_cause,
        consistency,
        extended_validity,
        epsilon_max,
        decided: vec![decided_digest],
    })
}

fn check_permissionless(t: &RunTranscript, rc: &ResolvedConfig) -> Result<ConsensusChecks, Error> {
    let records = t.records();
    let n_tasks = rc.tasks.len();
    let mut decided: BTreeMap<(WorkerId, u64), Digest32> = BTreeMap::new();
    for r in records {
        if let Record::DecidePless { worker, task, theta, .. } = r {
            decided.insert((*worker, *task), *theta);
        }
    }
    let correct: Vec<WorkerId> = rc.correct_workers().collect();
    let all_decided = correct
        .iter()
        .all(|w| (0..n_tasks as u64).all(|task| decided.contains_key(&(*w, task))));
    let liveness = all_decided && t.aborted_reason().is_none();
    let liveness_cause = if liveness {
        None
    } else if let Some(reason) = t.aborted_reason() {
        Some(format!("run aborted: {reason}"))
    } else {
        Some("some correct workers never decided every task".to_string())
    };

    let mut consistency = true;
    let mut decided_by_task = Vec::new();
    for task in 0..n_tasks as u64 {
        let digests: BTreeSet<Digest32> =
            correct.iter().filter_map(|w| decided.get(&(*w, task))).copied().collect();
        if digests.len() > 1 {
            consistency = false;
        }
        decided_by_task.push(digests.iter().next().copied());
    }

    // Verification completeness: each correct acceptance re-verified the
    // block's claims, and each non-null accepted block carries a seed that
    // somebody had evaluated as valid before the mint.
    let mut registry: BTreeMap<Digest32, &Block> = BTreeMap::new();
    let mut mint_time: BTreeMap<Digest32, Tick> = BTreeMap::new();
    for r in records {
        if let Record::Mint { block_id, block, t, .. } = r {
            registry.insert(*block_id, block);
            mint_time.insert(*block_id, *t);
        }
    }
    let mut verify_evals: BTreeSet<(WorkerId, Digest32, u64)> = BTreeSet::new();
    let mut valid_search_evals: BTreeMap<(Digest32, u64), Tick> = BTreeMap::new();
    for r in records {
        if let Record::Eval { t, worker, base, seed: Some(seed), valid, purpose, .. } = r {
            match purpose {
                EvalPurpose::Verify => {
                    verify_evals.insert((*worker, *base, *seed));
                }
                EvalPurpose::Search if *valid => {
                    valid_search_evals.entry((*base, *seed)).or_insert(*t);
                }
                _ => {}
            }
        }
    }
    let mut extended_validity = true;
    for r in records {
        if let Record::BlockDeliver { worker, block_id, outcome: DeliverOutcome::Accept, .. } = r {
            if !rc.is_correct(*worker) {
                continue;
            }
            let Some(block) = registry.get(block_id) else {
                extended_validity = false;
                continue;
            };
            let Some(hash_seed) = block.best_hash.seed.value() else {
                extended_validity = false;
                continue;
            };
            if !verify_evals.contains(&(*worker, block.base, hash_seed)) {
                extended_validity = false;
            }
            if let Some(loss_seed) = block.best_loss.seed.value() {
                if loss_seed != hash_seed
                    && !verify_evals.contains(&(*worker, block.base, loss_seed))
                {
                    extended_validity = false;
                }
                match valid_search_evals.get(&(block.base, loss_seed)) {
                    Some(found_t) if *found_t <= mint_time[block_id] => {}
                    _ => extended_validity = false,
                }
            }
        }
    }

    let eps = pless_epsilons(t, rc)?;
    let epsilon_max = eps.iter().copied().fold(0.0, f64::max);
    Ok(ConsensusChecks {
        liveness,
        liveness_cause,
        consistency,
        extended_validity,
        epsilon_max,
        decided: decided_by_task,
    })
}

pub fn measure_rates(t: &RunTranscript) -> Result<Rates, Error> {
    let rc = resolved(t)?;
    let records = t.records();
    let duration = records.iter().rev().find_map(Record::time).unwrap_or(0);

    let mut search_total = 0u64;
    let mut search_valid = 0u64;
    let mut eval_times: BTreeMap<WorkerId, Vec<Tick>> = BTreeMap::new();
    for r in records {
        if let Record::Eval { t, worker, valid, purpose: EvalPurpose::Search, .. } = r {
            if rc.is_correct(*worker) {
                search_total += 1;
                if *valid {
                    search_valid += 1;
                }
                eval_times.entry(*worker).or_default().push(*t);
            }
        }
    }
    let n_measured =
        if search_valid > 0 { Some(search_total as f64 / search_valid as f64) } else { None };

    let mut gap_means = Vec::new();
    for times in eval_times.values() {
        if times.len() >= 2 {
            let total: u64 = times.last().unwrap() - times.first().unwrap();
            gap_means.push(total as f64 / (times.len() - 1) as f64);
        }
    }
    let t_eval_avg = if gap_means.is_empty() {
        None
    } else {
        Some(gap_means.iter().sum::<f64>() / gap_means.len() as f64)
    };

    // Propagation latency.
    let mut latencies = Vec::new();
    match rc.mode {
        Mode::Permissioned => {
            let mut bcast_time: BTreeMap<u64, Tick> = BTreeMap::new();
            let mut last: BTreeMap<u64, Tick> = BTreeMap::new();
            for r in records {
                match r {
                    Record::Bcast { t, bcast_id, suppressed: false, .. } => {
                        bcast_time.insert(*bcast_id, *t);
                    }
                    Record::Deliver { t, worker, bcast_id, .. } if rc.is_correct(*worker) => {
                        let e = last.entry(*bcast_id).or_insert(*t);
                        *e = (*e).max(*t);
                    }
                    _ => {}
                }
            }
            for (id, start) in &bcast_time {
                if let Some(end) = last.get(id) {
                    latencies.push((end - start) as f64);
                }
            }
        }
        Mode::Permissionless => {
            // Only correct miners' blocks measure propagation: a withholder's
            // mint-to-acceptance gap is strategy, not network latency.
            let mut mint_time: BTreeMap<Digest32, Tick> = BTreeMap::new();
            let mut last: BTreeMap<Digest32, Tick> = BTreeMap::new();
            for r in records {
                match r {
                    Record::Mint { t, miner, block_id, .. } if rc.is_correct(*miner) => {
                        mint_time.insert(*block_id, *t);
                    }
                    Record::BlockDeliver {
                        t,
                        worker,
                        block_id,
                        outcome: DeliverOutcome::Accept,
                        ..
                    } if rc.is_correct(*worker) => {
                        let e = last.entry(*block_id).or_insert(*t);
                        *e = (*e).max(*t);
                    }
                    _ => {}
                }
            }
            for (id, start) in &mint_time {
                if let Some(end) = last.get(id) {
                    latencies.push((end - start) as f64);
                }
            }
        }
    }
    let delta_avg = if latencies.is_empty() {
        None
    } else {
        Some(latencies.iter().sum::<f64>() / latencies.len() as f64)
    };

    let mut correct_mints = 0u64;
    let mut byz_mints = 0u64;
    for r in records {
        if let Record::Mint { miner, .. } = r {
            if rc.is_correct(*miner) {
                correct_mints += 1;
            } else {
                byz_mints += 1;
            }
        }
    }
    let (alpha, gamma) = if duration > 0 {
        (correct_mints as f64 / duration as f64, byz_mints as f64 / duration as f64)
    } else {
        (0.0, 0.0)
    };

    Ok(Rates { n_measured, t_eval_avg, delta_avg, alpha, gamma, duration_ticks: duration })
}

/// Replay per-worker head movements to produce reorg frequencies by depth.
pub fn reorg_stats(t: &RunTranscript, depth_max: usize) -> Result<ReorgStats, Error> {
    let rc = resolved(t)?;
    if rc.mode != Mode::Permissionless {
        return Ok(ReorgStats::empty(depth_max));
    }
    let records = t.records();
    let mut registry: BTreeMap<Digest32, Block> = BTreeMap::new();
    for r in records {
        if let Record::Mint { block_id, block, .. } = r {
            registry.insert(*block_id, block.clone());
        }
    }
    let genesis = Block::genesis(rc.tasks[0].theta0.digest());
    let mut views: BTreeMap<WorkerId, ChainView> = BTreeMap::new();
    let mut tracker = ReorgTracker::new();
    for w in rc.correct_workers() {
        let v = ChainView::new(genesis.clone(), 0);
        tracker.observe_head(w, &v);
        views.insert(w, v);
    }
    for r in records {
        let (worker, block_id, time) = match r {
            Record::Mint { t, miner, block_id, .. } if rc.is_correct(*miner) => {
                (*miner, *block_id, *t)
            }
            Record::BlockDeliver { t, worker, block_id, outcome: DeliverOutcome::Accept, .. }
                if rc.is_correct(*worker) =>
            {
                (*worker, *block_id, *t)
            }
            _ => continue,
        };
        let Some(block) = registry.get(&block_id) else {
            return Err(Error::Transcript(format!("accepted block {block_id} was never minted")));
        };
        let view = views.get_mut(&worker).expect("correct worker view exists");
        let before = view.head();
        view.insert(block.clone(), time);
        if view.head() != before {
            tracker.observe_head(worker, view);
        }
    }
    Ok(tracker.stats(depth_max))
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RecordCounts {
    pub evals_search: u64,
    pub evals_verify: u64,
    pub evals_base: u64,
    pub bcasts: u64,
    pub delivers: u64,
    pub values: u64,
    pub mints: u64,
    pub blocks_accepted: u64,
    pub blocks_rejected: u64,
    pub reorgs: u64,
    pub bans: u64,
    pub decides: u64,
}

/// Everything a run reports: consensus checks, measured rates and the bound
/// values they feed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub master_seed: u64,
    pub mode: Mode,
    pub engine: String,
    pub transcript_digest: Digest32,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub ticks: Tick,
    pub consensus: ConsensusChecks,
    pub rates: Rates,
    pub race_bound: Option<BoundValue>,
    pub steps_total: u64,
    pub nonoptimal_steps: u64,
    pub nonoptimal_fraction: Option<f64>,
    pub mining: Option<MiningCondition>,
    pub expected_tries_per_mint: f64,
    pub mean_evals_per_mint: Option<f64>,
    pub reorg: ReorgStats,
    pub counts: RecordCounts,
}

pub fn summarize(t: &RunTranscript) -> Result<RunSummary, Error> {
    let rc = resolved(t)?;
    let consensus = check_consensus(t)?;
    let rates = measure_rates(t)?;

    let mut counts = RecordCounts::default();
    for r in t.records() {
        match r {
            Record::Eval { purpose, .. } => match purpose {
                EvalPurpose::Search => counts.evals_search += 1,
                EvalPurpose::Verify => counts.evals_verify += 1,
                EvalPurpose::Base => counts.evals_base += 1,
            },
            Record::Bcast { .. } => counts.bcasts += 1,
            Record::Deliver { .. } => counts.delivers += 1,
            Record::Value { .. } => counts.values += 1,
            Record::Mint { .. } => counts.mints += 1,
            Record::BlockDeliver { outcome, .. } => match outcome {
                DeliverOutcome::Accept => counts.blocks_accepted += 1,
                DeliverOutcome::Reject => counts.blocks_rejected += 1,
                _ => {}
            },
            Record::Reorg { .. } => counts.reorgs += 1,
            Record::Ban { .. } => counts.bans += 1,
            Record::Decide { .. } | Record::DecidePless { .. } => counts.decides += 1,
            _ => {}
        }
    }

    let (steps_total, nonoptimal_steps, nonoptimal_fraction, race) = match rc.mode {
        Mode::Permissioned => {
            let steps = step_optimality(t)?;
            let total = steps.len() as u64;
            let bad = steps.iter().filter(|s| s.nonoptimal).count() as u64;
            let frac = if total > 0 { Some(bad as f64 / total as f64) } else { None };
            let race = match (rates.delta_avg, rates.n_measured, rates.t_eval_avg) {
                (Some(d), Some(n), Some(te)) => race_bound(d, rc.n_workers, n, te).ok(),
                _ => None,
            };
            (total, bad, frac, race)
        }
        Mode::Permissionless => (0, 0, None, None),
    };

    let mining = match rc.mode {
        Mode::Permissionless => Some(mining_condition(
            rates.alpha,
            rates.gamma,
            rc.delta_margin,
            rates.delta_avg.unwrap_or(0.0),
        )),
        Mode::Permissioned => None,
    };

    let expected_tries_per_mint = crate::score::Score256::MAX.to_f64() / rc.b_target.to_f64();
    let mean_evals_per_mint = if counts.mints > 0 {
        Some(counts.evals_search as f64 / counts.mints as f64)
    } else {
        None
    };

    let depth_max = (rc.d_final as usize).max(8);
    let reorg = reorg_stats(t, depth_max)?;

    Ok(RunSummary {
        scenario: rc.raw.scenario.clone(),
        master_seed: rc.master_seed,
        mode: rc.mode,
        engine: t.header_engine().unwrap_or_default().to_string(),
        transcript_digest: t.digest(),
        aborted: t.aborted_reason().is_some(),
        abort_reason: t.aborted_reason().map(str::to_string),
        ticks: rates.duration_ticks,
        consensus,
        rates,
        race_bound: race,
        steps_total,
        nonoptimal_steps,
        nonoptimal_fraction,
        mining,
        expected_tries_per_mint,
        mean_evals_per_mint,
        reorg,
        counts,
    })
}
