//! Deterministic discrete-event simulator.
//!
//! Simulated time is integer ticks. Every scheduled event carries a
//! (due-tick, sequence-id) key assigned at scheduling time, and the loop pops
//! events in that order, so two runs of the same configuration replay the
//! exact same event sequence and produce byte-identical transcripts.

pub mod checks;
pub mod config;
pub mod transcript;
pub mod verify;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::adversary::StrategyKind;
use crate::chain::{Block, ReorgTracker, ValueMsg};
use crate::error::Error;
use crate::es::{Evaluation, UpdateSeed};
use crate::params::Digest32;
use crate::perm::{PermAction, PermWorker};
use crate::pless::{PlessAction, PlessWorker};
use crate::rng::{domains, substream_seed, SplitMix64};
use crate::tob::{TobBus, Tick, ValidLossMsg, WorkerId};

use config::{Mode, ResolvedConfig, SimConfig};
use transcript::{EvalPurpose, Record, RunTranscript, ENGINE_VERSION};

/// Pool-wide evaluation tallies, including the no-progress budget counter.
#[derive(Debug, Default)]
pub struct EvalCounters {
    pub search_evals: u64,
    pub verify_evals: u64,
    pub base_evals: u64,
    pub evals_since_progress: u64,
}

impl EvalCounters {
    pub fn progress(&mut self) {
        self.evals_since_progress = 0;
    }
}

/// Context handed to worker state machines for one event dispatch.
pub struct ProtoCtx<'a> {
    pub now: Tick,
    pub cfg: &'a ResolvedConfig,
    pub transcript: &'a mut RunTranscript,
    pub counters: &'a mut EvalCounters,
}

/// Append an EVAL record and update the counters.
pub fn log_eval(
    ctx: &mut ProtoCtx<'_>,
    worker: WorkerId,
    base: Digest32,
    seed: UpdateSeed,
    eval: &Evaluation,
    valid: bool,
    purpose: EvalPurpose,
) {
    match purpose {
        EvalPurpose::Search => {
            ctx.counters.search_evals += 1;
            ctx.counters.evals_since_progress += 1;
        }
        EvalPurpose::Verify => ctx.counters.verify_evals += 1,
        EvalPurpose::Base => ctx.counters.base_evals += 1,
    }
    ctx.transcript.push(Record::Eval {
        t: ctx.now,
        worker,
        base,
        seed: seed.value(),
        loss: eval.loss,
        score: eval.block_score,
        valid,
        purpose,
    });
}

#[derive(Clone, Debug)]
enum EventKind {
    SearchTick { worker: WorkerId, k: u64 },
    TobDeliver { worker: WorkerId, bcast_id: u64, sender: WorkerId, msg: ValidLossMsg },
    GossipValue { to: WorkerId, from: WorkerId, msg: ValueMsg },
    GossipBlock { to: WorkerId, from: WorkerId, block: Box<Block> },
}

#[derive(Clone, Debug)]
struct Scheduled {
    due: Tick,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.due == other.due && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.due, self.seq).cmp(&(other.due, other.seq))
    }
}

enum Proto {
    Perm(PermWorker),
    Pless(PlessWorker),
}

struct WorkerRt {
    search_rng: SplitMix64,
    adversary_rng: SplitMix64,
    interval: u64,
    power: f64,
    scripted: VecDeque<u64>,
    proto: Proto,
}

impl WorkerRt {
    /// Tick `k` of this worker lands at floor(k * interval / power).
    fn tick_time(&self, k: u64) -> Tick {
        (k as f64 * self.interval as f64 / self.power).floor() as Tick
    }
}

struct Sim {
    rc: ResolvedConfig,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    now: Tick,
    transcript: RunTranscript,
    counters: EvalCounters,
    workers: Vec<WorkerRt>,
    tob: TobBus,
    net_rng: SplitMix64,
    next_tob_seq_no: u64,
    tob_seq_no: std::collections::BTreeMap<u64, u64>,
    prev_heads: Vec<Digest32>,
    tracker: ReorgTracker,
}

impl Sim {
    fn schedule(&mut self, due: Tick, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { due, seq, kind }));
    }

    fn crashed(&self, w: WorkerId, at: Tick) -> bool {
        matches!(
            self.rc.strategies[w as usize],
            Some(s) if s.kind == StrategyKind::Crash && at >= s.crash_tick
        )
    }

    fn all_correct_decided(&self) -> bool {
        self.rc.correct_workers().all(|w| match &self.workers[w as usize].proto {
            Proto::Perm(p) => p.decided.is_some(),
            Proto::Pless(p) => p.all_decided(),
        })
    }

    fn abort(&mut self, reason: &str) {
        let rec = Record::Abort { t: self.now, reason: reason.to_string() };
        self.transcript.push(rec);
    }

    fn dispatch(&mut self, ev: Scheduled) -> Result<(), Error> {
        self.now = ev.due;
        match ev.kind {
            EventKind::SearchTick { worker, k } => self.on_search_tick(worker, k),
            EventKind::TobDeliver { worker, bcast_id, sender, msg } => {
                self.on_tob_deliver(worker, bcast_id, sender, msg)
            }
            EventKind::GossipValue { to, from, msg } => self.on_gossip_value(to, from, msg),
            EventKind::GossipBlock { to, from, block } => self.on_gossip_block(to, from, *block),
        }
    }

    fn on_search_tick(&mut self, w: WorkerId, k: u64) -> Result<(), Error> {
        if self.crashed(w, self.now) {
            return Ok(());
        }
        let widx = w as usize;
        let strategy = self.rc.strategies[widx];
        let mut perm_actions = Vec::new();
        let mut pless_actions = Vec::new();
        let mut stop_ticking = false;
        let mut is_pless = false;
        {
            let WorkerRt { search_rng, adversary_rng, scripted, proto, .. } =
                &mut self.workers[widx];
            let forced = scripted.pop_front();
            let mut ctx = ProtoCtx {
                now: self.now,
                cfg: &self.rc,
                transcript: &mut self.transcript,
                counters: &mut self.counters,
            };
            match proto {
                Proto::Perm(p) => {
                    perm_actions = p.on_search_tick(
                        forced,
                        search_rng,
                        adversary_rng,
                        strategy.as_ref(),
                        &mut ctx,
                    )?;
                    stop_ticking = p.decided.is_some();
                }
                Proto::Pless(p) => {
                    pless_actions = p.on_search_tick(
                        forced,
                        search_rng,
                        adversary_rng,
                        strategy.as_ref(),
                        &mut ctx,
                    )?;
                    is_pless = true;
                }
            }
        }
        self.exec_perm_actions(w, perm_actions);
        self.exec_pless_actions(w, pless_actions);
        if is_pless {
            self.note_head(w);
        }
        if !stop_ticking {
            let due = self.workers[widx].tick_time(k + 1).max(self.now);
            self.schedule(due, EventKind::SearchTick { worker: w, k: k + 1 });
        }
        Ok(())
    }

    fn on_tob_deliver(
        &mut self,
        w: WorkerId,
        bcast_id: u64,
        sender: WorkerId,
        msg: ValidLossMsg,
    ) -> Result<(), Error> {
        if self.crashed(w, self.now) {
            return Ok(());
        }
        // The message's global sequence number is fixed by its first
        // delivery anywhere; all workers then observe the same numbering.
        let seq_no = *self.tob_seq_no.entry(bcast_id).or_insert_with(|| {
            let s = self.next_tob_seq_no;
            self.next_tob_seq_no += 1;
            s
        });
        self.transcript.push(Record::Deliver { t: self.now, worker: w, bcast_id, seq_no, sender });
        let correct = self.rc.is_correct(w);
        let mut actions = Vec::new();
        {
            let WorkerRt { proto, .. } = &mut self.workers[w as usize];
            let mut ctx = ProtoCtx {
                now: self.now,
                cfg: &self.rc,
                transcript: &mut self.transcript,
                counters: &mut self.counters,
            };
            if let Proto::Perm(p) = proto {
                actions = p.on_deliver(sender, msg, bcast_id, correct, &mut ctx)?;
            }
        }
        self.exec_perm_actions(w, actions);
        Ok(())
    }

    fn on_gossip_value(
        &mut self,
        to: WorkerId,
        from: WorkerId,
        msg: ValueMsg,
    ) -> Result<(), Error> {
        if self.crashed(to, self.now) {
            return Ok(());
        }
        let correct = self.rc.is_correct(to);
        let mut actions = Vec::new();
        {
            let WorkerRt { proto, .. } = &mut self.workers[to as usize];
            let mut ctx = ProtoCtx {
                now: self.now,
                cfg: &self.rc,
                transcript: &mut self.transcript,
                counters: &mut self.counters,
            };
            if let Proto::Pless(p) = proto {
                actions = p.on_deliver_value(from, msg, correct, &mut ctx)?;
            }
        }
        self.exec_pless_actions(to, actions);
        Ok(())
    }

    fn on_gossip_block(&mut self, to: WorkerId, from: WorkerId, block: Block) -> Result<(), Error> {
        if self.crashed(to, self.now) {
            return Ok(());
        }
        let correct = self.rc.is_correct(to);
        let mut actions = Vec::new();
        {
            let WorkerRt { proto, .. } = &mut self.workers[to as usize];
            let mut ctx = ProtoCtx {
                now: self.now,
                cfg: &self.rc,
                transcript: &mut self.transcript,
                counters: &mut self.counters,
            };
            if let Proto::Pless(p) = proto {
                actions = p.on_deliver_block(from, block, correct, &mut ctx)?;
            }
        }
        self.exec_pless_actions(to, actions);
        self.note_head(to);
        Ok(())
    }

    /// Track head movement for reorg statistics and REORG records.
    fn note_head(&mut self, w: WorkerId) {
        let widx = w as usize;
        let Proto::Pless(p) = &self.workers[widx].proto else { return };
        let head = p.view.head();
        let prev = self.prev_heads[widx];
        if head == prev {
            return;
        }
        let abandoned = self.tracker.observe_head(w, &p.view);
        if abandoned > 0 {
            self.transcript.push(Record::Reorg {
                t: self.now,
                worker: w,
                old_head: prev,
                new_head: head,
                abandoned: abandoned as u64,
            });
        }
        self.prev_heads[widx] = head;
    }

    fn exec_perm_actions(&mut self, actor: WorkerId, actions: Vec<PermAction>) {
        for action in actions {
            match action {
                PermAction::Broadcast(msg) => {
                    let delta = self.rc.raw.tob.delta.draw(&mut self.net_rng);
                    match self.tob.broadcast(self.now, actor, msg, delta) {
                        Some(pd) => {
                            self.transcript.push(Record::Bcast {
                                t: self.now,
                                worker: actor,
                                bcast_id: pd.bcast_id,
                                base: msg.base,
                                seed: msg.seed,
                                suppressed: false,
                            });
                            for w in 0..self.rc.n_workers as WorkerId {
                                self.schedule(
                                    pd.due,
                                    EventKind::TobDeliver {
                                        worker: w,
                                        bcast_id: pd.bcast_id,
                                        sender: actor,
                                        msg,
                                    },
                                );
                            }
                        }
                        None => {
                            // Banned sender: the broadcast is dropped and
                            // carries no id.
                            self.transcript.push(Record::Bcast {
                                t: self.now,
                                worker: actor,
                                bcast_id: u64::MAX,
                                base: msg.base,
                                seed: msg.seed,
                                suppressed: true,
                            });
                        }
                    }
                }
                PermAction::Ban(target) => {
                    let suppressed_now = self.tob.vote_ban(actor, target);
                    self.transcript.push(Record::Ban {
                        t: self.now,
                        voter: actor,
                        target,
                        suppressed_now,
                    });
                }
            }
        }
    }

    fn exec_pless_actions(&mut self, actor: WorkerId, actions: Vec<PlessAction>) {
        for action in actions {
            match action {
                PlessAction::SendValue(msg) => {
                    self.transcript.push(Record::Value {
                        t: self.now,
                        from: actor,
                        origin: msg.origin,
                        base: msg.base,
                        seed: msg.seed,
                        declared_loss: msg.declared_loss,
                    });
                    for i in 0..self.rc.neighbors[actor as usize].len() {
                        let nb = self.rc.neighbors[actor as usize][i];
                        let delay = self.rc.raw.gossip.delay.draw(&mut self.net_rng);
                        self.schedule(
                            self.now + delay,
                            EventKind::GossipValue { to: nb, from: actor, msg },
                        );
                    }
                }
                PlessAction::PropagateBlock { block, delay } => {
                    for i in 0..self.rc.neighbors[actor as usize].len() {
                        let nb = self.rc.neighbors[actor as usize][i];
                        let edge = self.rc.raw.gossip.delay.draw(&mut self.net_rng);
                        self.schedule(
                            self.now + delay + edge,
                            EventKind::GossipBlock {
                                to: nb,
                                from: actor,
                                block: Box::new(block.clone()),
                            },
                        );
                    }
                }
            }
        }
    }
}

/// Execute one run. The returned transcript is a pure function of the
/// configuration.
pub fn run(cfg: &SimConfig) -> Result<RunTranscript, Error> {
    let rc = cfg.resolve()?;
    let n = rc.n_workers;
    let correct_mask: Vec<bool> = (0..n as WorkerId).map(|w| rc.is_correct(w)).collect();
    let tob = TobBus::new(n, correct_mask, rc.ban_quorum);

    let mut workers = Vec::with_capacity(n);
    for w in 0..n as WorkerId {
        let mut interval_rng =
            SplitMix64::new(substream_seed(rc.master_seed, domains::EVAL_INTERVAL, w as u64));
        let interval = rc.raw.workers.t_eval.draw(&mut interval_rng).max(1);
        let power = rc.strategies[w as usize].map(|s| s.power_multiplier).unwrap_or(1.0);
        let proto = match rc.mode {
            Mode::Permissioned => Proto::Perm(PermWorker::new(w)),
            Mode::Permissionless => Proto::Pless(PlessWorker::new(
                w,
                rc.tasks.len(),
                Block::genesis(rc.tasks[0].theta0.digest()),
            )),
        };
        workers.push(WorkerRt {
            search_rng: SplitMix64::new(substream_seed(
                rc.master_seed,
                domains::WORKER_SEARCH,
                w as u64,
            )),
            adversary_rng: SplitMix64::new(substream_seed(
                rc.master_seed,
                domains::ADVERSARY,
                w as u64,
            )),
            interval,
            power,
            scripted: rc.scripted_seeds[w as usize].iter().copied().collect(),
            proto,
        });
    }

    let genesis_head = match rc.mode {
        Mode::Permissionless => Block::genesis(rc.tasks[0].theta0.digest()).id(),
        Mode::Permissioned => Digest32::ZERO,
    };

    let mut sim = Sim {
        queue: BinaryHeap::new(),
        seq: 0,
        now: 0,
        transcript: RunTranscript::new(),
        counters: EvalCounters::default(),
        workers,
        tob,
        net_rng: SplitMix64::new(substream_seed(rc.master_seed, domains::NETWORK, 0)),
        next_tob_seq_no: 0,
        tob_seq_no: std::collections::BTreeMap::new(),
        prev_heads: vec![genesis_head; n],
        tracker: ReorgTracker::new(),
        rc,
    };

    sim.transcript
        .push(Record::Header { engine: ENGINE_VERSION.to_string(), config: cfg.clone() });

    // Init workers at t = 0 and schedule their first ticks.
    for w in 0..n as WorkerId {
        if sim.crashed(w, 0) {
            continue;
        }
        {
            let WorkerRt { proto, .. } = &mut sim.workers[w as usize];
            let mut ctx = ProtoCtx {
                now: 0,
                cfg: &sim.rc,
                transcript: &mut sim.transcript,
                counters: &mut sim.counters,
            };
            match proto {
                Proto::Perm(p) => p.init(&mut ctx)?,
                Proto::Pless(p) => {
                    p.init(&mut ctx)?;
                    sim.tracker.observe_head(w, &p.view);
                }
            }
        }
        let due = sim.workers[w as usize].tick_time(1);
        sim.schedule(due, EventKind::SearchTick { worker: w, k: 1 });
    }

    let max_ticks = sim.rc.raw.budgets.max_ticks;
    let max_evals = sim.rc.raw.budgets.max_evals_per_step;
    loop {
        if sim.all_correct_decided() {
            break;
        }
        let Some(Reverse(ev)) = sim.queue.pop() else {
            sim.abort("event queue drained before all correct workers decided");
            break;
        };
        if ev.due > max_ticks {
            sim.abort("max_ticks budget exceeded");
            break;
        }
        sim.dispatch(ev)?;
        if sim.counters.evals_since_progress > max_evals {
            sim.abort("evaluation budget exceeded without progress (liveness timeout)");
            break;
        }
    }

    Ok(sim.transcript)
}
