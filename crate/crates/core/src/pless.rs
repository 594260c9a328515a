//! Permissionless distributed search over a simulated Nakamoto chain.
//!
//! Workers gossip their best verified losses while grinding candidate seeds;
//! a sub-target block score elects the finder as leader, who mints a block
//! advancing the base point by the epoch's best verified update (or by
//! nothing, a null step). Receivers re-evaluate every claim a block carries
//! before accepting it, and longest-chain fork choice drives the local
//! target. A task's final point is decided once its boundary block has
//! `d_final` descendants; workers then keep mining continuation blocks so
//! confirmations accrue for everyone.

use std::collections::{BTreeMap, BTreeSet};

use crate::adversary::{Strategy, StrategyKind};
use crate::chain::{
    try_mint, BestHashRec, BestLossRec, Block, ChainView, InsertOutcome, ValueMsg,
};
use crate::error::Error;
use crate::es::{evaluate_at, follow, is_valid_update, Searcher, SearchEventKind, UpdateSeed};
use crate::harness::transcript::{DeliverOutcome, EvalPurpose, Record};
use crate::harness::{log_eval, ProtoCtx};
use crate::landscape::Landscape;
use crate::params::{Digest32, ParamVector};
use crate::rng::SplitMix64;
use crate::tob::{Tick, WorkerId};

#[derive(Clone, Debug)]
pub enum PlessAction {
    SendValue(ValueMsg),
    PropagateBlock { block: Block, delay: Tick },
}

#[derive(Clone, Debug)]
struct PointInfo {
    params: ParamVector,
    loss: f64,
}

/// What the next block on top of the current head must look like.
#[derive(Clone, Copy, Debug, PartialEq)]
struct EpochPlan {
    /// Task the next step belongs to (clamped to the last task in
    /// continuation mode).
    task: usize,
    /// Whether all tasks are complete and only null continuations follow.
    continuation: bool,
    /// Whether the next block starts a fresh task from its configured origin.
    fresh_task_start: bool,
}

#[derive(Debug)]
pub struct PlessWorker {
    pub id: WorkerId,
    pub searcher: Searcher,
    pub view: ChainView,
    points: BTreeMap<Digest32, PointInfo>,
    pub decided: Vec<Option<Digest32>>,
    seen_values: BTreeSet<Digest32>,
    orphan_from: BTreeMap<Digest32, WorkerId>,
    pub marked_peers: BTreeSet<WorkerId>,
    continuation: bool,
    cur_task: usize,
    /// Stale replayer: a previously verified (seed, loss) to re-claim later.
    replay_memory: Option<(u64, f64)>,
    replay_base: Option<Digest32>,
    /// Selfish minter: minted blocks not yet propagated.
    withheld: Vec<Block>,
    withheld_ids: BTreeSet<Digest32>,
}

impl PlessWorker {
    pub fn new(id: WorkerId, n_tasks: usize, genesis: Block) -> PlessWorker {
        PlessWorker {
            id,
            searcher: Searcher::new(),
            view: ChainView::new(genesis, 0),
            points: BTreeMap::new(),
            decided: vec![None; n_tasks],
            seen_values: BTreeSet::new(),
            orphan_from: BTreeMap::new(),
            marked_peers: BTreeSet::new(),
            continuation: false,
            cur_task: 0,
            replay_memory: None,
            replay_base: None,
            withheld: Vec::new(),
            withheld_ids: BTreeSet::new(),
        }
    }

    pub fn init(&mut self, ctx: &mut ProtoCtx<'_>) -> Result<(), Error> {
        let task = &ctx.cfg.tasks[0];
        let theta0 = task.theta0.clone();
        let digest = theta0.digest();
        let eval = evaluate_at(&task.landscape, &theta0, &digest, UpdateSeed::ABSENT, ctx.cfg.sigma)?;
        log_eval(ctx, self.id, digest, UpdateSeed::ABSENT, &eval, false, EvalPurpose::Base);
        self.points.insert(digest, PointInfo { params: theta0, loss: eval.loss });
        self.retarget(ctx)?;
        Ok(())
    }

    pub fn all_decided(&self) -> bool {
        self.decided.iter().all(Option::is_some)
    }

    pub fn decided_theta(&self, task: usize) -> Option<Digest32> {
        let bid = self.decided.get(task).copied().flatten()?;
        self.view.get(&bid).map(|b| b.target)
    }

    fn plan(&self, ctx: &ProtoCtx<'_>) -> EpochPlan {
        let head = self.view.head_block();
        let s = head.steps;
        let z = ctx.cfg.z_steps;
        let t_next = (s / z) as usize;
        let n_tasks = ctx.cfg.tasks.len();
        if t_next >= n_tasks {
            EpochPlan { task: n_tasks - 1, continuation: true, fresh_task_start: false }
        } else {
            EpochPlan { task: t_next, continuation: false, fresh_task_start: s % z == 0 && s > 0 }
        }
    }

    fn epoch_landscape<'c>(&self, ctx: &'c ProtoCtx<'_>) -> &'c Landscape {
        &ctx.cfg.tasks[self.cur_task].landscape
    }

    /// Fetch a cached point, evaluating a task origin on first reference.
    /// Non-origin points are always cached when their block was accepted.
    fn ensure_point(
        &mut self,
        digest: Digest32,
        task: usize,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<PointInfo, Error> {
        if let Some(info) = self.points.get(&digest) {
            return Ok(info.clone());
        }
        let theta0 = ctx.cfg.tasks[task].theta0.clone();
        debug_assert_eq!(theta0.digest(), digest, "uncached point must be a task origin");
        let eval = evaluate_at(
            &ctx.cfg.tasks[task].landscape,
            &theta0,
            &digest,
            UpdateSeed::ABSENT,
            ctx.cfg.sigma,
        )?;
        log_eval(ctx, self.id, digest, UpdateSeed::ABSENT, &eval, false, EvalPurpose::Base);
        let info = PointInfo { params: theta0, loss: eval.loss };
        self.points.insert(digest, info.clone());
        Ok(info)
    }

    /// Re-aim the searcher at the successor point of the current head.
    fn retarget(&mut self, ctx: &mut ProtoCtx<'_>) -> Result<(), Error> {
        let plan = self.plan(ctx);
        self.cur_task = plan.task;
        self.continuation = plan.continuation;
        let digest = if plan.fresh_task_start && !plan.continuation {
            ctx.cfg.tasks[plan.task].theta0.digest()
        } else {
            self.view.head_block().target
        };
        let info = self.ensure_point(digest, plan.task, ctx)?;
        self.searcher.start_with_known_loss(info.params, info.loss);
        Ok(())
    }

    /// Decide every task whose boundary block has d_final confirmations on
    /// the head chain.
    fn check_decisions(&mut self, correct: bool, ctx: &mut ProtoCtx<'_>) {
        let head_height = self.view.head_block().height;
        for task in 0..ctx.cfg.tasks.len() {
            if self.decided[task].is_some() {
                continue;
            }
            let boundary = ctx.cfg.task_boundary(task);
            let Some(bid) = self.view.head_chain_block_at_steps(boundary) else { continue };
            let block = self.view.get(&bid).expect("head chain block is stored");
            if head_height - block.height >= ctx.cfg.d_final {
                self.decided[task] = Some(bid);
                if correct {
                    ctx.transcript.push(Record::DecidePless {
                        t: ctx.now,
                        worker: self.id,
                        task: task as u64,
                        theta: block.target,
                        block_id: bid,
                    });
                }
            }
        }
    }

    fn after_head_update(&mut self, correct: bool, ctx: &mut ProtoCtx<'_>) -> Result<(), Error> {
        self.retarget(ctx)?;
        self.check_decisions(correct, ctx);
        Ok(())
    }

    pub fn on_search_tick(
        &mut self,
        forced_seed: Option<u64>,
        rng: &mut SplitMix64,
        adversary_rng: &mut SplitMix64,
        strategy: Option<&Strategy>,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PlessAction>, Error> {
        match strategy.map(|s| s.kind) {
            Some(StrategyKind::InvalidSeedSpammer) => {
                // Fabricated claims: random seeds with an absurdly good
                // declared loss, costing the spammer nothing and every
                // receiver one verification each.
                let rate = strategy.map(|s| s.spam_rate).unwrap_or(1);
                let base = self.searcher.base_digest();
                Ok((0..rate)
                    .map(|_| {
                        PlessAction::SendValue(ValueMsg {
                            base,
                            seed: adversary_rng.next_u64(),
                            declared_loss: -1.0e12,
                            origin: self.id,
                        })
                    })
                    .collect())
            }
            kind => {
                let lie = match kind {
                    Some(StrategyKind::LossLiar) => {
                        Some(strategy.map(|s| s.lie_magnitude).unwrap_or(1.0))
                    }
                    _ => None,
                };
                self.worked_tick(forced_seed, rng, lie, strategy, ctx)
            }
        }
    }

    fn worked_tick(
        &mut self,
        forced_seed: Option<u64>,
        rng: &mut SplitMix64,
        lie_magnitude: Option<f64>,
        strategy: Option<&Strategy>,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PlessAction>, Error> {
        let seed = forced_seed.unwrap_or_else(|| rng.next_u64());
        let base = self.searcher.base_digest();
        let landscape = self.epoch_landscape(ctx).clone();
        let outcome =
            match self.searcher.tick_with_seed(seed, &landscape, &ctx.cfg.search_config())? {
                Some(o) => o,
                None => return Ok(Vec::new()),
            };
        let valid =
            is_valid_update(outcome.evaluation.loss, self.searcher.base_loss(), ctx.cfg.nu);
        log_eval(ctx, self.id, base, outcome.seed, &outcome.evaluation, valid, EvalPurpose::Search);

        let mut actions = Vec::new();
        let kind = strategy.map(|s| s.kind);
        // Values go out before the mint so a tick that wins both shares its
        // find for the base it was found on.
        for event in &outcome.events {
            if event.kind != SearchEventKind::BestLoss || self.continuation {
                continue;
            }
            let seed_value = event.seed.value().expect("search events carry seeds");
            self.replay_memory = Some((seed_value, event.loss));
            self.replay_base = Some(base);
            match kind {
                None => actions.push(PlessAction::SendValue(ValueMsg {
                    base,
                    seed: seed_value,
                    declared_loss: event.loss,
                    origin: self.id,
                })),
                Some(StrategyKind::LossLiar) => actions.push(PlessAction::SendValue(ValueMsg {
                    base,
                    seed: seed_value,
                    declared_loss: event.loss - lie_magnitude.unwrap_or(1.0),
                    origin: self.id,
                })),
                // Withholding strategies keep their finds private.
                _ => {}
            }
        }
        for event in &outcome.events {
            if event.kind != SearchEventKind::BestHash {
                continue;
            }
            let seed_value = event.seed.value().expect("search events carry seeds");
            let mint_actions = self.mint(seed_value, event.block_score, strategy, ctx)?;
            actions.extend(mint_actions);
        }

        // A replayer re-claims an old verified seed against the fresh base.
        if kind == Some(StrategyKind::StaleReplayer) && !self.continuation {
            if let (Some((old_seed, old_loss)), Some(rb)) = (self.replay_memory, self.replay_base)
            {
                if rb != base {
                    actions.push(PlessAction::SendValue(ValueMsg {
                        base,
                        seed: old_seed,
                        declared_loss: old_loss,
                        origin: self.id,
                    }));
                }
            }
        }
        Ok(actions)
    }

    fn mint(
        &mut self,
        hash_seed: u64,
        score: crate::score::Score256,
        strategy: Option<&Strategy>,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PlessAction>, Error> {
        let base = self.searcher.base_digest();
        let base_info = self.points.get(&base).expect("searcher base is cached").clone();
        let (best_loss, target_params, target_loss) = if self.continuation {
            (BestLossRec::RESET, base_info.params.clone(), base_info.loss)
        } else {
            match self.searcher.best_loss() {
                Some(bl) => {
                    let p = follow(&base_info.params, UpdateSeed::new(bl.seed), ctx.cfg.sigma)?;
                    (
                        BestLossRec { seed: UpdateSeed::new(bl.seed), loss: bl.loss },
                        p,
                        bl.loss,
                    )
                }
                None => (BestLossRec::RESET, base_info.params.clone(), base_info.loss),
            }
        };
        let target_digest = target_params.digest();
        let block = try_mint(
            &self.view,
            self.view.head(),
            base,
            target_digest,
            BestHashRec { seed: UpdateSeed::new(hash_seed), score },
            best_loss,
            self.id,
        )?;
        let block_id = block.id();
        ctx.transcript.push(Record::Mint {
            t: ctx.now,
            miner: self.id,
            block_id,
            block: block.clone(),
        });
        ctx.counters.progress();
        self.points.insert(target_digest, PointInfo { params: target_params, loss: target_loss });
        let inserted = self.view.insert(block.clone(), ctx.now);
        debug_assert!(matches!(inserted, InsertOutcome::Stored { .. }));
        let correct = strategy.is_none();
        self.after_head_update(correct, ctx)?;

        let kind = strategy.map(|s| s.kind);
        Ok(match kind {
            Some(StrategyKind::SelfishMinter) => {
                self.withheld_ids.insert(block_id);
                self.withheld.push(block);
                Vec::new()
            }
            Some(StrategyKind::Withholder) => {
                vec![PlessAction::PropagateBlock {
                    block,
                    delay: strategy.map(|s| s.withhold_ticks).unwrap_or(0),
                }]
            }
            _ => vec![PlessAction::PropagateBlock { block, delay: 0 }],
        })
    }

    /// Gossip delivery of a valid-loss claim.
    pub fn on_deliver_value(
        &mut self,
        from: WorkerId,
        msg: ValueMsg,
        correct: bool,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PlessAction>, Error> {
        if !self.seen_values.insert(msg.content_digest()) {
            return Ok(Vec::new());
        }
        if self.continuation
            || msg.base != self.searcher.base_digest()
            || !msg.declared_loss.is_finite()
        {
            return Ok(Vec::new());
        }
        // Threshold guard: skip the evaluation when the claim cannot improve
        // the local record.
        if let Some(best) = self.searcher.best_loss() {
            if msg.declared_loss >= best.loss {
                return Ok(Vec::new());
            }
        }
        let target = self.searcher.target().expect("running searcher has a target").clone();
        let seed = UpdateSeed::new(msg.seed);
        let landscape = self.epoch_landscape(ctx).clone();
        let eval = evaluate_at(&landscape, &target, &msg.base, seed, ctx.cfg.sigma)?;
        let valid = is_valid_update(eval.loss, self.searcher.base_loss(), ctx.cfg.nu);
        log_eval(ctx, self.id, msg.base, seed, &eval, valid, EvalPurpose::Verify);
        if eval.loss.to_bits() == msg.declared_loss.to_bits() && valid {
            if self.searcher.adopt_best_loss(msg.seed, eval.loss) {
                self.replay_memory = Some((msg.seed, eval.loss));
                self.replay_base = Some(msg.base);
                if correct {
                    return Ok(vec![PlessAction::SendValue(msg)]);
                }
            }
            Ok(Vec::new())
        } else {
            // The sender is lying (or relaying a lie): drop and mark.
            self.marked_peers.insert(from);
            Ok(Vec::new())
        }
    }

    /// Gossip delivery of a block.
    pub fn on_deliver_block(
        &mut self,
        from: WorkerId,
        block: Block,
        correct: bool,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PlessAction>, Error> {
        let block_id = block.id();
        if self.view.contains(&block_id) || self.orphan_from.contains_key(&block_id) {
            ctx.transcript.push(Record::BlockDeliver {
                t: ctx.now,
                worker: self.id,
                from,
                block_id,
                outcome: DeliverOutcome::Duplicate,
                head_after: self.view.head(),
            });
            return Ok(Vec::new());
        }
        if !self.view.contains(&block.parent) {
            self.orphan_from.insert(block_id, from);
            let out = self.view.insert(block, ctx.now);
            debug_assert_eq!(out, InsertOutcome::Orphaned);
            ctx.transcript.push(Record::BlockDeliver {
                t: ctx.now,
                worker: self.id,
                from,
                block_id,
                outcome: DeliverOutcome::Buffer,
                head_after: self.view.head(),
            });
            return Ok(Vec::new());
        }

        let mut actions = Vec::new();
        let mut head_changed = self.accept_or_reject(from, block, ctx, &mut actions)?;

        // Parented orphans become eligible; validate them in arrival order.
        loop {
            let ready = self.view.take_adoptable_orphans();
            if ready.is_empty() {
                break;
            }
            for (orphan, _) in ready {
                let oid = orphan.id();
                let ofrom = self.orphan_from.remove(&oid).unwrap_or(from);
                head_changed |= self.accept_or_reject(ofrom, orphan, ctx, &mut actions)?;
            }
        }

        if head_changed {
            self.after_head_update(correct, ctx)?;
        }
        if !self.withheld.is_empty() {
            // Selfish release: keep a private lead of two or more, publish
            // everything once public growth shrinks the lead to one (a
            // guaranteed win) or to a tie (a race), abandon when overtaken.
            let public_height = self.public_height();
            let private_height =
                self.withheld.iter().map(|b| b.height).max().unwrap_or(0);
            if public_height > private_height {
                self.withheld_ids.clear();
                self.withheld.clear();
            } else if public_height + 1 >= private_height {
                for b in self.withheld.drain(..) {
                    self.withheld_ids.remove(&b.id());
                    actions.push(PlessAction::PropagateBlock { block: b, delay: 0 });
                }
            }
        }
        Ok(actions)
    }

    /// Tallest known block excluding unreleased private ones; the view is
    /// small so a full scan per release check is fine.
    fn public_height(&self) -> u64 {
        let mut best = 0;
        for id in self.view.block_ids() {
            if !self.withheld_ids.contains(id) {
                if let Some(b) = self.view.get(id) {
                    best = best.max(b.height);
                }
            }
        }
        best
    }

    /// Validate a parented block and insert it on success. Returns whether
    /// the head moved.
    fn accept_or_reject(
        &mut self,
        from: WorkerId,
        block: Block,
        ctx: &mut ProtoCtx<'_>,
        actions: &mut Vec<PlessAction>,
    ) -> Result<bool, Error> {
        let block_id = block.id();
        match self.validate_block(&block, ctx)? {
            Ok(target_info) => {
                self.points.insert(block.target, target_info);
                let out = self.view.insert(block.clone(), ctx.now);
                let head_changed = matches!(out, InsertOutcome::Stored { head_changed: true });
                ctx.transcript.push(Record::BlockDeliver {
                    t: ctx.now,
                    worker: self.id,
                    from,
                    block_id,
                    outcome: DeliverOutcome::Accept,
                    head_after: self.view.head(),
                });
                actions.push(PlessAction::PropagateBlock { block, delay: 0 });
                Ok(head_changed)
            }
            Err(_reason) => {
                self.marked_peers.insert(from);
                ctx.transcript.push(Record::BlockDeliver {
                    t: ctx.now,
                    worker: self.id,
                    from,
                    block_id,
                    outcome: DeliverOutcome::Reject,
                    head_after: self.view.head(),
                });
                Ok(false)
            }
        }
    }

    /// Full semantic re-validation of a block whose parent is known. The
    /// outer `Result` is a harness fault; the inner one carries the reject
    /// reason.
    fn validate_block(
        &mut self,
        block: &Block,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Result<PointInfo, &'static str>, Error> {
        let parent = self.view.get(&block.parent).expect("parent checked by caller").clone();
        if block.height != parent.height + 1 {
            return Ok(Err("height must be parent + 1"));
        }
        if block.steps != parent.steps + 1 {
            return Ok(Err("steps must be parent + 1"));
        }
        if block.miner.is_none() {
            return Ok(Err("non-genesis block without a miner"));
        }
        let z = ctx.cfg.z_steps;
        let s = parent.steps;
        let t_next = (s / z) as usize;
        let n_tasks = ctx.cfg.tasks.len();
        let continuation = t_next >= n_tasks;
        let task = t_next.min(n_tasks - 1);
        let fresh = !continuation && s % z == 0 && s > 0;
        let expected_base = if fresh {
            ctx.cfg.tasks[task].theta0.digest()
        } else {
            parent.target
        };
        if block.base != expected_base {
            return Ok(Err("base does not extend the parent chain"));
        }
        let base_info = self.ensure_point(expected_base, task, ctx)?;
        let landscape = ctx.cfg.tasks[task].landscape.clone();

        let Some(hash_seed) = block.best_hash.seed.value() else {
            return Ok(Err("block without a mining seed"));
        };
        let hash_eval = evaluate_at(
            &landscape,
            &base_info.params,
            &block.base,
            UpdateSeed::new(hash_seed),
            ctx.cfg.sigma,
        )?;
        let hash_valid = is_valid_update(hash_eval.loss, base_info.loss, ctx.cfg.nu);
        log_eval(
            ctx,
            self.id,
            block.base,
            UpdateSeed::new(hash_seed),
            &hash_eval,
            hash_valid,
            EvalPurpose::Verify,
        );
        if hash_eval.block_score != block.best_hash.score {
            return Ok(Err("declared block score does not recompute"));
        }
        if !(block.best_hash.score < ctx.cfg.b_target) {
            return Ok(Err("block score not below target"));
        }

        if continuation && !block.best_loss.seed.is_absent() {
            return Ok(Err("continuation blocks must be null steps"));
        }
        match block.best_loss.seed.value() {
            None => {
                if block.target != block.base {
                    return Ok(Err("null step must preserve the base"));
                }
                Ok(Ok(base_info))
            }
            Some(loss_seed) => {
                let loss_eval = if loss_seed == hash_seed {
                    hash_eval
                } else {
                    let e = evaluate_at(
                        &landscape,
                        &base_info.params,
                        &block.base,
                        UpdateSeed::new(loss_seed),
                        ctx.cfg.sigma,
                    )?;
                    let v = is_valid_update(e.loss, base_info.loss, ctx.cfg.nu);
                    log_eval(
                        ctx,
                        self.id,
                        block.base,
                        UpdateSeed::new(loss_seed),
                        &e,
                        v,
                        EvalPurpose::Verify,
                    );
                    e
                };
                if loss_eval.loss.to_bits() != block.best_loss.loss.to_bits() {
                    return Ok(Err("declared best loss does not recompute"));
                }
                if !is_valid_update(loss_eval.loss, base_info.loss, ctx.cfg.nu) {
                    return Ok(Err("best loss is not a valid update"));
                }
                let target =
                    follow(&base_info.params, UpdateSeed::new(loss_seed), ctx.cfg.sigma)?;
                if target.digest() != block.target {
                    return Ok(Err("target digest does not recompute"));
                }
                Ok(Ok(PointInfo { params: target, loss: loss_eval.loss }))
            }
        }
    }
}
