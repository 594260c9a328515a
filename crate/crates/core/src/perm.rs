//! Permissioned distributed search over total order broadcast.
//!
//! Workers search their current target; a found valid seed is broadcast, and
//! the first valid seed delivered for a target advances every correct worker
//! to the identical successor point. Sequenced delivery makes the accepted
//! seed sequence — and therefore the decided parameters — common to all
//! correct workers. A delivered claim that fails re-evaluation triggers a
//! mandatory ban vote from every correct worker.

use crate::adversary::{Strategy, StrategyKind};
use crate::es::{evaluate_at, follow, is_valid_update, Searcher, SearchEventKind, UpdateSeed};
use crate::harness::{log_eval, ProtoCtx};
use crate::harness::transcript::{EvalPurpose, Record};
use crate::params::{Digest32, ParamVector};
use crate::rng::SplitMix64;
use crate::tob::{ValidLossMsg, WorkerId};

/// Actions a worker hands back to the event loop.
#[derive(Clone, Debug)]
pub enum PermAction {
    Broadcast(ValidLossMsg),
    Ban(WorkerId),
}

#[derive(Debug)]
pub struct PermWorker {
    pub id: WorkerId,
    pub searcher: Searcher,
    pub steps: u64,
    pub decided: Option<ParamVector>,
    /// Last accepted (base, seed), kept by the stale replayer.
    last_accepted: Option<(Digest32, u64)>,
}

impl PermWorker {
    pub fn new(id: WorkerId) -> PermWorker {
        PermWorker { id, searcher: Searcher::new(), steps: 0, decided: None, last_accepted: None }
    }

    /// Start searching from the common initial point, logging its base loss.
    pub fn init(&mut self, ctx: &mut ProtoCtx<'_>) -> Result<(), crate::error::Error> {
        let task = &ctx.cfg.tasks[0];
        let eval =
            self.searcher.start(task.theta0.clone(), &task.landscape, ctx.cfg.sigma)?;
        log_eval(
            ctx,
            self.id,
            self.searcher.base_digest(),
            UpdateSeed::ABSENT,
            &eval,
            false,
            EvalPurpose::Base,
        );
        Ok(())
    }

    /// One search tick. `forced_seed` overrides the worker's own draw when
    /// the run scripts it.
    pub fn on_search_tick(
        &mut self,
        forced_seed: Option<u64>,
        rng: &mut SplitMix64,
        adversary_rng: &mut SplitMix64,
        strategy: Option<&Strategy>,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PermAction>, crate::error::Error> {
        if self.decided.is_some() || !self.searcher.is_running() {
            return Ok(Vec::new());
        }
        match strategy.map(|s| s.kind) {
            None => self.honest_tick(forced_seed, rng, true, ctx),
            // Liars and spammers evaluate honestly but broadcast only seeds
            // they know to be invalid, claiming them valid.
            Some(StrategyKind::LossLiar) | Some(StrategyKind::InvalidSeedSpammer) => {
                let seed = forced_seed.unwrap_or_else(|| adversary_rng.next_u64());
                let base = self.searcher.base_digest();
                let outcome = match self.searcher.tick_with_seed(
                    seed,
                    &ctx.cfg.tasks[0].landscape,
                    &ctx.cfg.search_config(),
                )? {
                    Some(o) => o,
                    None => return Ok(Vec::new()),
                };
                let valid =
                    is_valid_update(outcome.evaluation.loss, self.searcher.base_loss(), ctx.cfg.nu);
                log_eval(ctx, self.id, base, outcome.seed, &outcome.evaluation, valid, EvalPurpose::Search);
                if valid {
                    Ok(Vec::new())
                } else {
                    Ok(vec![PermAction::Broadcast(ValidLossMsg { base, seed })])
                }
            }
            // Replays the last accepted seed against the current base; the
            // claim is stale and fails verification at every correct worker.
            Some(StrategyKind::StaleReplayer) => {
                if let Some((old_base, old_seed)) = self.last_accepted {
                    let base = self.searcher.base_digest();
                    if base != old_base {
                        return Ok(vec![PermAction::Broadcast(ValidLossMsg {
                            base,
                            seed: old_seed,
                        })]);
                    }
                }
                self.honest_tick(forced_seed, rng, false, ctx)
            }
            // Withholding strategies search but never share what they find.
            Some(StrategyKind::Withholder) | Some(StrategyKind::SelfishMinter) => {
                self.honest_tick(forced_seed, rng, false, ctx)
            }
            // Crash ticks are filtered by the event loop.
            Some(StrategyKind::Crash) => self.honest_tick(forced_seed, rng, false, ctx),
        }
    }

    fn honest_tick(
        &mut self,
        forced_seed: Option<u64>,
        rng: &mut SplitMix64,
        broadcast: bool,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PermAction>, crate::error::Error> {
        let seed = forced_seed.unwrap_or_else(|| rng.next_u64());
        let base = self.searcher.base_digest();
        let outcome = match self.searcher.tick_with_seed(
            seed,
            &ctx.cfg.tasks[0].landscape,
            &ctx.cfg.search_config(),
        )? {
            Some(o) => o,
            None => return Ok(Vec::new()),
        };
        let valid =
            is_valid_update(outcome.evaluation.loss, self.searcher.base_loss(), ctx.cfg.nu);
        log_eval(ctx, self.id, base, outcome.seed, &outcome.evaluation, valid, EvalPurpose::Search);
        let mut actions = Vec::new();
        if broadcast {
            for event in &outcome.events {
                if event.kind == SearchEventKind::BestLoss {
                    actions.push(PermAction::Broadcast(ValidLossMsg {
                        base: event.base,
                        seed: event.seed.value().expect("search events carry present seeds"),
                    }));
                }
            }
        }
        Ok(actions)
    }

    /// Sequenced delivery of a claimed valid seed. Correct workers verify,
    /// advance on success and vote a ban on failure; Byzantine workers track
    /// the advance to stay aligned with the live target but take no action.
    pub fn on_deliver(
        &mut self,
        sender: WorkerId,
        msg: ValidLossMsg,
        bcast_id: u64,
        correct: bool,
        ctx: &mut ProtoCtx<'_>,
    ) -> Result<Vec<PermAction>, crate::error::Error> {
        if self.decided.is_some() {
            return Ok(Vec::new());
        }
        if msg.base != self.searcher.base_digest() {
            // Late message for a superseded target: an honest race loser.
            return Ok(Vec::new());
        }
        let target = self
            .searcher
            .target()
            .expect("undecided worker has a target")
            .clone();
        let seed = UpdateSeed::new(msg.seed);
        let landscape = &ctx.cfg.tasks[0].landscape;
        let eval = evaluate_at(landscape, &target, &msg.base, seed, ctx.cfg.sigma)?;
        let valid = is_valid_update(eval.loss, self.searcher.base_loss(), ctx.cfg.nu);
        log_eval(ctx, self.id, msg.base, seed, &eval, valid, EvalPurpose::Verify);
        if !valid {
            return Ok(if correct { vec![PermAction::Ban(sender)] } else { Vec::new() });
        }

        let new_target = follow(&target, seed, ctx.cfg.sigma)?;
        let new_base = new_target.digest();
        self.steps += 1;
        self.last_accepted = Some((msg.base, msg.seed));
        if correct {
            ctx.transcript.push(Record::Advance {
                t: ctx.now,
                worker: self.id,
                step: self.steps,
                base: msg.base,
                seed: msg.seed,
                loss: eval.loss,
                new_base,
                bcast_id,
            });
            ctx.counters.progress();
        }
        if self.steps >= ctx.cfg.z_steps {
            if correct {
                ctx.transcript.push(Record::Decide {
                    t: ctx.now,
                    worker: self.id,
                    steps: self.steps,
                    theta: new_base,
                });
            }
            self.decided = Some(new_target);
            self.searcher.stop();
        } else {
            self.searcher.start_with_known_loss(new_target, eval.loss);
        }
        Ok(Vec::new())
    }
}
