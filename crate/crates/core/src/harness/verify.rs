//! Offline transcript audit: recompute every evaluation referenced by an
//! accepted update and re-check the consensus predicates.
//!
//! The auditor trusts nothing but the header configuration: it rebuilds the
//! accepted parameter trajectory (or the whole block tree) from the starting
//! point and compares recomputed losses, scores and digests bit for bit
//! against what the transcript claims.

use std::collections::BTreeMap;

use crate::chain::Block;
use crate::error::Error;
use crate::es::{evaluate_at, follow, is_valid_update, UpdateSeed};
use crate::harness::checks::check_consensus;
use crate::harness::config::{Mode, ResolvedConfig};
use crate::harness::transcript::{Record, RunTranscript, ENGINE_VERSION};
use crate::params::Digest32;

fn fail(msg: impl Into<String>) -> Error {
    Error::Transcript(msg.into())
}

/// Audit a transcript. Returns the first divergence as an error.
pub fn verify_transcript(t: &RunTranscript) -> Result<(), Error> {
    let engine = t.header_engine().ok_or_else(|| fail("missing header record"))?;
    if engine != ENGINE_VERSION {
        return Err(fail(format!(
            "engine version mismatch: transcript from `{engine}`, auditor is `{ENGINE_VERSION}`"
        )));
    }
    let rc = t
        .header_config()
        .ok_or_else(|| fail("missing header config"))?
        .resolve()?;

    match rc.mode {
        Mode::Permissioned => verify_permissioned(t, &rc)?,
        Mode::Permissionless => verify_permissionless(t, &rc)?,
    }

    let checks = check_consensus(t)?;
    if !checks.consistency {
        return Err(fail("consistency violated: correct workers decided different parameters"));
    }
    if !checks.extended_validity {
        return Err(fail("extended validity violated: an accepted update lacks a verified proposal"));
    }
    if t.aborted_reason().is_none() && !checks.liveness {
        return Err(fail("liveness violated: a correct worker never decided"));
    }
    Ok(())
}

/// Replay the canonical accepted step sequence from the starting point.
fn verify_permissioned(t: &RunTranscript, rc: &ResolvedConfig) -> Result<(), Error> {
    let Some(reference) = rc.correct_workers().next() else { return Ok(()) };
    let landscape = &rc.tasks[0].landscape;
    let mut theta = rc.tasks[0].theta0.clone();
    let mut digest = theta.digest();
    let mut loss = {
        let e = evaluate_at(landscape, &theta, &digest, UpdateSeed::ABSENT, rc.sigma)?;
        e.loss
    };
    let mut expected_step = 1u64;
    for r in t.records() {
        match r {
            Record::Advance { worker, step, base, seed, loss: rec_loss, new_base, .. }
                if *worker == reference =>
            {
                if *step != expected_step {
                    return Err(fail(format!(
                        "advance steps out of order: expected {expected_step}, got {step}"
                    )));
                }
                if *base != digest {
                    return Err(fail(format!("advance at step {step}: base digest mismatch")));
                }
                let seed = UpdateSeed::new(*seed);
                let eval = evaluate_at(landscape, &theta, &digest, seed, rc.sigma)?;
                if eval.loss.to_bits() != rec_loss.to_bits() {
                    return Err(fail(format!(
                        "advance at step {step}: recomputed loss {} != recorded {}",
                        eval.loss, rec_loss
                    )));
                }
                if !is_valid_update(eval.loss, loss, rc.nu) {
                    return Err(fail(format!(
                        "advance at step {step}: accepted seed is not a valid update"
                    )));
                }
                theta = follow(&theta, seed, rc.sigma)?;
                digest = theta.digest();
                if digest != *new_base {
                    return Err(fail(format!("advance at step {step}: successor digest mismatch")));
                }
                loss = eval.loss;
                expected_step += 1;
            }
            Record::Decide { worker, theta: decided, .. } if *worker == reference => {
                if *decided != digest {
                    return Err(fail("decide digest does not match the replayed trajectory"));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Re-validate every minted block against its parent chain.
fn verify_permissionless(t: &RunTranscript, rc: &ResolvedConfig) -> Result<(), Error> {
    let genesis = Block::genesis(rc.tasks[0].theta0.digest());
    let genesis_id = genesis.id();

    // Point table seeded with task origins, extended as blocks validate.
    let mut points: BTreeMap<Digest32, (crate::params::ParamVector, f64)> = BTreeMap::new();
    for task in &rc.tasks {
        let d = task.theta0.digest();
        let e = evaluate_at(&task.landscape, &task.theta0, &d, UpdateSeed::ABSENT, rc.sigma)?;
        points.insert(d, (task.theta0.clone(), e.loss));
    }

    let mut blocks: BTreeMap<Digest32, Block> = BTreeMap::new();
    blocks.insert(genesis_id, genesis);
    let mut minted: Vec<(Digest32, Block)> = Vec::new();
    for r in t.records() {
        if let Record::Mint { block_id, block, .. } = r {
            if block.id() != *block_id {
                return Err(fail(format!("mint record id {block_id} does not hash its block")));
            }
            minted.push((*block_id, block.clone()));
        }
    }
    // Mint order respects parent order (a miner always extends a block it
    // already has), so one pass validates everything.
    for (block_id, block) in minted {
        let parent = blocks
            .get(&block.parent)
            .ok_or_else(|| fail(format!("block {block_id} extends unknown parent")))?;
        if block.height != parent.height + 1 || block.steps != parent.steps + 1 {
            return Err(fail(format!("block {block_id}: height/steps do not extend parent")));
        }
        let s = parent.steps;
        let t_next = (s / rc.z_steps) as usize;
        let n_tasks = rc.tasks.len();
        let continuation = t_next >= n_tasks;
        let task = t_next.min(n_tasks - 1);
        let fresh = !continuation && s % rc.z_steps == 0 && s > 0;
        let expected_base =
            if fresh { rc.tasks[task].theta0.digest() } else { parent.target };
        if block.base != expected_base {
            return Err(fail(format!("block {block_id}: base does not extend parent chain")));
        }
        let (base_params, base_loss) = points
            .get(&expected_base)
            .cloned()
            .ok_or_else(|| fail(format!("block {block_id}: unresolvable base point")))?;
        let landscape = &rc.tasks[task].landscape;

        let hash_seed = block
            .best_hash
            .seed
            .value()
            .ok_or_else(|| fail(format!("block {block_id}: missing mining seed")))?;
        let hash_eval =
            evaluate_at(landscape, &base_params, &block.base, UpdateSeed::new(hash_seed), rc.sigma)?;
        if hash_eval.block_score != block.best_hash.score {
            return Err(fail(format!("block {block_id}: block score does not recompute")));
        }
        if !(block.best_hash.score < rc.b_target) {
            return Err(fail(format!("block {block_id}: score not below target")));
        }
        if continuation && !block.best_loss.seed.is_absent() {
            return Err(fail(format!("block {block_id}: continuation must be a null step")));
        }
        match block.best_loss.seed.value() {
            None => {
                if block.target != block.base {
                    return Err(fail(format!("block {block_id}: null step must preserve base")));
                }
                points.insert(block.target, (base_params, base_loss));
            }
            Some(loss_seed) => {
                let loss_eval = if loss_seed == hash_seed {
                    hash_eval
                } else {
                    evaluate_at(
                        landscape,
                        &base_params,
                        &block.base,
                        UpdateSeed::new(loss_seed),
                        rc.sigma,
                    )?
                };
                if loss_eval.loss.to_bits() != block.best_loss.loss.to_bits() {
                    return Err(fail(format!("block {block_id}: best loss does not recompute")));
                }
                if !is_valid_update(loss_eval.loss, base_loss, rc.nu) {
                    return Err(fail(format!("block {block_id}: best loss is not a valid update")));
                }
                let target = follow(&base_params, UpdateSeed::new(loss_seed), rc.sigma)?;
                if target.digest() != block.target {
                    return Err(fail(format!("block {block_id}: target digest does not recompute")));
                }
                points.insert(block.target, (target, loss_eval.loss));
            }
        }
        blocks.insert(block_id, block);
    }

    // Decided blocks must exist at their task boundary with matching targets.
    for r in t.records() {
        if let Record::DecidePless { worker, task, theta, block_id, .. } = r {
            if !rc.is_correct(*worker) {
                continue;
            }
            let block = blocks
                .get(block_id)
                .ok_or_else(|| fail(format!("decided block {block_id} was never minted")))?;
            if block.steps != rc.task_boundary(*task as usize) {
                return Err(fail(format!("decided block {block_id} is not at its task boundary")));
            }
            if block.target != *theta {
                return Err(fail(format!("decide for task {task} does not match its block")));
            }
        }
    }
    Ok(())
}
