//! Total Order Broadcast, simulated as an idealized sequencer.
//!
//! The sequencer assigns a global order at broadcast time and delivers each
//! message to every worker after a per-message delay drawn from the
//! configured distribution, so the delivered sequence is identical at all
//! correct workers by construction. The fault-tolerance assumptions of a
//! real atomic broadcast are granted to the simulator; fault injection
//! targets the learning layer above it. A banned sender's broadcasts are
//! suppressed once a quorum of distinct correct workers has voted the ban.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::params::Digest32;

pub type WorkerId = u32;
pub type Tick = u64;

/// Payload of a permissioned-mode broadcast: a claimed valid update seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidLossMsg {
    pub base: Digest32,
    pub seed: u64,
}

/// A broadcast accepted by the sequencer, awaiting delivery.
#[derive(Clone, Debug)]
pub struct PendingDelivery {
    pub bcast_id: u64,
    pub sender: WorkerId,
    pub msg: ValidLossMsg,
    pub broadcast_time: Tick,
    pub due: Tick,
}

/// Ban quorum: ceil((n_correct + 1) / 2) distinct correct voters, or an
/// explicit count from config.
pub fn auto_ban_quorum(n_correct: usize) -> usize {
    n_correct / 2 + 1
}

#[derive(Debug)]
pub struct TobBus {
    n_workers: usize,
    correct: Vec<bool>,
    quorum: usize,
    next_bcast_id: u64,
    ban_votes: BTreeMap<WorkerId, BTreeSet<WorkerId>>,
    suppressed: BTreeSet<WorkerId>,
}

impl TobBus {
    pub fn new(n_workers: usize, correct: Vec<bool>, quorum: usize) -> TobBus {
        debug_assert_eq!(correct.len(), n_workers);
        TobBus {
            n_workers,
            correct,
            quorum,
            next_bcast_id: 0,
            ban_votes: BTreeMap::new(),
            suppressed: BTreeSet::new(),
        }
    }

    pub fn quorum(&self) -> usize {
        self.quorum
    }

    pub fn is_suppressed(&self, worker: WorkerId) -> bool {
        self.suppressed.contains(&worker)
    }

    /// Accept a broadcast and return the delivery it schedules, or `None` if
    /// the sender is banned. Delivery is due at `now + delta` at every
    /// worker; the caller fans it out.
    pub fn broadcast(
        &mut self,
        now: Tick,
        sender: WorkerId,
        msg: ValidLossMsg,
        delta: Tick,
    ) -> Option<PendingDelivery> {
        if self.is_suppressed(sender) {
            return None;
        }
        let bcast_id = self.next_bcast_id;
        self.next_bcast_id += 1;
        Some(PendingDelivery { bcast_id, sender, msg, broadcast_time: now, due: now + delta })
    }

    /// Record a ban vote. Only votes from correct workers count toward the
    /// quorum; the vote is idempotent. Returns true if the target became
    /// suppressed by this vote.
    pub fn vote_ban(&mut self, voter: WorkerId, target: WorkerId) -> bool {
        if !self.correct.get(voter as usize).copied().unwrap_or(false) {
            return false;
        }
        if self.suppressed.contains(&target) {
            return false;
        }
        let votes = self.ban_votes.entry(target).or_default();
        votes.insert(voter);
        if votes.len() >= self.quorum {
            self.suppressed.insert(target);
            true
        } else {
            false
        }
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(n: usize) -> TobBus {
        TobBus::new(n, vec![true; n], auto_ban_quorum(n))
    }

    #[test]
    fn quorum_arithmetic() {
        // 10 correct workers: ceil(11/2) = 6.
        assert_eq!(auto_ban_quorum(10), 6);
        assert_eq!(auto_ban_quorum(4), 3);
        assert_eq!(auto_ban_quorum(1), 1);
    }

    #[test]
    fn single_ban_below_quorum_keeps_delivering() {
        let mut b = bus(10);
        let msg = ValidLossMsg { base: Digest32::ZERO, seed: 1 };
        assert!(!b.vote_ban(0, 9));
        assert!(!b.is_suppressed(9));
        assert!(b.broadcast(0, 9, msg, 5).is_some());
    }

    #[test]
    fn quorum_of_bans_suppresses() {
        let mut b = bus(10);
        let msg = ValidLossMsg { base: Digest32::ZERO, seed: 1 };
        for voter in 0..5 {
            assert!(!b.vote_ban(voter, 9));
        }
        assert!(b.vote_ban(5, 9));
        assert!(b.is_suppressed(9));
        assert!(b.broadcast(3, 9, msg, 5).is_none());
    }

    #[test]
    fn ban_votes_are_idempotent() {
        let mut b = bus(4);
        for _ in 0..10 {
            b.vote_ban(0, 3);
        }
        assert!(!b.is_suppressed(3));
        b.vote_ban(1, 3);
        assert!(!b.is_suppressed(3));
        b.vote_ban(2, 3);
        assert!(b.is_suppressed(3));
        // Further votes change nothing.
        assert!(!b.vote_ban(0, 3));
    }

    #[test]
    fn byzantine_votes_do_not_count() {
        let mut correct = vec![true; 10];
        correct[8] = false;
        correct[9] = false;
        let mut b = TobBus::new(10, correct, auto_ban_quorum(8));
        assert!(!b.vote_ban(8, 0));
        assert!(!b.vote_ban(9, 0));
        assert!(!b.is_suppressed(0));
    }

    #[test]
    fn delivery_due_respects_delta() {
        let mut b = bus(4);
        let msg = ValidLossMsg { base: Digest32::ZERO, seed: 7 };
        let d = b.broadcast(10, 2, msg, 5).unwrap();
        assert_eq!(d.due, 15);
        assert_eq!(d.broadcast_time, 10);
        assert_eq!(d.sender, 2);
    }

    #[test]
    fn bcast_ids_are_sequential() {
        let mut b = bus(4);
        let msg = ValidLossMsg { base: Digest32::ZERO, seed: 7 };
        let a = b.broadcast(0, 0, msg, 1).unwrap();
        let c = b.broadcast(0, 1, msg, 1).unwrap();
        assert_eq!(a.bcast_id, 0);
        assert_eq!(c.bcast_id, 1);
    }
}
