//! Quorum-based distributed mutual exclusion after Maekawa, used as the
//! embedded `mx` object that serializes MUTIN exits.
//!
//! Every process plays two roles. As a *requester* it asks each member of its
//! quorum for a vote and holds the lock once all of them have answered
//! `Locked`. As an *arbiter* it grants its single vote to the best pending
//! request, ordered by `(Lamport timestamp, process id)`. Deadlock is avoided
//! with the usual `Failed` / `Inquire` / `Relinquish` exchange: a better
//! request makes the arbiter inquire its current voter, and a requester gives
//! the vote back only once it knows it cannot win the round (it holds a
//! `Failed`).

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::coterie::{ProcessId, Quorum};
use crate::message::{Message, MutexMessage, ObjectTag};
use crate::object::{Effects, Method, ProtocolError};

/// Request priority: lower is better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId {
    pub ts: u64,
    pub process: ProcessId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Maekawa {
    me: ProcessId,
    owner: ObjectTag,
    quorum: Arc<Quorum>,
    clock: u64,

    // requester side
    request: Option<RequestId>,
    holding: bool,
    grants: BTreeSet<ProcessId>,
    failed_from: BTreeSet<ProcessId>,
    deferred_inquiries: BTreeSet<ProcessId>,

    // arbiter side
    voted_for: Option<RequestId>,
    inquired: bool,
    pending: BTreeSet<RequestId>,
    failed_sent: BTreeSet<RequestId>,
}

// identity and quorum never change, so only the protocol state is hashed
impl Hash for Maekawa {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.clock.hash(h);
        self.request.hash(h);
        self.holding.hash(h);
        self.grants.hash(h);
        self.failed_from.hash(h);
        self.deferred_inquiries.hash(h);
        self.voted_for.hash(h);
        self.inquired.hash(h);
        self.pending.hash(h);
        self.failed_sent.hash(h);
    }
}

/// Outcome of delivering a message to the requester role.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MxEvent {
    Granted,
}

impl Maekawa {
    pub fn new(me: ProcessId, owner: ObjectTag, quorum: Arc<Quorum>) -> Self {
        Maekawa {
            me,
            owner,
            quorum,
            clock: 0,
            request: None,
            holding: false,
            grants: BTreeSet::new(),
            failed_from: BTreeSet::new(),
            deferred_inquiries: BTreeSet::new(),
            voted_for: None,
            inquired: false,
            pending: BTreeSet::new(),
            failed_sent: BTreeSet::new(),
        }
    }

    pub fn is_holding(&self) -> bool {
        self.holding
    }

    pub fn is_requesting(&self) -> bool {
        self.request.is_some() && !self.holding
    }

    pub fn voted_for(&self) -> Option<RequestId> {
        self.voted_for
    }

    pub fn grants(&self) -> &BTreeSet<ProcessId> {
        &self.grants
    }

    pub fn pending(&self) -> &BTreeSet<RequestId> {
        &self.pending
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    fn send(&self, fx: &mut Effects, to: ProcessId, m: MutexMessage) {
        fx.send(to, Message::mx(self.owner, m));
    }

    /// `mx.Entry()`: request a vote from every quorum member. The grant is
    /// reported later as [`MxEvent::Granted`].
    pub fn entry(&mut self, fx: &mut Effects) -> Result<(), ProtocolError> {
        if self.request.is_some() {
            return Err(ProtocolError::MxMisuse {
                process: self.me,
                object: self.owner,
                reason: "mx.Entry while holding or awaiting the lock",
            });
        }
        fx.invoke(self.owner, Method::MxEntry);
        self.clock += 1;
        let req = RequestId { ts: self.clock, process: self.me };
        self.request = Some(req);
        self.grants.clear();
        self.failed_from.clear();
        self.deferred_inquiries.clear();
        for member in self.quorum.iter() {
            self.send(fx, member, MutexMessage::Request { ts: req.ts });
        }
        Ok(())
    }

    /// `mx.Exit()`: give every vote back.
    pub fn exit(&mut self, fx: &mut Effects) -> Result<(), ProtocolError> {
        if !self.holding {
            return Err(ProtocolError::MxMisuse {
                process: self.me,
                object: self.owner,
                reason: "mx.Exit without holding the lock",
            });
        }
        fx.invoke(self.owner, Method::MxExit);
        self.holding = false;
        self.request = None;
        self.grants.clear();
        for member in self.quorum.iter() {
            self.send(fx, member, MutexMessage::Release);
        }
        fx.complete(self.owner, Method::MxExit);
        Ok(())
    }

    pub fn deliver(&mut self, from: ProcessId, msg: &MutexMessage, fx: &mut Effects) -> Option<MxEvent> {
        match msg {
            MutexMessage::Request { ts } => {
                self.on_request(RequestId { ts: *ts, process: from }, fx);
                None
            }
            MutexMessage::Relinquish => {
                self.on_relinquish(from, fx);
                None
            }
            MutexMessage::Release => {
                self.on_release(from, fx);
                None
            }
            MutexMessage::Locked => self.on_locked(from, fx),
            MutexMessage::Failed => {
                self.on_failed(from, fx);
                None
            }
            MutexMessage::Inquire => {
                self.on_inquire(from, fx);
                None
            }
        }
    }

    // ---- arbiter ----

    fn vote(&mut self, req: RequestId, fx: &mut Effects) {
        self.voted_for = Some(req);
        self.inquired = false;
        self.failed_sent.remove(&req);
        self.send(fx, req.process, MutexMessage::Locked);
    }

    fn vote_for_best_pending(&mut self, fx: &mut Effects) {
        match self.pending.pop_first() {
            Some(next) => self.vote(next, fx),
            None => {
                self.voted_for = None;
                self.inquired = false;
            }
        }
    }

    fn on_request(&mut self, req: RequestId, fx: &mut Effects) {
        self.clock = self.clock.max(req.ts);
        let Some(current) = self.voted_for else {
            self.vote(req, fx);
            return;
        };
        // Waiting requests that are not the best one must know they failed.
        let previous_best = self.pending.first().copied();
        self.pending.insert(req);
        let best = *self.pending.first().expect("just inserted");
        if best == req && req < current {
            if let Some(prev) = previous_best {
                if self.failed_sent.insert(prev) {
                    self.send(fx, prev.process, MutexMessage::Failed);
                }
            }
            if !self.inquired {
                self.inquired = true;
                self.send(fx, current.process, MutexMessage::Inquire);
            }
        } else {
            self.failed_sent.insert(req);
            self.send(fx, req.process, MutexMessage::Failed);
        }
    }

    fn on_relinquish(&mut self, from: ProcessId, fx: &mut Effects) {
        let Some(current) = self.voted_for.filter(|v| v.process == from) else {
            return;
        };
        // The relinquishing requester records this arbiter as failed itself.
        self.pending.insert(current);
        self.failed_sent.insert(current);
        self.vote_for_best_pending(fx);
    }

    fn on_release(&mut self, from: ProcessId, fx: &mut Effects) {
        if self.voted_for.map(|v| v.process) != Some(from) {
            return;
        }
        self.vote_for_best_pending(fx);
    }

    // ---- requester ----

    fn on_locked(&mut self, from: ProcessId, fx: &mut Effects) -> Option<MxEvent> {
        self.request?;
        self.grants.insert(from);
        self.failed_from.remove(&from);
        if !self.holding && self.grants.len() == self.quorum.len() {
            self.holding = true;
            self.deferred_inquiries.clear();
            fx.complete(self.owner, Method::MxEntry);
            return Some(MxEvent::Granted);
        }
        None
    }

    fn relinquish(&mut self, arbiter: ProcessId, fx: &mut Effects) {
        self.grants.remove(&arbiter);
        self.failed_from.insert(arbiter);
        self.send(fx, arbiter, MutexMessage::Relinquish);
    }

    fn on_failed(&mut self, from: ProcessId, fx: &mut Effects) {
        if self.request.is_none() || self.holding {
            return;
        }
        self.failed_from.insert(from);
        for arbiter in std::mem::take(&mut self.deferred_inquiries) {
            if self.grants.contains(&arbiter) {
                self.relinquish(arbiter, fx);
            }
        }
    }

    fn on_inquire(&mut self, from: ProcessId, fx: &mut Effects) {
        if self.holding || self.request.is_none() || !self.grants.contains(&from) {
            return;
        }
        if self.failed_from.is_empty() {
            self.deferred_inquiries.insert(from);
        } else {
            self.relinquish(from, fx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coterie::build_grid_coterie;
    use crate::message::Body;
    use crate::object::Effect;
    use std::collections::VecDeque;

    fn p(id: u32) -> ProcessId {
        ProcessId::new(id)
    }

    fn sends(fx: &Effects) -> Vec<(ProcessId, MutexMessage)> {
        fx.items()
            .iter()
            .filter_map(|e| match e {
                Effect::Send { to, msg: Message { body: Body::Mx(m), .. } } => Some((*to, m.clone())),
                _ => None,
            })
            .collect()
    }

    fn arbiter(me: u32, quorum: &[u32]) -> Maekawa {
        let q = Quorum::new(quorum.iter().copied().map(p)).unwrap();
        Maekawa::new(p(me), ObjectTag::Mutin, Arc::new(q))
    }

    #[test]
    fn unvoted_arbiter_locks_for_first_request() {
        let mut a = arbiter(1, &[1, 2]);
        let mut fx = Effects::new();
        a.deliver(p(2), &MutexMessage::Request { ts: 1 }, &mut fx);
        assert_eq!(sends(&fx), vec![(p(2), MutexMessage::Locked)]);
        assert_eq!(a.voted_for(), Some(RequestId { ts: 1, process: p(2) }));
    }

    #[test]
    fn better_request_inquires_current_voter() {
        let mut a = arbiter(3, &[3]);
        let mut fx = Effects::new();
        a.deliver(p(2), &MutexMessage::Request { ts: 5 }, &mut fx);
        let mut fx = Effects::new();
        a.deliver(p(1), &MutexMessage::Request { ts: 3 }, &mut fx);
        assert_eq!(sends(&fx), vec![(p(2), MutexMessage::Inquire)]);
        // a worse request is told it failed
        let mut fx = Effects::new();
        a.deliver(p(4), &MutexMessage::Request { ts: 9 }, &mut fx);
        assert_eq!(sends(&fx), vec![(p(4), MutexMessage::Failed)]);
    }

    #[test]
    fn displaced_best_request_receives_failed() {
        let mut a = arbiter(3, &[3]);
        let mut fx = Effects::new();
        a.deliver(p(2), &MutexMessage::Request { ts: 5 }, &mut fx);
        a.deliver(p(1), &MutexMessage::Request { ts: 4 }, &mut fx);
        let mut fx = Effects::new();
        a.deliver(p(4), &MutexMessage::Request { ts: 2 }, &mut fx);
        // P1 is no longer the best waiting request; the inquiry is already out
        assert_eq!(sends(&fx), vec![(p(1), MutexMessage::Failed)]);
    }

    #[test]
    fn requester_with_failed_relinquishes_on_inquire() {
        let mut r = arbiter(1, &[2, 3]);
        let mut fx = Effects::new();
        r.entry(&mut fx).unwrap();
        r.deliver(p(2), &MutexMessage::Locked, &mut fx);
        r.deliver(p(3), &MutexMessage::Failed, &mut fx);
        let mut fx = Effects::new();
        r.deliver(p(2), &MutexMessage::Inquire, &mut fx);
        assert_eq!(sends(&fx), vec![(p(2), MutexMessage::Relinquish)]);
        assert!(r.grants().is_empty());
    }

    #[test]
    fn deferred_inquiry_is_answered_by_a_later_failed() {
        let mut r = arbiter(1, &[2, 3]);
        let mut fx = Effects::new();
        r.entry(&mut fx).unwrap();
        r.deliver(p(2), &MutexMessage::Locked, &mut fx);
        let mut fx = Effects::new();
        r.deliver(p(2), &MutexMessage::Inquire, &mut fx);
        assert!(sends(&fx).is_empty());
        r.deliver(p(3), &MutexMessage::Failed, &mut fx);
        assert_eq!(sends(&fx), vec![(p(2), MutexMessage::Relinquish)]);
    }

    #[test]
    fn holder_ignores_inquire() {
        let mut r = arbiter(1, &[2]);
        let mut fx = Effects::new();
        r.entry(&mut fx).unwrap();
        assert_eq!(r.deliver(p(2), &MutexMessage::Locked, &mut fx), Some(MxEvent::Granted));
        let mut fx = Effects::new();
        r.deliver(p(2), &MutexMessage::Inquire, &mut fx);
        assert!(sends(&fx).is_empty());
    }

    #[test]
    fn misuse_is_reported() {
        let mut r = arbiter(1, &[1]);
        let mut fx = Effects::new();
        assert!(matches!(r.exit(&mut fx), Err(ProtocolError::MxMisuse { .. })));
        r.entry(&mut fx).unwrap();
        assert!(matches!(r.entry(&mut fx), Err(ProtocolError::MxMisuse { .. })));
    }

    #[test]
    fn release_frees_vote_or_passes_it_on() {
        let mut a = arbiter(1, &[1]);
        let mut fx = Effects::new();
        a.deliver(p(2), &MutexMessage::Request { ts: 1 }, &mut fx);
        a.deliver(p(2), &MutexMessage::Release, &mut fx);
        assert_eq!(a.voted_for(), None);
        a.deliver(p(2), &MutexMessage::Request { ts: 2 }, &mut fx);
        a.deliver(p(3), &MutexMessage::Request { ts: 3 }, &mut fx);
        let mut fx = Effects::new();
        a.deliver(p(2), &MutexMessage::Release, &mut fx);
        assert_eq!(sends(&fx), vec![(p(3), MutexMessage::Locked)]);
    }

    /// Zero-delay FIFO pump over a set of `Maekawa` instances. Returns the
    /// grant order and the number of messages exchanged.
    fn pump(
        nodes: &mut [Maekawa],
        queue: &mut VecDeque<(ProcessId, ProcessId, MutexMessage)>,
        fx_from: ProcessId,
        fx: Effects,
        granted: &mut Vec<ProcessId>,
        holders: &mut usize,
    ) -> usize {
        let mut count = 0;
        for (to, m) in sends(&fx) {
            queue.push_back((fx_from, to, m));
        }
        while let Some((from, to, m)) = queue.pop_front() {
            count += 1;
            let mut fx = Effects::new();
            if nodes[to.index()].deliver(from, &m, &mut fx) == Some(MxEvent::Granted) {
                granted.push(to);
                *holders += 1;
                assert_eq!(*holders, 1, "two lock holders");
            }
            for (dest, msg) in sends(&fx) {
                queue.push_back((to, dest, msg));
            }
        }
        count
    }

    #[test]
    fn contended_requests_are_serialized() {
        let c = build_grid_coterie(4).unwrap();
        let mut nodes: Vec<Maekawa> =
            ProcessId::all(4).map(|i| Maekawa::new(i, ObjectTag::Mutin, c.shared_quorum(i))).collect();
        let mut queue = VecDeque::new();
        let mut granted = Vec::new();
        let mut holders = 0;
        // all four request before anything is delivered
        let mut pending_fx = Vec::new();
        for i in ProcessId::all(4) {
            let mut fx = Effects::new();
            nodes[i.index()].entry(&mut fx).unwrap();
            pending_fx.push((i, fx));
        }
        for (i, fx) in pending_fx {
            pump(&mut nodes, &mut queue, i, fx, &mut granted, &mut holders);
        }
        for round in 0..4 {
            assert_eq!(granted.len(), round + 1, "liveness: one grant per round");
            let holder = *granted.last().unwrap();
            let mut fx = Effects::new();
            nodes[holder.index()].exit(&mut fx).unwrap();
            holders -= 1;
            pump(&mut nodes, &mut queue, holder, fx, &mut granted, &mut holders);
        }
        let order: BTreeSet<ProcessId> = granted.iter().copied().collect();
        assert_eq!(order.len(), 4);
        assert!(nodes.iter().all(|n| n.voted_for().is_none() && n.pending().is_empty()));
    }

    #[test]
    fn uncontended_cycle_uses_three_messages_per_member() {
        let c = build_grid_coterie(9).unwrap();
        let mut nodes: Vec<Maekawa> =
            ProcessId::all(9).map(|i| Maekawa::new(i, ObjectTag::Mutin, c.shared_quorum(i))).collect();
        let mut queue = VecDeque::new();
        let (mut granted, mut holders) = (Vec::new(), 0);
        let me = p(5);
        let mut fx = Effects::new();
        nodes[me.index()].entry(&mut fx).unwrap();
        let mut total = pump(&mut nodes, &mut queue, me, fx, &mut granted, &mut holders);
        let mut fx = Effects::new();
        nodes[me.index()].exit(&mut fx).unwrap();
        total += pump(&mut nodes, &mut queue, me, fx, &mut granted, &mut holders);
        assert_eq!(total, 3 * 5);
    }
}
