//! MUTIN(l): quorum-based l-mutual inclusion.
//!
//! `Exit()` is serialized by an embedded [`Maekawa`] object. Holding it, the
//! exiter queries its quorum for the processes they know to be in the CS and
//! leaves only after observing at least `l + 1` of them, then removes itself
//! from every quorum member's view (`Acquire`/`Ack`) before releasing `mx`.
//! `Entry()` never blocks: it flips the state and announces itself with
//! `Release`. A quorum member that answered a `Query` remembers the querier
//! and forwards its updated view once (`Response2`) when the next `Release`
//! arrives, which unblocks an exiter that saw exactly `l`.

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::coterie::{format_set, CoterieAssignment, ProcessId, Quorum};
use crate::message::{Body, Message, MutinMessage, ObjectTag};
use crate::mutex::{Maekawa, MxEvent};
use crate::object::{CsObject, CsState, Effects, Method, Progress, ProtocolError};

/// Where a blocked `Exit()` is waiting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitPhase {
    Idle,
    AwaitMx,
    AwaitResponses,
    AwaitAcks,
}

/// Whether the `|currentInCS| ≥ l + 1` gate is enforced. `Skipped` exists
/// only to validate the checkers against a broken protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Enforced,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mutin {
    me: ProcessId,
    tag: ObjectTag,
    l: usize,
    quorum: Arc<Quorum>,
    state: CsState,
    req_cnt: u64,
    procs_in_cs: BTreeSet<ProcessId>,
    current_in_cs: BTreeSet<ProcessId>,
    ack_from: BTreeSet<ProcessId>,
    response_again_to: Option<ProcessId>,
    resp_again_req_cnt: u64,
    mx: Maekawa,
    phase: ExitPhase,
    gate: Gate,
}

impl Hash for Mutin {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.state.hash(h);
        self.req_cnt.hash(h);
        self.procs_in_cs.hash(h);
        self.current_in_cs.hash(h);
        self.ack_from.hash(h);
        self.response_again_to.hash(h);
        self.resp_again_req_cnt.hash(h);
        self.mx.hash(h);
        self.phase.hash(h);
    }
}

impl Mutin {
    /// Builds `P_me`'s instance for a safe initial configuration in which
    /// exactly the processes in `initially_in` are `InCS`.
    pub fn new(
        me: ProcessId,
        tag: ObjectTag,
        l: usize,
        coterie: &CoterieAssignment,
        initially_in: &BTreeSet<ProcessId>,
    ) -> Self {
        let quorum = coterie.shared_quorum(me);
        let procs_in_cs = coterie.readers(me).intersection(initially_in).copied().collect();
        let state = if initially_in.contains(&me) { CsState::InCS } else { CsState::OutCS };
        Mutin {
            me,
            tag,
            l,
            mx: Maekawa::new(me, tag, Arc::clone(&quorum)),
            quorum,
            state,
            req_cnt: 0,
            procs_in_cs,
            current_in_cs: BTreeSet::new(),
            ack_from: BTreeSet::new(),
            response_again_to: None,
            resp_again_req_cnt: 0,
            phase: ExitPhase::Idle,
            gate: Gate::Enforced,
        }
    }

    pub fn with_gate(mut self, gate: Gate) -> Self {
        self.gate = gate;
        self
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn req_cnt(&self) -> u64 {
        self.req_cnt
    }

    pub fn procs_in_cs(&self) -> &BTreeSet<ProcessId> {
        &self.procs_in_cs
    }

    pub fn current_in_cs(&self) -> &BTreeSet<ProcessId> {
        &self.current_in_cs
    }

    pub fn ack_from(&self) -> &BTreeSet<ProcessId> {
        &self.ack_from
    }

    pub fn response_again_to(&self) -> Option<ProcessId> {
        self.response_again_to
    }

    pub fn resp_again_req_cnt(&self) -> u64 {
        self.resp_again_req_cnt
    }

    pub fn phase(&self) -> ExitPhase {
        self.phase
    }

    pub fn mx(&self) -> &Maekawa {
        &self.mx
    }

    fn send_to_quorum(&self, fx: &mut Effects, m: MutinMessage) {
        for member in self.quorum.iter() {
            fx.send(member, Message::mutin(self.tag, m.clone()));
        }
    }

    fn reply(&self, fx: &mut Effects, to: ProcessId, m: MutinMessage) {
        fx.send(to, Message::mutin(self.tag, m));
    }

    fn on_mx_granted(&mut self, fx: &mut Effects) {
        debug_assert_eq!(self.phase, ExitPhase::AwaitMx);
        self.req_cnt += 1;
        self.current_in_cs.clear();
        self.send_to_quorum(fx, MutinMessage::Query { req_cnt: self.req_cnt });
        self.phase = ExitPhase::AwaitResponses;
    }

    /// Re-evaluates the two `wait until` conditions of `Exit()`.
    fn advance(&mut self, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        if self.phase == ExitPhase::AwaitResponses && (self.gate == Gate::Skipped || self.current_in_cs.len() > self.l)
        {
            self.ack_from.clear();
            self.send_to_quorum(fx, MutinMessage::Acquire);
            self.phase = ExitPhase::AwaitAcks;
        }
        if self.phase == ExitPhase::AwaitAcks && self.ack_from == *self.quorum.members() {
            self.mx.exit(fx)?;
            self.state = CsState::OutCS;
            fx.flip(self.tag, self.state);
            fx.complete(self.tag, Method::Exit);
            self.phase = ExitPhase::Idle;
            return Ok(Some(Method::Exit));
        }
        Ok(None)
    }

    fn on_query(&mut self, from: ProcessId, req_cnt: u64, fx: &mut Effects) {
        self.reply(fx, from, MutinMessage::Response1 { procs_in_cs: self.procs_in_cs.clone(), req_cnt });
        if let Some(prev) = self.response_again_to {
            fx.note(self.tag, format!("responseAgainTo-overwrite:{prev}->{from}"));
        }
        self.response_again_to = Some(from);
        self.resp_again_req_cnt = req_cnt;
    }

    fn on_response(&mut self, procs_in_cs: &BTreeSet<ProcessId>, req_cnt: u64) {
        if self.req_cnt == req_cnt {
            self.current_in_cs.extend(procs_in_cs.iter().copied());
        }
    }

    fn on_acquire(&mut self, from: ProcessId, fx: &mut Effects) {
        self.procs_in_cs.remove(&from);
        self.reply(fx, from, MutinMessage::Ack);
        self.response_again_to = None;
        self.resp_again_req_cnt = 0;
    }

    fn on_ack(&mut self, from: ProcessId) {
        self.ack_from.insert(from);
    }

    fn on_release(&mut self, from: ProcessId, fx: &mut Effects) {
        self.procs_in_cs.insert(from);
        if let Some(target) = self.response_again_to.take() {
            let req_cnt = std::mem::take(&mut self.resp_again_req_cnt);
            self.reply(fx, target, MutinMessage::Response2 { procs_in_cs: self.procs_in_cs.clone(), req_cnt });
        }
    }

    /// Human-readable description of the wait an `Exit()` is blocked in.
    pub fn describe_wait(&self) -> String {
        match self.phase {
            ExitPhase::Idle => "idle".to_string(),
            ExitPhase::AwaitMx => "mx.Entry".to_string(),
            ExitPhase::AwaitResponses => {
                format!("wait |currentInCS|>={} (currentInCS={})", self.l + 1, format_set(&self.current_in_cs))
            }
            ExitPhase::AwaitAcks => format!("wait ackFrom=Q (ackFrom={})", format_set(&self.ack_from)),
        }
    }
}

impl CsObject for Mutin {
    fn tag(&self) -> ObjectTag {
        self.tag
    }

    fn state(&self) -> CsState {
        self.state
    }

    fn exit(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state != CsState::InCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: self.tag,
                method: Method::Exit,
                state: self.state,
            });
        }
        if self.phase != ExitPhase::Idle {
            return Err(ProtocolError::Busy { process: self.me, object: self.tag, method: Method::Exit });
        }
        fx.invoke(self.tag, Method::Exit);
        self.mx.entry(fx)?;
        self.phase = ExitPhase::AwaitMx;
        Ok(Progress::Pending)
    }

    fn entry(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state != CsState::OutCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: self.tag,
                method: Method::Entry,
                state: self.state,
            });
        }
        fx.invoke(self.tag, Method::Entry);
        self.state = CsState::InCS;
        fx.flip(self.tag, self.state);
        self.send_to_quorum(fx, MutinMessage::Release);
        fx.complete(self.tag, Method::Entry);
        Ok(Progress::Done)
    }

    fn accepts(&self, object: ObjectTag) -> bool {
        object == self.tag
    }

    fn deliver(&mut self, from: ProcessId, msg: &Message, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        if msg.object != self.tag {
            return Err(ProtocolError::UnknownObject { process: self.me, object: msg.object });
        }
        match &msg.body {
            Body::Mx(m) => {
                if self.mx.deliver(from, m, fx) == Some(MxEvent::Granted) {
                    self.on_mx_granted(fx);
                }
            }
            Body::In(MutinMessage::Query { req_cnt }) => self.on_query(from, *req_cnt, fx),
            Body::In(MutinMessage::Response1 { procs_in_cs, req_cnt })
            | Body::In(MutinMessage::Response2 { procs_in_cs, req_cnt }) => self.on_response(procs_in_cs, *req_cnt),
            Body::In(MutinMessage::Acquire) => self.on_acquire(from, fx),
            Body::In(MutinMessage::Ack) => self.on_ack(from),
            Body::In(MutinMessage::Release) => self.on_release(from, fx),
        }
        self.advance(fx)
    }
}
