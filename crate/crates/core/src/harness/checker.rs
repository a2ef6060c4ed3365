//! Safety and liveness checks that replay a [`Trace`].
//!
//! The checker rebuilds the actual process states from the recorded flips and,
//! separately, every MUTIN instance's `procsInCS` view from the deliveries, so
//! a protocol's beliefs are judged against ground truth rather than trusted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::coterie::{format_set, ProcessId};
use crate::harness::trace::{Record, Trace};
use crate::message::{Body, MutexMessage, MutinMessage, ObjectTag};
use crate::object::{CsState, Method};
use crate::simnet::SimTime;
use crate::system::Mode;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// The InCS count of `object` left `[low, high]`.
    Count {
        object: ObjectTag,
        count: usize,
        low: usize,
        high: usize,
    },
    /// `#lmin ≤ #gcs ≤ #kmex` failed.
    Sandwich {
        lmin: usize,
        gcs: usize,
        kmex: usize,
    },
    /// `holder` believes `believed` is InCS but it is not.
    Knowledge {
        object: ObjectTag,
        holder: ProcessId,
        believed: ProcessId,
    },
    /// An exiter holding mx collected a process that is not InCS.
    CurrentInCs {
        object: ObjectTag,
        exiter: ProcessId,
        believed: ProcessId,
    },
    MxExclusion {
        object: ObjectTag,
        holder: ProcessId,
        intruder: ProcessId,
    },
    Csmic {
        process: ProcessId,
        object: ObjectTag,
        method: Method,
        detail: &'static str,
    },
    FlipOutsideMethod {
        process: ProcessId,
        object: ObjectTag,
    },
    Malformed(String),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::Count { object, count, low, high } => {
                write!(f, "#{object} = {count} outside [{low}, {high}]")
            }
            ViolationKind::Sandwich { lmin, gcs, kmex } => {
                write!(f, "#lmin={lmin} #gcs={gcs} #kmex={kmex} breaks #lmin <= #gcs <= #kmex")
            }
            ViolationKind::Knowledge { object, holder, believed } => {
                write!(f, "{object}: P{holder} lists P{believed} in procsInCS but P{believed} is OutCS")
            }
            ViolationKind::CurrentInCs { object, exiter, believed } => {
                write!(f, "{object}: exiter P{exiter} collected P{believed} in currentInCS but P{believed} is OutCS")
            }
            ViolationKind::MxExclusion { object, holder, intruder } => {
                write!(f, "{object}.mx held by P{holder} and P{intruder} at once")
            }
            ViolationKind::Csmic { process, object, method, detail } => {
                write!(f, "CSMIC: P{process} {object}.{method}: {detail}")
            }
            ViolationKind::FlipOutsideMethod { process, object } => {
                write!(f, "P{process} {object} changed state outside a method")
            }
            ViolationKind::Malformed(s) => write!(f, "malformed trace: {s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Index into `trace.records`; `None` for the initial configuration.
    pub index: Option<usize>,
    pub tick: SimTime,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "record {} (tick {}): {}", i, self.tick, self.kind),
            None => write!(f, "initial configuration: {}", self.kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyVerdict {
    pub records_checked: usize,
    pub violation: Option<Violation>,
}

impl SafetyVerdict {
    pub fn is_ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks the count bounds a mode guarantees against `count(tag)`.
pub(crate) fn count_violation(mode: Mode, n: usize, count: impl Fn(ObjectTag) -> usize) -> Option<ViolationKind> {
    let range = |object: ObjectTag, low: usize, high: usize| {
        let c = count(object);
        (c < low || c > high).then_some(ViolationKind::Count { object, count: c, low, high })
    };
    match mode {
        Mode::Mutin { l } => range(ObjectTag::Mutin, l, n),
        Mode::CoMutin { m } => {
            range(ObjectTag::CoMutin, 0, n.saturating_sub(m)).or_else(|| range(ObjectTag::CoMutinInner, m, n))
        }
        Mode::Gcs { l, k } => range(ObjectTag::Gcs, l, k)
            .or_else(|| range(ObjectTag::Lmin, l, n))
            .or_else(|| range(ObjectTag::Kmex, 0, k))
            .or_else(|| {
                let (lmin, gcs, kmex) = (count(ObjectTag::Lmin), count(ObjectTag::Gcs), count(ObjectTag::Kmex));
                (lmin > gcs || gcs > kmex).then_some(ViolationKind::Sandwich { lmin, gcs, kmex })
            }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MxPhase {
    Idle,
    Requesting,
    Holding,
    Releasing,
}

#[derive(Default)]
struct Replay {
    state: HashMap<(ObjectTag, ProcessId), CsState>,
    in_cs: BTreeMap<ObjectTag, usize>,
    pending: HashMap<(ObjectTag, ProcessId), Method>,
    mx: HashMap<(ObjectTag, ProcessId), MxPhase>,
    mx_holder: HashMap<ObjectTag, ProcessId>,
    /// procsInCS per MUTIN instance and process.
    knowledge: HashMap<(ObjectTag, ProcessId), BTreeSet<ProcessId>>,
    /// How many views list a given process.
    known_by: HashMap<(ObjectTag, ProcessId), usize>,
    /// Exiters holding mx: their current reqCnt and collected currentInCS.
    collecting: HashMap<(ObjectTag, ProcessId), (u64, BTreeSet<ProcessId>)>,
}

impl Replay {
    fn is_in(&self, object: ObjectTag, p: ProcessId) -> bool {
        self.state.get(&(object, p)) == Some(&CsState::InCS)
    }

    fn count(&self, object: ObjectTag) -> usize {
        self.in_cs.get(&object).copied().unwrap_or(0)
    }

    fn init(&mut self, process: ProcessId, object: ObjectTag, state: CsState, view: &Option<BTreeSet<ProcessId>>) {
        self.state.insert((object, process), state);
        if state == CsState::InCS {
            *self.in_cs.entry(object).or_default() += 1;
        }
        if let Some(view) = view {
            for &j in view {
                *self.known_by.entry((object, j)).or_default() += 1;
            }
            self.knowledge.insert((object, process), view.clone());
            self.mx.insert((object, process), MxPhase::Idle);
        }
    }

    /// Views must only list InCS processes; checked once the init block ends.
    fn initial_knowledge(&self) -> Option<ViolationKind> {
        let mut views: Vec<_> = self.knowledge.iter().collect();
        views.sort_by_key(|(k, _)| **k);
        for (&(object, holder), view) in views {
            if let Some(&believed) = view.iter().find(|&&j| !self.is_in(object, j)) {
                return Some(ViolationKind::Knowledge { object, holder, believed });
            }
        }
        None
    }

    fn invoke(&mut self, process: ProcessId, object: ObjectTag, method: Method) -> Option<ViolationKind> {
        let csmic = |detail| Some(ViolationKind::Csmic { process, object, method, detail });
        match method {
            Method::MxEntry | Method::MxExit => {
                let phase = self.mx.entry((object, process)).or_insert(MxPhase::Idle);
                match (method, *phase) {
                    (Method::MxEntry, MxPhase::Idle) => *phase = MxPhase::Requesting,
                    (Method::MxExit, MxPhase::Holding) => {
                        *phase = MxPhase::Releasing;
                        self.mx_holder.remove(&object);
                        self.collecting.remove(&(object, process));
                    }
                    _ => return csmic("mx method out of order"),
                }
            }
            Method::Exit | Method::Entry => {
                if self.pending.contains_key(&(object, process)) {
                    return csmic("invoked while another method is in progress");
                }
                let Some(&state) = self.state.get(&(object, process)) else {
                    return Some(ViolationKind::Malformed(format!("unknown object {object} at P{process}")));
                };
                if Method::for_state(state) != method {
                    return csmic("invoked in the wrong state");
                }
                self.pending.insert((object, process), method);
            }
        }
        None
    }

    fn complete(&mut self, process: ProcessId, object: ObjectTag, method: Method) -> Option<ViolationKind> {
        let csmic = |detail| Some(ViolationKind::Csmic { process, object, method, detail });
        match method {
            Method::MxEntry | Method::MxExit => {
                let phase = self.mx.entry((object, process)).or_insert(MxPhase::Idle);
                match (method, *phase) {
                    (Method::MxEntry, MxPhase::Requesting) => {
                        *phase = MxPhase::Holding;
                        if let Some(&holder) = self.mx_holder.get(&object) {
                            return Some(ViolationKind::MxExclusion { object, holder, intruder: process });
                        }
                        self.mx_holder.insert(object, process);
                    }
                    (Method::MxExit, MxPhase::Releasing) => *phase = MxPhase::Idle,
                    _ => return csmic("mx completion out of order"),
                }
            }
            Method::Exit | Method::Entry => {
                if self.pending.remove(&(object, process)) != Some(method) {
                    return csmic("completed without a matching invocation");
                }
                let expected = match method {
                    Method::Exit => CsState::OutCS,
                    _ => CsState::InCS,
                };
                if self.state.get(&(object, process)) != Some(&expected) {
                    return csmic("completed without changing state");
                }
            }
        }
        None
    }

    fn flip(&mut self, process: ProcessId, object: ObjectTag, state: CsState) -> Option<ViolationKind> {
        let expected = match self.pending.get(&(object, process)) {
            Some(Method::Exit) => CsState::OutCS,
            Some(Method::Entry) => CsState::InCS,
            _ => return Some(ViolationKind::FlipOutsideMethod { process, object }),
        };
        let prev = self.state.insert((object, process), state);
        if state != expected || prev == Some(state) {
            return Some(ViolationKind::FlipOutsideMethod { process, object });
        }
        let count = self.in_cs.entry(object).or_default();
        match state {
            CsState::InCS => *count += 1,
            CsState::OutCS => {
                *count -= 1;
                if self.known_by.get(&(object, process)).copied().unwrap_or(0) > 0 {
                    let mut holders: Vec<_> = self
                        .knowledge
                        .iter()
                        .filter(|((o, _), v)| *o == object && v.contains(&process))
                        .map(|((_, h), _)| *h)
                        .collect();
                    holders.sort();
                    return Some(ViolationKind::Knowledge { object, holder: holders[0], believed: process });
                }
                let mut exiters: Vec<_> = self
                    .collecting
                    .iter()
                    .filter(|((o, _), (_, cur))| *o == object && cur.contains(&process))
                    .map(|((_, e), _)| *e)
                    .collect();
                exiters.sort();
                if let Some(&exiter) = exiters.first() {
                    return Some(ViolationKind::CurrentInCs { object, exiter, believed: process });
                }
            }
        }
        None
    }

    fn send(&mut self, from: ProcessId, object: ObjectTag, body: &Body) {
        if let Body::In(MutinMessage::Query { req_cnt }) = body {
            self.collecting.insert((object, from), (*req_cnt, BTreeSet::new()));
        }
    }

    fn recv(&mut self, from: ProcessId, to: ProcessId, object: ObjectTag, body: &Body) -> Option<ViolationKind> {
        match body {
            Body::In(MutinMessage::Release) => {
                let view = self.knowledge.entry((object, to)).or_default();
                if view.insert(from) {
                    *self.known_by.entry((object, from)).or_default() += 1;
                }
                if !self.is_in(object, from) {
                    return Some(ViolationKind::Knowledge { object, holder: to, believed: from });
                }
            }
            Body::In(MutinMessage::Acquire) => {
                if self.knowledge.entry((object, to)).or_default().remove(&from) {
                    *self.known_by.entry((object, from)).or_default() -= 1;
                }
            }
            Body::In(MutinMessage::Response1 { procs_in_cs, req_cnt })
            | Body::In(MutinMessage::Response2 { procs_in_cs, req_cnt }) => {
                if let Some((rc, cur)) = self.collecting.get_mut(&(object, to)) {
                    if rc == req_cnt {
                        cur.extend(procs_in_cs.iter().copied());
                        let state = &self.state;
                        if let Some(&believed) = cur.iter().find(|&&j| state.get(&(object, j)) != Some(&CsState::InCS))
                        {
                            return Some(ViolationKind::CurrentInCs { object, exiter: to, believed });
                        }
                    }
                }
            }
            Body::Mx(MutexMessage::Request { .. }) | Body::Mx(_) | Body::In(_) => {}
        }
        None
    }
}

/// Replays `trace` and reports the first point where the mode's count bounds,
/// the component invariants, knowledge soundness, mx exclusion or the CSMIC
/// discipline fail.
pub fn check_safety(trace: &Trace) -> SafetyVerdict {
    let mut replay = Replay::default();
    let mut in_init = true;
    let fail = |index: Option<usize>, tick, kind| SafetyVerdict {
        records_checked: index.map_or(0, |i| i + 1),
        violation: Some(Violation { index, tick, kind }),
    };
    for (i, record) in trace.records.iter().enumerate() {
        if in_init && !matches!(record, Record::Init { .. }) {
            in_init = false;
            if let Some(kind) =
                count_violation(trace.mode, trace.n, |o| replay.count(o)).or_else(|| replay.initial_knowledge())
            {
                return fail(None, 0, kind);
            }
        }
        let found = match record {
            Record::Init { process, object, state, procs_in_cs } => {
                if !in_init {
                    Some(ViolationKind::Malformed("init record after the first event".into()))
                } else {
                    replay.init(*process, *object, *state, procs_in_cs);
                    None
                }
            }
            Record::Send { from, msg, .. } => {
                replay.send(*from, msg.object, &msg.body);
                None
            }
            Record::Recv { from, to, msg, .. } => replay.recv(*from, *to, msg.object, &msg.body),
            Record::Invoke { process, object, method, .. } => replay.invoke(*process, *object, *method),
            Record::Complete { process, object, method, .. } => replay.complete(*process, *object, *method),
            Record::Flip { process, object, state, .. } => replay
                .flip(*process, *object, *state)
                .or_else(|| count_violation(trace.mode, trace.n, |o| replay.count(o))),
            Record::Note { .. } => None,
        };
        if let Some(kind) = found {
            return fail(Some(i), record.tick(), kind);
        }
    }
    if in_init {
        if let Some(kind) = count_violation(trace.mode, trace.n, |o| replay.count(o)) {
            return fail(None, 0, kind);
        }
    }
    SafetyVerdict { records_checked: trace.records.len(), violation: None }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockedProcess {
    pub process: ProcessId,
    pub cycles: usize,
    /// Outermost first, e.g. `["gcs.Exit", "lmin.Exit", "lmin: inclusion gate ..."]`.
    pub waits: Vec<String>,
}

impl fmt::Display for BlockedProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{} after {} cycles", self.process, self.cycles)?;
        if self.waits.is_empty() {
            f.write_str(": idle")
        } else {
            write!(f, ": blocked in {}", self.waits.join(" > "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LivenessVerdict {
    pub required: usize,
    /// Completed top-level cycles per process, indexed by `ProcessId::index`.
    pub cycles: Vec<usize>,
    /// Processes short of `required`, with their pending waits.
    pub blocked: Vec<BlockedProcess>,
}

impl LivenessVerdict {
    pub fn is_ok(&self) -> bool {
        self.blocked.is_empty()
    }

    pub fn min_cycles(&self) -> usize {
        self.cycles.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ExitStage {
    Gate,
    Acks,
}

/// Passes iff every process completed `required` cycles of the top-level
/// object. Processes that fall short are reported with the waits they were
/// blocked in when the trace ended.
pub fn check_liveness(trace: &Trace, required: usize) -> LivenessVerdict {
    let top = trace.mode.top_tag();
    let n = trace.n;
    let mut exits = vec![0usize; n];
    let mut entries = vec![0usize; n];
    let mut open: BTreeMap<(ProcessId, ObjectTag, Method), SimTime> = BTreeMap::new();
    let mut stage: HashMap<(ProcessId, ObjectTag), ExitStage> = HashMap::new();
    let mut req_cnt: HashMap<(ProcessId, ObjectTag), u64> = HashMap::new();
    let mut collected: HashMap<(ProcessId, ObjectTag), BTreeSet<ProcessId>> = HashMap::new();
    let mut order = 0u64;
    let mut invoked_at: HashMap<(ProcessId, ObjectTag, Method), u64> = HashMap::new();
    for record in &trace.records {
        match record {
            Record::Invoke { process, object, method, tick } => {
                open.insert((*process, *object, *method), *tick);
                invoked_at.insert((*process, *object, *method), order);
                order += 1;
            }
            Record::Complete { process, object, method, .. } => {
                open.remove(&(*process, *object, *method));
                if *object == top {
                    match method {
                        Method::Exit => exits[process.index()] += 1,
                        Method::Entry => entries[process.index()] += 1,
                        _ => {}
                    }
                }
                if *method == Method::Exit {
                    stage.remove(&(*process, *object));
                }
            }
            Record::Send { from, msg, .. } => match &msg.body {
                Body::In(MutinMessage::Query { req_cnt: rc }) => {
                    stage.insert((*from, msg.object), ExitStage::Gate);
                    req_cnt.insert((*from, msg.object), *rc);
                    collected.insert((*from, msg.object), BTreeSet::new());
                }
                Body::In(MutinMessage::Acquire) => {
                    stage.insert((*from, msg.object), ExitStage::Acks);
                }
                _ => {}
            },
            Record::Recv { to, msg, .. } => {
                if let Body::In(MutinMessage::Response1 { procs_in_cs, req_cnt: rc })
                | Body::In(MutinMessage::Response2 { procs_in_cs, req_cnt: rc }) = &msg.body
                {
                    if req_cnt.get(&(*to, msg.object)) == Some(rc) {
                        collected.entry((*to, msg.object)).or_default().extend(procs_in_cs.iter().copied());
                    }
                }
            }
            _ => {}
        }
    }
    let cycles: Vec<usize> = exits.iter().zip(&entries).map(|(x, e)| (*x).min(*e)).collect();
    let mut blocked = Vec::new();
    for p in ProcessId::all(n) {
        if cycles[p.index()] >= required {
            continue;
        }
        let mut pending: Vec<_> = open
            .keys()
            .filter(|(q, _, _)| *q == p)
            .map(|&(_, object, method)| (invoked_at[&(p, object, method)], object, method))
            .collect();
        pending.sort();
        let mut waits: Vec<String> = pending.iter().map(|(_, o, m)| format!("{o}.{m}")).collect();
        if let Some(&(_, object, _)) =
            pending.iter().rev().find(|(_, o, m)| o.is_mutin_instance() && *m == Method::Exit)
        {
            let in_mx = pending.iter().any(|(_, o, m)| *o == object && *m == Method::MxEntry);
            let detail = match (in_mx, stage.get(&(p, object))) {
                (true, _) => "waiting for mx".to_string(),
                (false, Some(ExitStage::Gate)) => format!(
                    "inclusion gate (currentInCS={})",
                    format_set(collected.get(&(p, object)).unwrap_or(&BTreeSet::new()))
                ),
                (false, Some(ExitStage::Acks)) => "awaiting Acks".to_string(),
                (false, None) => "waiting for mx".to_string(),
            };
            waits.push(format!("{object}: {detail}"));
        }
        blocked.push(BlockedProcess { process: p, cycles: cycles[p.index()], waits });
    }
    LivenessVerdict { required, cycles, blocked }
}
