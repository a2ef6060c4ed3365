//! Waiting times and message counts measured from a trace.
//!
//! Waiting time of a MUTIN `Exit()` runs from invocation until the later of
//! its return and the delivery of the mx release messages it sent; that of an
//! `Entry()` runs until the last delivery among its `Release`s and any
//! `Response2` those `Release`s triggered. A complement's method is measured
//! as the inner method it runs, and a composite method as the sum of its two
//! component methods. Raw invocation-to-return spans are reported as well.
//!
//! Every message is attributed to the top-level invocation of the process it
//! serves: requests and releases to their sender, grants and replies to their
//! receiver, and a `Response2` to whatever its causing `Release` served.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::coterie::ProcessId;
use crate::harness::trace::{Record, Trace};
use crate::message::{Body, MutexMessage, MutinMessage, ObjectTag};
use crate::object::Method;
use crate::simnet::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvocationMetrics {
    pub process: ProcessId,
    pub method: Method,
    pub invoke_tick: SimTime,
    pub complete_tick: Option<SimTime>,
    pub waiting: Option<SimTime>,
    /// Invocation to return.
    pub raw: Option<SimTime>,
    /// Some wait on the inclusion gate ended through a `Response2`.
    pub gated: bool,
    /// Some mx grant came from another process's release or relinquish, or
    /// the request was failed or inquired.
    pub mx_contended: bool,
    pub messages: usize,
    pub by_object: BTreeMap<ObjectTag, usize>,
}

impl InvocationMetrics {
    pub fn uncontended(&self) -> bool {
        !self.gated && !self.mx_contended
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub quorum_size: usize,
    /// Top-level invocations in invocation order.
    pub invocations: Vec<InvocationMetrics>,
    /// Messages per completed `Exit()`+following `Entry()` pair of one process.
    pub pair_messages: Vec<usize>,
    pub messages_total: usize,
    pub messages_by_object: BTreeMap<ObjectTag, usize>,
}

fn max_of(it: impl Iterator<Item = u64>) -> Option<u64> {
    it.max()
}

fn mean_of(values: &[u64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<u64>() as f64 / values.len() as f64)
}

impl MetricsReport {
    /// Pools the invocations and message counts of another run.
    pub fn merge(&mut self, other: &MetricsReport) {
        self.quorum_size = self.quorum_size.max(other.quorum_size);
        self.invocations.extend(other.invocations.iter().cloned());
        self.pair_messages.extend(&other.pair_messages);
        self.messages_total += other.messages_total;
        for (object, n) in &other.messages_by_object {
            *self.messages_by_object.entry(*object).or_default() += n;
        }
    }

    fn waits(&self, method: Method, uncontended_only: bool) -> Vec<u64> {
        self.invocations
            .iter()
            .filter(|i| i.method == method && (!uncontended_only || i.uncontended()))
            .filter_map(|i| i.waiting)
            .collect()
    }

    pub fn waiting_max(&self, method: Method) -> Option<u64> {
        max_of(self.waits(method, false).into_iter())
    }

    pub fn waiting_mean(&self, method: Method) -> Option<f64> {
        mean_of(&self.waits(method, false))
    }

    pub fn uncontended_waiting_max(&self, method: Method) -> Option<u64> {
        max_of(self.waits(method, true).into_iter())
    }

    pub fn raw_max(&self, method: Method) -> Option<u64> {
        max_of(self.invocations.iter().filter(|i| i.method == method).filter_map(|i| i.raw))
    }

    pub fn pair_mean(&self) -> Option<f64> {
        let v: Vec<u64> = self.pair_messages.iter().map(|&m| m as u64).collect();
        mean_of(&v)
    }

    /// Total messages over completed pairs; unlike [`Self::pair_mean`] this
    /// does not depend on how messages are attributed.
    pub fn messages_per_pair(&self) -> Option<f64> {
        let exits = self.invocations.iter().filter(|i| i.method == Method::Exit && i.complete_tick.is_some()).count();
        let entries =
            self.invocations.iter().filter(|i| i.method == Method::Entry && i.complete_tick.is_some()).count();
        let pairs = (exits + entries) as f64 / 2.0;
        (pairs > 0.0).then(|| self.messages_total as f64 / pairs)
    }

    /// `key=value` lines; absent values are written as `-`.
    pub fn to_kv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map_or_else(|| "-".to_string(), |v| v.to_string())
        }
        fn optf(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
        }
        let mut out = String::new();
        let count = |m: Method| self.invocations.iter().filter(|i| i.method == m).count();
        let _ = writeln!(out, "quorum_size={}", self.quorum_size);
        for (name, m) in [("exit", Method::Exit), ("entry", Method::Entry)] {
            let _ = writeln!(out, "{name}_invocations={}", count(m));
            let _ = writeln!(out, "{name}_waiting_max={}", opt(self.waiting_max(m)));
            let _ = writeln!(out, "{name}_waiting_mean={}", optf(self.waiting_mean(m)));
            let _ = writeln!(out, "{name}_waiting_uncontended_max={}", opt(self.uncontended_waiting_max(m)));
            let _ = writeln!(out, "{name}_return_max={}", opt(self.raw_max(m)));
        }
        let gated = self.invocations.iter().filter(|i| i.gated).count();
        let mx = self.invocations.iter().filter(|i| i.mx_contended).count();
        let _ = writeln!(out, "gated_invocations={gated}");
        let _ = writeln!(out, "mx_contended_invocations={mx}");
        let _ = writeln!(out, "pairs={}", self.pair_messages.len());
        let _ = writeln!(out, "messages_total={}", self.messages_total);
        let _ = writeln!(out, "messages_per_pair={}", optf(self.messages_per_pair()));
        let _ = writeln!(out, "pair_messages_max={}", opt(self.pair_messages.iter().max()));
        let _ = writeln!(out, "pair_messages_min={}", opt(self.pair_messages.iter().min()));
        for (object, n) in &self.messages_by_object {
            let _ = writeln!(out, "messages_{}={n}", object.name().replace('.', "_"));
        }
        out
    }
}

struct Inv {
    process: ProcessId,
    object: ObjectTag,
    method: Method,
    invoke_idx: usize,
    invoke_tick: SimTime,
    complete_idx: Option<usize>,
    complete_tick: Option<SimTime>,
}

struct Index<'a> {
    trace: &'a Trace,
    invs: Vec<Inv>,
    /// Invocations per (process, object, method), in invocation order.
    by_key: HashMap<(ProcessId, ObjectTag, Method), Vec<usize>>,
    /// Record index of each send, by sequence number.
    send_at: HashMap<u64, usize>,
    recv_tick: HashMap<u64, SimTime>,
    /// Sends made inside delivery handlers, by the causing sequence number.
    caused: HashMap<u64, Vec<usize>>,
    /// Record indices of sends/receipts per (process, object).
    sends_by: HashMap<(ProcessId, ObjectTag), Vec<usize>>,
    recvs_by: HashMap<(ProcessId, ObjectTag), Vec<usize>>,
}

impl<'a> Index<'a> {
    fn new(trace: &'a Trace) -> Self {
        let mut ix = Index {
            trace,
            invs: Vec::new(),
            by_key: HashMap::new(),
            send_at: HashMap::new(),
            recv_tick: HashMap::new(),
            caused: HashMap::new(),
            sends_by: HashMap::new(),
            recvs_by: HashMap::new(),
        };
        let mut open: HashMap<(ProcessId, ObjectTag, Method), usize> = HashMap::new();
        for (i, r) in trace.records.iter().enumerate() {
            match r {
                Record::Invoke { tick, process, object, method } => {
                    let id = ix.invs.len();
                    ix.invs.push(Inv {
                        process: *process,
                        object: *object,
                        method: *method,
                        invoke_idx: i,
                        invoke_tick: *tick,
                        complete_idx: None,
                        complete_tick: None,
                    });
                    ix.by_key.entry((*process, *object, *method)).or_default().push(id);
                    open.insert((*process, *object, *method), id);
                }
                Record::Complete { tick, process, object, method } => {
                    if let Some(id) = open.remove(&(*process, *object, *method)) {
                        ix.invs[id].complete_idx = Some(i);
                        ix.invs[id].complete_tick = Some(*tick);
                    }
                }
                Record::Send { seq, from, msg, cause, .. } => {
                    ix.send_at.insert(*seq, i);
                    if let Some(c) = cause {
                        ix.caused.entry(*c).or_default().push(i);
                    }
                    ix.sends_by.entry((*from, msg.object)).or_default().push(i);
                }
                Record::Recv { tick, seq, to, msg, .. } => {
                    ix.recv_tick.insert(*seq, *tick);
                    ix.recvs_by.entry((*to, msg.object)).or_default().push(i);
                }
                _ => {}
            }
        }
        ix
    }

    fn in_span(list: Option<&Vec<usize>>, lo: usize, hi: usize) -> &[usize] {
        let Some(list) = list else { return &[] };
        let a = list.partition_point(|&i| i < lo);
        let b = list.partition_point(|&i| i <= hi);
        &list[a..b]
    }

    fn span(&self, inv: &Inv) -> (usize, usize) {
        (inv.invoke_idx, inv.complete_idx.unwrap_or(self.trace.records.len()))
    }

    fn send(&self, idx: usize) -> (u64, &Body, Option<u64>) {
        match &self.trace.records[idx] {
            Record::Send { seq, msg, cause, .. } => (*seq, &msg.body, *cause),
            _ => unreachable!("send index points at a send record"),
        }
    }

    fn sub(&self, inv: &Inv, object: ObjectTag, method: Method) -> Option<&Inv> {
        let list = self.by_key.get(&(inv.process, object, method))?;
        let pos = list.partition_point(|&id| self.invs[id].invoke_idx < inv.invoke_idx);
        let id = *list.get(pos)?;
        let (_, hi) = self.span(inv);
        (self.invs[id].invoke_idx <= hi).then(|| &self.invs[id])
    }

    /// `(waiting, gated, mx_contended)`.
    fn measure(&self, inv: &Inv) -> (Option<SimTime>, bool, bool) {
        let object = inv.object;
        match object {
            ObjectTag::Gcs => {
                let (first, second) = match inv.method {
                    Method::Exit => (ObjectTag::Lmin, ObjectTag::Kmex),
                    _ => (ObjectTag::Kmex, ObjectTag::Lmin),
                };
                let a = self.sub(inv, first, inv.method).map(|s| self.measure(s));
                let b = self.sub(inv, second, inv.method).map(|s| self.measure(s));
                match (a, b) {
                    (Some((Some(wa), ga, ma)), Some((Some(wb), gb, mb))) => (Some(wa + wb), ga || gb, ma || mb),
                    (Some((_, ga, ma)), _) => (None, ga, ma),
                    _ => (None, false, false),
                }
            }
            ObjectTag::Kmex | ObjectTag::CoMutin => {
                let inner = match object {
                    ObjectTag::Kmex => ObjectTag::KmexInner,
                    _ => ObjectTag::CoMutinInner,
                };
                let method = match inv.method {
                    Method::Exit => Method::Entry,
                    _ => Method::Exit,
                };
                self.sub(inv, inner, method).map_or((None, false, false), |s| self.measure(s))
            }
            _ => self.measure_mutin(inv),
        }
    }

    fn measure_mutin(&self, inv: &Inv) -> (Option<SimTime>, bool, bool) {
        let (lo, hi) = self.span(inv);
        let key = (inv.process, inv.object);
        let sends = Self::in_span(self.sends_by.get(&key), lo, hi);
        let Some(done) = inv.complete_tick else {
            return (None, false, false);
        };
        let mut end = done;
        let mut gated = false;
        let mut contended = false;
        match inv.method {
            Method::Exit => {
                for &i in sends {
                    let (seq, body, cause) = self.send(i);
                    match body {
                        Body::Mx(MutexMessage::Release) => {
                            end = end.max(self.recv_tick.get(&seq).copied().unwrap_or(done));
                        }
                        Body::In(MutinMessage::Acquire) => {
                            let via_response2 = cause
                                .and_then(|c| self.send_at.get(&c))
                                .is_some_and(|&s| matches!(self.send(s).1, Body::In(MutinMessage::Response2 { .. })));
                            gated |= via_response2;
                        }
                        _ => {}
                    }
                }
                for &i in Self::in_span(self.recvs_by.get(&key), lo, hi) {
                    let Record::Recv { seq, msg, .. } = &self.trace.records[i] else { continue };
                    match &msg.body {
                        Body::Mx(MutexMessage::Failed) | Body::Mx(MutexMessage::Inquire) => contended = true,
                        Body::Mx(MutexMessage::Locked) => {
                            let own_request = self
                                .send_at
                                .get(seq)
                                .and_then(|&s| self.send(s).2)
                                .and_then(|c| self.send_at.get(&c))
                                .is_some_and(|&s| {
                                    matches!(&self.trace.records[s],
                                        Record::Send { from, msg, .. }
                                            if *from == inv.process
                                                && matches!(msg.body, Body::Mx(MutexMessage::Request { .. })))
                                });
                            contended |= !own_request;
                        }
                        _ => {}
                    }
                }
            }
            _ => {
                for &i in sends {
                    let (seq, body, _) = self.send(i);
                    if !matches!(body, Body::In(MutinMessage::Release)) {
                        continue;
                    }
                    end = end.max(self.recv_tick.get(&seq).copied().unwrap_or(done));
                    for &j in self.caused.get(&seq).map(Vec::as_slice).unwrap_or(&[]) {
                        let (s2, b2, _) = self.send(j);
                        if matches!(b2, Body::In(MutinMessage::Response2 { .. })) {
                            end = end.max(self.recv_tick.get(&s2).copied().unwrap_or(done));
                        }
                    }
                }
            }
        }
        (Some(end - inv.invoke_tick), gated, contended)
    }
}

/// Computes waiting times and message counts for every top-level invocation.
pub fn measure(trace: &Trace) -> MetricsReport {
    let ix = Index::new(trace);
    let top = trace.mode.top_tag();

    // attribution of every message to the invocation it serves
    let mut current: HashMap<ProcessId, usize> = HashMap::new();
    let mut root_of: HashMap<u64, Option<usize>> = HashMap::new();
    let mut per_inv: HashMap<usize, (usize, BTreeMap<ObjectTag, usize>)> = HashMap::new();
    let mut inv_at: HashMap<usize, usize> = HashMap::new();
    for (id, inv) in ix.invs.iter().enumerate() {
        if inv.object == top && matches!(inv.method, Method::Exit | Method::Entry) {
            inv_at.insert(inv.invoke_idx, id);
        }
    }
    let mut report = MetricsReport { quorum_size: trace.quorum_size, ..Default::default() };
    for (i, r) in trace.records.iter().enumerate() {
        match r {
            Record::Invoke { process, .. } => {
                if let Some(&id) = inv_at.get(&i) {
                    current.insert(*process, id);
                }
            }
            Record::Send { seq, from, to, msg, cause, .. } => {
                let root = match (&msg.body, cause) {
                    (Body::In(MutinMessage::Response2 { .. }), Some(c)) => root_of.get(c).copied().flatten(),
                    (
                        Body::Mx(MutexMessage::Locked | MutexMessage::Failed | MutexMessage::Inquire)
                        | Body::In(MutinMessage::Response1 { .. } | MutinMessage::Ack),
                        _,
                    ) => current.get(to).copied(),
                    _ => current.get(from).copied(),
                };
                root_of.insert(*seq, root);
                report.messages_total += 1;
                *report.messages_by_object.entry(msg.object).or_default() += 1;
                if let Some(root) = root {
                    let entry = per_inv.entry(root).or_default();
                    entry.0 += 1;
                    *entry.1.entry(msg.object).or_default() += 1;
                }
            }
            _ => {}
        }
    }

    let mut tops: Vec<usize> = inv_at.values().copied().collect();
    tops.sort_by_key(|&id| ix.invs[id].invoke_idx);
    let mut last_exit: HashMap<ProcessId, usize> = HashMap::new();
    for id in tops {
        let inv = &ix.invs[id];
        let (waiting, gated, mx_contended) = ix.measure(inv);
        let (messages, by_object) = per_inv.remove(&id).unwrap_or_default();
        let pos = report.invocations.len();
        report.invocations.push(InvocationMetrics {
            process: inv.process,
            method: inv.method,
            invoke_tick: inv.invoke_tick,
            complete_tick: inv.complete_tick,
            waiting,
            raw: inv.complete_tick.map(|t| t - inv.invoke_tick),
            gated,
            mx_contended,
            messages,
            by_object,
        });
        if inv.complete_tick.is_none() {
            last_exit.remove(&inv.process);
            continue;
        }
        match inv.method {
            Method::Exit => {
                last_exit.insert(inv.process, pos);
            }
            _ => {
                if let Some(x) = last_exit.remove(&inv.process) {
                    report.pair_messages.push(report.invocations[x].messages + messages);
                }
            }
        }
    }
    report
}
