//! The application loop: every process alternates `Exit()` and `Entry()` on
//! its top-level object, recording every step into a [`Trace`].

use rand::Rng;
use thiserror::Error;

use crate::coterie::ProcessId;
use crate::harness::trace::{Record, Trace};
use crate::message::Message;
use crate::object::{CsObject, Effect, Effects, Method, Progress, ProtocolError};
use crate::simnet::{Event, Network, SimConfig, SimConfigError, Step};
use crate::system::{ConfigError, ProcessObject, SystemSpec};

/// When processes invoke their next method.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// After each completion a process thinks for a uniform `[0, max_think]`
    /// ticks before invoking again.
    Random { max_think: u64 },
    /// One invocation at a time, round-robin, each started only once the
    /// network has drained.
    Serialized,
    /// The given invocations in order, each started once the network has
    /// drained. The method must match the process's state.
    Script(Vec<(ProcessId, Method)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppConfig {
    /// Full `Exit()`/`Entry()` cycles every process must complete.
    pub cycles: usize,
    pub schedule: Schedule,
}

impl AppConfig {
    pub fn random(cycles: usize, max_think: u64) -> Self {
        AppConfig { cycles, schedule: Schedule::Random { max_think } }
    }

    pub fn serialized(cycles: usize) -> Self {
        AppConfig { cycles, schedule: Schedule::Serialized }
    }

    pub fn script(steps: Vec<(ProcessId, Method)>) -> Self {
        AppConfig { cycles: 0, schedule: Schedule::Script(steps) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Every process reached its cycle target (or the script ran out).
    Completed,
    /// The network drained while some process was short of its target.
    Stalled,
    BudgetExhausted,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("script step {step}: P{process} cannot invoke {method} now")]
    Script { step: usize, process: ProcessId, method: Method },
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub trace: Trace,
    pub outcome: Outcome,
    pub events: u64,
    /// Processes with an invocation still pending at the end, and where they wait.
    pub blocked: Vec<(ProcessId, String)>,
}

struct Driver {
    nodes: Vec<ProcessObject>,
    net: Network<Message>,
    trace: Trace,
    busy: Vec<bool>,
    exits: Vec<usize>,
    entries: Vec<usize>,
    cycles: usize,
    max_think: Option<u64>,
}

impl Driver {
    fn all_done(&self) -> bool {
        self.exits.iter().zip(&self.entries).all(|(x, e)| (*x).min(*e) >= self.cycles)
    }

    fn apply(&mut self, p: ProcessId, fx: &mut Effects, cause: Option<u64>) {
        let tick = self.net.now();
        for effect in fx.drain() {
            let record = match effect {
                Effect::Send { to, msg } => {
                    let (seq, deliver_at) = self.net.send(p, to, msg.clone());
                    Record::Send { tick, seq, from: p, to, msg, deliver_at, cause }
                }
                Effect::Invoke { object, method } => Record::Invoke { tick, process: p, object, method },
                Effect::Complete { object, method } => Record::Complete { tick, process: p, object, method },
                Effect::Flip { object, state } => Record::Flip { tick, process: p, object, state },
                Effect::Note { object, text } => Record::Note { tick, process: p, object, text },
            };
            self.trace.records.push(record);
        }
    }

    fn invoke(&mut self, p: ProcessId) -> Result<(), ProtocolError> {
        let node = &mut self.nodes[p.index()];
        let method = Method::for_state(node.state());
        let mut fx = Effects::new();
        let progress = match method {
            Method::Exit => node.exit(&mut fx),
            _ => node.entry(&mut fx),
        }?;
        self.busy[p.index()] = true;
        self.apply(p, &mut fx, None);
        if progress == Progress::Done {
            self.completed(p, method);
        }
        Ok(())
    }

    fn completed(&mut self, p: ProcessId, method: Method) {
        let i = p.index();
        self.busy[i] = false;
        match method {
            Method::Exit => self.exits[i] += 1,
            _ => self.entries[i] += 1,
        }
        if let Some(max_think) = self.max_think {
            if !self.all_done() {
                let think = self.net.rng().gen_range(0..=max_think);
                self.net.wake_after(p, think);
            }
        }
    }

    fn deliver(&mut self, seq: u64, from: ProcessId, to: ProcessId, msg: Message) -> Result<(), ProtocolError> {
        let mut fx = Effects::new();
        let done = self.nodes[to.index()].deliver(from, &msg, &mut fx)?;
        self.trace.records.push(Record::Recv { tick: self.net.now(), seq, from, to, msg });
        self.apply(to, &mut fx, Some(seq));
        if let Some(method) = done {
            self.completed(to, method);
        }
        Ok(())
    }

    /// Processes events until the network drains. Returns `false` when the
    /// budget ran out.
    fn pump(&mut self) -> Result<bool, ProtocolError> {
        loop {
            match self.net.step() {
                Step::Event(Event::Deliver(env)) => self.deliver(env.seq, env.from, env.to, env.payload)?,
                Step::Event(Event::Wake { process, .. }) => {
                    if !self.busy[process.index()] && !self.all_done() {
                        self.invoke(process)?;
                    }
                }
                Step::Quiescent => return Ok(true),
                Step::BudgetExhausted => return Ok(false),
            }
        }
    }
}

/// Runs `spec` under `app` on a network configured by `sim`.
pub fn run(spec: &SystemSpec, sim: SimConfig, app: &AppConfig) -> Result<RunReport, RunError> {
    let nodes = spec.build()?;
    let n = nodes.len();
    let mut trace = Trace::new(n, spec.mode, spec.coterie.max_quorum_size());
    for (i, node) in nodes.iter().enumerate() {
        let process = ProcessId::from_index(i);
        let mutins = node.mutins();
        for (object, state) in node.states() {
            let procs_in_cs = mutins.iter().find(|m| m.tag() == object).map(|m| m.procs_in_cs().clone());
            trace.records.push(Record::Init { process, object, state, procs_in_cs });
        }
    }
    let max_think = match app.schedule {
        Schedule::Random { max_think } => Some(max_think),
        _ => None,
    };
    let mut d = Driver {
        nodes,
        net: Network::new(sim)?,
        trace,
        busy: vec![false; n],
        exits: vec![0; n],
        entries: vec![0; n],
        cycles: app.cycles,
        max_think,
    };

    let outcome = match &app.schedule {
        Schedule::Random { max_think } => {
            for p in ProcessId::all(n) {
                let think = d.net.rng().gen_range(0..=*max_think);
                d.net.wake_after(p, think);
            }
            if !d.pump()? {
                Outcome::BudgetExhausted
            } else if d.all_done() {
                Outcome::Completed
            } else {
                Outcome::Stalled
            }
        }
        Schedule::Serialized => {
            let mut cursor = 0;
            loop {
                if !d.pump()? {
                    break Outcome::BudgetExhausted;
                }
                if d.all_done() {
                    break Outcome::Completed;
                }
                let Some(next) = (0..n).map(|k| (cursor + k) % n).find(|&i| !d.busy[i]) else {
                    break Outcome::Stalled;
                };
                cursor = (next + 1) % n;
                d.invoke(ProcessId::from_index(next))?;
            }
        }
        Schedule::Script(steps) => {
            let mut outcome = Outcome::Completed;
            for (step, &(process, method)) in steps.iter().enumerate() {
                if !d.pump()? {
                    outcome = Outcome::BudgetExhausted;
                    break;
                }
                let i = process.index();
                if i >= n || d.busy[i] || Method::for_state(d.nodes[i].state()) != method {
                    return Err(RunError::Script { step, process, method });
                }
                d.invoke(process)?;
            }
            if outcome == Outcome::Completed && !d.pump()? {
                outcome = Outcome::BudgetExhausted;
            }
            outcome
        }
    };

    let blocked = ProcessId::all(n)
        .filter(|p| d.busy[p.index()])
        .map(|p| (p, d.nodes[p.index()].describe_wait().unwrap_or_else(|| "pending".to_string())))
        .collect();
    Ok(RunReport { trace: d.trace, outcome, events: d.net.processed(), blocked })
}
