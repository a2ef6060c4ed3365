//! Exhaustive exploration of message interleavings for tiny systems.
//!
//! A state is every process's object plus the FIFO contents of every link
//! and each process's remaining invocations. From a state, any link head may
//! be delivered and any idle process with invocations left may invoke its next
//! method. States are deduplicated by a 128-bit fingerprint.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::hash::Hash;

use xxhash_rust::xxh3::Xxh3;

use crate::coterie::{CoterieAssignment, ProcessId};
use crate::harness::checker::{count_violation, ViolationKind};
use crate::message::{Message, ObjectTag};
use crate::mutin::{ExitPhase, Gate};
use crate::object::{CsObject, CsState, Effect, Effects, Method, Progress};
use crate::system::{ConfigError, Mode, ProcessObject, SystemSpec};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    nodes: Vec<ProcessObject>,
    links: BTreeMap<(ProcessId, ProcessId), VecDeque<Message>>,
    remaining: Vec<u8>,
    busy: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreViolation {
    pub description: String,
    /// Transitions from the initial state.
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreReport {
    pub initially_in: BTreeSet<ProcessId>,
    pub states: usize,
    pub transitions: usize,
    /// Terminal states reached with every invocation done.
    pub completed: usize,
    /// Terminal states in which some process is still blocked.
    pub deadlocks: usize,
    /// The state cap stopped the search before it was exhaustive.
    pub capped: bool,
    pub violation: Option<ExploreViolation>,
}

impl ExploreReport {
    pub fn is_safe(&self) -> bool {
        self.violation.is_none()
    }
}

fn fingerprint(s: &State) -> u128 {
    let mut h = Xxh3::new();
    s.hash(&mut h);
    h.digest128()
}

fn check(mode: Mode, nodes: &[ProcessObject]) -> Option<String> {
    let n = nodes.len();
    let all: Vec<Vec<(ObjectTag, CsState)>> = nodes.iter().map(ProcessObject::states).collect();
    let count = |object: ObjectTag| {
        all.iter().filter(|states| states.iter().any(|&(o, s)| o == object && s == CsState::InCS)).count()
    };
    if let Some(kind) = count_violation(mode, n, count) {
        return Some(kind.to_string());
    }
    let mut holders: BTreeMap<ObjectTag, ProcessId> = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        let me = ProcessId::from_index(i);
        for m in node.mutins() {
            let object = m.tag();
            let in_cs = |j: ProcessId| all[j.index()].contains(&(object, CsState::InCS));
            if let Some(&believed) = m.procs_in_cs().iter().find(|&&j| !in_cs(j)) {
                return Some(ViolationKind::Knowledge { object, holder: me, believed }.to_string());
            }
            if matches!(m.phase(), ExitPhase::AwaitResponses | ExitPhase::AwaitAcks) {
                if let Some(&believed) = m.current_in_cs().iter().find(|&&j| !in_cs(j)) {
                    return Some(ViolationKind::CurrentInCs { object, exiter: me, believed }.to_string());
                }
            }
            if m.mx().is_holding() {
                if let Some(&holder) = holders.get(&object) {
                    return Some(ViolationKind::MxExclusion { object, holder, intruder: me }.to_string());
                }
                holders.insert(object, me);
            }
        }
    }
    None
}

fn apply(state: &mut State, p: ProcessId, fx: &mut Effects) {
    for effect in fx.drain() {
        if let Effect::Send { to, msg } = effect {
            state.links.entry((p, to)).or_default().push_back(msg);
        }
    }
}

enum Action {
    Deliver(ProcessId, ProcessId),
    Invoke(ProcessId),
}

fn successor(state: &State, action: &Action) -> Result<State, String> {
    let mut next = state.clone();
    let mut fx = Effects::new();
    match *action {
        Action::Deliver(from, to) => {
            let queue = next.links.get_mut(&(from, to)).expect("link exists");
            let msg = queue.pop_front().expect("link is non-empty");
            if queue.is_empty() {
                next.links.remove(&(from, to));
            }
            let done = next.nodes[to.index()].deliver(from, &msg, &mut fx).map_err(|e| e.to_string())?;
            apply(&mut next, to, &mut fx);
            if done.is_some() {
                next.busy[to.index()] = false;
            }
        }
        Action::Invoke(p) => {
            let i = p.index();
            next.remaining[i] -= 1;
            let node = &mut next.nodes[i];
            let progress = match Method::for_state(node.state()) {
                Method::Exit => node.exit(&mut fx),
                _ => node.entry(&mut fx),
            }
            .map_err(|e| e.to_string())?;
            next.busy[i] = progress == Progress::Pending;
            apply(&mut next, p, &mut fx);
        }
    }
    Ok(next)
}

/// Explores every interleaving of `spec` in which each process performs
/// `cycles` full cycles, up to `state_cap` distinct states.
pub fn explore_bounded(spec: &SystemSpec, cycles: u8, state_cap: usize) -> Result<ExploreReport, ConfigError> {
    let nodes = spec.build()?;
    let n = nodes.len();
    let init =
        State { nodes, links: BTreeMap::new(), remaining: vec![cycles.saturating_mul(2); n], busy: vec![false; n] };
    let mut report = ExploreReport {
        initially_in: spec.initially_in.clone(),
        states: 1,
        transitions: 0,
        completed: 0,
        deadlocks: 0,
        capped: false,
        violation: None,
    };
    if let Some(description) = check(spec.mode, &init.nodes) {
        report.violation = Some(ExploreViolation { description, depth: 0 });
        return Ok(report);
    }
    let mut seen: HashSet<u128> = HashSet::new();
    seen.insert(fingerprint(&init));
    let mut stack = vec![(init, 0usize)];
    while let Some((state, depth)) = stack.pop() {
        let mut actions: Vec<Action> = state.links.keys().map(|&(f, t)| Action::Deliver(f, t)).collect();
        actions.extend(
            ProcessId::all(n).filter(|p| !state.busy[p.index()] && state.remaining[p.index()] > 0).map(Action::Invoke),
        );
        if actions.is_empty() {
            if state.busy.iter().any(|&b| b) {
                report.deadlocks += 1;
            } else {
                report.completed += 1;
            }
            continue;
        }
        for action in &actions {
            report.transitions += 1;
            let next = match successor(&state, action) {
                Ok(next) => next,
                Err(description) => {
                    report.violation = Some(ExploreViolation { description, depth: depth + 1 });
                    return Ok(report);
                }
            };
            if !seen.insert(fingerprint(&next)) {
                continue;
            }
            if let Some(description) = check(spec.mode, &next.nodes) {
                report.violation = Some(ExploreViolation { description, depth: depth + 1 });
                return Ok(report);
            }
            report.states += 1;
            if report.states >= state_cap {
                report.capped = true;
                return Ok(report);
            }
            stack.push((next, depth + 1));
        }
    }
    Ok(report)
}

/// Every initial configuration the mode admits on `coterie`.
pub fn safe_initial_configurations(mode: Mode, n: usize) -> Vec<BTreeSet<ProcessId>> {
    let (low, high) = mode.bounds(n);
    (0u32..1 << n)
        .map(|mask| ProcessId::all(n).filter(|p| mask & (1 << p.index()) != 0).collect::<BTreeSet<_>>())
        .filter(|s| (low..=high).contains(&s.len()))
        .collect()
}

/// Runs [`explore_bounded`] from every safe initial configuration, stopping
/// at the first violation. `state_cap` is shared evenly between the
/// configurations.
pub fn explore_all_initial(
    mode: Mode,
    coterie: &CoterieAssignment,
    gate: Gate,
    cycles: u8,
    state_cap: usize,
) -> Result<Vec<ExploreReport>, ConfigError> {
    let configs = safe_initial_configurations(mode, coterie.n());
    let per_config = (state_cap / configs.len().max(1)).max(1);
    let mut reports = Vec::new();
    for initially_in in configs {
        let mut spec = SystemSpec::new(mode, coterie.clone(), initially_in);
        spec.gate = gate;
        let report = explore_bounded(&spec, cycles, per_config)?;
        let stop = report.violation.is_some();
        reports.push(report);
        if stop {
            break;
        }
    }
    Ok(reports)
}
