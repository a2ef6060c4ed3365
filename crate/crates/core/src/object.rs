//! The critical section class: a per-process object with `Exit()` and
//! `Entry()` methods whose blocking is modelled by [`Progress::Pending`] and a
//! later completion reported from [`CsObject::deliver`].

use std::fmt;

use thiserror::Error;

use crate::coterie::ProcessId;
use crate::message::{Message, ObjectTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CsState {
    InCS,
    OutCS,
}

impl CsState {
    pub fn flipped(self) -> Self {
        match self {
            CsState::InCS => CsState::OutCS,
            CsState::OutCS => CsState::InCS,
        }
    }
}

impl fmt::Display for CsState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsState::InCS => "InCS",
            CsState::OutCS => "OutCS",
        })
    }
}

/// Methods that appear as invocation/completion records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Exit,
    Entry,
    MxEntry,
    MxExit,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exit => "Exit",
            Method::Entry => "Entry",
            Method::MxEntry => "mx.Entry",
            Method::MxExit => "mx.Exit",
        }
    }

    /// The method that is legal from `state` under CSMIC.
    pub fn for_state(state: CsState) -> Method {
        match state {
            CsState::InCS => Method::Exit,
            CsState::OutCS => Method::Entry,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Misuse of an object's invocation discipline. These abort a run: they
/// indicate a harness bug, never a protocol outcome.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("CSMIC violation: {object}.{method} invoked at P{process} in state {state}")]
    Csmic { process: ProcessId, object: ObjectTag, method: Method, state: CsState },
    #[error("{object}.{method} invoked at P{process} while another method is in progress")]
    Busy { process: ProcessId, object: ObjectTag, method: Method },
    #[error("mx misuse at P{process} ({object}): {reason}")]
    MxMisuse { process: ProcessId, object: ObjectTag, reason: &'static str },
    #[error("P{process} has no object tagged {object}")]
    UnknownObject { process: ProcessId, object: ObjectTag },
}

/// A side effect produced by a local step, in program order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Send { to: ProcessId, msg: Message },
    Invoke { object: ObjectTag, method: Method },
    Complete { object: ObjectTag, method: Method },
    Flip { object: ObjectTag, state: CsState },
    Note { object: ObjectTag, text: String },
}

/// Collects the effects of one local step for the runtime to apply.
#[derive(Debug, Default)]
pub struct Effects {
    items: Vec<Effect>,
}

impl Effects {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, to: ProcessId, msg: Message) {
        self.items.push(Effect::Send { to, msg });
    }

    pub fn invoke(&mut self, object: ObjectTag, method: Method) {
        self.items.push(Effect::Invoke { object, method });
    }

    pub fn complete(&mut self, object: ObjectTag, method: Method) {
        self.items.push(Effect::Complete { object, method });
    }

    pub fn flip(&mut self, object: ObjectTag, state: CsState) {
        self.items.push(Effect::Flip { object, state });
    }

    pub fn note(&mut self, object: ObjectTag, text: String) {
        self.items.push(Effect::Note { object, text });
    }

    /// Inserts an `outer` flip with the inverted state right behind every
    /// `inner` flip recorded at or after `mark`.
    pub fn mirror_flips(&mut self, mark: usize, inner: ObjectTag, outer: ObjectTag) {
        let tail = self.items.split_off(mark);
        for e in tail {
            let mirrored = match &e {
                Effect::Flip { object, state } if *object == inner => {
                    Some(Effect::Flip { object: outer, state: state.flipped() })
                }
                _ => None,
            };
            self.items.push(e);
            self.items.extend(mirrored);
        }
    }

    pub fn items(&self) -> &[Effect] {
        &self.items
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, Effect> {
        self.items.drain(..)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Progress {
    Done,
    Pending,
}

/// One process's view of a critical-section object.
pub trait CsObject {
    fn tag(&self) -> ObjectTag;

    fn state(&self) -> CsState;

    /// Starts `Exit()`. CSMIC: only legal in `InCS`.
    fn exit(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError>;

    /// Starts `Entry()`. CSMIC: only legal in `OutCS`.
    fn entry(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError>;

    /// Whether messages tagged `object` are handled by this object.
    fn accepts(&self, object: ObjectTag) -> bool;

    /// Handles a delivered message. Returns the method of this object that
    /// completed as a result, if any.
    fn deliver(&mut self, from: ProcessId, msg: &Message, fx: &mut Effects) -> Result<Option<Method>, ProtocolError>;
}
