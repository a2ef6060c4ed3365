//! Whole-system configuration: which protocol every process runs, over which
//! coterie, from which initial configuration.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::coterie::{CoterieAssignment, ProcessId};
use crate::gcs::{make_complement, validate_gcs, Complement, Gcs, GcsProcess};
use crate::message::{Message, ObjectTag};
use crate::mutin::{Gate, Mutin};
use crate::object::{CsObject, CsState, Effects, Method, Progress, ProtocolError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("need 0 <= l < k <= n, got l={l} k={k} n={n}")]
    Bounds { l: usize, k: usize, n: usize },
    #[error("need l < n for MUTIN(l), got l={l} n={n}")]
    InclusionBound { l: usize, n: usize },
    #[error("unsafe initial configuration: {count} processes in the CS, need {low}..={high}")]
    UnsafeInitial { count: usize, low: usize, high: usize },
    #[error("process {0} is not part of the system")]
    UnknownProcess(u32),
}

/// The protocol every process runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Standalone MUTIN(l).
    Mutin { l: usize },
    /// Standalone complement of MUTIN(m), an (n−m)-mutual exclusion.
    CoMutin { m: usize },
    /// The (l,k) composition.
    Gcs { l: usize, k: usize },
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Mutin { l } => write!(f, "mutin l={l}"),
            Mode::CoMutin { m } => write!(f, "comutin m={m}"),
            Mode::Gcs { l, k } => write!(f, "gcs l={l} k={k}"),
        }
    }
}

impl Mode {
    pub fn top_tag(self) -> ObjectTag {
        match self {
            Mode::Mutin { .. } => ObjectTag::Mutin,
            Mode::CoMutin { .. } => ObjectTag::CoMutin,
            Mode::Gcs { .. } => ObjectTag::Gcs,
        }
    }

    /// Admissible range of the top-level InCS count, `(floor, ceiling)`.
    pub fn bounds(self, n: usize) -> (usize, usize) {
        match self {
            Mode::Mutin { l } => (l, n),
            Mode::CoMutin { m } => (0, n.saturating_sub(m)),
            Mode::Gcs { l, k } => (l, k),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub mode: Mode,
    pub coterie: CoterieAssignment,
    /// Processes in the CS of the top-level object initially.
    pub initially_in: BTreeSet<ProcessId>,
    pub gate: Gate,
}

impl SystemSpec {
    pub fn new(mode: Mode, coterie: CoterieAssignment, initially_in: BTreeSet<ProcessId>) -> Self {
        SystemSpec { mode, coterie, initially_in, gate: Gate::Enforced }
    }

    pub fn n(&self) -> usize {
        self.coterie.n()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n();
        if let Some(bad) = self.initially_in.iter().find(|p| p.index() >= n) {
            return Err(ConfigError::UnknownProcess(bad.get()));
        }
        let count = self.initially_in.len();
        match self.mode {
            Mode::Gcs { l, k } => validate_gcs(n, l, k, &self.initially_in),
            Mode::Mutin { l } | Mode::CoMutin { m: l } => {
                if l >= n {
                    return Err(ConfigError::InclusionBound { l, n });
                }
                let (low, high) = self.mode.bounds(n);
                if count < low || count > high {
                    return Err(ConfigError::UnsafeInitial { count, low, high });
                }
                Ok(())
            }
        }
    }

    /// Instantiates one object per process.
    pub fn build(&self) -> Result<Vec<ProcessObject>, ConfigError> {
        self.validate()?;
        let c = &self.coterie;
        let objects = match self.mode {
            Mode::Mutin { l } => ProcessId::all(self.n())
                .map(|me| {
                    ProcessObject::Mutin(
                        Mutin::new(me, ObjectTag::Mutin, l, c, &self.initially_in).with_gate(self.gate),
                    )
                })
                .collect(),
            Mode::CoMutin { m } => ProcessId::all(self.n())
                .map(|me| {
                    let co = make_complement(me, ObjectTag::CoMutin, ObjectTag::CoMutinInner, m, c, &self.initially_in);
                    let inner = co.inner().clone().with_gate(self.gate);
                    ProcessObject::CoMutin(Complement::new(me, ObjectTag::CoMutin, inner))
                })
                .collect(),
            Mode::Gcs { l, k } => {
                let n = self.n();
                ProcessId::all(n)
                    .map(|me| {
                        let lmin = Mutin::new(me, ObjectTag::Lmin, l, c, &self.initially_in).with_gate(self.gate);
                        let co =
                            make_complement(me, ObjectTag::Kmex, ObjectTag::KmexInner, n - k, c, &self.initially_in);
                        let kmex = Complement::new(me, ObjectTag::Kmex, co.inner().clone().with_gate(self.gate));
                        ProcessObject::Gcs(Gcs::new(me, lmin, kmex))
                    })
                    .collect()
            }
        };
        Ok(objects)
    }
}

/// The top-level object of one process.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[allow(clippy::large_enum_variant)]
pub enum ProcessObject {
    Mutin(Mutin),
    CoMutin(Complement<Mutin>),
    Gcs(GcsProcess),
}

impl ProcessObject {
    /// States of every (sub-)object, outer objects first.
    pub fn states(&self) -> Vec<(ObjectTag, CsState)> {
        match self {
            ProcessObject::Mutin(m) => vec![(ObjectTag::Mutin, m.state())],
            ProcessObject::CoMutin(c) => {
                vec![(ObjectTag::CoMutin, c.state()), (ObjectTag::CoMutinInner, c.inner().state())]
            }
            ProcessObject::Gcs(g) => vec![
                (ObjectTag::Gcs, g.state()),
                (ObjectTag::Lmin, g.lmin().state()),
                (ObjectTag::Kmex, g.kmex().state()),
                (ObjectTag::KmexInner, g.kmex().inner().state()),
            ],
        }
    }

    /// The MUTIN instances hosted by this process.
    pub fn mutins(&self) -> Vec<&Mutin> {
        match self {
            ProcessObject::Mutin(m) => vec![m],
            ProcessObject::CoMutin(c) => vec![c.inner()],
            ProcessObject::Gcs(g) => vec![g.lmin(), g.kmex().inner()],
        }
    }

    /// Describes the innermost wait of a blocked method, if any.
    pub fn describe_wait(&self) -> Option<String> {
        self.mutins()
            .into_iter()
            .find(|m| m.phase() != crate::mutin::ExitPhase::Idle)
            .map(|m| format!("{}: {}", m.tag(), m.describe_wait()))
    }
}

impl CsObject for ProcessObject {
    fn tag(&self) -> ObjectTag {
        match self {
            ProcessObject::Mutin(m) => m.tag(),
            ProcessObject::CoMutin(c) => c.tag(),
            ProcessObject::Gcs(g) => g.tag(),
        }
    }

    fn state(&self) -> CsState {
        match self {
            ProcessObject::Mutin(m) => m.state(),
            ProcessObject::CoMutin(c) => c.state(),
            ProcessObject::Gcs(g) => g.state(),
        }
    }

    fn exit(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        match self {
            ProcessObject::Mutin(m) => m.exit(fx),
            ProcessObject::CoMutin(c) => c.exit(fx),
            ProcessObject::Gcs(g) => g.exit(fx),
        }
    }

    fn entry(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        match self {
            ProcessObject::Mutin(m) => m.entry(fx),
            ProcessObject::CoMutin(c) => c.entry(fx),
            ProcessObject::Gcs(g) => g.entry(fx),
        }
    }

    fn accepts(&self, object: ObjectTag) -> bool {
        match self {
            ProcessObject::Mutin(m) => m.accepts(object),
            ProcessObject::CoMutin(c) => c.accepts(object),
            ProcessObject::Gcs(g) => g.accepts(object),
        }
    }

    fn deliver(&mut self, from: ProcessId, msg: &Message, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        match self {
            ProcessObject::Mutin(m) => m.deliver(from, msg, fx),
            ProcessObject::CoMutin(c) => c.deliver(from, msg, fx),
            ProcessObject::Gcs(g) => g.deliver(from, msg, fx),
        }
    }
}
