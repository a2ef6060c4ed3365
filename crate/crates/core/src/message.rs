//! Wire vocabulary shared by every protocol object.

use std::collections::BTreeSet;
use std::fmt;

use crate::coterie::{format_set, ProcessId};

/// Names a critical-section object (or the inner object of a complement).
///
/// Messages carry the tag of the MUTIN instance that owns them, so one
/// process can host several independent instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectTag {
    Gcs,
    Lmin,
    Kmex,
    KmexInner,
    Mutin,
    CoMutin,
    CoMutinInner,
}

impl ObjectTag {
    pub fn name(self) -> &'static str {
        match self {
            ObjectTag::Gcs => "gcs",
            ObjectTag::Lmin => "lmin",
            ObjectTag::Kmex => "kmex",
            ObjectTag::KmexInner => "kmex.inner",
            ObjectTag::Mutin => "mutin",
            ObjectTag::CoMutin => "comutin",
            ObjectTag::CoMutinInner => "comutin.inner",
        }
    }

    /// Tags of objects that run the MUTIN protocol themselves.
    pub fn is_mutin_instance(self) -> bool {
        matches!(self, ObjectTag::Lmin | ObjectTag::KmexInner | ObjectTag::Mutin | ObjectTag::CoMutinInner)
    }
}

impl fmt::Display for ObjectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maekawa vocabulary for the embedded mutual-exclusion object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MutexMessage {
    Request { ts: u64 },
    Locked,
    Failed,
    Inquire,
    Relinquish,
    Release,
}

impl MutexMessage {
    pub fn tag(&self) -> &'static str {
        match self {
            MutexMessage::Request { .. } => "Request",
            MutexMessage::Locked => "Locked",
            MutexMessage::Failed => "Failed",
            MutexMessage::Inquire => "Inquire",
            MutexMessage::Relinquish => "Relinquish",
            MutexMessage::Release => "MxRelease",
        }
    }
}

/// MUTIN(l) vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MutinMessage {
    Query { req_cnt: u64 },
    Response1 { procs_in_cs: BTreeSet<ProcessId>, req_cnt: u64 },
    Acquire,
    Ack,
    Release,
    Response2 { procs_in_cs: BTreeSet<ProcessId>, req_cnt: u64 },
}

impl MutinMessage {
    pub fn tag(&self) -> &'static str {
        match self {
            MutinMessage::Query { .. } => "Query",
            MutinMessage::Response1 { .. } => "Response1",
            MutinMessage::Acquire => "Acquire",
            MutinMessage::Ack => "Ack",
            MutinMessage::Release => "Release",
            MutinMessage::Response2 { .. } => "Response2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Body {
    Mx(MutexMessage),
    In(MutinMessage),
}

/// A protocol message; the sender is carried by the envelope.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Message {
    pub object: ObjectTag,
    pub body: Body,
}

impl Message {
    pub fn mx(object: ObjectTag, m: MutexMessage) -> Self {
        Message { object, body: Body::Mx(m) }
    }

    pub fn mutin(object: ObjectTag, m: MutinMessage) -> Self {
        Message { object, body: Body::In(m) }
    }

    /// Bare message name, e.g. `Query` or `MxRelease`.
    pub fn kind(&self) -> &'static str {
        match &self.body {
            Body::Mx(m) => m.tag(),
            Body::In(m) => m.tag(),
        }
    }

    /// Trace tag, e.g. `lmin.Query`.
    pub fn payload_tag(&self) -> String {
        format!("{}.{}", self.object, self.kind())
    }

    /// Field summary without spaces, `-` when the message has no fields.
    pub fn detail(&self) -> String {
        match &self.body {
            Body::Mx(MutexMessage::Request { ts }) => format!("ts={ts}"),
            Body::In(MutinMessage::Query { req_cnt }) => format!("reqCnt={req_cnt}"),
            Body::In(MutinMessage::Response1 { procs_in_cs, req_cnt })
            | Body::In(MutinMessage::Response2 { procs_in_cs, req_cnt }) => {
                format!("procsInCS={};reqCnt={}", format_set(procs_in_cs), req_cnt)
            }
            _ => "-".to_string(),
        }
    }
}
