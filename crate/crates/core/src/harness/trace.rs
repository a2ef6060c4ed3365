use std::collections::BTreeSet;
use std::fmt;
use std::io;

use crate::coterie::{format_set, ProcessId};
use crate::message::{Message, ObjectTag};
use crate::object::{CsState, Method};
use crate::simnet::SimTime;
use crate::system::Mode;

/// One line of an execution trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Record {
    /// Initial state of one object; `procs_in_cs` is set for MUTIN instances.
    Init {
        process: ProcessId,
        object: ObjectTag,
        state: CsState,
        procs_in_cs: Option<BTreeSet<ProcessId>>,
    },
    /// `cause` is the sequence number of the delivery whose handler sent the
    /// message, or `None` for a send made inside a driver invocation.
    Send {
        tick: SimTime,
        seq: u64,
        from: ProcessId,
        to: ProcessId,
        msg: Message,
        deliver_at: SimTime,
        cause: Option<u64>,
    },
    Recv {
        tick: SimTime,
        seq: u64,
        from: ProcessId,
        to: ProcessId,
        msg: Message,
    },
    Invoke {
        tick: SimTime,
        process: ProcessId,
        object: ObjectTag,
        method: Method,
    },
    Complete {
        tick: SimTime,
        process: ProcessId,
        object: ObjectTag,
        method: Method,
    },
    Flip {
        tick: SimTime,
        process: ProcessId,
        object: ObjectTag,
        state: CsState,
    },
    Note {
        tick: SimTime,
        process: ProcessId,
        object: ObjectTag,
        text: String,
    },
}

impl Record {
    pub fn tick(&self) -> SimTime {
        match self {
            Record::Init { .. } => 0,
            Record::Send { tick, .. }
            | Record::Recv { tick, .. }
            | Record::Invoke { tick, .. }
            | Record::Complete { tick, .. }
            | Record::Flip { tick, .. }
            | Record::Note { tick, .. } => *tick,
        }
    }
}

/// Formats as `tick seq kind from to payload-tag detail`.
impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::Init { process, object, state, procs_in_cs } => {
                write!(f, "0 - init {process} - {object} state={state}")?;
                if let Some(set) = procs_in_cs {
                    write!(f, ";procsInCS={}", format_set(set))?;
                }
                Ok(())
            }
            Record::Send { tick, seq, from, to, msg, deliver_at, cause } => {
                write!(f, "{tick} {seq} send {from} {to} {} ", msg.payload_tag())?;
                let detail = msg.detail();
                if detail != "-" {
                    write!(f, "{detail};")?;
                }
                write!(f, "at={deliver_at};cause=")?;
                match cause {
                    Some(c) => write!(f, "{c}"),
                    None => f.write_str("-"),
                }
            }
            Record::Recv { tick, seq, from, to, msg } => {
                write!(f, "{tick} {seq} recv {from} {to} {} {}", msg.payload_tag(), msg.detail())
            }
            Record::Invoke { tick, process, object, method } => {
                write!(f, "{tick} - invoke {process} - {object}.{method} -")
            }
            Record::Complete { tick, process, object, method } => {
                write!(f, "{tick} - complete {process} - {object}.{method} -")
            }
            Record::Flip { tick, process, object, state } => {
                write!(f, "{tick} - flip {process} - {object} state={state}")
            }
            Record::Note { tick, process, object, text } => {
                write!(f, "{tick} - note {process} - {object} {text}")
            }
        }
    }
}

/// A complete run: the system shape followed by the ordered records.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub n: usize,
    pub mode: Mode,
    /// Largest quorum of the coterie the run used.
    pub quorum_size: usize,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn new(n: usize, mode: Mode, quorum_size: usize) -> Self {
        Trace { n, mode, quorum_size, records: Vec::new() }
    }

    pub fn header(&self) -> String {
        format!("# n={} {} q={}", self.n, self.mode, self.quorum_size)
    }

    pub fn write_text<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header())?;
        for r in &self.records {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace text is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{MutexMessage, MutinMessage};

    fn p(id: u32) -> ProcessId {
        ProcessId::new(id)
    }

    #[test]
    fn record_lines() {
        let init = Record::Init {
            process: p(1),
            object: ObjectTag::Lmin,
            state: CsState::InCS,
            procs_in_cs: Some([p(1), p(2)].into_iter().collect()),
        };
        assert_eq!(init.to_string(), "0 - init 1 - lmin state=InCS;procsInCS={1,2}");
        let send = Record::Send {
            tick: 3,
            seq: 17,
            from: p(1),
            to: p(2),
            msg: Message::mutin(ObjectTag::Lmin, MutinMessage::Query { req_cnt: 1 }),
            deliver_at: 4,
            cause: Some(12),
        };
        assert_eq!(send.to_string(), "3 17 send 1 2 lmin.Query reqCnt=1;at=4;cause=12");
        let send = Record::Send {
            tick: 0,
            seq: 0,
            from: p(1),
            to: p(1),
            msg: Message::mx(ObjectTag::Mutin, MutexMessage::Release),
            deliver_at: 1,
            cause: None,
        };
        assert_eq!(send.to_string(), "0 0 send 1 1 mutin.MxRelease at=1;cause=-");
        let inv = Record::Invoke { tick: 2, process: p(3), object: ObjectTag::KmexInner, method: Method::MxEntry };
        assert_eq!(inv.to_string(), "2 - invoke 3 - kmex.inner.mx.Entry -");
    }
}
