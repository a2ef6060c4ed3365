//! The (l,k) composition of an l-mutual-inclusion object `lmin` with a
//! k-mutual-exclusion object `kmex`, and the complement wrapper that turns
//! MUTIN(n−k) into the k-mutual-exclusion object.
//!
//! `Exit()` runs `lmin.Exit()` (may block on the floor), flips the composite
//! state, then `kmex.Exit()`. `Entry()` runs `kmex.Entry()` (may block on the
//! ceiling), flips, then `lmin.Entry()`.

use std::collections::BTreeSet;

use crate::coterie::{CoterieAssignment, ProcessId};
use crate::message::{Message, ObjectTag};
use crate::mutin::Mutin;
use crate::object::{CsObject, CsState, Effects, Method, Progress, ProtocolError};
use crate::system::ConfigError;

/// An object with the process states swapped: its `Entry()` is the inner
/// `Exit()` and vice versa.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Complement<M> {
    me: ProcessId,
    tag: ObjectTag,
    inner: M,
}

impl<M: CsObject> Complement<M> {
    pub fn new(me: ProcessId, tag: ObjectTag, inner: M) -> Self {
        Complement { me, tag, inner }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn outer(method: Method) -> Method {
        match method {
            Method::Exit => Method::Entry,
            Method::Entry => Method::Exit,
            other => other,
        }
    }

    fn mirror_flips(&self, fx: &mut Effects, mark: usize) {
        fx.mirror_flips(mark, self.inner.tag(), self.tag);
    }

    fn finish(&self, method: Method, fx: &mut Effects) {
        fx.complete(self.tag, method);
    }
}

impl<M: CsObject> CsObject for Complement<M> {
    fn tag(&self) -> ObjectTag {
        self.tag
    }

    fn state(&self) -> CsState {
        self.inner.state().flipped()
    }

    fn exit(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state() != CsState::InCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: self.tag,
                method: Method::Exit,
                state: self.state(),
            });
        }
        fx.invoke(self.tag, Method::Exit);
        let mark = fx.items().len();
        let progress = self.inner.entry(fx)?;
        self.mirror_flips(fx, mark);
        if progress == Progress::Done {
            self.finish(Method::Exit, fx);
        }
        Ok(progress)
    }

    fn entry(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state() != CsState::OutCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: self.tag,
                method: Method::Entry,
                state: self.state(),
            });
        }
        fx.invoke(self.tag, Method::Entry);
        let mark = fx.items().len();
        let progress = self.inner.exit(fx)?;
        self.mirror_flips(fx, mark);
        if progress == Progress::Done {
            self.finish(Method::Entry, fx);
        }
        Ok(progress)
    }

    fn accepts(&self, object: ObjectTag) -> bool {
        self.inner.accepts(object)
    }

    fn deliver(&mut self, from: ProcessId, msg: &Message, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        let mark = fx.items().len();
        let done = self.inner.deliver(from, msg, fx)?;
        self.mirror_flips(fx, mark);
        Ok(done.map(|m| {
            let outer = Self::outer(m);
            self.finish(outer, fx);
            outer
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GcsPhase {
    Idle,
    ExitLmin,
    ExitKmex,
    EntryKmex,
    EntryLmin,
}

/// One process's (l,k)-GCS object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gcs<L, K> {
    me: ProcessId,
    state: CsState,
    lmin: L,
    kmex: K,
    phase: GcsPhase,
}

pub type GcsProcess = Gcs<Mutin, Complement<Mutin>>;

impl<L: CsObject, K: CsObject> Gcs<L, K> {
    /// The three states must agree initially.
    pub fn new(me: ProcessId, lmin: L, kmex: K) -> Self {
        assert_eq!(lmin.state(), kmex.state(), "lmin and kmex must start in the same state");
        Gcs { me, state: lmin.state(), lmin, kmex, phase: GcsPhase::Idle }
    }

    pub fn lmin(&self) -> &L {
        &self.lmin
    }

    pub fn kmex(&self) -> &K {
        &self.kmex
    }

    pub fn phase(&self) -> GcsPhase {
        self.phase
    }

    fn after_lmin_exit(&mut self, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        self.state = CsState::OutCS;
        fx.flip(ObjectTag::Gcs, self.state);
        self.phase = GcsPhase::ExitKmex;
        match self.kmex.exit(fx)? {
            Progress::Done => Ok(Some(self.finish(Method::Exit, fx))),
            Progress::Pending => Ok(None),
        }
    }

    fn after_kmex_entry(&mut self, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        self.state = CsState::InCS;
        fx.flip(ObjectTag::Gcs, self.state);
        self.phase = GcsPhase::EntryLmin;
        match self.lmin.entry(fx)? {
            Progress::Done => Ok(Some(self.finish(Method::Entry, fx))),
            Progress::Pending => Ok(None),
        }
    }

    fn finish(&mut self, method: Method, fx: &mut Effects) -> Method {
        self.phase = GcsPhase::Idle;
        fx.complete(ObjectTag::Gcs, method);
        method
    }
}

impl<L: CsObject, K: CsObject> CsObject for Gcs<L, K> {
    fn tag(&self) -> ObjectTag {
        ObjectTag::Gcs
    }

    fn state(&self) -> CsState {
        self.state
    }

    fn exit(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state != CsState::InCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: ObjectTag::Gcs,
                method: Method::Exit,
                state: self.state,
            });
        }
        if self.phase != GcsPhase::Idle {
            return Err(ProtocolError::Busy { process: self.me, object: ObjectTag::Gcs, method: Method::Exit });
        }
        fx.invoke(ObjectTag::Gcs, Method::Exit);
        self.phase = GcsPhase::ExitLmin;
        match self.lmin.exit(fx)? {
            Progress::Done => Ok(if self.after_lmin_exit(fx)?.is_some() { Progress::Done } else { Progress::Pending }),
            Progress::Pending => Ok(Progress::Pending),
        }
    }

    fn entry(&mut self, fx: &mut Effects) -> Result<Progress, ProtocolError> {
        if self.state != CsState::OutCS {
            return Err(ProtocolError::Csmic {
                process: self.me,
                object: ObjectTag::Gcs,
                method: Method::Entry,
                state: self.state,
            });
        }
        if self.phase != GcsPhase::Idle {
            return Err(ProtocolError::Busy { process: self.me, object: ObjectTag::Gcs, method: Method::Entry });
        }
        fx.invoke(ObjectTag::Gcs, Method::Entry);
        self.phase = GcsPhase::EntryKmex;
        match self.kmex.entry(fx)? {
            Progress::Done => Ok(if self.after_kmex_entry(fx)?.is_some() { Progress::Done } else { Progress::Pending }),
            Progress::Pending => Ok(Progress::Pending),
        }
    }

    fn accepts(&self, object: ObjectTag) -> bool {
        self.lmin.accepts(object) || self.kmex.accepts(object)
    }

    fn deliver(&mut self, from: ProcessId, msg: &Message, fx: &mut Effects) -> Result<Option<Method>, ProtocolError> {
        if self.lmin.accepts(msg.object) {
            match (self.lmin.deliver(from, msg, fx)?, self.phase) {
                (Some(Method::Exit), GcsPhase::ExitLmin) => self.after_lmin_exit(fx),
                (Some(Method::Entry), GcsPhase::EntryLmin) => Ok(Some(self.finish(Method::Entry, fx))),
                _ => Ok(None),
            }
        } else if self.kmex.accepts(msg.object) {
            match (self.kmex.deliver(from, msg, fx)?, self.phase) {
                (Some(Method::Entry), GcsPhase::EntryKmex) => self.after_kmex_entry(fx),
                (Some(Method::Exit), GcsPhase::ExitKmex) => Ok(Some(self.finish(Method::Exit, fx))),
                _ => Ok(None),
            }
        } else {
            Err(ProtocolError::UnknownObject { process: self.me, object: msg.object })
        }
    }
}

/// Builds the complement of MUTIN(m) for `P_me`, where `outer_in` is the set
/// of processes in the CS of the *complement*.
pub fn make_complement(
    me: ProcessId,
    outer_tag: ObjectTag,
    inner_tag: ObjectTag,
    m: usize,
    coterie: &CoterieAssignment,
    outer_in: &BTreeSet<ProcessId>,
) -> Complement<Mutin> {
    let inner_in: BTreeSet<ProcessId> = ProcessId::all(coterie.n()).filter(|p| !outer_in.contains(p)).collect();
    Complement::new(me, outer_tag, Mutin::new(me, inner_tag, m, coterie, &inner_in))
}

/// Checks `0 ≤ l < k ≤ n` and `l ≤ |initially_in| ≤ k`.
pub fn validate_gcs(n: usize, l: usize, k: usize, initially_in: &BTreeSet<ProcessId>) -> Result<(), ConfigError> {
    if l >= k || k > n {
        return Err(ConfigError::Bounds { l, k, n });
    }
    let count = initially_in.len();
    if count < l || count > k {
        return Err(ConfigError::UnsafeInitial { count, low: l, high: k });
    }
    if let Some(bad) = initially_in.iter().find(|p| p.index() >= n) {
        return Err(ConfigError::UnknownProcess(bad.get()));
    }
    Ok(())
}

/// One (l,k)-GCS object per process: `lmin` = MUTIN(l) and `kmex` = the
/// complement of MUTIN(n−k), all three states agreeing initially.
pub fn make_gcs(
    l: usize,
    k: usize,
    coterie: &CoterieAssignment,
    initially_in: &BTreeSet<ProcessId>,
) -> Result<Vec<GcsProcess>, ConfigError> {
    let n = coterie.n();
    validate_gcs(n, l, k, initially_in)?;
    Ok(ProcessId::all(n)
        .map(|me| {
            let lmin = Mutin::new(me, ObjectTag::Lmin, l, coterie, initially_in);
            let kmex = make_complement(me, ObjectTag::Kmex, ObjectTag::KmexInner, n - k, coterie, initially_in);
            Gcs::new(me, lmin, kmex)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coterie::build_grid_coterie;
    use crate::object::Effect;

    fn set(ids: &[u32]) -> BTreeSet<ProcessId> {
        ids.iter().copied().map(ProcessId::new).collect()
    }

    #[test]
    fn complement_construction_inverts_initial_states() {
        let c = build_grid_coterie(4).unwrap();
        let procs = make_gcs(1, 3, &c, &set(&[1, 2])).unwrap();
        let lmin_in = procs.iter().filter(|g| g.lmin().state() == CsState::InCS).count();
        assert_eq!(lmin_in, 2);
        for g in &procs {
            assert_eq!(g.state(), g.lmin().state());
            assert_eq!(g.state(), g.kmex().state());
        }
        let inner_in: BTreeSet<ProcessId> =
            ProcessId::all(4).filter(|p| procs[p.index()].kmex().inner().state() == CsState::InCS).collect();
        assert_eq!(inner_in, set(&[3, 4]));
        assert_eq!(procs[0].kmex().inner().l(), 1);
        // inner knowledge is built from the complement set
        for g in &procs {
            let inner = g.kmex().inner();
            assert!(inner.procs_in_cs().is_subset(&set(&[3, 4])));
        }
    }

    #[test]
    fn configuration_errors() {
        let c = build_grid_coterie(4).unwrap();
        assert!(make_gcs(1, 3, &c, &set(&[1])).is_ok());
        assert_eq!(
            make_gcs(1, 3, &c, &set(&[1, 2, 3, 4])).unwrap_err(),
            ConfigError::UnsafeInitial { count: 4, low: 1, high: 3 }
        );
        assert_eq!(make_gcs(3, 3, &c, &set(&[1, 2, 3])).unwrap_err(), ConfigError::Bounds { l: 3, k: 3, n: 4 });
        assert_eq!(make_gcs(0, 5, &c, &set(&[])).unwrap_err(), ConfigError::Bounds { l: 0, k: 5, n: 4 });
    }

    #[test]
    fn co_exit_never_blocks_and_mirrors_flips() {
        let c = build_grid_coterie(4).unwrap();
        // outer InCS = {1}; inner MUTIN(2) sees {2,3,4}
        let mut co = make_complement(ProcessId::new(1), ObjectTag::CoMutin, ObjectTag::CoMutinInner, 2, &c, &set(&[1]));
        assert_eq!(co.state(), CsState::InCS);
        let mut fx = Effects::new();
        assert_eq!(co.exit(&mut fx).unwrap(), Progress::Done);
        assert_eq!(co.state(), CsState::OutCS);
        let flips: Vec<_> = fx
            .items()
            .iter()
            .filter_map(|e| match e {
                Effect::Flip { object, state } => Some((*object, *state)),
                _ => None,
            })
            .collect();
        assert_eq!(flips, vec![(ObjectTag::CoMutinInner, CsState::InCS), (ObjectTag::CoMutin, CsState::OutCS)]);
        assert!(matches!(
            fx.items().last(),
            Some(Effect::Complete { object: ObjectTag::CoMutin, method: Method::Exit })
        ));
    }

    #[test]
    fn gcs_csmic_is_enforced() {
        let c = build_grid_coterie(4).unwrap();
        let mut procs = make_gcs(1, 3, &c, &set(&[1, 2])).unwrap();
        let mut fx = Effects::new();
        assert!(matches!(procs[2].exit(&mut fx), Err(ProtocolError::Csmic { .. })));
        assert!(matches!(procs[0].entry(&mut fx), Err(ProtocolError::Csmic { .. })));
    }
}
