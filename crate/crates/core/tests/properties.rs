use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use lkcs_core::coterie::verify_coterie;
use lkcs_core::harness::campaign::random_initial;
use lkcs_core::harness::trace::Record;
use lkcs_core::harness::{check_liveness, check_safety, measure, run, AppConfig, Outcome};
use lkcs_core::{CoterieAssignment, CoterieKind, CsState, Mode, ProcessId, SimConfig, SystemSpec};

fn kind() -> impl Strategy<Value = CoterieKind> {
    prop_oneof![Just(CoterieKind::Grid), Just(CoterieKind::Majority), Just(CoterieKind::Single)]
}

fn coterie(kind: CoterieKind, size: usize) -> CoterieAssignment {
    let n = match kind {
        CoterieKind::Grid => size * size,
        _ => size,
    };
    kind.build(n).unwrap()
}

/// A mode valid for `n`, from raw draws.
fn mode(which: u8, a: usize, b: usize, n: usize) -> Mode {
    match which % 3 {
        0 => {
            let k = 1 + b % n;
            Mode::Gcs { l: a % k, k }
        }
        1 => Mode::Mutin { l: a % n },
        _ => Mode::CoMutin { m: a % n },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constructed_coteries_are_valid(kind in kind(), size in 1usize..=6) {
        let c = coterie(kind, size);
        prop_assert!(verify_coterie(&c).is_ok());
        for p in ProcessId::all(c.n()) {
            prop_assert!(c.quorum(p).contains(p));
            for q in ProcessId::all(c.n()) {
                prop_assert_eq!(c.readers(p).contains(&q), c.quorum(q).contains(p));
            }
        }
        prop_assert_eq!(CoterieAssignment::parse_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn gcs_bounds_are_validated(n in 1usize..8, l in 0usize..9, k in 0usize..9) {
        let c = CoterieKind::Majority.build(n).unwrap();
        let initial: BTreeSet<_> = ProcessId::all(n).take(l.min(n)).collect();
        let ok = SystemSpec::new(Mode::Gcs { l, k }, c, initial).validate().is_ok();
        prop_assert_eq!(ok, l < k && k <= n);
    }

    #[test]
    fn random_runs_are_safe_live_and_consistent(
        kind in kind(),
        size in 2usize..=3,
        which in any::<u8>(),
        a in any::<usize>(),
        b in any::<usize>(),
        seed in any::<u64>(),
        delay in 1u64..=20,
        think in 0u64..=4,
    ) {
        let c = coterie(kind, size);
        let n = c.n();
        let mode = mode(which, a, b, n);
        let spec = SystemSpec::new(mode, c, random_initial(mode, n, seed));
        let app = AppConfig::random(3, think);
        let report = run(&spec, SimConfig::new(seed, delay), &app).unwrap();
        prop_assert_eq!(report.outcome, Outcome::Completed);
        let safety = check_safety(&report.trace);
        prop_assert!(safety.is_ok(), "{:?}", safety.violation);
        prop_assert!(check_liveness(&report.trace, 3).is_ok());

        // time never runs backwards; every send is delivered later, in link order
        let mut last = 0;
        let mut link_tail: HashMap<(ProcessId, ProcessId), u64> = HashMap::new();
        let mut sends = 0;
        let mut flips: HashMap<(ProcessId, String), CsState> = HashMap::new();
        for r in &report.trace.records {
            prop_assert!(r.tick() >= last);
            last = r.tick();
            match r {
                Record::Send { tick, from, to, deliver_at, .. } => {
                    sends += 1;
                    prop_assert!(*deliver_at > *tick);
                    let tail = link_tail.entry((*from, *to)).or_default();
                    prop_assert!(*deliver_at >= *tail);
                    *tail = *deliver_at;
                }
                Record::Flip { process, object, state, .. } => {
                    let prev = flips.insert((*process, object.name().to_string()), *state);
                    prop_assert_ne!(prev, Some(*state));
                }
                _ => {}
            }
        }
        prop_assert_eq!(measure(&report.trace).messages_total, sends);

        let again = run(&spec, SimConfig::new(seed, delay), &app).unwrap();
        prop_assert_eq!(again.trace.to_text(), report.trace.to_text());
    }
}
