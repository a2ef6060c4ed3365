//! Scripted unit-delay scenarios with hand-computed timings.

use std::collections::BTreeSet;

use lkcs_core::coterie::build_grid_coterie;
use lkcs_core::harness::{check_liveness, check_safety, measure, run, AppConfig, Outcome};
use lkcs_core::{Method, Mode, ProcessId, SimConfig, SystemSpec};

fn p(id: u32) -> ProcessId {
    ProcessId::new(id)
}

fn set(ids: &[u32]) -> BTreeSet<ProcessId> {
    ids.iter().copied().map(p).collect()
}

fn scripted(mode: Mode, initial: &[u32], steps: &[(u32, Method)]) -> lkcs_core::harness::RunReport {
    let spec = SystemSpec::new(mode, build_grid_coterie(4).unwrap(), set(initial));
    let script = steps.iter().map(|&(id, m)| (p(id), m)).collect();
    let report = run(&spec, SimConfig::new(0, 1), &AppConfig::script(script)).unwrap();
    assert_eq!(report.outcome, Outcome::Completed);
    let verdict = check_safety(&report.trace);
    assert!(verdict.is_ok(), "{:?}", verdict.violation);
    report
}

#[test]
fn mutin_exit_waits_seven_and_returns_at_six() {
    let report = scripted(Mode::Mutin { l: 1 }, &[1, 2], &[(1, Method::Exit)]);
    let m = measure(&report.trace);
    let exit = &m.invocations[0];
    assert_eq!((exit.waiting, exit.raw), (Some(7), Some(6)));
    assert!(exit.uncontended());
    // 7 message kinds, each once per quorum member
    assert_eq!(exit.messages, 7 * 3);
}

#[test]
fn mutin_entry_waits_two_when_it_releases_a_gated_exiter() {
    let report = scripted(Mode::Mutin { l: 1 }, &[1, 2], &[(1, Method::Exit), (2, Method::Exit), (1, Method::Entry)]);
    let m = measure(&report.trace);
    let entry = m.invocations.iter().find(|i| i.method == Method::Entry).unwrap();
    assert_eq!(entry.waiting, Some(2));
    let gated = m.invocations.iter().find(|i| i.process == p(2)).unwrap();
    assert!(gated.gated);
    assert!(gated.complete_tick.is_some());
}

#[test]
fn mutin_entry_without_waiters_waits_one() {
    let report = scripted(Mode::Mutin { l: 1 }, &[1, 2], &[(1, Method::Exit), (1, Method::Entry)]);
    let m = measure(&report.trace);
    assert_eq!(m.invocations[1].waiting, Some(1));
    assert_eq!(m.pair_messages, vec![8 * 3]);
}

#[test]
fn gcs_exit_waits_nine() {
    // P3 blocks on the ceiling (k = 2), then P1 leaves
    let report = scripted(Mode::Gcs { l: 1, k: 2 }, &[1, 2], &[(3, Method::Entry), (1, Method::Exit)]);
    let m = measure(&report.trace);
    let exit = m.invocations.iter().find(|i| i.process == p(1)).unwrap();
    assert_eq!(exit.waiting, Some(9));
    assert_eq!(exit.raw, Some(6));
    let entry = m.invocations.iter().find(|i| i.process == p(3)).unwrap();
    assert!(entry.gated);
}

#[test]
fn gcs_entry_waits_nine() {
    // P1 blocks on the floor (l = 1), then P2 enters
    let report = scripted(Mode::Gcs { l: 1, k: 3 }, &[1], &[(1, Method::Exit), (2, Method::Entry)]);
    let m = measure(&report.trace);
    let entry = m.invocations.iter().find(|i| i.process == p(2)).unwrap();
    assert_eq!(entry.waiting, Some(9));
    assert!(entry.uncontended());
    let exit = m.invocations.iter().find(|i| i.process == p(1)).unwrap();
    assert!(exit.gated);
}

#[test]
fn blocked_exit_is_diagnosed() {
    // P2 alone in the CS with l = 1 cannot leave
    let report = scripted(Mode::Mutin { l: 1 }, &[1, 2], &[(1, Method::Exit), (2, Method::Exit)]);
    let live = check_liveness(&report.trace, 1);
    assert!(!live.is_ok());
    let p2 = live.blocked.iter().find(|b| b.process == p(2)).unwrap();
    assert!(p2.waits.iter().any(|w| w.contains("inclusion gate")), "{p2}");
    assert_eq!(report.blocked.len(), 1);
}
