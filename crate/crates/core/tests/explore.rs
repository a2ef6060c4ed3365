use lkcs_core::coterie::build_majority_coterie;
use lkcs_core::harness::explore::{explore_all_initial, safe_initial_configurations, DEFAULT_STATE_CAP};
use lkcs_core::{Gate, Mode};

#[test]
fn two_process_mutex_is_safe_exhaustively() {
    let c = build_majority_coterie(2).unwrap();
    let reports = explore_all_initial(Mode::Gcs { l: 0, k: 1 }, &c, Gate::Enforced, 1, DEFAULT_STATE_CAP).unwrap();
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert!(r.is_safe(), "{:?}", r.violation);
        assert!(!r.capped);
        assert!(r.completed > 0);
    }
}

#[test]
fn removing_the_inclusion_gate_is_caught() {
    let c = build_majority_coterie(2).unwrap();
    let reports = explore_all_initial(Mode::Gcs { l: 0, k: 1 }, &c, Gate::Skipped, 1, DEFAULT_STATE_CAP).unwrap();
    let v = reports.iter().find_map(|r| r.violation.clone()).expect("violation");
    assert!(v.description.starts_with("#gcs = 2"), "{}", v.description);
}

#[test]
fn safe_initial_sets() {
    assert_eq!(safe_initial_configurations(Mode::Gcs { l: 1, k: 2 }, 3).len(), 6);
    assert_eq!(safe_initial_configurations(Mode::Mutin { l: 0 }, 2).len(), 4);
    assert_eq!(safe_initial_configurations(Mode::CoMutin { m: 2 }, 3).len(), 4);
}
