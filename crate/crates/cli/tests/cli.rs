use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lkcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lkcs")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn serialized_mutin_reports_exit_waiting_seven() {
    let o =
        lkcs(&["--mode", "mutin", "--n", "4", "--l", "1", "--max-delay", "1", "--seeds", "1", "--contention", "none"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("exit_waiting_uncontended_max=7\n"), "{out}");
    assert!(out.contains("result=pass"));
}

#[test]
fn equal_floor_and_ceiling_is_rejected() {
    let o = lkcs(&["--mode", "gcs", "--n", "4", "--l", "3", "--k", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("l < k"));
}

#[test]
fn mutin_floor_must_be_below_n() {
    let o = lkcs(&["--mode", "mutin", "--n", "4", "--l", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gcs_campaign_passes() {
    let o = lkcs(&["--mode", "gcs", "--n", "9", "--l", "2", "--k", "5", "--coterie", "grid", "--seeds", "20"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("runs=20 failures=0"));
}

fn traces(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn traces_are_byte_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = lkcs(&[
            "--mode",
            "gcs",
            "--n",
            "4",
            "--l",
            "1",
            "--k",
            "3",
            "--seed",
            "7",
            "--seeds",
            "3",
            "--max-delay",
            "1,20",
            "--trace-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let (ta, tb) = (traces(a.path()), traces(b.path()));
    assert_eq!(ta.len(), 6);
    assert_eq!(ta, tb);
    assert!(ta.iter().any(|(name, _)| name == "trace-s8-d20.txt"));
}

#[test]
fn metrics_files_are_written_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = lkcs(&[
        "--mode",
        "comutin",
        "--n",
        "3",
        "--k",
        "2",
        "--coterie",
        "single",
        "--seeds",
        "2",
        "--metrics-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = fs::read_to_string(dir.path().join("metrics-s1-d5.txt")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("messages_per_pair=")));
}

#[test]
fn coterie_file_and_explicit_initial_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.txt");
    fs::write(&path, "1: 1 2\n2: 2 3\n3: 1 3\n").unwrap();
    let o = lkcs(&[
        "--mode",
        "gcs",
        "--n",
        "3",
        "--l",
        "1",
        "--k",
        "2",
        "--coterie-file",
        path.to_str().unwrap(),
        "--initial-incs",
        "1,3",
        "--seeds",
        "3",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("initial={1,3}"));
}

#[test]
fn explore_finds_the_broken_gate() {
    let ok = lkcs(&["--mode", "explore", "--n", "2", "--l", "0", "--k", "1", "--coterie", "majority"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let broken =
        lkcs(&["--mode", "explore", "--n", "2", "--l", "0", "--k", "1", "--coterie", "majority", "--skip-gate"]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(stdout(&broken).contains("violation"));
}
