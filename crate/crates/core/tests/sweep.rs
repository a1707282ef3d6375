use std::path::Path;

use qo2::fss::Observable;
use qo2::mps::DmrgSettings;
use qo2::observables::EngineConfig;
use qo2::sweep::{load_series, read_csv, run_plan, sorted, write_csv, RecordStore, RunOptions, SweepPlan, SweepRecord};
use qo2::Error;

fn ed_plan(id: &str, lengths: Vec<usize>) -> SweepPlan {
    SweepPlan {
        id: id.into(),
        variant: "u".into(),
        jz: None,
        spin: 1,
        lengths,
        window: [0.9, 0.91],
        grid_step: 1e-3,
        delta: 5e-4,
        warm_start: true,
        engine: EngineConfig::Ed,
        output: None,
    }
}

fn stripped(store: &RecordStore) -> Vec<SweepRecord> {
    sorted(store.load_all().unwrap()).into_iter().map(|r| r.without_timestamp()).collect()
}

fn store_in(dir: &Path) -> RecordStore {
    RecordStore::open(dir).unwrap()
}

#[test]
fn plan_fills_every_grid_point_once() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    let plan = ed_plan("p", vec![4, 6]);
    let s = run_plan(&plan, &store, &RunOptions::default()).unwrap();
    assert_eq!((s.total, s.computed, s.pending, s.already_present), (22, 22, 22, 0));
    assert!(s.failed.is_empty());
    let all = store.load_all().unwrap();
    assert_eq!(all.len(), 22);
    let series = load_series(&all, "u", 1, 6, Observable::ChiF).unwrap();
    assert_eq!(series.len(), 11);
    assert!(series.points.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(matches!(load_series(&all, "u", 1, 8, Observable::ChiF), Err(Error::MissingData(_))));
}

#[test]
fn rerun_requires_resume_and_then_does_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    let plan = ed_plan("p", vec![4]);
    run_plan(&plan, &store, &RunOptions::default()).unwrap();
    let err = run_plan(&plan, &store, &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("--resume"));
    let s = run_plan(&plan, &store, &RunOptions { resume: true, ..RunOptions::default() }).unwrap();
    assert_eq!((s.pending, s.computed, s.already_present), (0, 0, 11));
}

#[test]
fn interrupted_run_resumes_to_the_same_store() {
    let plan = SweepPlan {
        engine: EngineConfig::Dmrg(DmrgSettings { epsilon: 1e-10, ..DmrgSettings::default() }),
        lengths: vec![8],
        ..ed_plan("d", vec![])
    };
    let full = tempfile::tempdir().unwrap();
    let full_store = store_in(full.path());
    run_plan(&plan, &full_store, &RunOptions::default()).unwrap();

    let cut = tempfile::tempdir().unwrap();
    let cut_store = store_in(cut.path());
    let first = run_plan(&plan, &cut_store, &RunOptions { stop_after: Some(4), ..RunOptions::default() }).unwrap();
    assert_eq!(first.computed, 4);
    let ckpts: Vec<_> = std::fs::read_dir(cut.path().join("checkpoints/u_S1_L8")).unwrap().collect();
    assert_eq!(ckpts.len(), 1);
    let second = run_plan(&plan, &cut_store, &RunOptions { resume: true, ..RunOptions::default() }).unwrap();
    assert_eq!((second.already_present, second.computed), (4, 7));

    let (a, b) = (stripped(&full_store), stripped(&cut_store));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.key(), y.key());
        assert!((x.energy - y.energy).abs() < 1e-10);
        assert!((x.entropy - y.entropy).abs() < 1e-8);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let plan = ed_plan("w", vec![4, 5, 6]);
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let (s1, s4) = (store_in(one.path()), store_in(four.path()));
    run_plan(&plan, &s1, &RunOptions::default()).unwrap();
    run_plan(&plan, &s4, &RunOptions { workers: 4, ..RunOptions::default() }).unwrap();
    assert_eq!(stripped(&s1), stripped(&s4));
}

#[test]
fn failures_are_logged_and_do_not_stop_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    let plan = ed_plan("f", vec![4, 16]);
    let s = run_plan(&plan, &store, &RunOptions::default()).unwrap();
    assert_eq!(s.computed, 11);
    assert_eq!(s.failed.len(), 11);
    let failures = store.load_failures("u_S1_L16").unwrap();
    assert_eq!(failures.len(), 11);
    assert!(failures[0].error.contains("exceeds the cap"));
    assert_eq!(failures[0].status, "failed");
}

#[test]
fn torn_final_line_is_dropped_and_repaired() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    run_plan(&ed_plan("t", vec![4]), &store, &RunOptions::default()).unwrap();
    let log = dir.path().join("records/u_S1_L4.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    let last = text.trim_end().rfind('\n').unwrap();
    text.truncate(last + 40);
    std::fs::write(&log, &text).unwrap();
    assert_eq!(store.load_partition("u_S1_L4").unwrap().len(), 10);
    let s = run_plan(&ed_plan("t", vec![4]), &store, &RunOptions { resume: true, ..RunOptions::default() }).unwrap();
    assert_eq!(s.computed, 1);
    assert_eq!(store.load_all().unwrap().len(), 11);
}

#[test]
fn duplicate_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    run_plan(&ed_plan("a", vec![4]), &store, &RunOptions::default()).unwrap();
    let r = store.load_partition("u_S1_L4").unwrap()[0].clone();
    store.append(&r).unwrap();
    assert!(matches!(store.load_all(), Err(Error::DuplicateKey(_))));
}

#[test]
fn csv_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_in(dir.path());
    run_plan(&ed_plan("c", vec![4]), &store, &RunOptions::default()).unwrap();
    let path = store.compact().unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back, sorted(store.load_all().unwrap()));
    let other = dir.path().join("again.csv");
    write_csv(&back, &other).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn malformed_plans_name_the_key() {
    let bad = r#"
id = "x"
variant = "u"
spin = 1
lengths = [8]
window = [0.2, 0.3]
grid_stepp = 1e-3
[engine]
kind = "ed"
"#;
    let err = SweepPlan::from_toml_str(bad, Path::new("plan.toml")).unwrap_err().to_string();
    assert!(err.contains("grid_stepp"), "{err}");
    let bad = bad.replace("grid_stepp = 1e-3\n", "").replace("[0.2, 0.3]", "[0.3, 0.2]");
    let err = SweepPlan::from_toml_str(&bad, Path::new("plan.toml")).unwrap_err().to_string();
    assert!(err.contains("window"), "{err}");
}
