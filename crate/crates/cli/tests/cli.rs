use std::path::Path;
use std::process::{Command, Output};

use qo2::observables::measure_point_exact;
use qo2::sweep::{sorted, RecordStore};
use qo2::{fmt12, ChainSpec, ModelVariant};

fn qo2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qo2")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, name: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(name).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no '{name}' line in\n{text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const ED_PLAN: &str = r#"
id = "cli-ed"
variant = "u"
spin = 1
lengths = [4, 6]
window = [0.80, 0.82]
grid_step = 1e-3

[engine]
kind = "ed"
"#;

#[test]
fn help_and_version_exit_zero() {
    assert!(qo2(&["--help"]).status.success());
    assert!(qo2(&["sweep", "--help"]).status.success());
    assert!(qo2(&["--version"]).status.success());
    assert_eq!(qo2(&[]).status.code(), Some(1));
}

#[test]
fn ed_prints_the_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pt");
    let o = qo2(&["ed", "--S", "1", "--L", "4", "--D", "0.9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let spec = ChainSpec::new(ModelVariant::UOperator, 1, 4, 0.9).unwrap();
    let p = measure_point_exact(&spec, 5e-4).unwrap();
    assert_eq!(field(&text, "E0"), fmt12(p.energy));
    assert_eq!(field(&text, "chi_F"), fmt12(p.chi_f));
    assert_eq!(field(&text, "S'_vN"), fmt12(p.entropy_derivative));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["code_version"].as_str().unwrap().starts_with("qo2-core"));
    assert!(manifest["argv"].as_array().unwrap().len() > 3);
    assert!(out.join("point.json").exists());
}

#[test]
fn frozen_chain_has_no_fidelity_susceptibility() {
    let o = qo2(&["ed", "--S", "1", "--L", "2", "--D", "1e6"]);
    assert!(o.status.success());
    let chi: f64 = field(&stdout(&o), "chi_F").parse().unwrap();
    assert!(chi.abs() < 1e-12, "{chi}");
}

#[test]
fn bad_specs_are_usage_errors() {
    for args in [
        vec!["ed", "--S", "1", "--L", "1", "--D", "1"],
        vec!["ed", "--S", "0", "--L", "4", "--D", "1"],
        vec!["ed", "--variant", "ladder", "--jz", "0.3", "--S", "1", "--L", "4", "--D", "1"],
        vec!["ed", "--S", "1", "--L", "4", "--D", "1", "--delta", "-1"],
        vec!["dmrg", "--S", "1", "--L", "4", "--D", "1", "--epsilon", "2"],
    ] {
        let o = qo2(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
}

#[test]
fn dmrg_agrees_with_ed_on_a_short_chain() {
    let a = stdout(&qo2(&["ed", "--S", "1", "--L", "8", "--D", "1.1"]));
    let o = qo2(&["dmrg", "--S", "1", "--L", "8", "--D", "1.1", "--epsilon", "1e-12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = stdout(&o);
    let num = |t: &str, k: &str| field(t, k).parse::<f64>().unwrap();
    assert!((num(&a, "E0") - num(&b, "E0")).abs() < 1e-9);
    assert!((num(&a, "S_vN") - num(&b, "S_vN")).abs() < 1e-7);
    assert_eq!(field(&b, "converged"), "true");
}

#[test]
fn sweep_resume_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.toml", ED_PLAN);
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    let o = qo2(&["sweep", &plan, "--out", one.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("42 points, 0 present, 42 pending, 42 computed"), "{}", stdout(&o));

    let o = qo2(&["sweep", &plan, "--out", one.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--resume"));
    let o = qo2(&["sweep", &plan, "--out", one.to_str().unwrap(), "--resume"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("42 present, 0 pending"), "{}", stdout(&o));

    let o = qo2(&["sweep", &plan, "--out", four.to_str().unwrap(), "--workers", "4"]);
    assert!(o.status.success());
    let load = |p: &Path| -> Vec<_> {
        sorted(RecordStore::open_existing(p).unwrap().load_all().unwrap()).into_iter().map(|r| r.without_timestamp()).collect()
    };
    assert_eq!(load(&one), load(&four));

    let csv = dir.path().join("all.csv");
    let o = qo2(&["export", "--store", one.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 43);
}

#[test]
fn interrupted_sweep_completes_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.toml", ED_PLAN);
    let store = dir.path().join("s");
    let s = store.to_str().unwrap();
    assert!(qo2(&["sweep", &plan, "--out", s, "--stop-after", "10"]).status.success());
    let o = qo2(&["sweep", &plan, "--out", s, "--resume"]);
    assert!(stdout(&o).contains("10 present, 32 pending, 32 computed"), "{}", stdout(&o));
}

#[test]
fn malformed_plan_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "bad.toml", &ED_PLAN.replace("grid_step", "gridstep"));
    let o = qo2(&["sweep", &plan, "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gridstep"), "{}", stderr(&o));
}

fn synth_spec(position: &str, height: &str) -> String {
    format!(
        r#"
id = "synthetic"
spin = 2
lengths = [32, 64, 96, 128, 160, 192, 224, 256, 288, 320, 352, 384]

[position]
{position}

[height]
{height}
"#
    )
}

fn analysis_spec(position_model: &str, height_model: &str) -> String {
    format!(
        r#"
id = "pipeline"
spin = 2

[[fit]]
label = "positions"
model = "{position_model}"
quantity = "peak-position"

[[fit]]
label = "heights"
model = "{height_model}"
quantity = "peak-height"

[classify]
"#
    )
}

fn pipeline(dir: &Path, synth: &str, analysis: &str) -> (Output, std::path::PathBuf) {
    let store = dir.join("store");
    let out = dir.join("report");
    let o = qo2(&["synth", &write(dir, "synth.toml", synth), "--out", store.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = write(dir, "analysis.toml", analysis);
    (qo2(&["analyze", &a, "--store", store.to_str().unwrap(), "--out", out.to_str().unwrap()]), out)
}

#[test]
fn synthetic_bkt_pipeline_recovers_the_transition() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synth_spec(
        "model = \"SPRIME_POS_BKT\"\nparams = [1.0979, 3.597, 0.0, 0.0]",
        "model = \"SPRIME_HEIGHT_BKT\"\nparams = [0.00648, 3.037, 0.5, -0.3, 0.2]",
    );
    let (o, out) = pipeline(dir.path(), &synth, &analysis_spec("SPRIME_POS_BKT", "SPRIME_HEIGHT_BKT"));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("classification: BKT"), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let fit = report["fits"].as_array().unwrap().iter().find(|f| f["label"] == "positions").unwrap();
    let dc = fit["fit"]["params"][0].as_f64().unwrap();
    assert!((dc - 1.0979).abs() < 1e-3, "{dc}");
    for f in ["report.txt", "peaks.csv", "fits.csv", "curve_positions.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn synthetic_iog_heights_are_labelled_iog() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synth_spec(
        "model = \"SPRIME_POS_IOG\"\nparams = [0.353, 2.49, 0.0, 0.0]",
        "model = \"SPRIME_HEIGHT_IOG\"\nparams = [0.064, 2.0, 0.8, 0.1]",
    );
    let (o, _) = pipeline(dir.path(), &synth, &analysis_spec("SPRIME_POS_IOG", "SPRIME_HEIGHT_IOG"));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("classification: IOG"), "{}", stdout(&o));
}

#[test]
fn missing_observable_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synth_spec(
        "model = \"SPRIME_POS_BKT\"\nparams = [1.0979, 3.597, 0.0, 0.0]",
        "model = \"SPRIME_HEIGHT_BKT\"\nparams = [0.00648, 3.037, 0.5, -0.3, 0.2]",
    );
    let analysis = "id = \"x\"\nspin = 2\nlengths = [32, 40]\n";
    let (o, _) = pipeline(dir.path(), &synth, analysis);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("missing data") && err.contains("L = 40"), "{err}");
    let o = qo2(&["analyze", &write(dir.path(), "a2.toml", analysis), "--store", "/nonexistent", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(3));
}
