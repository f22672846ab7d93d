use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ehrtwin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ehrtwin"));
    cmd.args(args).env_remove("EHRTWIN_DEFAULT_TIMESTAMP");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ehrtwin(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn tables() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/tables")
}

fn note_dir(root: &Path, notes: &[(&str, &str)]) -> PathBuf {
    let dir = root.join("notes");
    fs::create_dir_all(&dir).unwrap();
    for (name, text) in notes {
        fs::write(dir.join(format!("{name}.txt")), text).unwrap();
    }
    dir
}

#[test]
fn empty_notes_dir_gives_empty_output() {
    let root = tempfile::tempdir().unwrap();
    let notes = note_dir(root.path(), &[]);
    let out = root.path().join("out");
    ok(&["extract", s(&notes), "--out", s(&out)]);
    ok(&["twin", s(&notes), "--out", s(&out)]);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn unknown_terms_give_empty_annotations() {
    let root = tempfile::tempdir().unwrap();
    let notes = note_dir(root.path(), &[("n1", "The weather was pleasant and nothing happened.")]);
    let out = root.path().join("out");
    ok(&["extract", s(&notes), "--out", s(&out)]);
    let a = json(&out.join("n1.annotations.json"));
    assert_eq!(a["mentions"], Value::Array(vec![]));
    assert_eq!(a["relations"], Value::Array(vec![]));
}

#[test]
fn invalid_resources_are_reported_and_left_out() {
    let root = tempfile::tempdir().unwrap();
    // A bare observation name has no value, so its Observation fails O2.
    let notes = note_dir(root.path(), &[("p9", "Patient has asthma. Glucose pending.")]);
    let out = root.path().join("out");
    ok(&["twin", s(&notes), "--out", s(&out)]);
    let bundle = json(&out.join("twin_p9.json"));
    let types: Vec<&str> = bundle["entry"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["resource"]["resourceType"].as_str().unwrap())
        .collect();
    assert_eq!(types, ["Patient", "Condition"]);
    let issues = json(&out.join("issues_p9.json"));
    assert!(issues
        .as_array()
        .unwrap()
        .iter()
        .any(|i| i["rule"] == "O2" && i["severity"] == "ERROR"));

    ok(&["twin", s(&notes), "--out", s(&out), "--no-validate"]);
    let bundle = json(&out.join("twin_p9.json"));
    assert_eq!(bundle["entry"].as_array().unwrap().len(), 3);
}

#[test]
fn timestamp_comes_from_the_environment() {
    let root = tempfile::tempdir().unwrap();
    let notes = note_dir(root.path(), &[("p1", "Started Aspirin 81 mg daily.")]);
    let out = root.path().join("out");
    let run = ehrtwin(
        &["twin", s(&notes), "--out", s(&out)],
        &[("EHRTWIN_DEFAULT_TIMESTAMP", "2031-05-06T07:08:09Z")],
    );
    assert!(run.status.success());
    let bundle = json(&out.join("twin_p1.json"));
    assert_eq!(bundle["entry"][1]["resource"]["authoredOn"], "2031-05-06T07:08:09Z");
    // Still a substituted value, so it is flagged as a warning only.
    let issues = json(&out.join("issues_p1.json"));
    assert_eq!(issues.as_array().unwrap().len(), 1);
    assert_eq!(issues[0]["rule"], "M2");
    assert_eq!(issues[0]["severity"], "WARNING");
}

#[test]
fn missing_labevents_still_synthesizes() {
    let root = tempfile::tempdir().unwrap();
    let t = root.path().join("tables");
    fs::create_dir_all(&t).unwrap();
    for f in ["diagnoses.csv", "prescriptions.csv"] {
        fs::copy(tables().join(f), t.join(f)).unwrap();
    }
    let out = root.path().join("corpus");
    let run = ok(&["synthesize", s(&t), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("labevents.csv"));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["warnings"].as_array().unwrap().len(), 1);
    for entry in fs::read_dir(out.join("reference")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains("\"Observation\""));
    }
}

#[test]
fn bad_inputs_fail_with_nonzero_exit() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("o");
    let run = ehrtwin(&["synthesize", s(&tables()), "--out", s(&out), "--split", "0.8,0.3,0.1"], &[]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("ratios"));

    let run = ehrtwin(&["synthesize", s(root.path()), "--out", s(&out)], &[]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("diagnoses.csv"));

    fs::create_dir_all(root.path().join("empty/notes")).unwrap();
    let run = ehrtwin(&["evaluate", s(&root.path().join("empty")), "--out", s(&out)], &[]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("empty"));
}

#[test]
fn config_file_sets_flags_and_paths() {
    let root = tempfile::tempdir().unwrap();
    fs::write(root.path().join("cues.txt"), "because of\n").unwrap();
    fs::write(
        root.path().join("run.toml"),
        "cues = \"cues.txt\"\nout = \"from-config\"\ndisable_relations = true\n",
    )
    .unwrap();
    let corpus = root.path().join("corpus");
    ok(&["synthesize", s(&tables()), "--out", s(&corpus)]);
    let cfg = root.path().join("run.toml");
    ok(&["evaluate", s(&corpus), "--config", s(&cfg)]);
    let report = json(&root.path().join("from-config/report.json"));
    assert_eq!(report["configuration"], "no-relations");
    assert!(report["re_f1"].is_null());
    let summary = fs::read_to_string(root.path().join("from-config/summary.tsv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("no-relations\t1.0000\t--\t"));
}

#[test]
fn rerunning_into_the_same_directory_is_idempotent() {
    let root = tempfile::tempdir().unwrap();
    let corpus = root.path().join("corpus");
    ok(&["synthesize", s(&tables()), "--out", s(&corpus), "--seed", "5"]);
    let first = fs::read(corpus.join("manifest.json")).unwrap();
    let note = fs::read(corpus.join("notes/note-p002.json")).unwrap();
    ok(&["synthesize", s(&tables()), "--out", s(&corpus), "--seed", "5", "--sequential"]);
    assert_eq!(first, fs::read(corpus.join("manifest.json")).unwrap());
    assert_eq!(note, fs::read(corpus.join("notes/note-p002.json")).unwrap());
}
