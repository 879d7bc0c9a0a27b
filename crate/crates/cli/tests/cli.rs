use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glassbench"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("GLASSBOX_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["simulate", "--n", "60", "--timepoints", "20", "--species", "12", "--communities", "4", "--deterministic"];

fn content_hash(dir: &Path) -> String {
    let text = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
    let m: toml::Table = toml::from_str(&text).unwrap();
    m["content_hash"].as_str().unwrap().to_string()
}

#[test]
fn zero_subjects_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["simulate", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn repeated_simulation_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let a = run(root.path(), &[SMALL, &["--name", "a"]].concat());
    let b = run(root.path(), &[SMALL, &["--name", "b"]].concat());
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    let (da, db) = (root.path().join("datasets/a"), root.path().join("datasets/b"));
    assert_eq!(content_hash(&da), content_hash(&db));
    assert_eq!(std::fs::read(da.join("manifest.toml")).unwrap(), std::fs::read(db.join("manifest.toml")).unwrap());

    // a second write to the same place needs --overwrite
    let again = run(root.path(), &[SMALL, &["--name", "a"]].concat());
    assert_eq!(again.status.code(), Some(2));
    assert!(stderr(&again).contains("--overwrite"), "{}", stderr(&again));
    let replaced = run(root.path(), &[SMALL, &["--name", "a", "--overwrite"]].concat());
    assert!(replaced.status.success(), "{}", stderr(&replaced));
}

#[test]
fn unknown_model_lists_the_choices() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["fit", "--dataset", "nowhere", "--model", "forest"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for m in ["sparse-logistic", "tree", "transformer", "cbm"] {
        assert!(err.contains(m), "missing {m} in: {err}");
    }
}

#[test]
fn print_config_emits_toml_and_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["simulate", "--n", "77", "--print-config"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg: toml::Table = toml::from_str(&stdout(&o)).expect("valid TOML");
    assert_eq!(cfg["sim"]["n_subjects"].as_integer(), Some(77));
    assert!(!root.path().join("datasets").exists());
}

#[test]
fn missing_artifact_is_a_runtime_error() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["report", root.path().join("absent").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn fit_explain_and_report_chain() {
    let root = tempfile::tempdir().unwrap();
    assert!(run(root.path(), &[SMALL, &["--name", "d"]].concat()).status.success());
    let ds = root.path().join("datasets/d");
    let fit = run(root.path(), &["fit", "--dataset", ds.to_str().unwrap(), "--model", "sparse-logistic", "--name", "m", "--deterministic"]);
    assert!(fit.status.success(), "{}", stderr(&fit));
    assert!(stdout(&fit).contains("out-of-sample accuracy"));
    let model = root.path().join("models/m");
    let pdp = run(root.path(), &["explain", "--model", model.to_str().unwrap(), "--method", "pdp", "--feature", "trend:d=0", "--name", "p"]);
    assert!(pdp.status.success(), "{}", stderr(&pdp));
    let rep = run(root.path(), &["report", model.to_str().unwrap()]);
    assert!(rep.status.success(), "{}", stderr(&rep));
    assert!(stdout(&rep).contains("from dataset"), "{}", stdout(&rep));

    // tampering with the dataset breaks everything downstream of it
    let labels = ds.join("labels.csv");
    let text = std::fs::read_to_string(&labels).unwrap();
    std::fs::write(&labels, text.replacen(",0,", ",1,", 1)).unwrap();
    let broken = run(root.path(), &["report", model.to_str().unwrap()]);
    assert_eq!(broken.status.code(), Some(1));
    assert!(stderr(&broken).contains("labels.csv"), "{}", stderr(&broken));
}
