use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kreinlab"));
    c.env_remove("KREINLAB_OUT");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

fn summary(dir: &Path) -> Vec<Vec<String>> {
    let mut rd = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    rd.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn verdicts(dir: &Path) -> Vec<(String, String)> {
    summary(dir).into_iter().filter(|r| r[1] == "verdict").map(|r| (r[0].clone(), r[4].clone())).collect()
}

#[test]
fn flat_robin_scenario_passes_every_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&config("flat_laplace_robin.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v = verdicts(tmp.path());
    assert_eq!(v.len(), 8);
    assert!(v.iter().all(|(_, s)| s == "PASS"), "{v:?}");
    for name in ["decay", "dirichlet", "dtn", "extension-oracle", "green", "krein", "regularity", "smoothing"] {
        assert!(tmp.path().join(format!("{name}.csv")).exists());
    }
    let dtn = fs::read_to_string(tmp.path().join("dtn.csv")).unwrap();
    assert!(dtn.starts_with("nt,nn,k,measured_symbol_re,measured_symbol_im,closed_form,rel_error"));
}

#[test]
fn nonelliptic_scenario_fails_only_regularity() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&config("nonelliptic_psdo.json"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let failed: Vec<String> = verdicts(tmp.path()).into_iter().filter(|(_, s)| s == "FAIL").map(|(n, _)| n).collect();
    assert_eq!(failed, ["regularity"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL regularity (h2_ratio_growth)"), "{stdout}");
}

#[test]
fn empty_suite_list_writes_header_only_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("flat_laplace_robin.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["suites"] = serde_json::json!([]);
    let cfg = tmp.path().join("empty.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let out = tmp.path().join("bundle");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap(), "suite,check,value,threshold,status\n");
    assert!(out.join("provenance.json").exists());
}

#[test]
fn schema_errors_exit_2_with_a_pointer() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("flat_laplace_robin.json")).unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, text.replace("\"mu\": [4, 8", "\"mu\": [4, \"eight\"")).unwrap();
    let o = run(&cfg, &tmp.path().join("b"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/sweep/ray/mu/1"));

    fs::write(&cfg, text.replace("[16, 32, 64]", "[16, 32, 48]")).unwrap();
    let o = run(&cfg, &tmp.path().join("b"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/sweep/mesh_ladder/2"));

    let o = run(&config("flat_laplace_robin.json"), &tmp.path().join("b"), &["--suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runs_are_deterministic_apart_from_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--suite", "extension-oracle", "green", "decay", "dtn", "--mesh-ladder", "16,32"];
    for dir in [&a, &b] {
        assert_eq!(run(&config("flat_laplace_robin.json"), dir, &args).status.code(), Some(0));
    }
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["decay.csv", "decay_plot.csv", "dtn.csv", "dtn_plot.csv", "extension-oracle.csv", "green.csv", "provenance.json", "summary.csv"]);
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 7);
    assert_eq!(prov["mesh_ladder"], serde_json::json!([16, 32]));
    assert_eq!(prov["config_sha256"].as_str().unwrap().len(), 64);

    // the environment variable stands in for --out
    let c = tmp.path().join("c");
    let o = bin().arg("run").arg(config("flat_laplace_robin.json")).args(["--suite", "extension-oracle"]).env("KREINLAB_OUT", &c).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(c.join("extension-oracle.csv").exists());
}

#[test]
fn plot_emits_tidy_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bundle");
    let o = run(&config("flat_laplace_robin.json"), &dir, &["--suite", "decay", "dtn", "--mesh-ladder", "16,32"]);
    assert_eq!(o.status.code(), Some(0));

    let o = bin().args(["plot"]).arg(&dir).arg("decay").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("quantity,mu,norm,fit_residual\n"));
    assert!(text.lines().count() > 1);

    let file = tmp.path().join("dtn.csv");
    let o = bin().args(["plot"]).arg(&dir).args(["dtn", "--out"]).arg(&file).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&file).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,measured_symbol_re,measured_symbol_im,closed_form"));
    assert!(lines.all(|l| l.split(',').count() == 4));

    let o = bin().args(["plot"]).arg(&dir).arg("green").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = bin().args(["plot"]).arg(&empty).arg("dtn").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "k,measured_symbol_re,measured_symbol_im,closed_form\n");
}
