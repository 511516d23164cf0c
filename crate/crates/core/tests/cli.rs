//! End-to-end runs of the `mnar-bounds` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mnar_bounds::expansion::{estimate, ExpansionConfig, KappaRule};
use mnar_bounds::io::read_config;
use mnar_bounds::simlab::dgp::generate;
use mnar_bounds::simlab::DgpConfig;
use mnar_bounds::estimate_tables;
use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnar-bounds")).args(args).output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json_of(args: &[&str]) -> Value {
    serde_json::from_str(&stdout_of(args)).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    // 1 for input errors, 2 for usage errors caught by the argument parser.
    assert!(matches!(out.status.code(), Some(1 | 2)), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

/// Compares with a committed report; `MNAR_BLESS=1` rewrites it.
fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("MNAR_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with MNAR_BLESS=1 if intended");
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn golden_reports() {
    let data = fixture("fixture20.csv");
    let data = data.to_str().unwrap();
    check_golden("bounds_fixture20.json", &stdout_of(&["bounds", data, "--stdout"]));
    check_golden("estimate_fixture20.json", &stdout_of(&["estimate", data, "--stdout", "--kappa", "0.5"]));
    check_golden("diagnose_fixture20.json", &stdout_of(&["diagnose", data, "--stdout"]));
    check_golden("ate_ate60.json", &stdout_of(&["ate", fixture("ate60.csv").to_str().unwrap(), "--stdout"]));
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, report: &Value) {
    let errors: Vec<String> = validator.iter_errors(report).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn reports_match_schema() {
    let v = schema();
    for name in ["bounds_fixture20.json", "estimate_fixture20.json", "diagnose_fixture20.json", "ate_ate60.json"] {
        let report: Value = serde_json::from_str(&fs::read_to_string(golden(name)).unwrap()).unwrap();
        assert_valid(&v, &report);
    }
    let timed = json_of(&["bounds", fixture("fixture20.csv").to_str().unwrap(), "--stdout", "--timing"]);
    assert_valid(&v, &timed);
    let mut broken = timed.clone();
    broken["inputs"]["files"]["fixture20.csv"] = Value::from("not-a-digest");
    assert!(!v.is_valid(&broken));
    broken = timed;
    broken["results"].as_object_mut().unwrap().remove("base");
    assert!(!v.is_valid(&broken));
}

#[test]
fn reruns_are_byte_identical_across_threads() {
    let data = fixture("fixture20.csv");
    let data = data.to_str().unwrap();
    let a = stdout_of(&["estimate", data, "--stdout", "--threads", "1"]);
    let b = stdout_of(&["estimate", data, "--stdout", "--threads", "4"]);
    assert_eq!(a, b);
}

#[test]
fn report_envelope() {
    let r = json_of(&["bounds", fixture("fixture20.csv").to_str().unwrap(), "--stdout"]);
    assert_eq!(r["schema_version"], "1.0");
    assert_eq!(r["command"], "bounds");
    assert!(r["timing"].is_null());
    let digest = r["inputs"]["files"]["fixture20.csv"].as_str().unwrap();
    assert_eq!(digest, mnar_bounds::io::file_digest(fixture("fixture20.csv")).unwrap());
    // Two strata, so the stratified interval sits inside the pooled one.
    let (base, strat) = (&r["results"]["base"], &r["results"]["stratified"]);
    assert!(strat["lo"].as_f64().unwrap() >= base["lo"].as_f64().unwrap() - 1e-12);
    assert!(strat["hi"].as_f64().unwrap() <= base["hi"].as_f64().unwrap() + 1e-12);

    let timed = json_of(&["bounds", fixture("fixture20.csv").to_str().unwrap(), "--stdout", "--timing"]);
    assert!(timed["timing"].as_f64().unwrap() >= 0.0);
}

#[test]
fn out_flag_writes_file_and_prints_path() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let printed = stdout_of(&["bounds", fixture("fixture20.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(printed.trim(), out.to_str().unwrap());
    let body: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(body["command"], "bounds");
}

#[test]
fn bad_headers_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    for (name, body) in [
        ("dup.csv", "f,r,r,y\n1,1,1,2\n"),
        ("unknown.csv", "f,r,y,z\n1,1,2,0\n"),
        ("order.csv", "r,f,y\n1,1,2\n"),
    ] {
        let p = write(&dir, name, body);
        let err = fails(&["bounds", &p, "--stdout"]);
        assert!(err.contains("line 1"), "{name}: {err}");
    }
    let p = write(&dir, "row.csv", "f,r,y\n1,1,2\n1,1,x\n");
    assert!(fails(&["bounds", &p, "--stdout"]).contains("line 3"));
}

#[test]
fn truth_column_rejected_outside_benchmark() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "t.csv", "f,r,y,y_true\n1,1,2,2\n1,0,,3\n");
    assert!(fails(&["bounds", &p, "--stdout"]).contains("y_true"));
}

#[test]
fn tube_flags() {
    let data = fixture("fixture20.csv");
    let data = data.to_str().unwrap();
    fails(&["estimate", data, "--stdout", "--C", "0"]);
    fails(&["estimate", data, "--stdout", "--kappa", "-1"]);
    fails(&["estimate", data, "--stdout", "--kappa", "sqrt"]);
    for (flag, rule) in [("log", KappaRule::Log), ("loglog", KappaRule::LogLog), ("0.25", KappaRule::Constant(0.25))] {
        let r = json_of(&["estimate", data, "--stdout", "--kappa", flag, "--c", "20"]);
        let cfg: ExpansionConfig = serde_json::from_value(r["inputs"]["settings"]["config"].clone()).unwrap();
        assert_eq!(cfg.kappa, rule);
        assert_eq!(cfg.c, 20.0);
    }
    // A wider tube gives a wider interval.
    let width = |k: &str| {
        let r = json_of(&["estimate", data, "--stdout", "--kappa", k]);
        let iv = &r["results"]["estimate"]["aggregate"];
        iv["hi"].as_f64().unwrap() - iv["lo"].as_f64().unwrap()
    };
    assert!(width("2") >= width("0.1") - 1e-12);
}

#[test]
fn empty_stratum_column_is_one_stratum() {
    let dir = TempDir::new().unwrap();
    let body = "stratum,f,r,y\n,1,1,1\n,2,1,2\n,2,0,\n,1,1,3\n,1,0,\n";
    let p = write(&dir, "s.csv", body);
    let r = json_of(&["bounds", &p, "--stdout"]);
    assert_eq!(r["results"]["strata"].as_array().unwrap().len(), 1);
    let q = write(&dir, "plain.csv", "f,r,y\n1,1,1\n2,1,2\n2,0,\n1,1,3\n1,0,\n");
    let plain = json_of(&["bounds", &q, "--stdout"]);
    assert_eq!(r["results"]["base"], plain["results"]["base"]);
}

#[test]
fn simulate_then_estimate_matches_library() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sim.csv");
    let cfg_path = fixture("dgp_small.json");
    stdout_of(&["simulate", cfg_path.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    let r = json_of(&["estimate", csv.to_str().unwrap(), "--stdout", "--m", "5", "--m-f", "5"]);

    let cfg: DgpConfig = read_config(&cfg_path).unwrap();
    let records = generate(&cfg).unwrap();
    let pop = estimate_tables(&records, 5, 5).unwrap();
    let est = estimate(&pop, &ExpansionConfig::default()).unwrap();
    assert_eq!(r["results"]["estimate"], serde_json::to_value(&est).unwrap());

    // The seed flag overrides the config and changes the sample.
    let other = dir.path().join("sim2.csv");
    stdout_of(&["simulate", cfg_path.to_str().unwrap(), "--seed", "99", "--out", other.to_str().unwrap()]);
    assert_ne!(fs::read(&csv).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn mask_round_trip() {
    let dir = TempDir::new().unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/uss_synthetic.csv");
    let out = dir.path().join("m.csv");
    let args = ["mask", src.to_str().unwrap(), "--mechanism", "uniform:0.1,0.9", "--seed", "4", "--with-truth"];
    stdout_of(&[&args[..], &["--out", out.to_str().unwrap()]].concat());
    let first = fs::read_to_string(&out).unwrap();
    assert_eq!(first, stdout_of(&[&args[..], &["--stdout"]].concat()));
    let data = mnar_bounds::io::parse_records(first.as_bytes()).unwrap();
    assert_eq!(data.records.len(), 3300);
    assert!(data.records.iter().any(|r| !r.r) && data.records.iter().any(|r| r.r));
    // A masked file with hidden truth goes to benchmark only.
    assert!(fails(&["bounds", out.to_str().unwrap(), "--stdout"]).contains("y_true"));
    fails(&["mask", src.to_str().unwrap(), "--mechanism", "uniform:0.1", "--stdout"]);
}

#[test]
fn benchmark_report_and_plot() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.json");
    let cfg = fixture("bench_small.json");
    stdout_of(&["benchmark", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let first = fs::read_to_string(&out).unwrap();
    let report: Value = serde_json::from_str(&first).unwrap();
    assert_valid(&schema(), &report);

    let parsed: mnar_bounds::simlab::ScenarioConfig = read_config(&cfg).unwrap();
    let hash = mnar_bounds::io::config_hash(&parsed).unwrap();
    assert_eq!(report["inputs"]["config_hash"], hash.as_str());
    assert!(report["inputs"]["files"]["uss_synthetic.csv"].is_string());
    assert_eq!(report["results"]["estimators"].as_array().unwrap().len(), 4);
    assert!(report["results"]["presets"].is_object() || report["results"]["presets"].is_array());

    let plot = fs::read_to_string(dir.path().join("bench.plot.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "rep,estimator,truth,lo,hi,value,covered,failure");
    assert_eq!(lines.len(), 1 + 6 * 4);

    let again = dir.path().join("again.json");
    stdout_of(&["benchmark", cfg.to_str().unwrap(), "--threads", "1", "--out", again.to_str().unwrap()]);
    assert_eq!(first.replace("bench.plot.csv", "again.plot.csv"), fs::read_to_string(&again).unwrap());
    assert_eq!(plot, fs::read_to_string(dir.path().join("again.plot.csv")).unwrap());
}

#[test]
fn benchmark_rejects_unknown_config_keys() {
    let dir = TempDir::new().unwrap();
    let body = fs::read_to_string(fixture("bench_small.json")).unwrap().replacen("\"reps\"", "\"repz\": 1, \"reps\"", 1);
    let p = write(&dir, "bad.json", &body);
    assert!(fails(&["benchmark", &p, "--stdout"]).contains("repz"));
}

#[test]
fn ate_and_diagnose() {
    let ate = json_of(&["ate", fixture("ate60.csv").to_str().unwrap(), "--stdout"]);
    let res = &ate["results"];
    let n: Vec<u64> = res["n_arm"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(n.iter().sum::<u64>(), 60);
    let (lo, hi) = (res["base"]["lo"].as_f64().unwrap(), res["base"]["hi"].as_f64().unwrap());
    assert!(lo <= hi);
    // Without a `d` column the command is refused.
    let err = fails(&["ate", fixture("fixture20.csv").to_str().unwrap(), "--stdout"]);
    assert!(!err.is_empty());

    let diag = json_of(&["diagnose", fixture("fixture20.csv").to_str().unwrap(), "--stdout"]);
    assert_eq!(diag["results"]["strata"].as_array().unwrap().len(), 2);
}
