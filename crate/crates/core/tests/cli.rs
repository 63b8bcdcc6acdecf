use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qmemsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmemsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn manifest_records_hash_seed_and_version() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmemsim(&["bounds", "--mu", "1.16", "--seed", "11"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(tmp.path().join("manifest.json"));
    assert_eq!(m["seed"], 11);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["command"], "bounds");
    assert_eq!(m["config_hash"].as_str().unwrap(), qmemsim::config::Config::shipped().hash());
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(files, ["bounds.csv", "report.json"]);
}

#[test]
fn single_point_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(qmemsim(&["bounds", "--mu", "1.16"], tmp.path()).status.success());
    let csv = fs::read_to_string(tmp.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    let r = json(tmp.path().join("report.json"));
    assert_eq!(r["n_points"], 1);
    assert_eq!(r["crossover_found"], true);
}

#[test]
fn seeded_memory_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["memory", "--ions", "300", "--seed", "5", "--counts", "--no-init"];
    assert!(qmemsim(&args, &tmp.path().join("a")).status.success());
    assert!(qmemsim(&args, &tmp.path().join("b")).status.success());
    let m = json(tmp.path().join("a/manifest.json"));
    for f in m["outputs"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn decoupled_readout_time_and_zero_pulse_reduction() {
    let tmp = tempfile::tempdir().unwrap();
    let dd = tmp.path().join("dd");
    assert!(qmemsim(&["memory", "--protocol", "nlpe-dd", "--ions", "100", "--no-init"], &dd).status.success());
    let r = json(dd.join("report.json"));
    assert!((r["echo_time"].as_f64().unwrap() - 5.600032).abs() < 1e-9);
    assert_eq!(r["n_dd_pulses"], 4);

    let zero = tmp.path().join("zero");
    assert!(qmemsim(&["memory", "--protocol", "nlpe-dd", "--n-pulses", "0", "--ions", "100", "--no-init"], &zero).status.success());
    let r = json(zero.join("report.json"));
    assert_eq!(r["n_dd_pulses"], 0);
    assert!(r["tau"].is_null());
    let skeleton = qmemsim::config::Config::shipped().timings.nlpe_dd;
    let times: Vec<f64> = r["protocol_times"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(times, skeleton);
    let te = skeleton[4] + skeleton[3] - skeleton[2] - skeleton[1] + skeleton[0];
    assert!((r["echo_time"].as_f64().unwrap() - te).abs() < 1e-15);
}

#[test]
fn decoupling_flags_reach_the_timeline() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmemsim(
        &["memory", "--protocol", "nlpe-dd", "--tau", "10.5", "--n-pulses", "4", "--delta", "0.3", "--ions", "50", "--no-init"],
        tmp.path(),
    );
    assert!(out.status.success());
    let r = json(tmp.path().join("report.json"));
    assert!((r["echo_time"].as_f64().unwrap() - 42.000032).abs() < 1e-9);
    let tl = json(tmp.path().join("timeline.json"));
    assert!(tl.to_string().contains("rf"));
}

#[test]
fn fit_recovers_shipped_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmemsim(&["fit", "--model", "mims", "--data", &data("decay_b.csv")], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(tmp.path().join("report.json"));
    assert_eq!(r["model"], "mims");
    assert!((r["fit"]["t2"].as_f64().unwrap() / 27.6 - 1.0).abs() < 0.05);
    assert!((r["fit"]["m"].as_f64().unwrap() / 1.70 - 1.0).abs() < 0.10);
    assert_eq!(fs::read_to_string(tmp.path().join("curve.csv")).unwrap().lines().count(), 21);
}

#[test]
fn tail_fit_honors_t_min() {
    let tmp = tempfile::tempdir().unwrap();
    let heated = data("decay_heated.csv");
    let out = qmemsim(&["fit", "--model", "mims-tail", "--data", &heated, "--t-min", "15"], &tmp.path().join("a"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(tmp.path().join("a/report.json"));
    assert_eq!(r["t_min"], 15.0);
    assert!((r["fit"]["t2"].as_f64().unwrap() / 36.3 - 1.0).abs() < 0.05);
    assert!((r["fit"]["m"].as_f64().unwrap() / 1.25 - 1.0).abs() < 0.10);

    // Nothing survives a cut past the last point.
    let out = qmemsim(&["fit", "--model", "mims-tail", "--data", &heated, "--t-min", "100"], &tmp.path().join("b"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn surface_fit_of_shipped_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmemsim(&["fit", "--model", "nlpe-surface", "--data", &data("efficiency_surface.csv")], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(tmp.path().join("report.json"));
    assert!((r["fit"]["gamma34"].as_f64().unwrap() / 7.7e3 - 1.0).abs() < 0.10);
    assert!((r["fit"]["eta_control"].as_f64().unwrap() / 0.82 - 1.0).abs() < 0.10);
}

#[test]
fn pulse_and_init_profile_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = qmemsim(&["pulse", "--preset", "pi32", "--points", "10"], &tmp.path().join("p"));
    assert!(out.status.success());
    let r = json(tmp.path().join("p/report.json"));
    assert_eq!(r["n_points"], 100);
    assert!(r["min_inversion"].as_f64().unwrap() > 0.99);

    let out = qmemsim(&["pulse", "--preset", "pi43", "--amplitude", "0", "--points", "5"], &tmp.path().join("z"));
    assert!(out.status.success());
    assert_eq!(json(tmp.path().join("z/report.json"))["identity"], true);

    let out = qmemsim(&["init-profile"], &tmp.path().join("i"));
    assert!(out.status.success());
    let f = json(tmp.path().join("i/report.json"));
    assert!(f["fwhm_hz"].as_f64().unwrap() > 0.0);
    assert!(tmp.path().join("i/absorption.csv").is_file());
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "seed = \"not a number\"\n");
    assert_eq!(qmemsim(&["bounds", "--config", &bad], &tmp.path().join("o")).status.code(), Some(2));

    let missing = tmp.path().join("missing.toml");
    assert_eq!(qmemsim(&["bounds", "--config", missing.to_str().unwrap()], &tmp.path().join("o")).status.code(), Some(2));

    assert_eq!(qmemsim(&["pulse", "--preset", "nope"], &tmp.path().join("o")).status.code(), Some(2));

    let short = write(tmp.path(), "short.csv", "t,value,sigma\n1,0.9,0.01\n2,0.8,0.01\n3,0.7,0.01\n");
    assert_eq!(qmemsim(&["fit", "--model", "mims", "--data", &short], &tmp.path().join("o")).status.code(), Some(2));

    assert_eq!(qmemsim(&["memory", "--tau", "1e-6", "--protocol", "nlpe-dd"], &tmp.path().join("o")).status.code(), Some(2));
    assert_eq!(qmemsim(&["bounds", "--eta", "1.5"], &tmp.path().join("o")).status.code(), Some(2));
    assert_eq!(qmemsim(&["frobnicate"], &tmp.path().join("o")).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let rows: String = (1..=10).map(|i| format!("{i},{},0.01\n", -(i as f64))).collect();
    let p = write(tmp.path(), "negative.csv", &format!("t,value,sigma\n{rows}"));
    let out = qmemsim(&["fit", "--model", "mims", "--data", &p], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
