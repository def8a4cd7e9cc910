//! End-to-end runs of the `rfts` binary through its public interface:
//! manifests in, CSV/JSON artifacts out, stable exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rfts"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rfts-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

/// Synthetic day-curve CSV: a smooth daily shape plus an AR(1) level,
/// written in the long one-row-per-hour layout the ingester expects.
fn day_curve_csv(days: usize, points: usize, seed: u64) -> String {
    let mut out = String::from("time,value\n");
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut level = 0.0f64;
    for d in 0..days {
        // cheap deterministic noise, good enough for a fixture
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        level = 0.7 * level + (u - 0.5) * 2.0;
        for j in 0..points {
            let t = j as f64 / (points - 1) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let e = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let y = 10.0 + level + 3.0 * (std::f64::consts::TAU * t).sin()
                + 0.8 * level * (std::f64::consts::TAU * 2.0 * t).cos()
                + 0.3 * e;
            out.push_str(&format!("d{d}h{j},{y}\n"));
        }
    }
    out
}

fn simulate_manifest() -> String {
    r#"
seed = 42

[simulate]
n = 200
grid-points = 11
replications = 2
contamination-rate = 0.05

[tune]
budget = 8
restarts = 0
max-order = 1
k-max = 2

[mcs]
samples = 200
"#
    .to_string()
}

fn run(cmd: &mut Command) -> std::process::Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn simulate_is_deterministic_for_a_fixed_seed() {
    let dir = scratch("sim");
    let manifest = dir.join("run.toml");
    write(&manifest, &simulate_manifest());

    for pass in ["a", "b"] {
        run(bin()
            .arg("simulate")
            .arg("--manifest")
            .arg(&manifest)
            .arg("--out-dir")
            .arg(dir.join(pass)));
    }
    for name in ["losses.csv", "losses-clean.csv", "summary.csv", "summary-clean.csv", "mcs.json"] {
        assert_eq!(
            read(&dir.join("a").join(name)),
            read(&dir.join("b").join(name)),
            "{name} differs between identical runs"
        );
    }

    let losses = read(&dir.join("a").join("losses.csv"));
    let lines: Vec<&str> = losses.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per replication");
    assert_eq!(lines[0], "FPCA,RFPCA,MLTS,RMLTS");
    for row in &lines[1..] {
        for field in row.split(',') {
            let v: f64 = field.parse().unwrap();
            assert!(v.is_finite() && v >= 0.0, "bad loss {v}");
        }
    }

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("a").join("run-report.json"))).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["replications"], 2);
    assert_eq!(report["tuned"].as_array().unwrap().len(), 2);

    let mcs: serde_json::Value =
        serde_json::from_str(&read(&dir.join("a").join("mcs.json"))).unwrap();
    // two levels times two statistics by default
    assert_eq!(mcs.as_array().unwrap().len(), 4);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_flag_overrides_manifest_seed() {
    let dir = scratch("seed");
    let manifest = dir.join("run.toml");
    write(&manifest, &simulate_manifest());
    run(bin()
        .arg("--seed")
        .arg("7")
        .arg("simulate")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.join("o")));
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("o").join("run-report.json"))).unwrap();
    assert_eq!(report["seed"], 7);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn forecast_writes_one_curve_per_horizon_step() {
    let dir = scratch("fc");
    let points = 12;
    write(&dir.join("data.csv"), &day_curve_csv(40, points, 3));
    let manifest = dir.join("run.toml");
    write(
        &manifest,
        &format!(
            r#"
seed = 5

[ingest]
input = "{}"
value-column = "value"
timestamp-column = "time"
curve-length = {points}

[plan]
train-end = 20
validation-end = 36
test-end = 40

[tune]
budget = 8
restarts = 0
max-order = 1
k-max = 2

[forecast]
method = "RMLTS"
horizon = 2
"#,
            dir.join("data.csv").display()
        ),
    );
    run(bin()
        .arg("forecast")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.join("o"))
        .arg("--horizon")
        .arg("3"));

    let forecast = read(&dir.join("o").join("forecast.csv"));
    let lines: Vec<&str> = forecast.lines().collect();
    assert_eq!(lines[0], "series,x,y");
    // the --horizon flag wins over the manifest's 2
    assert_eq!(lines.len(), 1 + 3 * points);
    assert!(lines[1].starts_with("h1,"));
    assert!(lines[1 + points].starts_with("h2,"));
    for line in &lines[1..] {
        let y: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(y.is_finite());
    }

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("o").join("run-report.json"))).unwrap();
    assert_eq!(report["method"], "RMLTS");
    assert_eq!(report["horizon"], 3);
    assert!(report["validation-msfe"].as_f64().unwrap().is_finite());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn compare_produces_losses_summary_and_confidence_sets() {
    let dir = scratch("cmp");
    let points = 12;
    write(&dir.join("data.csv"), &day_curve_csv(40, points, 11));
    let manifest = dir.join("run.toml");
    write(
        &manifest,
        &format!(
            r#"
seed = 9

[ingest]
input = "{}"
value-column = "value"
timestamp-column = "time"
curve-length = {points}

[plan]
train-end = 20
validation-end = 34
test-end = 40

[tune]
budget = 8
restarts = 0
max-order = 1
k-max = 2

[mcs]
samples = 200
levels = [0.8]
"#,
            dir.join("data.csv").display()
        ),
    );
    run(bin()
        .arg("compare")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.join("o")));

    let losses = read(&dir.join("o").join("losses.csv"));
    let lines: Vec<&str> = losses.lines().collect();
    assert_eq!(lines[0], "FPCA,RFPCA,MLTS,RMLTS");
    assert!(lines.len() > 1 && lines.len() <= 7, "got {} lines", lines.len());

    let summary = read(&dir.join("o").join("summary.csv"));
    let srows: Vec<&str> = summary.lines().collect();
    assert_eq!(srows.len(), 8, "statistic header plus seven rows");
    assert!(srows[1].starts_with("Min.,"));
    assert!(srows[7].starts_with("sd,"));

    let mcs: serde_json::Value =
        serde_json::from_str(&read(&dir.join("o").join("mcs.json"))).unwrap();
    let sets = mcs.as_array().unwrap();
    assert_eq!(sets.len(), 2); // one level, two statistics
    for set in sets {
        assert!(!set["survivors"].as_array().unwrap().is_empty());
    }

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.join("o").join("run-report.json"))).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["var-orders"].as_array().unwrap().len(), 4);
    assert!(report["evaluated-steps"].as_u64().unwrap() >= 1);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_manifest_is_a_usage_error() {
    let out = bin()
        .arg("simulate")
        .arg("--manifest")
        .arg("/definitely/not/here.toml")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_data_is_a_data_error() {
    let dir = scratch("bad");
    write(&dir.join("data.csv"), "time,value\nt0,1\nt1,oops\n");
    let manifest = dir.join("run.toml");
    write(
        &manifest,
        &format!(
            r#"
seed = 1

[ingest]
input = "{}"
value-column = "value"
curve-length = 2
"#,
            dir.join("data.csv").display()
        ),
    );
    let out = bin()
        .arg("forecast")
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out-dir")
        .arg(dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let _ = std::fs::remove_dir_all(&dir);
}
