//! End-to-end checks of the `nfwpo` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use nfwpo::eval::{rate_deviation_stats, OracleReport, RATE_TOLERANCE};

fn nfwpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfwpo"))
        .args(args)
        .env("NFWPO_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nfwpo(args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Data rows of a schema-headed CSV, split on commas.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema: "), "{}", path.display());
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let data = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, data)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn trained(tmp: &Path) -> PathBuf {
    let out = tmp.join("train");
    ok(&["train", "--seed", "4", "--episodes", "10", "--out", &s(&out)]);
    out
}

#[test]
fn smoke_train_is_fast_and_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let dir = trained(tmp.path());
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "smoke run took {secs:.1} s");
    for f in ["agent.nfwa", "metrics.csv", "report.json", "config.toml", "manifest.json"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let (header, data) = rows(&dir.join("metrics.csv"));
    assert_eq!(header[0], "episode");
    assert_eq!(data.len(), 10);
    let manifest = nfwpo::cli::RunManifest::read(&dir).unwrap();
    assert_eq!(manifest.seed, 4);
    assert_eq!(manifest.method, "nfwpo");
}

#[test]
fn exit_codes_separate_usage_from_runtime_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nfwpo(&["train", "--config", "/no/such/run.toml", "--out", &s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/run.toml"));

    assert_eq!(nfwpo(&["train", "--bogus"]).status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[trainer]\nbatch_sise = 3\n").unwrap();
    let out = nfwpo(&["train", "--config", &s(&cfg), "--out", &s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_sise"));

    let bad = tmp.path().join("bad.nfwa");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let out = nfwpo(&["eval", "--checkpoint", &s(&bad), "--out", &s(&tmp.path().join("e"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = nfwpo(&["oracle-check", "--checkpoint", "anchor", "--frames", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn anchor_eval_is_distortion_neutral() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("anchor");
    ok(&["eval", "--checkpoint", "anchor", "--profiles", "easy,textured", "--out", &s(&dir)]);
    let (header, data) = rows(&dir.join("gops.csv"));
    let gain = column(&header, "quality_gain");
    assert!(!data.is_empty());
    for row in &data {
        assert_eq!(row[gain].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn eval_is_repeatable_and_consistent_with_its_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path()).join("agent.nfwa");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&["eval", "--seed", "4", "--checkpoint", &s(&ckpt), "--out", &s(out)]);
    }
    for f in ["rd_curve.csv", "deviation.csv", "gops.csv", "traces/gop-0000.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    // Recompute the deviation table from per-frame traces and GOP budgets.
    let (gh, gops) = rows(&a.join("gops.csv"));
    let (gop_col, r_gop_col) = (column(&gh, "gop"), column(&gh, "r_gop"));
    let mut deviations = Vec::new();
    for g in &gops {
        let idx: usize = g[gop_col].parse().unwrap();
        let (th, frames) = rows(&a.join(format!("traces/gop-{idx:04}.csv")));
        let bits: f64 = frames
            .iter()
            .map(|f| f[column(&th, "bits")].parse::<f64>().unwrap())
            .sum();
        let r_gop: f64 = g[r_gop_col].parse().unwrap();
        deviations.push((bits - r_gop).abs() / r_gop);
    }
    let stats = rate_deviation_stats(deviations.iter().copied(), RATE_TOLERANCE).unwrap();
    let (dh, table) = rows(&a.join("deviation.csv"));
    let all = table.iter().find(|r| r[0] == "all").expect("all row");
    let get = |name: &str| all[column(&dh, name)].parse::<f64>().unwrap();
    assert_eq!(get("episodes") as usize, gops.len());
    assert!((get("mean_raw") - stats.mean_raw).abs() < 1e-12);
    assert!((get("mean_tolerated") - stats.mean_tolerated).abs() < 1e-12);
    assert!((get("violation_rate") - stats.violation_rate).abs() < 1e-12);
}

#[test]
fn compare_of_a_run_with_itself_is_neutral() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path()).join("agent.nfwa");
    let run = tmp.path().join("run");
    ok(&["eval", "--checkpoint", &s(&ckpt), "--out", &s(&run)]);
    let out_dir = tmp.path().join("cmp");
    let out = ok(&["compare", &s(&run), &s(&run), "--out", &s(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("BD-rate"));
    let (header, data) = rows(&out_dir.join("compare.csv"));
    assert_eq!(
        header,
        ["run", "policy", "bd_rate_pct", "mean_raw", "mean_tolerated", "violation_rate", "mean_quality_gain"]
    );
    assert_eq!(data.len(), 2);
    assert_eq!(data[1][2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(data[0][3..], data[1][3..]);

    let other = tmp.path().join("other");
    ok(&["eval", "--seed", "99", "--checkpoint", "anchor", "--out", &s(&other)]);
    let out = nfwpo(&["compare", &s(&run), &s(&other)]);
    assert!(!out.status.success(), "different evaluation sets must not be compared");
}

#[test]
fn oracle_report_validates_after_a_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = trained(tmp.path()).join("agent.nfwa");
    let out = tmp.path().join("oracle");
    ok(&["oracle-check", "--checkpoint", &s(&ckpt), "--model-seed", "3", "--out", &s(&out)]);
    let text = std::fs::read_to_string(out.join("oracle_check.json")).unwrap();
    let report: OracleReport = serde_json::from_str(&text).unwrap();
    report.validate().unwrap();
    assert_eq!(report.policy.qps.len(), 3);
    assert_eq!(report.policy_name, "nfwpo");

    let anchor = tmp.path().join("anchor");
    ok(&["oracle-check", "--checkpoint", "anchor", "--out", &s(&anchor)]);
    let report: OracleReport =
        serde_json::from_str(&std::fs::read_to_string(anchor.join("oracle_check.json")).unwrap())
            .unwrap();
    assert!((report.quality_gap - report.oracle_gain).abs() < 1e-9);
    assert!(report.oracle_gain >= 0.0);
}

#[test]
fn rerunning_into_the_same_directory_overwrites_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t");
    ok(&["train", "--seed", "2", "--episodes", "5", "--out", &s(&dir)]);
    let first = std::fs::read(dir.join("metrics.csv")).unwrap();
    let report = std::fs::read(dir.join("report.json")).unwrap();
    ok(&["train", "--seed", "2", "--episodes", "5", "--out", &s(&dir)]);
    assert_eq!(std::fs::read(dir.join("metrics.csv")).unwrap(), first);
    assert_eq!(std::fs::read(dir.join("report.json")).unwrap(), report);
}
