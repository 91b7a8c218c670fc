// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use sncp::dgp::{gen_gaussian, CovarianceSpec, Delta, MeanChangeSpec, MeanModel};

fn sncp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sncp"))
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_sample(path: &Path, x: &sncp::Sample) {
    let mut text = String::new();
    for row in x.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn single_test_matches_golden_report() {
    let got = stdout(&sncp(&["test-mean-single", "data/two_group.csv"]));
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/test_mean_single.json"),
    )
    .unwrap();
    assert_eq!(got, golden);
    let v: serde_json::Value = serde_json::from_str(&got).unwrap();
    assert_eq!(v["result"]["reject"], true);
    assert_eq!(v["result"]["argmax_k"], 30);
}

#[test]
fn plot_data_covers_every_split() {
    let dir = tempfile::tempdir().unwrap();
    let plot = dir.path().join("plot.csv");
    stdout(&sncp(&["test-mean-single", "data/two_group.csv", "--plot", plot.to_str().unwrap()]));
    let text = std::fs::read_to_string(plot).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,g_n,d_scaled,t_ratio"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 60 - 3);
    assert!(rows[0].starts_with("2,"));
    assert!(rows.last().unwrap().starts_with("58,") && rows.last().unwrap().ends_with(','));
}

#[test]
fn wbs_calibration_is_repeatable() {
    let args = [
        "calibrate", "--target", "wbs", "--n", "60", "--p", "10", "--reps", "50", "--intervals",
        "50", "--seed", "7",
    ];
    let a = stdout(&sncp(&args));
    let b = stdout(&sncp(&args));
    assert_eq!(a, b);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    let c: serde_json::Value = serde_json::from_str(&stdout(&sncp(&threaded))).unwrap();
    let a: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(a["result"], c["result"]);
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let constant = dir.path().join("constant.csv");
    std::fs::write(&constant, "1,2\n".repeat(10)).unwrap();
    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3,4\n5\n").unwrap();
    let text = dir.path().join("text.csv");
    std::fs::write(&text, "a,b\n1,2\nx,3\n").unwrap();

    let out = sncp(&["test-mean-single", constant.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let out = sncp(&["test-mean-single", ragged.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = sncp(&["estimate-bs", text.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = sncp(&["test-mean-single", "no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sncp(&["test-mean-single", "data/two_group.csv", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn wbs_on_wide_sample_stays_sparse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.csv");
    let mean = MeanChangeSpec::new(
        MeanModel::Custom {
            breakpoints: vec![0.2, 0.45, 0.6, 0.8],
            jumps: vec![1.0, -1.0, 1.0, -1.0],
        },
        Delta::Constant(0.6),
    );
    let x = gen_gaussian(200, &CovarianceSpec::ar1(0.3, 43), &mean, 4).unwrap();
    write_sample(&path, &x);
    let out = stdout(&sncp(&["estimate-wbs", path.to_str().unwrap(), "--seed", "1"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let found = v["result"]["locations"].as_array().unwrap().len();
    assert!(found <= 10, "{found} change points");
    assert_eq!(v["config"]["wbs"]["intervals"], 1000);
}

#[test]
fn echoed_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m2.csv");
    let mean = MeanChangeSpec::new(MeanModel::M2, Delta::Constant(0.8));
    write_sample(&path, &gen_gaussian(90, &CovarianceSpec::identity(20), &mean, 2).unwrap());
    let first = stdout(&sncp(&[
        "estimate-wbs", path.to_str().unwrap(), "--intervals", "200", "--reps", "40", "--min-span",
        "10", "--seed", "11",
    ]));
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    let cfg = &v["config"]["wbs"];
    let again = stdout(&sncp(&[
        "estimate-wbs",
        v["config"]["input"].as_str().unwrap(),
        "--intervals",
        &cfg["intervals"].to_string(),
        "--reps",
        &cfg["calibration_reps"].to_string(),
        "--min-span",
        &cfg["min_span"].to_string(),
        "--level",
        &cfg["level"].to_string(),
        "--seed",
        &v["config"]["master_seed"].to_string(),
    ]));
    assert_eq!(first, again);
}

#[test]
fn calibrated_table_is_cached_and_reusable() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("tstar.tbl");
    let out = stdout(&sncp(&[
        "calibrate", "--target", "t-star", "--n", "100", "--p", "10", "--table-reps", "500",
        "--seed", "3", "--cache", cache.to_str().unwrap(),
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["table"]["kind"], "t_star");
    let table = sncp::load_table(&cache).unwrap();
    assert_eq!(table.info().replications, 500);

    let report = stdout(&sncp(&[
        "test-mean-multi", "data/two_group.csv", "--scan", "star", "--table", cache.to_str().unwrap(),
    ]));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["result"]["calibration"]["provenance"], "simulated");
    assert_eq!(v["result"]["reject"], true);
}

#[test]
fn bench_runs_a_design_file() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.toml");
    std::fs::write(
        &design,
        "id = 'cli-bench'\nreplications = 30\nmaster_seed = 5\n\n[experiment]\ntype = 'rejection'\ntest = 't_n'\nn = 50\np = 10\ncovariance = { kind = 'identity' }\n",
    )
    .unwrap();
    let a: serde_json::Value =
        serde_json::from_str(&stdout(&sncp(&["bench", design.to_str().unwrap()]))).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&stdout(&sncp(&["bench", design.to_str().unwrap(), "--threads", "2"]))).unwrap();
    assert_eq!(a["result"]["result"], b["result"]["result"]);
    assert_eq!(a["config"]["replications"], 30);
    assert!(a["result"]["wall_time_ms"].is_u64());
    let csv = stdout(&sncp(&["bench", design.to_str().unwrap(), "--format", "csv"]));
    assert!(csv.starts_with("key,value\n"));
    assert!(csv.contains("result.result.rate,"));
}

#[test]
fn covariance_test_warns_when_demeaning() {
    let out = sncp(&["test-cov", "data/two_group.csv", "--demean"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let out = sncp(&["test-cov", "data/two_group.csv", "--statistic", "t-n-diamond"]);
    assert!(out.status.success());
}

#[test]
fn shipped_designs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/designs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let design = sncp::bench::Design::load(&path).unwrap();
        design.validate().unwrap();
        count += 1;
    }
    assert_eq!(count, 5);
}
