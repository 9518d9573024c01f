use std::process::Command;

use tsc_cli::cli_main;

fn tsc(args: &[&str]) -> i32 {
    cli_main(std::iter::once("tsc").chain(args.iter().copied()))
}

#[test]
fn run_writes_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let out_s = out.to_str().unwrap();
    let code = tsc(&[
        "run",
        "--grid",
        "4x4",
        "--rate",
        "1.76",
        "--duration",
        "3600",
        "--controller",
        "emc",
        "--budget-ms",
        "3000",
        "--seed",
        "7",
        "--out",
        out_s,
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("period,total_queue,balance,decision_ms,comm_delay_ms")
    );
    assert_eq!(lines.count(), 360);
}

#[test]
fn usage_errors() {
    assert_eq!(tsc(&["run", "--grid", "0x4", "--rate", "1"]), 2);
    assert_eq!(tsc(&["run", "--grid", "4by4", "--rate", "1"]), 2);
    assert_eq!(
        tsc(&["run", "--grid", "4x4", "--roadnet", "net.json", "--rate", "1"]),
        2
    );
    assert_eq!(tsc(&["run", "--rate", "1"]), 2);
    assert_eq!(tsc(&["run", "--grid", "2x2"]), 2);
    assert_eq!(tsc(&["run", "--grid", "2x2", "--rate", "1", "--bogus"]), 2);
    assert_eq!(tsc(&["run", "--grid", "2x2", "--rate", "1", "--controller", "sotl"]), 2);
    assert_eq!(tsc(&["frobnicate"]), 2);
}

#[test]
fn runtime_errors_exit_one() {
    assert_eq!(tsc(&["run", "--roadnet", "/nonexistent.json", "--rate", "1"]), 1);
    assert_eq!(tsc(&["run", "--grid", "2x2", "--rate", "1", "--epsilon", "1.5"]), 1);
    assert_eq!(tsc(&["run", "--grid", "2x2", "--rate", "1", "--tau", "0"]), 1);
    assert_eq!(tsc(&["run", "--grid", "2x2", "--rate=-1"]), 1);
}

#[test]
fn generated_files_feed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let flow = dir.path().join("flow.json");
    let metrics = dir.path().join("m.csv");
    let p = |path: &std::path::Path| path.to_str().unwrap().to_string();
    assert_eq!(tsc(&["gen-grid", "--grid", "2x3", "--out", &p(&net)]), 0);
    let loaded = tsc_core::load_network(&net).unwrap();
    assert_eq!(loaded.num_intersections(), 6);
    assert_eq!(
        tsc(&[
            "gen-flow",
            "--roadnet",
            &p(&net),
            "--rate",
            "0.5",
            "--duration",
            "600",
            "--seed",
            "3",
            "--out",
            &p(&flow)
        ]),
        0
    );
    let vehicles = tsc_core::sim::load_flow(&flow, &loaded).unwrap();
    assert_eq!(vehicles.len(), 300);
    assert_eq!(
        tsc(&[
            "run",
            "--roadnet",
            &p(&net),
            "--flow",
            &p(&flow),
            "--duration",
            "600",
            "--controller",
            "maxpressure",
            "--out",
            &p(&metrics)
        ]),
        0
    );
    assert_eq!(std::fs::read_to_string(&metrics).unwrap().lines().count(), 61);
}

#[test]
fn compare_prints_one_row_per_controller() {
    let out = Command::new(env!("CARGO_BIN_EXE_tsc"))
        .args(["compare", "--grid", "3x3", "--rate", "0.8", "--duration", "600"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "controller,avg_travel_time_s,mean_balance,mean_decision_ms");
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["fixedtime", "maxpressure", "nlcoor", "emc"]);
}

#[test]
fn comm_delay_prints_milliseconds() {
    let out = Command::new(env!("CARGO_BIN_EXE_tsc"))
        .args(["comm-delay", "--grid", "20x20", "--mu-ms", "20", "--nodes", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let ms: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((ms - 1230.0).abs() <= 615.0);
}
