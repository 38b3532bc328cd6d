//! End-to-end tests of the command-line surface: exit codes, file schemas,
//! round-trip precision, determinism.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phi4zero"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .env("PHI4ZERO_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn solve_converged_run_writes_record_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.csv");
    let out = run_in(
        dir.path(),
        &[
            "solve",
            "--lambda",
            "0.01",
            "--n-max",
            "25",
            "--trace",
            trace_path.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("status=Converged"), "stdout: {stdout}");

    let record_path = dir.path().join("solve-l0.01-n25.json");
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(&record_path).unwrap()).unwrap();
    assert_eq!(rec["status"], "Converged");
    assert_eq!(rec["config"]["n_max"], 25);
    assert_eq!(rec["components"].as_array().unwrap().len(), 13);

    // trace CSV has the expected header and parses row by row
    let text = std::fs::read_to_string(&trace_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "nu,n,H_value,delta_value,frozen");
    assert!(text.lines().count() > 13);
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        fields[0].parse::<u32>().unwrap();
        fields[1].parse::<u32>().unwrap();
        fields[2].parse::<f64>().unwrap();
        if !fields[3].is_empty() {
            fields[3].parse::<f64>().unwrap();
        }
        fields[4].parse::<bool>().unwrap();
    }
}

#[test]
fn record_roundtrip_preserves_numbers_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--lambda", "0.013", "--n-max", "15"]);
    assert_eq!(code(&out), 0);
    let path = dir.path().join("solve-l0.013-n15.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let rec: Value = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string(&rec).unwrap();
    let rec2: Value = serde_json::from_str(&again).unwrap();
    assert_eq!(rec, rec2);
    // values parse back to the exact bits the solver produced
    let h2 = rec["components"][0]["h_conv"].as_f64().unwrap();
    let stdout_h2: f64 = String::from_utf8_lossy(&out.stdout)
        .split("H2=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(h2, stdout_h2);
}

#[test]
fn solve_rejects_even_n_max() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--lambda", "0.01", "--n-max", "4"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--lambda", "0.01", "--freeze", "maybe"]);
    assert_eq!(code(&out), 2);
    let out = run_in(dir.path(), &["solve"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_exit_3_on_divergence_with_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--lambda", "50.0", "--n-max", "9"]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rec: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("solve-l50-n9.json")).unwrap(),
    )
    .unwrap();
    assert!(rec["status"] == "Diverged" || rec["status"] == "Degenerate");
}

#[test]
fn solve_two_step_and_warm_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["solve", "--lambda", "0.01", "--n-max", "15", "--mode", "two-step"],
    );
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("status=Converged"));

    // warm start seeded from the plain record
    let out = run_in(dir.path(), &["solve", "--lambda", "0.01", "--n-max", "15"]);
    assert_eq!(code(&out), 0);
    let seed = dir.path().join("solve-l0.01-n15.json");
    let out = run_in(
        dir.path(),
        &[
            "solve",
            "--lambda",
            "0.011",
            "--n-max",
            "15",
            "--mode",
            "warm",
            "--seed",
            seed.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("status=Converged"));

    // warm without a seed is a flag error
    let out = run_in(
        dir.path(),
        &["solve", "--lambda", "0.011", "--mode", "warm"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_is_deterministic_up_to_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run_in(
            dir.path(),
            &[
                "solve",
                "--lambda",
                "0.02",
                "--n-max",
                "21",
                "--record",
                path.to_str().unwrap(),
            ],
        );
        assert_eq!(code(&out), 0);
    }
    let mut ja: Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let mut jb: Value = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    ja["timestamp"] = Value::Null;
    jb["timestamp"] = Value::Null;
    assert_eq!(ja, jb);
}

#[test]
fn scan_writes_rows_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "scan",
            "--lambdas",
            "0.01,0.2",
            "--n-maxes",
            "9,15",
            "--max-iter",
            "100",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lambda,n_max,status,classification,max_nu_conv,max_delta_conv"
    );
    assert_eq!(text.lines().count(), 5); // header + 4 cells
    assert!(text.contains("Converged"));

    let th = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert_eq!(th.lines().next().unwrap(), "lambda,first_unstable_n_max");
    assert_eq!(th.lines().count(), 3);
}

#[test]
fn scan_records_cell_failures_in_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["scan", "--lambdas", "0.01", "--n-maxes", "9,4", "--max-iter", "50"],
    );
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(text.contains("Error"), "scan.csv: {text}");
}

#[test]
fn signmap_grid_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "signmap",
            "--lambdas",
            "0.01",
            "--h2-min",
            "0.9",
            "--h2-max",
            "1.05",
            "--h2-count",
            "4",
            "--n-max",
            "9",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("signmap.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,h2,result,first_violation_n");
    assert_eq!(text.lines().count(), 5);
    // H^2 < 1 flips the H^4 sign immediately
    assert!(text.contains("violation,3"));

    let out = run_in(dir.path(), &["signmap", "--h2-count", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn plot_renders_traces_and_ratio_curves() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = run_in(
        dir.path(),
        &[
            "solve",
            "--lambda",
            "0.01",
            "--n-max",
            "15",
            "--trace",
            trace.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0);

    let svg = dir.path().join("fig.svg");
    let out = run_in(
        dir.path(),
        &["plot", "--trace", trace.to_str().unwrap(), "--out", svg.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    assert!(text.contains("<polyline"));

    let svg2 = dir.path().join("ratios.svg");
    let out = run_in(
        dir.path(),
        &[
            "plot",
            "--trace",
            trace.to_str().unwrap(),
            "--out",
            svg2.to_str().unwrap(),
            "--ratios",
        ],
    );
    assert_eq!(code(&out), 0);
    assert!(std::fs::read_to_string(&svg2).unwrap().contains("<polyline"));

    // missing trace file is a usage error
    let out = run_in(
        dir.path(),
        &["plot", "--trace", "/nonexistent.csv", "--out", svg.to_str().unwrap()],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn plot_single_iteration_trace_is_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    // max-iter 1 gives a start snapshot and one iteration
    let out = run_in(
        dir.path(),
        &[
            "solve",
            "--lambda",
            "0.01",
            "--n-max",
            "9",
            "--max-iter",
            "1",
            "--trace",
            trace.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0);
    let svg = dir.path().join("one.svg");
    let out = run_in(
        dir.path(),
        &["plot", "--trace", trace.to_str().unwrap(), "--out", svg.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
}

#[test]
fn oracle_pass_fail_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "oracle",
            "--lambda",
            "1e-3",
            "--order",
            "4",
            "--n-max",
            "29",
            "--tol",
            "1e-8",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "n,solver_value,series_value,relative_deviation"
    );

    // a non-converging coupling exits 3
    let out = run_in(
        dir.path(),
        &["oracle", "--lambda", "0.1", "--n-max", "55", "--order", "4"],
    );
    assert_eq!(code(&out), 3);

    // order 0 is rejected
    let out = run_in(dir.path(), &["oracle", "--lambda", "1e-3", "--order", "0"]);
    assert_eq!(code(&out), 2);

    // an impossible tolerance exits 1
    let out = run_in(
        dir.path(),
        &["oracle", "--lambda", "1e-3", "--n-max", "29", "--tol", "1e-30"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn oracle_series_dump_schema() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("series.csv");
    let out = run_in(
        dir.path(),
        &[
            "oracle",
            "--lambda",
            "1e-3",
            "--n-max",
            "9",
            "--order",
            "3",
            "--tol",
            "1e-6",
            "--dump-series",
            dump.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().next().unwrap(), "component,power,coefficient");
    // 5 components x 4 coefficients
    assert_eq!(text.lines().count(), 21);
    assert!(text.contains("3,1,-6"));
}

#[test]
fn scan_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = run_in(
            dir.path(),
            &[
                "scan",
                "--lambdas",
                "0.01,0.05",
                "--n-maxes",
                "15",
                "--max-iter",
                "120",
                "--csv",
                p.to_str().unwrap(),
            ],
        );
        assert_eq!(code(&out), 0);
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "scan output differs between identical runs"
    );
}
