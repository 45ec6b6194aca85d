//! End-to-end runs of the `amm` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn amm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amm"))
        .args(args)
        .env_remove("AMM_TOL")
        .output()
        .expect("amm runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn value(out: &Output) -> f64 {
    report(out)["value"].as_f64().expect("numeric value")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn pr_box_json() -> String {
    let mut p = vec![vec![vec![vec![0.0; 2]; 2]; 2]; 2];
    for (x, px) in p.iter_mut().enumerate() {
        for (y, pxy) in px.iter_mut().enumerate() {
            for (a, pa) in pxy.iter_mut().enumerate() {
                for (b, v) in pa.iter_mut().enumerate() {
                    if (a ^ b) == (x & y) {
                        *v = 0.5;
                    }
                }
            }
        }
    }
    serde_json::json!({ "schema_version": 1, "p": p }).to_string()
}

#[test]
fn tsirelson_chsh() {
    let out = amm(&["tsirelson", "--functional", "chsh", "--level", "1"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert!((r["value"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["status"], "optimal");
    assert!(out.stderr.is_empty(), "default output is the report only");
}

#[test]
fn layout_stats_in_report() {
    let out = amm(&["tsirelson", "--functional", "chsh", "--level", "2", "--layout-stats"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["layout"]["block_dim"], 9);
    assert_eq!(r["layout"]["n_blocks"], 4);
}

#[test]
fn sr_di_at_chsh_maximum() {
    let out = amm(&["sr-di", "--functional", "chsh", "--value", "2.8284", "--level", "2"]);
    assert_eq!(code(&out), 0);
    assert!((value(&out) - 0.1716).abs() < 1e-3);
}

#[test]
fn sr_di_beyond_algebraic_maximum_is_infeasible() {
    let out = amm(&["sr-di", "--functional", "chsh", "--value", "4.5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sr_di_from_simulated_table() {
    let out = amm(&["sr-di", "--state", "phi-plus-d2", "--alice", "chsh-alice", "--bob", "chsh-bob", "--level", "1"]);
    assert_eq!(code(&out), 0);
    assert!((value(&out) - (2f64.sqrt() - 1.0).powi(2)).abs() < 1e-3);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = amm(&[
        "sweep", "--functional", "chsh", "--from", "2", "--to", "2.8284", "--steps", "9", "--level", "2", "--jobs", "2",
        "-o", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "s_obs,bound,level");
    assert_eq!(lines.len(), 10);
    let bounds: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(bounds[0].abs() < 1e-6);
    assert!(bounds.windows(2).all(|w| w[1] > w[0]));
    assert!((bounds[8] - 0.1716).abs() < 1e-3);
}

#[test]
fn membership_of_pr_box_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let table = write(dir.path(), "pr.json", &pr_box_json());
    let out = amm(&["membership", "--table", &table, "--level", "1"]);
    assert_eq!(code(&out), 1);
    assert_eq!(report(&out)["status"], "infeasible");
}

#[test]
fn malformed_input_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let table = write(dir.path(), "bad.json", "{\n  \"p\": [\n    }\n");
    let out = amm(&["membership", "--table", &table]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&amm(&["tsirelson"])), 2);
    assert_eq!(code(&amm(&["tsirelson", "--functional", "nope"])), 2);
    assert_eq!(code(&amm(&["tsirelson", "--functional", "chsh", "--level", "0"])), 2);
    assert_eq!(code(&amm(&["sr", "--state", "phi-plus-d2"])), 2);
    assert_eq!(code(&amm(&["tsirelson", "--functional", "chsh", "--tol", "-1"])), 2);
}

#[test]
fn tolerance_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_amm"))
        .args(["tsirelson", "--functional", "chsh"])
        .env("AMM_TOL", "1e-4")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert!(r["solver"]["iterations"].as_u64().unwrap() < 11);
    assert!((r["value"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-3);
}

#[test]
fn reports_are_deterministic() {
    let args = ["sr-di", "--functional", "i3322", "--value", "0.2", "--level", "1"];
    let (a, b) = (report(&amm(&args)), report(&amm(&args)));
    assert_eq!(a["value"], b["value"]);
    assert_eq!(a["inputs_digest"], b["inputs_digest"]);
    assert_eq!(a["solver"], b["solver"]);
}

#[test]
fn trusted_side_quantities() {
    let sr = amm(&["sr", "--state", "phi-plus-d2", "--alice", "mub-pair"]);
    assert_eq!(code(&sr), 0);
    assert!((value(&sr) - (2f64.sqrt() - 1.0).powi(2)).abs() < 1e-6);
    let sw = amm(&["sw", "--state", "phi-plus-d2", "--alice", "mub-pair"]);
    assert_eq!(code(&sw), 0);
    assert!((value(&sw) - 1.0).abs() < 1e-6);
    let ir = amm(&["ir", "--alice", "tetrahedron"]);
    assert!((value(&ir) - 0.2679).abs() < 1e-3);
}

#[test]
fn ir_from_bloch_observables() {
    let dir = tempfile::tempdir().unwrap();
    let obs = write(
        dir.path(),
        "obs.json",
        r#"[{"alpha": 0, "r": [1, 0, 0]}, {"alpha": 0, "r": [0, 0, 1]}]"#,
    );
    let out = amm(&["ir", "--observables", &obs]);
    assert_eq!(code(&out), 0);
    assert!((value(&out) - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-6);
    let bad = write(dir.path(), "bad.json", r#"[{"alpha": 0.5, "r": [1, 0, 0]}]"#);
    assert_eq!(code(&amm(&["ir", "--observables", &bad])), 2);
}

#[test]
fn busch_criterion() {
    let out = amm(&["busch", "--r1", "1,0,0", "--r2", "0,0,1"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["jointly_measurable"], false);
    assert!((r["lhs"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    let out = amm(&["busch", "--r1", "0.5,0,0", "--r2", "0,0,0.5"]);
    assert_eq!(report(&out)["jointly_measurable"], true);
    let mub = report(&amm(&["busch", "--mub"]));
    assert!((mub["value"].as_f64().unwrap() - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
}

#[test]
fn chain_is_ordered() {
    let out = amm(&["chain", "--state", "phi-plus-d3", "--alice", "qutrit-mub-pair", "--concurrent"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["ordered"], true);
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn se_observables_of_maximally_entangled_state() {
    let out = amm(&["se-obs", "--state", "phi-plus-d2", "--alice", "mub-pair", "--with-ir"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["povms"].as_array().unwrap().len(), 2);
    assert!((r["ir"]["value"].as_f64().unwrap() - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-6);
}

#[test]
fn simulate_with_dilation() {
    let out = amm(&["simulate", "--state", "mixed-d2", "--alice", "trine", "--bob", "trine", "--dilate"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["neumark"]["projective"], true);
    assert!(r["neumark"]["max_probability_change"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["p"].as_array().unwrap().len(), 1);
}

#[test]
fn verbose_streams_iterations() {
    let out = amm(&["-vv", "tsirelson", "--functional", "chsh"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("iter"));
}
