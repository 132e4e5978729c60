use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const HEADER: &str = "p,i_ab,i_ae,key_rate,holevo,qber_raw,qber_sifted";

fn ppsim(args: &[&str]) -> Output {
    ppsim_env(args, &[])
}

fn ppsim_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ppsim"));
    cmd.args(args).env_remove("PPSIM_JOBS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ppsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn default_sweep_layout() {
    let out = ppsim(&["sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some(HEADER));
    let r = rows(&text);
    assert_eq!(r.len(), 101);
    assert_eq!(r[0][0], 0.0);
    assert_eq!(r[100][0], 1.0);
    let expected = 0.75 * (4.0f64 / 3.0).log2();
    assert!((r[0][1] - expected).abs() < 1e-9);
    assert!((r[0][2] - expected).abs() < 1e-9);
}

#[test]
fn values_have_twelve_significant_digits() {
    let text = stdout(&ppsim(&["sweep", "--steps", "3"]));
    let line = text.lines().nth(2).unwrap();
    let i_ab = line.split(',').nth(1).unwrap();
    let digits: String = i_ab.chars().filter(|c| c.is_ascii_digit()).collect();
    assert_eq!(digits.trim_start_matches('0').len(), 12, "{i_ab}");
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let (a, b) = (scratch("a.csv"), scratch("b.csv"));
    for path in [&a, &b] {
        let out = ppsim(&[
            "sweep",
            "--channel",
            "ad",
            "--steps",
            "101",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn worker_count_does_not_change_output() {
    let serial = ppsim(&["sweep", "--steps", "41", "--jobs", "1"]).stdout;
    let parallel = ppsim(&["sweep", "--steps", "41", "--jobs", "4"]).stdout;
    let from_env = ppsim_env(&["sweep", "--steps", "41"], &[("PPSIM_JOBS", "3")]).stdout;
    assert_eq!(serial, parallel);
    assert_eq!(serial, from_env);
    let js1 = ppsim(&["sweep", "--steps", "5", "--format", "json", "--jobs", "1"]).stdout;
    let js4 = ppsim(&["sweep", "--steps", "5", "--format", "json", "--jobs", "4"]).stdout;
    assert_eq!(js1, js4);
}

#[test]
fn depolarizing_eve_information_is_flat() {
    let r = rows(&stdout(&ppsim(&[
        "sweep",
        "--channel",
        "depol",
        "--steps",
        "11",
    ])));
    assert_eq!(r.len(), 11);
    for row in &r {
        assert!((row[2] - r[0][2]).abs() < 1e-9);
    }
}

#[test]
fn ad_sweep_endpoint_key_rate_positive() {
    let r = rows(&stdout(&ppsim(&[
        "sweep",
        "--channel",
        "ad",
        "--steps",
        "2",
    ])));
    assert_eq!(r.len(), 2);
    assert_eq!(r[1][0], 1.0);
    assert!(r[1][3] > 0.0, "key rate at p = 1 is {}", r[1][3]);
}

#[test]
fn noiseless_point_table() {
    let out = ppsim(&["point", "--channel", "none"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["p", "joint", "metrics", "eigenvalues"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let got: Vec<f64> = v["joint"]["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let want = ppsim::closed_form::noiseless_table();
    for (g, w) in got.iter().zip(want.values()) {
        assert!((g - w).abs() < 1e-10);
    }
}

#[test]
fn damping_point_eigenvalues() {
    let v = json(&ppsim(&["point", "--channel", "ad", "--p", "0.5"]));
    let keys = ["rho_ht_0", "rho_ht_1", "rho_ht_average"];
    let want = ppsim::closed_form::amplitude_damping_eigenvalues(0.5);
    for (key, w) in keys.iter().zip(want.iter()) {
        let mut got: Vec<f64> = v["eigenvalues"][key]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        // The 6-dimensional spectrum carries extra zeros.
        let mut w = w.clone();
        w.resize(got.len(), 0.0);
        w.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(&w) {
            assert!((g - e).abs() < 1e-9, "{key}: {got:?} vs {w:?}");
        }
    }
}

#[test]
fn depolarizing_point_at_full_noise() {
    let v = json(&ppsim(&["point", "--channel", "depol", "--p", "1"]));
    // Index (a=1, e=0, b=0).
    let p100 = v["joint"]["values"][8].as_f64().unwrap();
    assert!((p100 - 1.0 / 16.0).abs() < 1e-9);
}

#[test]
fn point_csv_row() {
    let text = stdout(&ppsim(&["point", "--p", "0.5", "--format", "csv"]));
    let sweep = stdout(&ppsim(&["sweep", "--steps", "3"]));
    assert_eq!(text.lines().next(), Some(HEADER));
    assert_eq!(text.lines().nth(1), sweep.lines().nth(2));
}

#[test]
fn classical_sim_rules_out_local_noise() {
    let out = ppsim(&["classical-sim", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "infeasibility_confirmed");
    for step in ["vanishing_block", "coin_branch", "conditional_branch"] {
        assert_eq!(v["contradictions"][step]["passed"], true, "{step}");
    }
    assert!(v["search"]["min_distance"].as_f64().unwrap() > 0.0);
}

#[test]
fn classical_sim_near_zero_noise_is_small_but_positive() {
    let out = ppsim(&["classical-sim", "--p", "0.0001"]);
    assert_eq!(out.status.code(), Some(0));
    let d = json(&out)["search"]["min_distance"].as_f64().unwrap();
    assert!(d > 0.0 && d < 1e-3, "{d}");
}

#[test]
fn classical_sim_output_is_reproducible() {
    let a = ppsim(&["classical-sim", "--p", "0.3", "--seed", "11"]).stdout;
    let b = ppsim(&["classical-sim", "--p", "0.3", "--seed", "11", "--jobs", "2"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn unconfirmed_contradictions_exit_two() {
    // Against the simulated table the conditional-branch step only excludes
    // p > 2/3, so the verdict stays open at p = 0.5.
    let out = ppsim(&["classical-sim", "--p", "0.5", "--target", "simulated"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["verdict"], "unconfirmed");
    assert!(v["search"]["min_distance"].as_f64().unwrap() > 0.1);
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["classical-sim", "--p", "1.5"],
        vec!["classical-sim", "--p", "0"],
        vec!["classical-sim", "--p", "0.5", "--metric", "kl"],
        vec!["sweep", "--steps", "1"],
        vec!["sweep", "--p-end", "1.2"],
        vec!["sweep", "--channel", "phase"],
        vec!["sweep", "--jobs", "0"],
        vec!["point", "--p", "-0.1"],
        vec!["frobnicate"],
        vec![],
    ] {
        let out = ppsim(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    let out = ppsim_env(&["sweep", "--steps", "3"], &[("PPSIM_JOBS", "many")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unwritable_output_path() {
    let out = ppsim(&["sweep", "--steps", "2", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot write"));
}

#[test]
fn selftest_reports_every_criterion() {
    let out = ppsim(&["selftest"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("criterion"))
        .collect();
    assert_eq!(lines.len(), 10);
    let any_failed = lines.iter().any(|l| l.contains(" FAIL: "));
    assert_eq!(out.status.code(), Some(if any_failed { 1 } else { 0 }));
}
