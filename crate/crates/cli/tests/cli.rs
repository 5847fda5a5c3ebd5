use std::path::Path;
use std::process::{Command, Output};

fn gspt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gspt"))
        .args(args)
        .env("GSPT_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn simulate_fig7_reaches_endemic_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = gspt(
        dir.path(),
        &[
            "simulate", "--preset", "fig7", "--u0", "0.95", "--v0", "0.02",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,u,v,chart,event"));
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .take(3)
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((last[1] - 0.48837).abs() < 1e-3 && (last[2] - 0.02326).abs() < 1e-3);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulate.json")).unwrap())
            .unwrap();
    assert_eq!(meta["meta"]["params"]["beta"], 0.11);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--grid-nu",
        "2",
        "--grid-nv",
        "2",
        "--grid-jitter",
        "0.3",
        "--seed",
        "9",
    ];
    assert!(gspt(a.path(), &args).status.success());
    assert!(gspt(b.path(), &args).status.success());
    for i in 0..4 {
        let f = format!("trajectory_{i:03}.csv");
        assert_eq!(
            std::fs::read(a.path().join(&f)).unwrap(),
            std::fs::read(b.path().join(&f)).unwrap()
        );
    }
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gspt(dir.path(), &["simulate"]).status.code(), Some(1));
    assert_eq!(
        gspt(dir.path(), &["simulate", "--grid-nu", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        gspt(dir.path(), &["simulate", "--u0", "0.5"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_file_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\n  \"preset\": \"fig7\",\n  \"gird\": {}\n}\n").unwrap();
    let o = gspt(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("unknown field `gird`") && err.contains("line 3"),
        "{err}"
    );

    // flags override the file
    std::fs::write(
        &cfg,
        r#"{"preset": "fig4", "ics": [[0.9, 0.02]], "eps": 0.002}"#,
    )
    .unwrap();
    let o = gspt(
        dir.path(),
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--eps",
            "0.001",
            "--t-max",
            "10",
        ],
    );
    assert!(o.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("simulate.json")).unwrap())
            .unwrap();
    assert_eq!(meta["meta"]["params"]["eps"], 0.001);
    assert_eq!(meta["meta"]["params"]["beta"], 0.075);
}

#[test]
fn invalid_parameters_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        gspt(dir.path(), &["classify", "--eps", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        gspt(dir.path(), &["classify", "--preset", "fig9"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(gspt(dir.path(), &["figure", "fig3"]).status.code(), Some(1));
    assert_eq!(gspt(dir.path(), &["frobnicate"]).status.code(), Some(1));
}

#[test]
fn integration_failure_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = gspt(
        dir.path(),
        &[
            "simulate",
            "--u0",
            "0.5",
            "--v0",
            "0.1",
            "--t-max",
            "1e12",
            "--tol-rel",
            "1e-13",
            "--tol-abs",
            "1e-16",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(text.lines().count() > 100);
    assert!(text.lines().last().unwrap().ends_with(",FAILED"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let o = gspt(&file.join("sub"), &["classify"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn selfcheck_passes_and_detects_fault() {
    let dir = tempfile::tempdir().unwrap();
    let o = gspt(dir.path(), &["selfcheck"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let o = gspt(dir.path(), &["selfcheck", "--inject-fault", "chart-field"]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("blowdown-residual"));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("FAIL blowdown-residual"));
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(gspt(p, &["figure", "fig4", "--n", "4"]).status.success());
    assert_eq!(
        header(&p.join("fig4.csv")),
        "u0,v0,predicted_side,simulated_side,agree"
    );
    assert!(gspt(p, &["figure", "fig6", "--n", "21"]).status.success());
    for e in ["0.005", "0.0025", "0.001", "0.0005"] {
        assert_eq!(
            header(&p.join(format!("fig6_eps{e}.csv"))),
            "beta,u2,v2,exists"
        );
    }
    assert!(gspt(p, &["sweep", "--n", "21"]).status.success());
    assert_eq!(header(&p.join("sweep.csv")), "beta,u2,v2,exists");
    assert!(gspt(p, &["nullclines", "--n", "50"]).status.success());
    assert_eq!(header(&p.join("nullcline_L1.csv")), "param,u,v");
    assert!(gspt(p, &["figure", "fig5", "--n", "3"]).status.success());
    assert_eq!(header(&p.join("fig5_distance.csv")), "d,eps,distance");
    assert_eq!(
        header(&p.join("fig5_d0.1_orbit_000.csv")),
        "t,u,v,chart,event"
    );
    assert_eq!(header(&p.join("fig5_d0.3_gamma.csv")), "param,u,v");
}

#[test]
fn fig6_window_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gspt(dir.path(), &["figure", "fig6"]).status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig6.json")).unwrap())
            .unwrap();
    for w in v["result"].as_array().unwrap() {
        let lo = w["lower"].as_f64().unwrap();
        let hi = w["upper"].as_f64().unwrap();
        assert!((lo - w["lower_exact"].as_f64().unwrap()).abs() < 1e-6);
        assert!((hi - w["upper_exact"].as_f64().unwrap()).abs() < 1e-6);
    }
}

#[test]
fn fig5_distance_decreases_in_eps() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gspt(dir.path(), &["figure", "fig5", "--n", "2"])
        .status
        .success());
    let text = std::fs::read_to_string(dir.path().join("fig5_distance.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    for d in rows.chunks(3) {
        assert!(d[0][2] > d[1][2] && d[1][2] > d[2][2]);
    }
}

#[test]
fn blowup_verify_and_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let o = gspt(dir.path(), &["blowup-verify"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let o = gspt(dir.path(), &["equilibria"]);
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap())
            .unwrap();
    let ee = &v["result"]["ee"]["location"];
    assert!((ee["u"].as_f64().unwrap() - 0.4883721).abs() < 1e-6);
}
