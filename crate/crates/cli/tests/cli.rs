use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relaynet::frustration::frustrated_points;
use relaynet::model::Channel;
use relaynet_cli::Scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaynet"))
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const TOY: &str = r#"
window = 2.0
lambda = 4.0
path_loss = { kind = "min-power", cap = 1.0, exponent = 4.0 }
qos = { kind = "min-cap", cap = 10.0 }
intensity = { kind = "uniform-disk", radius = 2.0 }

[grid]
kind = "triadic"
m = 1

[frustration.up]
c = 0.05
b = 0.5

[frustration.do_dir]
c = 0.02
b = 0.25
"#;

fn write_toy(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("toy.toml");
    std::fs::write(&p, format!("{TOY}\n{extra}")).unwrap();
    p
}

#[test]
fn help_lists_config_keys_with_units() {
    for cmd in ["simulate", "estimate", "minimize", "approx", "analyze"] {
        let out = String::from_utf8(run(&[cmd, "--help"]).stdout).unwrap();
        for key in ["window", "lambda", "path_loss.exponent", "intensity.radius", "mobility.speed", "grid.m", "frustration.<ch>.b", "c_over_c0"] {
            assert!(out.contains(key), "{cmd} --help lacks {key}");
        }
        assert!(out.contains("[length]") && out.contains("[time]"));
    }
}

#[test]
fn presets_parse() {
    for name in ["uplink-direct", "downlink-direct", "relay-ring-strip", "oracle-constant-ell"] {
        Scenario::load(&preset(name), &[]).unwrap();
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(dir.path(), "");
    let cfg = toy.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let bad = [
        vec!["estimate", "--config", cfg, "--set", "lambda=-1", "--out-dir", out],
        vec!["estimate", "--config", cfg, "--set", "frustration.up.c=20", "--out-dir", out],
        vec!["estimate", "--config", cfg, "--set", "surprise=1", "--out-dir", out],
        vec!["estimate", "--config", cfg, "--set", "frustration.up.c_over_c0=1", "--out-dir", out],
        vec!["estimate", "--config", "/nonexistent.toml", "--out-dir", out],
        vec!["minimize", "--config", cfg, "--set", "grid.m=-1", "--out-dir", out],
    ];
    for args in bad {
        let o = run(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn simulate_is_reproducible_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(dir.path(), "");
    let cfg = toy.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["simulate", "--config", cfg, "--seed", "7", "--out-dir", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let users = std::fs::read_to_string(a.join("users.csv")).unwrap();
    assert_eq!(users, std::fs::read_to_string(b.join("users.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("simulate.json")).unwrap(), std::fs::read(b.join("simulate.json")).unwrap());

    let sc = Scenario::load(&toy, &[]).unwrap();
    let exp = sc.experiment().unwrap();
    let cfg = exp.configuration(0, 7);
    let fm = frustrated_points(&exp.model, &exp.frustration, &cfg);
    let rows: Vec<&str> = users.lines().skip(1).collect();
    assert_eq!(rows.len(), cfg.len());
    for (k, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0].parse::<f64>().unwrap(), cfg.points[k].x);
        let up_dir: f64 = f[3].parse().unwrap();
        assert_eq!(up_dir, exp.model.channel_qos(Channel::UpDir, cfg.points[k], &cfg));
        let mask: u8 = f[6].parse().unwrap();
        assert_eq!(mask & 1 != 0, fm.up.flags[k]);
        assert_eq!(mask & 8 != 0, fm.do_dir.flags[k]);
    }
}

#[test]
fn empty_configuration_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(dir.path(), "");
    // mean count 4 pi 1e-4: run 0 is empty
    let o = run(&["simulate", "--config", toy.to_str().unwrap(), "--set", "lambda=1e-4", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let users = std::fs::read_to_string(dir.path().join("users.csv")).unwrap();
    assert_eq!(users.lines().count(), 1);
}

#[test]
fn estimate_certain_event_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(dir.path(), "");
    let out = dir.path().join("certain.json");
    let o = run(&[
        "estimate", "--config", toy.to_str().unwrap(), "--runs", "1", "--set", "frustration.up.b=-1",
        "--set", "frustration.do_dir.b=-1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("O(N^2)"));
    let r = json(&out);
    assert_eq!(r["p_hat"], 1.0);
    let keys: Vec<&String> = r.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 7);

    // N ~ Poisson(10 pi); event {N > 38.5}
    let out = dir.path().join("oracle.json");
    let o = run(&[
        "estimate", "--config", preset("oracle-constant-ell").to_str().unwrap(), "--runs", "20000", "--seed", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("O(N)"));
    let r = json(&out);
    let p_exact = poisson_tail(10.0 * std::f64::consts::PI, 38);
    let p = r["p_hat"].as_f64().unwrap();
    assert!((p - p_exact).abs() < 4.0 * (p_exact * (1.0 - p_exact) / 20000.0).sqrt(), "{p} vs {p_exact}");
}

fn poisson_tail(m: f64, k: u64) -> f64 {
    let mut term = (-m).exp();
    let mut cdf = term;
    for j in 1..=k {
        term *= m / j as f64;
        cdf += term;
    }
    1.0 - cdf
}

#[test]
fn hits_dump_feeds_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(dir.path(), "");
    let hits = dir.path().join("hits.csv");
    let o = run(&[
        "estimate", "--config", toy.to_str().unwrap(), "--runs", "300", "--set", "frustration.up.b=0.25",
        "--out-dir", dir.path().to_str().unwrap(), "--dump-hits", hits.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("estimate.json"));
    let o = run(&[
        "analyze", "--config", toy.to_str().unwrap(), "--hits", hits.to_str().unwrap(), "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = json(&dir.path().join("analysis.json"));
    assert_eq!(a["hit_runs"], r["hits"]);
    let mass = a["planar_mass"].as_f64().unwrap();
    let expect = a["users_per_run_over_lambda"].as_f64().unwrap();
    assert!((mass - expect).abs() < 0.05 * expect);

    std::fs::write(&hits, "run_id,x,y,channel_mask\n").unwrap();
    let o = run(&["analyze", "--config", toy.to_str().unwrap(), "--hits", hits.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn minimize_closed_form_vacuous_and_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("oracle-constant-ell");
    let out = dir.path().to_str().unwrap();
    // constant loss: all cells are frustrated iff total mass > 1/c, so the
    // minimizer is t*mu with t = (1/c)/mu(W)
    let o = run(&["minimize", "--config", cfg.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("minimize.json"));
    let mu = r["mu_total"].as_f64().unwrap();
    let t = 38.5 / 10.0 / mu;
    let h = mu * (t * t.ln() - t + 1.0);
    assert!((r["entropy"].as_f64().unwrap() - h).abs() < 1e-5 * h);
    let rows = std::fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    assert_eq!(rows.lines().count(), 10);

    let o = run(&["minimize", "--config", cfg.to_str().unwrap(), "--set", "frustration.up_dir.b=-1", "--out-dir", out]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&dir.path().join("minimize.json"))["entropy"], 0.0);

    let o = run(&["minimize", "--config", cfg.to_str().unwrap(), "--set", "frustration.up_dir.c=0", "--out-dir", out]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn minimize_mobile_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let toy = write_toy(
        dir.path(),
        "[mobility]\nspeed = 1.0\nhorizon = 1.0\ninstants = 9\ntrajectories = 40\n",
    );
    let o = run(&[
        "minimize", "--config", toy.to_str().unwrap(), "--set", "frustration.up.a=0.3", "--set",
        "frustration.do_dir.a=0.3", "--restarts", "2", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("minimize.json"));
    assert_eq!(r["constraint_residual"], 0.0);
    let header = std::fs::read_to_string(dir.path().join("measure.csv")).unwrap();
    assert!(header.starts_with("path,mass"));
}

#[test]
fn approx_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("uplink-direct");
    let out = dir.path().to_str().unwrap();
    let o = run(&["approx", "--config", cfg.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&dir.path().join("approx.json"))["status"], "degenerate");
    let o = run(&[
        "approx", "--config", cfg.to_str().unwrap(), "--set", "frustration.up_dir.c_over_c0=0.9", "--points", "51",
        "--out-dir", out,
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("approx.json"));
    assert_eq!(r["status"], "ok");
    assert!(r["alpha_residual"].as_f64().unwrap() <= 1e-6);
    let rows = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(rows.lines().count(), 52);
}
