use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lcap_cli::config::{config_from_header, SweepConfig};
use lcap_core::aloha::sigma_aloha;

fn lcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcap"))
        .args(args)
        .env("LC_CODE_VERSION", "golden")
        .env("LC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = fs::read_to_string(path).unwrap();
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

const GOLDEN_CONFIG: &str = r#"
[sweep]
schemes = ["grid:tri", "grid:square", "aloha"]
beta_values = [2, 10]
alpha_values = [4, 8]
grid_samples = 1

[run]
seed = 3
"#;

#[test]
fn missing_alpha_is_a_usage_error() {
    let out = lcap(&["capacity", "--scheme", "aloha", "--beta", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--alpha"));
}

#[test]
fn unknown_scheme_and_bad_step_are_usage_errors() {
    assert_eq!(
        lcap(&["capacity", "--scheme", "tdma", "--beta", "10", "--alpha", "4"])
            .status
            .code(),
        Some(2)
    );
    let out = lcap(&[
        "trace",
        "--scheme",
        "grid:square",
        "--beta",
        "10",
        "--alpha",
        "4",
        "--dt",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        lcap(&["capacity", "--scheme", "aloha", "--beta", "10", "--alpha", "1.5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failure_rate_abort_exits_3() {
    // a 50 m step overshoots every 8 m contour
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[run]\nscheme = \"grid:square\"\nbeta = 10\nalpha = 4\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lcap"))
        .args(["capacity", "--config", cfg.to_str().unwrap(), "--dt", "50"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn aloha_closed_form_row() {
    let out = lcap(&["capacity", "--scheme", "aloha", "--beta", "10", "--alpha", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = csv::Reader::from_reader(text.as_bytes())
        .records()
        .next()
        .unwrap()
        .unwrap();
    let c: f64 = row[8].parse().unwrap();
    assert!((c - 2.0 / std::f64::consts::PI / 10f64.sqrt()).abs() < 1e-9);
}

#[test]
fn triangular_grid_beats_aloha() {
    let out = lcap(&[
        "capacity", "--scheme", "grid:tri", "--d", "25", "--beta", "10", "--alpha", "4", "--dt", "0.01",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row = csv::Reader::from_reader(text.as_bytes())
        .records()
        .next()
        .unwrap()
        .unwrap();
    let c: f64 = row[8].parse().unwrap();
    assert!(c > 0.2013 && c < 1.0, "{c}");
}

#[test]
fn beta_in_decibels() {
    let out = lcap(&["capacity", "--scheme", "aloha", "--beta-db", "10", "--alpha", "4"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row = csv::Reader::from_reader(text.as_bytes())
        .records()
        .next()
        .unwrap()
        .unwrap();
    assert_eq!(&row[1], "10");
}

#[test]
fn sweep_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, GOLDEN_CONFIG).unwrap();
    let out_dir = dir.path().join("out");
    let out = lcap(&["sweep", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "beta_sweep.csv",
        "alpha_sweep.csv",
        "scaled_beta.csv",
        "scaled_alpha.csv",
    ] {
        let got = fs::read_to_string(out_dir.join(name)).unwrap();
        let golden = golden_dir().join(name);
        if std::env::var_os("LCAP_BLESS").is_some() {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&golden, &got).unwrap();
        }
        let want = fs::read_to_string(&golden).unwrap();
        assert_eq!(got, want, "{name} differs from its golden copy");
    }

    // closed-form column equals the formula, triangular column is one
    for r in rows(&out_dir.join("beta_sweep.csv"))
        .iter()
        .filter(|r| &r[0] == "aloha")
    {
        let beta: f64 = r[1].parse().unwrap();
        let c: f64 = r[8].parse().unwrap();
        assert!((c - sigma_aloha(beta, 4.0).unwrap()).abs() < 1e-9);
    }
    for r in rows(&out_dir.join("scaled_beta.csv")) {
        assert_eq!(r[2].parse::<f64>().unwrap(), 1.0);
        if &r[0] == "10" {
            let aloha: f64 = r[4].parse().unwrap();
            assert!((0.5..1.0).contains(&aloha), "{aloha}");
        }
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[sweep]\nschemes = [\"aloha-mc\", \"aloha\"]\nbeta_values = [10]\nalpha_values = [4]\nsvg = true\n",
    )
    .unwrap();
    let first = dir.path().join("first");
    let out = lcap(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--samples",
        "3",
        "--seed",
        "11",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let header = fs::read_to_string(first.join("beta_sweep.csv")).unwrap();
    let echoed = config_from_header(&header).unwrap();
    assert_eq!(echoed.run.samples, Some(3));
    assert_eq!(echoed.run.seed, Some(11));
    let replay = dir.path().join("replay.toml");
    fs::write(&replay, echoed.echo()).unwrap();
    assert!(SweepConfig::load(&replay).is_ok());

    let second = dir.path().join("second");
    let out = lcap(&["sweep", replay.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(out.status.success());
    for name in [
        "beta_sweep.csv",
        "alpha_sweep.csv",
        "scaled_beta.csv",
        "scaled_alpha.csv",
        "beta_sweep.svg",
        "scaled_alpha.svg",
    ] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn trace_two_transmitters() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pair.csv");
    fs::write(&pts, "# region=100x100\nx,y\n0,0\n20,0\n").unwrap();
    let prefix = dir.path().join("pair");
    let out = lcap(&[
        "trace",
        "--points",
        pts.to_str().unwrap(),
        "--index",
        "0",
        "--beta",
        "4",
        "--alpha",
        "4",
        "--dt",
        "0.01",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pair.json")).unwrap()).unwrap();
    let area = side["area"].as_f64().unwrap();
    let shoelace = side["shoelace_area"].as_f64().unwrap();
    assert!((area - shoelace).abs() / area < 1e-3);
    // SIR = 4 against one interferer is an Apollonius circle: ratio k = 4^(1/4)
    let k = 2f64.sqrt();
    let radius = k * 20.0 / (k * k - 1.0);
    assert!(
        (area - std::f64::consts::PI * radius * radius).abs() / area < 1e-4,
        "{area}"
    );
    let vertices = rows(&dir.path().join("pair.csv"));
    assert_eq!(vertices.len() as u64, side["vertices"].as_u64().unwrap());
}

#[test]
fn trace_grid_center() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sq");
    let out = lcap(&[
        "trace",
        "--scheme",
        "grid:square",
        "--beta",
        "10",
        "--alpha",
        "4",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sq.json")).unwrap()).unwrap();
    assert_eq!(side["transmitter"]["x"].as_f64(), Some(0.0));
    assert!(side["area"].as_f64().unwrap() > 0.0);
    assert!(rows(&dir.path().join("sq.csv")).len() > 100);
}
