mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use burst_pide::commands::{cmd_classify, cmd_simulate, cmd_ssa, cmd_stationary, cmd_verify};
use burst_pide::config::RunConfig;
use burst_pide::output::data_lines;

use common::{fixture, fixture_path};

const ALL: [&str; 8] = ["shape1", "shape2", "shape3", "shape4", "shape5", "independent", "paired", "toggle"];

fn small_shape1(dir: &Path) -> RunConfig {
    let mut c = fixture("shape1");
    c.output = dir.to_path_buf();
    c.grid.cells = 256;
    let s = c.solver.as_mut().unwrap();
    s.dt = 0.02;
    s.t_end = 4.0;
    s.snapshot_every = Some(1.0);
    c.ssa.as_mut().unwrap().samples = 2000;
    c.entropy.probes = 20;
    c
}

fn small_toggle(dir: &Path) -> RunConfig {
    let mut c = fixture("toggle");
    c.output = dir.to_path_buf();
    c.grid.cells = 48;
    let s = c.solver.as_mut().unwrap();
    s.t_end = 2.0;
    s.stationary_tolerance = 1e-8;
    c.ssa.as_mut().unwrap().samples = 2000;
    c
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn fixtures_round_trip() {
    for name in ALL {
        let c = fixture(name);
        let again = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again, "{name}");
        assert_eq!(c.hash().unwrap(), again.hash().unwrap());
    }
}

#[test]
fn one_gene_commands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_shape1(dir.path());
    let out = cmd_stationary(&c).unwrap();
    assert!(out.pass);
    let shape = read(&dir.path().join("shape.txt"));
    assert!(shape.contains("case"), "{shape}");
    assert!(cmd_classify(&c).unwrap().pass);

    let out = cmd_simulate(&c).unwrap();
    assert!(out.pass, "{}", out.summary);
    let trace = read(&dir.path().join("trace.csv"));
    let rows = data_lines(&trace);
    assert_eq!(rows[0], "t,G2,D2,dG2dt,mass,umin,umax");
    assert_eq!(rows.len(), 1 + 9);
    assert_eq!(dir.path().join("snapshots").read_dir().unwrap().count(), 5);

    let out = cmd_ssa(&c).unwrap();
    assert!(out.summary.starts_with("L1"), "{}", out.summary);
    assert!(read(&dir.path().join("compare.txt")).contains("l1 = "));

    let out = cmd_verify(&c).unwrap();
    assert!(out.pass, "{}", out.summary);
    let inv = read(&dir.path().join("invariants.txt"));
    assert!(inv.contains("overall = PASS"), "{inv}");
}

#[test]
fn reruns_reproduce_data_rows() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_shape1(dir.path());
    let files = ["trace.csv", "samples.csv", "hist.csv"];
    cmd_simulate(&c).unwrap();
    cmd_ssa(&c).unwrap();
    let first: Vec<String> = files.iter().map(|f| read(&dir.path().join(f))).collect();
    cmd_simulate(&c).unwrap();
    cmd_ssa(&c).unwrap();
    for (f, before) in files.iter().zip(&first) {
        let after = read(&dir.path().join(f));
        assert_eq!(data_lines(before), data_lines(&after), "{f}");
        assert!(after.contains(&format!("# config_sha256 = {}", c.hash().unwrap())));
    }
}

#[test]
fn network_commands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_toggle(dir.path());
    assert!(cmd_stationary(&c).unwrap().pass);
    for f in ["profile.csv", "marginal_0.csv", "marginal_1.csv", "stationary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let out = cmd_simulate(&c).unwrap();
    assert!(read(&dir.path().join("decay.txt")).contains("g2_monotone"), "{}", out.summary);
    let out = cmd_ssa(&c).unwrap();
    assert!(out.summary.contains("modes"), "{}", out.summary);
}

fn run_bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_burst-pide")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let shape1 = fixture_path("shape1");
    let shape1 = shape1.to_str().unwrap();
    let outdir = dir.path().to_str().unwrap();

    let (code, text) = run_bin(&["classify", shape1, "--output", outdir, "--cells", "512"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.lines().any(|l| l == "case 1"), "{text}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, read(&fixture_path("shape1")).replace("eps = 0.15", "eps = 2.0")).unwrap();
    let (code, _) = run_bin(&["classify", bad.to_str().unwrap()]);
    assert_eq!(code, 2);

    fs::write(&bad, "output = \"x\"\n[model]\nkind = \"one_gene\"\n").unwrap();
    let (code, _) = run_bin(&["stationary", bad.to_str().unwrap()]);
    assert_eq!(code, 2);

    let (code, _) = run_bin(&["classify", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code, 2);

    // classify needs a one-gene model
    let toggle = fixture_path("toggle");
    let (code, _) = run_bin(&["classify", toggle.to_str().unwrap(), "--output", outdir]);
    assert_eq!(code, 2);
}
