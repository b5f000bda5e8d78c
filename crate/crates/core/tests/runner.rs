use std::fs;
use std::path::Path;

use stacost::runner::{self, preset, ExperimentConfig, ProtocolName, TauGrid};
use stacost::Error;

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn fig1_writes_three_panels_per_duration() {
    let dir = tempfile::tempdir().unwrap();
    let summary = runner::run(&preset("fig1").unwrap(), dir.path()).unwrap();
    let csvs: Vec<_> = summary.files.iter().filter(|f| f.ends_with(".csv")).collect();
    assert_eq!(csvs.len(), 6);
    for kind in ["fidelity", "cost_rate", "spectrum"] {
        assert_eq!(csvs.iter().filter(|f| f.contains(kind)).count(), 2, "{kind}");
    }
    let text = read(dir.path(), "lz_spectrum_tau0p1000.csv");
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# stacost experiment=fig1 config_sha256="));
    assert!(meta.ends_with(&summary.config_sha256));
    assert_eq!(lines.next().unwrap(), "protocol,t,e_minus,e_plus");

    let qsl_fid = read(dir.path(), "lz_fidelity_tau22p1430.csv");
    assert!(qsl_fid.lines().any(|l| l.starts_with("bob,")));
    assert!(!read(dir.path(), "lz_fidelity_tau0p1000.csv").contains("bob,"));

    let json: serde_json::Value = serde_json::from_str(&read(dir.path(), "summary.json")).unwrap();
    assert!((json["qsl_time"].as_f64().unwrap() - 22.14).abs() < 0.01);
    assert!(json["bob"]["success"].as_bool().unwrap());
}

#[test]
fn presets_are_byte_identical_on_rerun() {
    for name in ["fig1", "fig4", "fig5"] {
        let cfg = preset(name).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let files = runner::run(&cfg, a.path()).unwrap().files;
        runner::run(&cfg, b.path()).unwrap();
        for f in files {
            assert_eq!(
                fs::read(a.path().join(&f)).unwrap(),
                fs::read(b.path().join(&f)).unwrap(),
                "{name}/{f}"
            );
        }
    }
}

#[test]
fn invalid_cells_are_recorded_and_the_run_continues() {
    let mut cfg = preset("fig4").unwrap();
    cfg.trajectory_taus = vec![1.0];
    cfg.scan = Some(TauGrid::List { values: vec![1.0, 2.0] });
    let dir = tempfile::tempdir().unwrap();
    let s = runner::run(&cfg, dir.path()).unwrap();
    assert!(s.failures.iter().any(|f| f.starts_with("cd@tau=1")), "{:?}", s.failures);
    assert!(s.cost.contains_key("ie@tau=1"));
    let scan = read(dir.path(), "osc_cost_scan.csv");
    let row = scan.lines().find(|l| l.starts_with("1.0000")).unwrap();
    assert!(row.starts_with("1.000000000000e0,,"), "{row}");
}

#[test]
fn configs_with_errors_do_not_run() {
    let mut cfg = preset("fig1").unwrap();
    cfg.protocols.push(ProtocolName::Ie);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(runner::run(&cfg, dir.path()), Err(Error::Config(_))));
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let text = r#"
name = "small-lz"
model = "lz"
protocols = ["cd", "lcd", "cd-optimized"]
trajectory_taus = [1.0]
trajectory_steps = 200

[lz]
delta = 0.2

[scan]
spacing = "list"
values = [0.5, 5.0, 50.0]
"#;
    fs::write(&path, text).unwrap();
    let cfg = runner::load(None, Some(&path)).unwrap();
    assert_eq!(cfg.lz.delta, 0.2);
    assert_eq!(cfg, ExperimentConfig::from_toml_str(text).unwrap());
    let out = dir.path().join("out");
    let s = runner::run(&cfg, &out).unwrap();
    let scan = read(&out, "lz_cost_scan.csv");
    assert_eq!(scan.lines().nth(1).unwrap(), "tau,C_cd,C_lcd,C_cd-optimized");
    assert_eq!(scan.lines().count(), 5);
    assert!(s.crossover["cd-lcd"].is_some());
    let fid = read(&out, "lz_fidelity_tau1p0000.csv");
    assert_eq!(fid.lines().filter(|l| l.starts_with("cd,")).count(), 201);
}
