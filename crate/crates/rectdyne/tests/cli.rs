//! Black-box tests of the `rectdyne` binary: exit codes, output files and
//! the documented command examples.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rectdyne::config::SimulationConfig;
use rectdyne::formats::TraceFileReader;
use rectdyne_core::protocols::{Protocol, ProtocolConfig, TraceGenerator};
use rectdyne_core::spectral::dft_power;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rectdyne"));
    c.env_remove("RECTDYNE_OUT_DIR");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &SimulationConfig) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

/// Numeric columns of a CSV table written by the tool.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for l in lines {
        for (c, v) in cols.iter_mut().zip(l.split(',')) {
            c.push(v.parse().unwrap());
        }
    }
    (header, cols)
}

fn small(protocol: Protocol, n: usize) -> SimulationConfig {
    let mut p = ProtocolConfig::reference(protocol);
    p.n_traces = n;
    SimulationConfig::new(p)
}

#[test]
fn single_trace_qdyne_psd_equals_dft_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Protocol::Qdyne, 1);
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = run(&["--config", path.to_str().unwrap(), "--out-dir", "o", "simulate"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, cols) = read_table(&dir.path().join("o/psd.csv"));
    let trace = TraceGenerator::new(cfg.protocol.clone()).unwrap().trace(0);
    let expected = dft_power(&trace.counts, cfg.protocol.geometry.sample_interval).unwrap();
    assert_eq!(cols[2], expected.power);
    assert_eq!(cols[1], expected.bin_frequencies);
}

#[test]
fn in_situ_average_oscillates_at_the_signal() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &small(Protocol::InSitu, 24_000));
    let out = run(&["--config", path.to_str().unwrap(), "--out-dir", "o", "simulate"], dir.path());
    assert!(out.status.success());
    let (header, cols) = read_table(&dir.path().join("o/averaged_trace.csv"));
    assert_eq!(header, ["index", "time_s", "signal"]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/snr.json")).unwrap()).unwrap();
    let kept = report["summary"]["traces_kept"].as_f64().unwrap();
    let amp = report["amplitude"].as_f64().unwrap();
    // Visible by eye: the oscillation exceeds the residual per-readout noise sqrt(n / N).
    assert!(kept > 14_000.0);
    assert!(amp > (0.057 / kept).sqrt(), "{amp}");
    assert!(report["snr"]["snr"].as_f64().unwrap() > 100.0);
    assert_eq!(report["snr"]["peak_bin"], 1667);
    assert_eq!(cols[2].len(), 4000);
}

#[test]
fn rerun_is_byte_identical_and_manifest_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Protocol::ExSitu, 50);
    cfg.traces = rectdyne::config::TraceOutput::Binary;
    let path = write_config(dir.path(), "c.json", &cfg);
    let c = path.to_str().unwrap();
    assert!(run(&["--config", c, "--out-dir", "a", "--threads", "1", "simulate"], dir.path()).status.success());
    assert!(run(&["--config", c, "--out-dir", "b", "--threads", "2", "simulate"], dir.path()).status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["traces.rdt", "psd.csv", "averaged_trace.csv", "snr.json"]);
    for f in outputs {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let mut r = TraceFileReader::open(&dir.path().join("a/traces.rdt")).unwrap();
    let mut n = 0;
    while r.next_trace().unwrap().is_some() {
        n += 1;
    }
    assert_eq!(n, 50);
}

#[test]
fn seed_override_changes_hash_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &small(Protocol::Qdyne, 3));
    let c = path.to_str().unwrap();
    assert!(run(&["--config", c, "--out-dir", "a", "simulate"], dir.path()).status.success());
    assert!(run(&["--config", c, "--out-dir", "b", "--seed", "9", "simulate"], dir.path()).status.success());
    let m = |d: &str| -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(dir.path().join(d).join("manifest.json")).unwrap()).unwrap()
    };
    assert_ne!(m("a")["config_hash"], m("b")["config_hash"]);
    assert_eq!(m("b")["master_seed"], 9);
    assert_ne!(
        std::fs::read(dir.path().join("a/psd.csv")).unwrap(),
        std::fs::read(dir.path().join("b/psd.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = serde_json::to_value(small(Protocol::Qdyne, 1)).unwrap();
    v["protocol"]["geometry"]["pulse_count"] = 7.into();
    std::fs::write(dir.path().join("bad.json"), v.to_string()).unwrap();
    let out = run(&["--config", "bad.json", "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pulse_count"));

    v["protocol"]["geometry"]["pulse_count"] = 8.into();
    v["protocol"]["typo_field"] = 1.into();
    std::fs::write(dir.path().join("bad.json"), v.to_string()).unwrap();
    let out = run(&["--config", "bad.json", "simulate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));

    assert_eq!(run(&["simulate"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["--threads", "0", "fidelity"], dir.path()).status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--config", "missing.json", "simulate"], dir.path()).status.code(), Some(4));
    std::fs::write(dir.path().join("blocker"), b"x").unwrap();
    let out = run(&["--out-dir", "blocker/sub", "compare"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unfittable_sweep_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..10).map(|i| format!("{},NaN\n", 2.8e-6 + 1e-8 * i as f64)).collect();
    std::fs::write(dir.path().join("s.csv"), format!("tau,signal\n{rows}")).unwrap();
    let out = run(&["ddfit", "--sweep-csv", "s.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ddfit_recovers_a_measured_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let alpha = 0.57 * std::f64::consts::PI;
    let taus: Vec<f64> = (0..61).map(|i| 2.4e-6 + 1.2e-6 * i as f64 / 60.0).collect();
    let s = rectdyne_core::physics::dd_lineshape(alpha, 8, &taus, 166_666.0).unwrap();
    let csv: String = taus.iter().zip(&s).map(|(t, v)| format!("{t:?},{v:?}\n")).collect();
    std::fs::write(dir.path().join("s.csv"), csv).unwrap();
    let out = run(&["--out-dir", "o", "ddfit", "--sweep-csv", "s.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/ddfit.json")).unwrap()).unwrap();
    assert!((r["fit"]["alpha"].as_f64().unwrap() / alpha - 1.0).abs() < 1e-6);
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["compare", "--n-nv-grid", "1,9,100"])
        .env("RECTDYNE_OUT_DIR", dir.path().join("env-out"))
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let (_, cols) = read_table(&dir.path().join("env-out/compare_EnsembleRect.csv"));
    assert_eq!(cols[0], [1.0, 9.0, 100.0]);
    assert!((cols[1][1] - 1.0).abs() < 1e-12);
    for label in ["SingleNoRect", "SingleRect", "EnsembleNoRect", "Correlation", "CASR"] {
        assert!(dir.path().join(format!("env-out/compare_{label}.csv")).exists());
    }
}

#[test]
fn fidelity_report_and_json_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["--out-dir", "o", "--format", "json", "fidelity", "--alpha-over-pi", "0.63", "--charge-infidelity", "0.3", "--sweep"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/fidelity.json")).unwrap()).unwrap();
    assert!((r["report"]["f_total"].as_f64().unwrap() - 0.78).abs() < 0.005);
    let sweep: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/fidelity_sweep.json")).unwrap()).unwrap();
    let cols = sweep["columns"].as_array().unwrap();
    assert_eq!(cols[0]["name"], "alpha");
    assert_eq!(cols[0]["values"].as_array().unwrap().len(), 201 * 9);
}

#[test]
fn pure_noise_coherent_floor_scales_as_inverse_n() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Protocol::InSitu, 1);
    cfg.protocol.readout.contrast = 0.0;
    cfg.scaling.n_grid = vec![100, 300, 1000, 3000];
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = run(&["--config", path.to_str().unwrap(), "--out-dir", "o", "scaling"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/scaling_fit.json")).unwrap()).unwrap();
    let e = r["noise_floor_fit"]["exponent"].as_f64().unwrap();
    assert!((e + 1.0).abs() < 0.1, "{e}");
}

#[test]
fn qdyne_pinned_prefactor_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "c.json", &small(Protocol::Qdyne, 1));
    let out = run(
        &["--config", path.to_str().unwrap(), "--out-dir", "o", "scaling", "--n-grid", "100,300,1000,3000"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/scaling_fit.json")).unwrap()).unwrap();
    let p = r["snr_fit_pinned"]["prefactor"].as_f64().unwrap();
    assert!((0.9..=1.7).contains(&p), "{p}");
    let (header, cols) = read_table(&dir.path().join("o/scaling.csv"));
    assert_eq!(header[0], "n_kept");
    assert_eq!(cols[0], [100.0, 300.0, 1000.0, 3000.0]);
}

#[test]
fn preset_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["preset", "ex-situ"], dir.path());
    assert!(out.status.success());
    let mut cfg: SimulationConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg.protocol, ProtocolConfig::reference(Protocol::ExSitu));
    cfg.protocol.n_traces = 5;
    cfg.traces = rectdyne::config::TraceOutput::Csv;
    let path = write_config(dir.path(), "c.json", &cfg);
    assert!(run(&["--config", path.to_str().unwrap(), "--out-dir", "o", "simulate"], dir.path()).status.success());
    let text = std::fs::read_to_string(dir.path().join("o/traces.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("index,kept,charge_ok,memory_outcome,rectify_sign,alpha,initial_phase,count_0,"));
}
