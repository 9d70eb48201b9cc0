//! End-to-end tests of the `beamspace` binary: every subcommand is invoked
//! through the real argument parser against bundled or generated fixtures,
//! and artifacts are checked for schema, content and byte-level
//! reproducibility.

use std::path::{Path, PathBuf};
use std::process::Output;

use beamspace_core::channel::{ChannelEnsemble, ChannelRecord, EnsembleMeta};
use beamspace_core::farfield::{BasisPair, FarFieldPattern};
use beamspace_core::C64;
use nalgebra::Matrix2;

fn beamspace(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_beamspace"))
        .args(args)
        .output()
        .expect("the binary must be runnable")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process must exit normally")
}

fn repo_file(relative: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(relative)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("artifact {} must exist: {e}", path.display()))
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, body).expect("scenario fixture must be writable");
    path
}

const TINY_RAYLEIGH: &str = "\
mode = \"beam-space\"
seed = 5
[channel]
source = \"rayleigh\"
spatial_points = 6
snapshots = 2
[sim]
snr_db = [30.0]
n_frames = 2
cfo_hz = 500.0
delay_samples = 37
[metrics]
snr_grid_db = [0.0, 10.0]
n_noise_samples = 40
n_trials = 4000
";

// ---------------------------------------------------------------------------
// synth-loads
// ---------------------------------------------------------------------------

#[test]
fn synth_loads_reproduces_the_reference_schedule_at_the_canonical_setting() {
    let dir = tempfile::tempdir().unwrap();
    let s_matrix = repo_file("data/printed_s_matrix.json");
    let out = beamspace(&[
        "synth-loads",
        "--s-matrix",
        s_matrix.to_str().unwrap(),
        "--x1-free",
        "-200",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = read(&dir.path().join("loads.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0], "x1_free,state,re(x̄),im(x̄),x1,x2,feasible",
        "header must expose the documented column set"
    );
    assert_eq!(lines.len(), 5, "QPSK schedule must emit four state rows");

    let fields: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    assert_eq!(fields[0][4], "-200", "the leading state reuses the free parameter");
    assert_eq!(
        fields[1][5], "-200",
        "the negated state must swap the reactance pair"
    );
    let x2_first: f64 = fields[0][5].parse().unwrap();
    let x1_second: f64 = fields[1][4].parse().unwrap();
    assert!(
        (x2_first - x1_second).abs() < 1e-12,
        "negation symmetry must hold exactly in the emitted table"
    );
    assert!(
        fields.iter().all(|f| f[6] == "true"),
        "an unbounded tuner range must mark every state feasible"
    );
}

#[test]
fn synth_loads_sweep_flags_feasible_settings_against_the_tuner_range() {
    let dir = tempfile::tempdir().unwrap();
    let s_matrix = repo_file("data/printed_s_matrix.json");
    let out = beamspace(&[
        "synth-loads",
        "--s-matrix",
        s_matrix.to_str().unwrap(),
        "--load-resistance",
        "2",
        "--sweep-start",
        "-500",
        "--sweep-stop",
        "500",
        "--sweep-step",
        "1",
        "--range-min",
        "-210",
        "--range-max",
        "-8",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--output",
        "sweep_loads.csv",
    ]);
    assert_success(&out);
    let csv = read(&dir.path().join("sweep_loads.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1001 * 4, "one row per grid point and state");
    let feasible = rows.iter().filter(|r| r.ends_with(",true")).count();
    assert_eq!(
        feasible,
        40 * 4,
        "with 2-ohm losses absorbed, the [-210, -8] ohm tuner admits exactly 40 settings"
    );
}

#[test]
fn synth_loads_rejects_conflicting_point_and_sweep_requests() {
    let dir = tempfile::tempdir().unwrap();
    let s_matrix = repo_file("data/printed_s_matrix.json");
    let out = beamspace(&[
        "synth-loads",
        "--s-matrix",
        s_matrix.to_str().unwrap(),
        "--x1-free",
        "-200",
        "--sweep-start",
        "-10",
        "--sweep-stop",
        "10",
        "--sweep-step",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2, "mixed modes are a validation error");
}

#[test]
fn synth_loads_reports_missing_matrix_files_as_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = beamspace(&[
        "synth-loads",
        "--s-matrix",
        "no_such_matrix.json",
        "--x1-free",
        "-200",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("no_such_matrix.json"), "stderr must name the file: {msg}");
}

// ---------------------------------------------------------------------------
// antenna-report
// ---------------------------------------------------------------------------

fn cardioid_state(flip: bool) -> FarFieldPattern {
    FarFieldPattern::from_fn(61, 72, move |th, ph| {
        let ph = if flip { std::f64::consts::PI - ph } else { ph };
        (
            C64::new(th.sin() * (1.0 + ph.cos()), 0.0),
            C64::new(0.3 * th.sin() * ph.cos(), 0.1),
        )
    })
    .unwrap()
}

#[test]
fn antenna_report_summarizes_loads_basis_and_reconstruction_quality() {
    let dir = tempfile::tempdir().unwrap();
    let plus = cardioid_state(false);
    let minus = cardioid_state(true);
    let basis = BasisPair::from_states(&plus, &minus).unwrap();
    // Perturb the quadrature states slightly so the reconstruction error is
    // nonzero, as it would be for measured patterns.
    let plus_j = basis
        .instantaneous(C64::new(0.0, 1.0))
        .axpy(C64::new(0.01, 0.0), &plus)
        .unwrap();
    let minus_j = basis
        .instantaneous(C64::new(0.0, -1.0))
        .axpy(C64::new(0.0, 0.01), &minus)
        .unwrap();
    let paths: Vec<PathBuf> = [&plus, &minus, &plus_j, &minus_j]
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = dir.path().join(format!("state{i}.pattern"));
            std::fs::write(&path, p.to_text()).unwrap();
            path
        })
        .collect();

    let s_matrix = repo_file("data/printed_s_matrix.json");
    let out = beamspace(&[
        "antenna-report",
        "--s-matrix",
        s_matrix.to_str().unwrap(),
        "--pattern-plus-one",
        paths[0].to_str().unwrap(),
        "--pattern-minus-one",
        paths[1].to_str().unwrap(),
        "--pattern-plus-j",
        paths[2].to_str().unwrap(),
        "--pattern-minus-j",
        paths[3].to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("antenna_report.json"))).unwrap();
    assert_eq!(report["schema_version"], 1);
    let states = report["return_loss_db"].as_array().unwrap();
    assert_eq!(states.len(), 4, "one entry per QPSK state");
    let losses: Vec<f64> = states
        .iter()
        .map(|s| s["return_loss_db"].as_f64().unwrap())
        .collect();
    for rl in &losses {
        assert!(
            (rl - losses[0]).abs() < 1e-9,
            "lossless reflection must not depend on the state: {losses:?}"
        );
        assert!(
            (17.0..22.0).contains(rl),
            "return loss must sit near the design value, got {rl}"
        );
    }
    assert!(
        report["orthogonality_residual"].as_f64().unwrap() < 1e-9,
        "mirrored states must give an orthogonal basis"
    );
    let evm = report["evm_cut_avg_db"].as_f64().unwrap();
    assert!(
        (-60.0..-20.0).contains(&evm),
        "a 1% perturbation must land around -40 dB EVM, got {evm}"
    );
    assert!(report["imbalance_db"].is_number());
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[test]
fn simulate_writes_one_clean_row_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY_RAYLEIGH);
    let out = beamspace(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);
    let csv = read(&dir.path().join("simulate.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert!(
        lines[0].starts_with("snr_db,seed,ser,rce_db,cfo_hat_hz,h_hat_11_re"),
        "header must expose the documented columns, got {}",
        lines[0]
    );
    assert_eq!(lines.len(), 3, "one SNR point times two frames");
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 13);
        assert_eq!(fields[0], "30");
        assert_eq!(fields[2], "0", "30 dB loopback must decode error-free");
        let cfo: f64 = fields[4].parse().unwrap();
        assert!(
            (cfo - 500.0).abs() < 5.0,
            "the injected 500 Hz offset must be recovered, got {cfo}"
        );
    }
}

// ---------------------------------------------------------------------------
// analyze-dataset
// ---------------------------------------------------------------------------

fn sample_ensemble(dir: &Path, ser: &[f64]) -> PathBuf {
    let mut records = Vec::new();
    let mut k = 0usize;
    for s in 1..=3usize {
        for t in 1..=2usize {
            let x = (s * 7 + t) as f64;
            let h = Matrix2::new(
                C64::new(1.0 + 0.1 * x, -0.2),
                C64::new(0.3, 0.05 * x),
                C64::new(-0.4, 0.2),
                C64::new(0.9, 0.01 * x),
            );
            records.push(ChannelRecord::new(s, t, h, Some(ser[k]), Some([-46.0, -47.5])).unwrap());
            k += 1;
        }
    }
    let meta = EnsembleMeta {
        scenario: String::from("bench-a"),
        s_count: 3,
        t_count: 2,
        rx_spacing_mm: Some(30.0),
        notes: None,
    };
    let path = dir.join("ensemble.txt");
    ChannelEnsemble::new(meta, records).unwrap().save(&path).unwrap();
    path
}

#[test]
fn analyze_dataset_reports_filter_counts_and_distributions() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample_ensemble(dir.path(), &[0.01, 0.02, 0.5, 0.0, 0.03, 0.01]);
    let out = beamspace(&[
        "analyze-dataset",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_success(&out);

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("analysis.json"))).unwrap();
    assert_eq!(report["scenario"], "bench-a");
    assert_eq!(report["filter"]["kept"], 5);
    assert_eq!(report["filter"]["dropped"], 1, "the 0.5 SER record must be excluded");
    assert_eq!(report["spatial_points_averaged"], 3);
    let mean = report["ellipticity"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean), "ellipticity is a [0, 1] statistic");
    assert!(report["ellipticity"]["mean_db"].as_f64().unwrap() <= 0.0);
    let r_h = report["correlation_matrix"].as_array().unwrap();
    assert_eq!(r_h.len(), 4, "vectorized 2x2 channels give a 4x4 correlation");

    let cdf = read(&dir.path().join("ellipticity_cdf.csv"));
    let lines: Vec<&str> = cdf.lines().collect();
    assert_eq!(lines[0], "gamma,cdf");
    assert_eq!(lines.len(), 4, "one CDF step per surviving spatial point");
    assert!(lines[3].ends_with(",1"), "the last CDF step must reach one");
}

#[test]
fn analyze_dataset_fails_numerically_when_the_filter_removes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample_ensemble(dir.path(), &[0.9, 0.8, 0.9, 0.95, 0.9, 0.85]);
    let out = beamspace(&[
        "analyze-dataset",
        "--input",
        input.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 3, "an empty reduction is a numerical failure");
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("filter"), "stderr must explain the empty stage: {msg}");
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[test]
fn sweep_output_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY_RAYLEIGH);
    for threads in ["1", "3"] {
        let sub = dir.path().join(format!("t{threads}"));
        let out = beamspace(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--threads",
            threads,
            "--out-dir",
            sub.to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    let a = read(&dir.path().join("t1/sweep.csv"));
    let b = read(&dir.path().join("t3/sweep.csv"));
    assert_eq!(a, b, "the reduction order must not depend on the worker count");

    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "snr_db,mi_mean,mi_p10,mi_p50,mi_p90,cap_mean,ser,stderr_ser"
    );
    assert_eq!(lines.len(), 3, "two grid points");
    for row in &lines[1..] {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        let (mi, p10, p50, p90, cap) = (fields[1], fields[2], fields[3], fields[4], fields[5]);
        assert!(p10 <= p50 && p50 <= p90, "percentiles must be ordered: {row}");
        assert!(mi <= cap + 0.2, "mutual information cannot beat capacity: {row}");
        assert!((0.0..=1.0).contains(&fields[6]), "SER is a probability: {row}");
    }
}

#[test]
fn config_driven_commands_require_the_config_flag() {
    let out = beamspace(&["sweep"]);
    assert_eq!(exit_code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("--config"), "stderr must point at the flag: {msg}");
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[test]
fn run_emits_a_complete_summary_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY_RAYLEIGH);
    for sub in ["first", "second"] {
        let out = beamspace(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            dir.path().join(sub).to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    for artifact in ["summary.json", "metrics.csv", "ellipticity_cdf.csv"] {
        let a = read(&dir.path().join("first").join(artifact));
        let b = read(&dir.path().join("second").join(artifact));
        assert_eq!(a, b, "{artifact} must be byte-identical across reruns");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("first/summary.json"))).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["mode"], "beam-space");
    assert_eq!(summary["seed"], 5);
    assert_eq!(summary["channel"]["records"], 12);
    assert_eq!(summary["channel"]["spatial_points_averaged"], 6);
    assert_eq!(summary["normalization"]["power_compensation_db"], 0.0);
    let rms = summary["normalization"]["rms_frobenius"].as_f64().unwrap();
    assert!((rms - 2.0).abs() < 1e-12, "beam-space ensembles keep the reference norm");
    for key in ["mi_mean", "mi_p10", "mi_p50", "mi_p90", "cap_mean", "ser", "stderr_ser"] {
        assert_eq!(
            summary["metrics"][key].as_array().unwrap().len(),
            2,
            "metric key {key} must cover the whole grid"
        );
    }
}

#[test]
fn run_logs_the_power_compensation_in_conventional_mode() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(
        dir.path(),
        &TINY_RAYLEIGH.replace("mode = \"beam-space\"", "mode = \"conventional\""),
    );
    let out = beamspace(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_success(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("out/summary.json"))).unwrap();
    assert_eq!(summary["mode"], "conventional");
    let comp = summary["normalization"]["power_compensation_db"].as_f64().unwrap();
    assert!(
        (comp + 3.0103).abs() < 1e-3,
        "conventional ensembles must sit 3 dB below the reference, got {comp}"
    );
    let rms = summary["normalization"]["rms_frobenius"].as_f64().unwrap();
    assert!(
        (rms - std::f64::consts::SQRT_2).abs() < 1e-12,
        "the compensated norm must be sqrt(2), got {rms}"
    );
}

#[test]
fn run_reports_missing_channel_files_with_the_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(
        dir.path(),
        "mode = \"beam-space\"\n[channel]\nsource = \"file\"\npath = \"gone.txt\"\n",
    );
    let out = beamspace(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(
        msg.contains("channel.path") && msg.contains("gone.txt"),
        "stderr must name the key and file: {msg}"
    );
}

#[test]
fn seed_flag_overrides_the_configured_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path(), TINY_RAYLEIGH);
    for (sub, seed) in [("a", "5"), ("b", "6"), ("c", "5")] {
        let out = beamspace(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            dir.path().join(sub).to_str().unwrap(),
        ]);
        assert_success(&out);
    }
    let a = read(&dir.path().join("a/metrics.csv"));
    let b = read(&dir.path().join("b/metrics.csv"));
    let c = read(&dir.path().join("c/metrics.csv"));
    assert_ne!(a, b, "a different seed must change the Monte-Carlo draws");
    assert_eq!(a, c, "equal seeds must reproduce the artifact exactly");
}
