//! `antenna-report`: pattern-level quality metrics for one radiator. Reads
//! the scattering matrix and the four measured (or simulated) QPSK state
//! patterns, then reports per-state return loss at the synthesized loads,
//! basis power imbalance, basis orthogonality, and the average
//! reconstruction EVM along one azimuth cut.

use std::path::{Path, PathBuf};

use beamspace_core::farfield::{BasisPair, FarFieldPattern};
use beamspace_core::loads::{CombinationRatio, LoadSynthesizer};
use beamspace_core::network::ScatteringMatrix3;
use beamspace_core::util::db10;
use beamspace_core::C64;
use serde::Serialize;

use super::state_label;
use crate::report::{complex_pair, to_json_text, write_artifact, SCHEMA_VERSION};
use crate::{numerical, validation, CliError, Context};

#[derive(Debug, clap::Args)]
pub struct AntennaReportArgs {
    /// Scattering-matrix JSON file of the three-port radiator
    #[arg(long, value_name = "FILE")]
    s_matrix: PathBuf,

    /// Far-field pattern at combination ratio +1
    #[arg(long, value_name = "FILE")]
    pattern_plus_one: PathBuf,

    /// Far-field pattern at combination ratio -1
    #[arg(long, value_name = "FILE")]
    pattern_minus_one: PathBuf,

    /// Far-field pattern at combination ratio +j
    #[arg(long, value_name = "FILE")]
    pattern_plus_j: PathBuf,

    /// Far-field pattern at combination ratio -j
    #[arg(long, value_name = "FILE")]
    pattern_minus_j: PathBuf,

    /// Free first-port reactance used for the per-state loads, in ohms
    #[arg(long, value_name = "OHMS", default_value_t = -200.0, allow_negative_numbers = true)]
    x1_free: f64,

    /// Series loss resistance absorbed into both passive ports, in ohms
    #[arg(long, value_name = "OHMS", default_value_t = 0.0)]
    load_resistance: f64,

    /// Azimuth of the EVM great-circle cut, in degrees
    #[arg(long, value_name = "DEG", default_value_t = 0.0, allow_negative_numbers = true)]
    evm_cut_phi_deg: f64,

    /// Output JSON file name inside --out-dir
    #[arg(long, default_value = "antenna_report.json")]
    output: String,
}

#[derive(Serialize)]
struct StateReport {
    label: String,
    xbar: [f64; 2],
    x1_ohms: f64,
    x2_ohms: f64,
    return_loss_db: f64,
}

#[derive(Serialize)]
struct AntennaReport {
    schema_version: u32,
    x1_free_ohms: f64,
    load_resistance_ohms: f64,
    return_loss_db: Vec<StateReport>,
    imbalance_db: f64,
    orthogonality_residual: f64,
    evm_cut_phi_deg: f64,
    evm_cut_avg_db: f64,
}

fn load_pattern(flag: &str, path: &Path) -> Result<FarFieldPattern, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("{flag} {}: {e}", path.display())))?;
    FarFieldPattern::from_text(&text)
        .map_err(|e| validation(format!("{flag} {}: {e}", path.display())))
}

pub fn execute(ctx: &Context, args: &AntennaReportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.s_matrix)
        .map_err(|e| validation(format!("--s-matrix {}: {e}", args.s_matrix.display())))?;
    let mut s = ScatteringMatrix3::from_json(&text)
        .map_err(|e| validation(format!("--s-matrix {}: {e}", args.s_matrix.display())))?;
    if args.load_resistance > 0.0 {
        s = s
            .amend_with_losses(args.load_resistance, args.load_resistance)
            .map_err(|e| numerical(format!("absorbing load losses: {e}")))?;
    } else if args.load_resistance < 0.0 {
        return Err(validation(format!(
            "--load-resistance: must be non-negative, got {}",
            args.load_resistance
        )));
    }

    let plus_one = load_pattern("--pattern-plus-one", &args.pattern_plus_one)?;
    let minus_one = load_pattern("--pattern-minus-one", &args.pattern_minus_one)?;
    let plus_j = load_pattern("--pattern-plus-j", &args.pattern_plus_j)?;
    let minus_j = load_pattern("--pattern-minus-j", &args.pattern_minus_j)?;
    for (flag, p) in [
        ("--pattern-minus-one", &minus_one),
        ("--pattern-plus-j", &plus_j),
        ("--pattern-minus-j", &minus_j),
    ] {
        if !plus_one.same_grid(p) {
            return Err(validation(format!(
                "{flag}: angular grid differs from --pattern-plus-one"
            )));
        }
    }

    let states = CombinationRatio::psk_schedule(4).expect("4 is a valid PSK order");
    let synth = LoadSynthesizer::from_scattering(&s)
        .map_err(|e| validation(format!("--s-matrix: {e}")))?;
    let schedule = synth
        .schedule(&states, args.x1_free)
        .map_err(|e| numerical(format!("load synthesis at x1_free = {}: {e}", args.x1_free)))?;
    let mut per_state = Vec::with_capacity(schedule.entries.len());
    for entry in &schedule.entries {
        let gamma = s
            .input_reflection(&entry.pair.terminations())
            .map_err(|e| numerical(format!("input reflection: {e}")))?;
        per_state.push(StateReport {
            label: state_label(entry.ratio.value()),
            xbar: complex_pair(entry.ratio.value()),
            x1_ohms: entry.pair.x1,
            x2_ohms: entry.pair.x2,
            return_loss_db: -db10(gamma.norm_sqr()),
        });
    }

    let basis = BasisPair::from_states(&plus_one, &minus_one)
        .map_err(|e| numerical(format!("basis construction: {e}")))?;
    let imbalance_db = basis
        .imbalance_ratio_db()
        .map_err(|e| numerical(format!("imbalance: {e}")))?;
    let orthogonality_residual = basis
        .orthogonality_residual()
        .map_err(|e| numerical(format!("orthogonality: {e}")))?;
    let evm_states = [
        (C64::new(1.0, 0.0), &plus_one),
        (C64::new(-1.0, 0.0), &minus_one),
        (C64::new(0.0, 1.0), &plus_j),
        (C64::new(0.0, -1.0), &minus_j),
    ];
    let evm = basis
        .evm_map(&evm_states)
        .map_err(|e| numerical(format!("EVM map: {e}")))?;
    let evm_cut_avg_db = evm.phi_cut_average_db(args.evm_cut_phi_deg.to_radians());

    let report = AntennaReport {
        schema_version: SCHEMA_VERSION,
        x1_free_ohms: args.x1_free,
        load_resistance_ohms: args.load_resistance,
        return_loss_db: per_state,
        imbalance_db,
        orthogonality_residual,
        evm_cut_phi_deg: args.evm_cut_phi_deg,
        evm_cut_avg_db,
    };
    let path = ctx.artifact_path(&args.output);
    write_artifact(&path, &to_json_text(&report)?)?;
    println!("wrote antenna report to {}", path.display());
    Ok(())
}
