//! `synth-loads`: computes the per-symbol reactive load table of a PSK
//! schedule from a scattering-matrix file, either at one free-parameter
//! setting or swept across a grid with a tuner feasibility check.

use std::path::PathBuf;

use beamspace_core::loads::{
    sweep_free_parameter, CombinationRatio, LoadSynthesizer, SweepGrid, TuningRange,
};
use beamspace_core::network::ScatteringMatrix3;

use crate::report::{fmt_f64, write_artifact, CsvTable};
use crate::{numerical, validation, CliError, Context};

#[derive(Debug, clap::Args)]
pub struct SynthLoadsArgs {
    /// Scattering-matrix JSON file of the three-port radiator
    #[arg(long, value_name = "FILE")]
    s_matrix: PathBuf,

    /// PSK alphabet size (power of two)
    #[arg(long, default_value_t = 4)]
    order: usize,

    /// Series loss resistance absorbed into both passive ports, in ohms
    #[arg(long, value_name = "OHMS", default_value_t = 0.0)]
    load_resistance: f64,

    /// Free first-port reactance at the schedule's leading state, in ohms
    #[arg(long, value_name = "OHMS", allow_negative_numbers = true)]
    x1_free: Option<f64>,

    /// Sweep grid start, in ohms (use with --sweep-stop and --sweep-step)
    #[arg(long, value_name = "OHMS", allow_negative_numbers = true, requires = "sweep_stop")]
    sweep_start: Option<f64>,

    /// Sweep grid stop, in ohms
    #[arg(long, value_name = "OHMS", allow_negative_numbers = true, requires = "sweep_step")]
    sweep_stop: Option<f64>,

    /// Sweep grid step, in ohms
    #[arg(long, value_name = "OHMS", requires = "sweep_start")]
    sweep_step: Option<f64>,

    /// Lowest reactance the tuner can realize, in ohms
    #[arg(long, value_name = "OHMS", allow_negative_numbers = true, requires = "range_max")]
    range_min: Option<f64>,

    /// Highest reactance the tuner can realize, in ohms
    #[arg(long, value_name = "OHMS", allow_negative_numbers = true, requires = "range_min")]
    range_max: Option<f64>,

    /// Output CSV file name inside --out-dir
    #[arg(long, default_value = "loads.csv")]
    output: String,
}

const COLUMNS: [&str; 7] = ["x1_free", "state", "re(x̄)", "im(x̄)", "x1", "x2", "feasible"];

fn load_matrix(args: &SynthLoadsArgs) -> Result<(ScatteringMatrix3, String), CliError> {
    let text = std::fs::read_to_string(&args.s_matrix)
        .map_err(|e| validation(format!("--s-matrix {}: {e}", args.s_matrix.display())))?;
    let s = ScatteringMatrix3::from_json(&text)
        .map_err(|e| validation(format!("--s-matrix {}: {e}", args.s_matrix.display())))?;
    let label = args
        .s_matrix
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| String::from("unlabeled"));
    if args.load_resistance > 0.0 {
        let amended = s
            .amend_with_losses(args.load_resistance, args.load_resistance)
            .map_err(|e| numerical(format!("absorbing load losses: {e}")))?;
        Ok((amended, label))
    } else if args.load_resistance == 0.0 {
        Ok((s, label))
    } else {
        Err(validation(format!(
            "--load-resistance: must be non-negative, got {}",
            args.load_resistance
        )))
    }
}

pub fn execute(ctx: &Context, args: &SynthLoadsArgs) -> Result<(), CliError> {
    let (s, label) = load_matrix(args)?;
    let states = CombinationRatio::psk_schedule(args.order)
        .map_err(|e| validation(format!("--order: {e}")))?;
    let synth = LoadSynthesizer::from_scattering(&s)
        .map_err(|e| validation(format!("--s-matrix: {e}")))?
        .with_matrix_ref(label);
    let range = match (args.range_min, args.range_max) {
        (Some(min), Some(max)) if min <= max => TuningRange::new(min, max),
        (Some(min), Some(max)) => {
            return Err(validation(format!(
                "--range-min/--range-max: empty range [{min}, {max}]"
            )));
        }
        _ => TuningRange::unbounded(),
    };

    let mut csv = CsvTable::new(&COLUMNS);
    match (args.x1_free, args.sweep_start, args.sweep_stop, args.sweep_step) {
        (Some(f), None, None, None) => {
            let schedule = synth
                .schedule(&states, f)
                .map_err(|e| numerical(format!("load synthesis at x1_free = {f}: {e}")))?;
            let feasible = schedule
                .entries
                .iter()
                .all(|e| range.contains(e.pair.x1) && range.contains(e.pair.x2));
            for (idx, entry) in schedule.entries.iter().enumerate() {
                let xbar = entry.ratio.value();
                csv.row(&[
                    fmt_f64(f),
                    idx.to_string(),
                    fmt_f64(xbar.re),
                    fmt_f64(xbar.im),
                    fmt_f64(entry.pair.x1),
                    fmt_f64(entry.pair.x2),
                    feasible.to_string(),
                ]);
            }
        }
        (None, Some(start), Some(stop), Some(step)) => {
            let grid = SweepGrid { start, stop, step };
            let points = sweep_free_parameter(&synth, &states, grid, range)
                .map_err(|e| numerical(format!("free-parameter sweep: {e}")))?;
            for point in &points {
                for (idx, &ratio) in states.iter().enumerate() {
                    let xbar = ratio.value();
                    let (x1, x2) = match &point.schedule {
                        Some(schedule) => {
                            let pair = schedule.entries[idx].pair;
                            (fmt_f64(pair.x1), fmt_f64(pair.x2))
                        }
                        None => (String::new(), String::new()),
                    };
                    csv.row(&[
                        fmt_f64(point.x1_free),
                        idx.to_string(),
                        fmt_f64(xbar.re),
                        fmt_f64(xbar.im),
                        x1,
                        x2,
                        point.feasible.to_string(),
                    ]);
                }
            }
        }
        (Some(_), _, _, _) => {
            return Err(validation(
                "--x1-free cannot be combined with a sweep grid; pick one",
            ));
        }
        _ => {
            return Err(validation(
                "either --x1-free or the full sweep grid \
                 (--sweep-start/--sweep-stop/--sweep-step) must be given",
            ));
        }
    }

    let path = ctx.artifact_path(&args.output);
    let rows = csv.rows_written();
    write_artifact(&path, &csv.finish())?;
    println!("wrote {rows} load rows to {}", path.display());
    Ok(())
}
