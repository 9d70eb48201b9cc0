//! Subcommand implementations. Each module owns its argument struct and an
//! `execute(&Context, &Args)` entry point; shared stages (ensemble metrics,
//! state labels) live here.

pub mod analyze_dataset;
pub mod antenna_report;
pub mod run;
pub mod simulate;
pub mod sweep;
pub mod synth_loads;

use beamspace_core::baseband::Constellation;
use beamspace_core::evaluation::{mi_over_ensemble, ergodic_capacity, ser_sweep, SnrGrid};
use beamspace_core::util::{derive_seed, pairwise_sum};
use beamspace_core::C64;
use nalgebra::{DMatrix, Matrix2};

use crate::report::{fmt_f64, CsvTable};
use crate::{numerical, CliError};

/// Compact label for a unimodular combination ratio: the cardinal QPSK
/// states print as `+1`, `-1`, `+j`, `-j`, everything else as `re+imj`.
pub fn state_label(xbar: C64) -> String {
    match (xbar.re, xbar.im) {
        (re, im) if im == 0.0 && re == 1.0 => String::from("+1"),
        (re, im) if im == 0.0 && re == -1.0 => String::from("-1"),
        (re, im) if re == 0.0 && im == 1.0 => String::from("+j"),
        (re, im) if re == 0.0 && im == -1.0 => String::from("-j"),
        (re, im) => format!("{re}{im:+}j"),
    }
}

/// One row of the SNR performance table shared by `sweep` and `run`.
pub struct MetricRow {
    pub snr_db: f64,
    pub mi_mean: f64,
    pub mi_p10: f64,
    pub mi_p50: f64,
    pub mi_p90: f64,
    pub cap_mean: f64,
    pub ser: f64,
    pub stderr_ser: f64,
}

/// Aggregated output of the metric stage.
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
    /// SER trials that fell back to a pseudo-inverse equalizer because the
    /// drawn channel was ill-conditioned.
    pub pinv_fallbacks: usize,
}

/// Mutual information, ergodic capacity and symbol error rate of a channel
/// ensemble over an SNR grid. Sub-seeds are derived per grid point, so the
/// table is reproducible for a fixed `(ensemble, grid, seed)` triple.
pub fn metric_table(
    ensemble: &[Matrix2<C64>],
    grid_db: &[f64],
    n_noise_samples: usize,
    n_trials: usize,
    seed: u64,
) -> Result<MetricTable, CliError> {
    let constellation = Constellation::qpsk();
    let grid = SnrGrid::new(grid_db.to_vec()).map_err(|e| numerical(e.to_string()))?;
    let dyn_ensemble: Vec<DMatrix<C64>> = ensemble
        .iter()
        .map(|h| DMatrix::from_fn(2, 2, |r, c| h[(r, c)]))
        .collect();
    let ser_curve = ser_sweep(
        &dyn_ensemble,
        &grid,
        &constellation,
        n_trials,
        derive_seed(seed, 0, 1),
    )
    .map_err(|e| numerical(format!("symbol-error-rate sweep: {e}")))?;

    let mut rows = Vec::with_capacity(grid_db.len());
    for (si, &snr_db) in grid_db.iter().enumerate() {
        let mi = mi_over_ensemble(
            ensemble,
            snr_db,
            &constellation,
            n_noise_samples,
            derive_seed(seed, si as u64, 0),
        )
        .map_err(|e| numerical(format!("mutual information at {snr_db} dB: {e}")))?;
        let caps: Vec<f64> = ensemble
            .iter()
            .map(|h| ergodic_capacity(h, snr_db))
            .collect::<Result<_, _>>()
            .map_err(|e| numerical(format!("capacity at {snr_db} dB: {e}")))?;
        rows.push(MetricRow {
            snr_db,
            mi_mean: mi.mean,
            mi_p10: mi.percentile(0.1),
            mi_p50: mi.percentile(0.5),
            mi_p90: mi.percentile(0.9),
            cap_mean: pairwise_sum(&caps) / caps.len() as f64,
            ser: ser_curve.values[si],
            stderr_ser: ser_curve.std_errors[si],
        });
    }
    Ok(MetricTable {
        rows,
        pinv_fallbacks: ser_curve.pinv_fallbacks,
    })
}

/// Renders the metric table with the column set consumed by the plotting
/// scripts: `snr_db, mi_mean, mi_p10, mi_p50, mi_p90, cap_mean, ser,
/// stderr_ser`.
pub fn metric_csv(table: &MetricTable) -> String {
    let mut csv = CsvTable::new(&[
        "snr_db",
        "mi_mean",
        "mi_p10",
        "mi_p50",
        "mi_p90",
        "cap_mean",
        "ser",
        "stderr_ser",
    ]);
    for r in &table.rows {
        csv.row(&[
            fmt_f64(r.snr_db),
            fmt_f64(r.mi_mean),
            fmt_f64(r.mi_p10),
            fmt_f64(r.mi_p50),
            fmt_f64(r.mi_p90),
            fmt_f64(r.cap_mean),
            fmt_f64(r.ser),
            fmt_f64(r.stderr_ser),
        ]);
    }
    csv.finish()
}
