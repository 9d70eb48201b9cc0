//! `sweep`: performance curves over the configured SNR grid. The snapshot
//! ensemble is normalized to the reference power convention, then mutual
//! information, ergodic capacity and symbol error rate are estimated per
//! grid point with counter-derived sub-seeds.

use beamspace_core::channel::normalize_ensemble;
use beamspace_core::util::derive_seed;

use super::{metric_csv, metric_table};
use crate::report::write_artifact;
use crate::scene::build_ensemble;
use crate::{numerical, CliError, Context};

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Output CSV file name inside --out-dir
    #[arg(long, default_value = "sweep.csv")]
    output: String,
}

/// Sub-stream index separating the metric stage from the other seeded
/// stages of a scenario.
pub(super) const METRICS_STREAM: u64 = 3;

pub fn execute(ctx: &Context, args: &SweepArgs) -> Result<(), CliError> {
    let config = ctx.load_config()?;
    let master = ctx.master_seed(&config);
    let ensemble = build_ensemble(&config, master)?;
    let hs: Vec<_> = ensemble.records().iter().map(|r| r.h).collect();
    let (normalized, _) =
        normalize_ensemble(&hs).map_err(|e| numerical(format!("normalization: {e}")))?;

    let table = metric_table(
        &normalized,
        &config.metrics.snr_grid_db,
        config.metrics.n_noise_samples,
        config.metrics.n_trials,
        derive_seed(master, METRICS_STREAM, 0),
    )?;
    let path = ctx.artifact_path(&args.output);
    write_artifact(&path, &metric_csv(&table))?;
    println!(
        "swept {} SNR points over {} snapshots to {}",
        table.rows.len(),
        normalized.len(),
        path.display()
    );
    if table.pinv_fallbacks > 0 {
        println!(
            "note: {} ill-conditioned trials used the pseudo-inverse equalizer",
            table.pinv_fallbacks
        );
    }
    Ok(())
}
