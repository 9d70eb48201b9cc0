//! `run`: the full scenario pipeline. Channel snapshots are collected from
//! the configured source, link-quality filtered, averaged per spatial
//! point, normalized to the reference power convention, and evaluated over
//! the SNR grid. Conventional-mode ensembles are additionally scaled 3 dB
//! down right after normalization — the two transmit arms radiate the same
//! per-stream power but the reference array spends twice the total — and
//! the applied compensation is logged in the summary.

use beamspace_core::baseband::LinkParams;
use beamspace_core::channel::{
    correlation_matrix, filter_records, normalize_ensemble, temporal_average, EllipticityStats,
};
use beamspace_core::util::{db10, derive_seed, pairwise_sum};
use beamspace_core::C64;
use serde::Serialize;

use super::sweep::METRICS_STREAM;
use super::{metric_csv, metric_table, MetricTable};
use crate::config::Mode;
use crate::report::{
    fmt_f64, matrix4_rows, to_json_text, write_artifact, CsvTable, SCHEMA_VERSION,
};
use crate::scene::build_ensemble;
use crate::{numerical, CliError, Context};

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// JSON summary file name inside --out-dir
    #[arg(long, default_value = "summary.json")]
    summary: String,

    /// Metric curve CSV file name inside --out-dir
    #[arg(long, default_value = "metrics.csv")]
    curves: String,

    /// Ellipticity CDF curve file name inside --out-dir
    #[arg(long, default_value = "ellipticity_cdf.csv")]
    cdf_output: String,
}

#[derive(Serialize)]
struct ChannelSummary {
    source: &'static str,
    scenario: String,
    s_count: usize,
    t_count: usize,
    records: usize,
    kept: usize,
    dropped: usize,
    unmeasured_kept: usize,
    spatial_retention: f64,
    spatial_points_averaged: usize,
}

#[derive(Serialize)]
struct NormalizationSummary {
    scale: f64,
    /// Extra gain applied after normalization; −3.01 dB in conventional
    /// mode, 0 in beam-space mode.
    power_compensation_db: f64,
    /// Root-mean-square Frobenius norm of the final ensemble.
    rms_frobenius: f64,
}

#[derive(Serialize)]
struct EllipticitySummary {
    mean: f64,
    mean_db: f64,
}

#[derive(Serialize)]
struct MetricsSummary {
    snr_db: Vec<f64>,
    mi_mean: Vec<f64>,
    mi_p10: Vec<f64>,
    mi_p50: Vec<f64>,
    mi_p90: Vec<f64>,
    cap_mean: Vec<f64>,
    ser: Vec<f64>,
    stderr_ser: Vec<f64>,
    pinv_fallbacks: usize,
}

#[derive(Serialize)]
struct RunSummary {
    schema_version: u32,
    mode: &'static str,
    seed: u64,
    link: LinkParams,
    channel: ChannelSummary,
    normalization: NormalizationSummary,
    ellipticity: EllipticitySummary,
    correlation_matrix: Vec<Vec<[f64; 2]>>,
    metrics: MetricsSummary,
}

fn metrics_summary(table: &MetricTable) -> MetricsSummary {
    MetricsSummary {
        snr_db: table.rows.iter().map(|r| r.snr_db).collect(),
        mi_mean: table.rows.iter().map(|r| r.mi_mean).collect(),
        mi_p10: table.rows.iter().map(|r| r.mi_p10).collect(),
        mi_p50: table.rows.iter().map(|r| r.mi_p50).collect(),
        mi_p90: table.rows.iter().map(|r| r.mi_p90).collect(),
        cap_mean: table.rows.iter().map(|r| r.cap_mean).collect(),
        ser: table.rows.iter().map(|r| r.ser).collect(),
        stderr_ser: table.rows.iter().map(|r| r.stderr_ser).collect(),
        pinv_fallbacks: table.pinv_fallbacks,
    }
}

pub fn execute(ctx: &Context, args: &RunArgs) -> Result<(), CliError> {
    let config = ctx.load_config()?;
    let master = ctx.master_seed(&config);

    // Collect/synthesize.
    let ensemble = build_ensemble(&config, master)?;
    let records_total = ensemble.len();
    let meta = ensemble.meta().clone();

    // Filter on measured link quality, then average per spatial point.
    let filtered = filter_records(&ensemble, config.metrics.ser_threshold);
    let averaged = temporal_average(&filtered.ensemble);
    if averaged.is_empty() {
        return Err(numerical(format!(
            "filter stage removed every record (threshold {}); nothing left to average",
            config.metrics.ser_threshold
        )));
    }
    let h_bar: Vec<_> = averaged.iter().map(|(_, h)| *h).collect();

    // Normalize, then apply the transmit-power compensation in this one
    // place so the two modes stay comparable.
    let (mut normalized, scale) =
        normalize_ensemble(&h_bar).map_err(|e| numerical(format!("normalization: {e}")))?;
    let power_compensation_db = match config.mode {
        Mode::BeamSpace => 0.0,
        Mode::Conventional => {
            let g = C64::new(0.5f64.sqrt(), 0.0);
            for h in &mut normalized {
                *h = h.map(|v| v * g);
            }
            db10(0.5)
        }
    };
    let powers: Vec<f64> = normalized
        .iter()
        .map(|h| h.iter().map(|v| v.norm_sqr()).sum())
        .collect();
    let rms_frobenius = (pairwise_sum(&powers) / powers.len() as f64).sqrt();

    // Metric stage.
    let stats = EllipticityStats::from_matrices(&normalized)
        .map_err(|e| numerical(format!("ellipticity: {e}")))?;
    let r_h = correlation_matrix(&normalized)
        .map_err(|e| numerical(format!("correlation matrix: {e}")))?;
    let table = metric_table(
        &normalized,
        &config.metrics.snr_grid_db,
        config.metrics.n_noise_samples,
        config.metrics.n_trials,
        derive_seed(master, METRICS_STREAM, 0),
    )?;

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        mode: config.mode.label(),
        seed: master,
        link: config.link,
        channel: ChannelSummary {
            source: config.channel.label(),
            scenario: meta.scenario.clone(),
            s_count: meta.s_count,
            t_count: meta.t_count,
            records: records_total,
            kept: filtered.kept,
            dropped: filtered.dropped,
            unmeasured_kept: filtered.unmeasured_kept,
            spatial_retention: filtered.spatial_retention,
            spatial_points_averaged: normalized.len(),
        },
        normalization: NormalizationSummary {
            scale,
            power_compensation_db,
            rms_frobenius,
        },
        ellipticity: EllipticitySummary {
            mean: stats.mean,
            mean_db: stats.mean_db,
        },
        correlation_matrix: matrix4_rows(&r_h),
        metrics: metrics_summary(&table),
    };

    let summary_path = ctx.artifact_path(&args.summary);
    write_artifact(&summary_path, &to_json_text(&summary)?)?;
    let curves_path = ctx.artifact_path(&args.curves);
    write_artifact(&curves_path, &metric_csv(&table))?;

    let mut cdf = CsvTable::new(&["gamma", "cdf"]);
    let n = stats.samples().len() as f64;
    for (i, &gamma) in stats.samples().iter().enumerate() {
        cdf.row(&[fmt_f64(gamma), fmt_f64((i + 1) as f64 / n)]);
    }
    let cdf_path = ctx.artifact_path(&args.cdf_output);
    write_artifact(&cdf_path, &cdf.finish())?;

    println!(
        "pipeline complete: {} records -> {} spatial points; wrote {}, {}, {}",
        records_total,
        normalized.len(),
        summary_path.display(),
        curves_path.display(),
        cdf_path.display()
    );
    Ok(())
}
