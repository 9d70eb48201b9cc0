//! `simulate`: frame-by-frame link runs over the configured channel source.
//! Every frame owns a counter-derived seed, so batches can run in parallel
//! while the output CSV stays byte-identical across worker counts.

use beamspace_core::baseband::{
    build_beamspace_frames, build_conventional_frames, receive_frame, simulate_link,
    Constellation, FrameFormat,
};
use beamspace_core::util::derive_seed;
use beamspace_core::C64;
use nalgebra::Matrix2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::report::{fmt_f64, write_artifact, CsvTable};
use crate::scene::build_ensemble;
use crate::{numerical, CliError, Context};

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Output CSV file name inside --out-dir
    #[arg(long, default_value = "simulate.csv")]
    output: String,
}

/// Sub-stream index separating link simulation from the other seeded stages.
const SIM_STREAM: u64 = 2;

const COLUMNS: [&str; 13] = [
    "snr_db",
    "seed",
    "ser",
    "rce_db",
    "cfo_hat_hz",
    "h_hat_11_re",
    "h_hat_11_im",
    "h_hat_12_re",
    "h_hat_12_im",
    "h_hat_21_re",
    "h_hat_21_im",
    "h_hat_22_re",
    "h_hat_22_im",
];

fn one_frame(
    config: &ScenarioConfig,
    h: &Matrix2<C64>,
    snr_db: f64,
    frame_seed: u64,
) -> Result<Vec<String>, CliError> {
    let params = config.link;
    let constellation = Constellation::qpsk();
    let mut payload_rng = ChaCha8Rng::seed_from_u64(derive_seed(frame_seed, 0, 0));
    let p1 = constellation.random_symbols(params.l_data, &mut payload_rng);
    let p2 = constellation.random_symbols(params.l_data, &mut payload_rng);
    let builder_seed = derive_seed(frame_seed, 1, 0);
    let frames = match config.mode.frame_format() {
        FrameFormat::BeamSpace => build_beamspace_frames(&params, &p1, &p2, builder_seed),
        FrameFormat::Conventional => build_conventional_frames(&params, &p1, &p2, builder_seed),
    }
    .map_err(|e| numerical(format!("frame construction: {e}")))?;

    let rx = simulate_link(
        &frames,
        h,
        snr_db,
        config.sim.cfo_hz,
        config.sim.delay_samples,
        &params,
        derive_seed(frame_seed, 2, 0),
    )
    .map_err(|e| numerical(format!("link simulation at {snr_db} dB: {e}")))?;
    let report = receive_frame([&rx[0], &rx[1]], &frames, &constellation)
        .map_err(|e| numerical(format!("receiver at {snr_db} dB (seed {frame_seed}): {e}")))?;

    let hh = report.h_hat;
    Ok(vec![
        fmt_f64(snr_db),
        frame_seed.to_string(),
        fmt_f64(report.ser),
        fmt_f64(report.rce_db),
        fmt_f64(report.cfo_hz),
        fmt_f64(hh[(0, 0)].re),
        fmt_f64(hh[(0, 0)].im),
        fmt_f64(hh[(0, 1)].re),
        fmt_f64(hh[(0, 1)].im),
        fmt_f64(hh[(1, 0)].re),
        fmt_f64(hh[(1, 0)].im),
        fmt_f64(hh[(1, 1)].re),
        fmt_f64(hh[(1, 1)].im),
    ])
}

pub fn execute(ctx: &Context, args: &SimulateArgs) -> Result<(), CliError> {
    let config = ctx.load_config()?;
    let master = ctx.master_seed(&config);
    let ensemble = build_ensemble(&config, master)?;
    let channels: Vec<Matrix2<C64>> = ensemble.records().iter().map(|r| r.h).collect();
    let sim_master = derive_seed(master, SIM_STREAM, 0);

    let jobs: Vec<(usize, usize, f64)> = config
        .sim
        .snr_db
        .iter()
        .enumerate()
        .flat_map(|(si, &snr)| (0..config.sim.n_frames).map(move |f| (si, f, snr)))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(si, f, snr)| {
            let h = &channels[(si * config.sim.n_frames + f) % channels.len()];
            let frame_seed = derive_seed(sim_master, si as u64, f as u64);
            one_frame(&config, h, snr, frame_seed)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = CsvTable::new(&COLUMNS);
    for row in &rows {
        csv.row(row);
    }
    let path = ctx.artifact_path(&args.output);
    write_artifact(&path, &csv.finish())?;
    println!(
        "simulated {} frames ({} SNR points) to {}",
        rows.len(),
        config.sim.snr_db.len(),
        path.display()
    );
    Ok(())
}
