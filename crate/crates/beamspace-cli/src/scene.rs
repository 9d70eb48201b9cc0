//! Channel-stage construction: turns a configured channel source into a
//! concrete snapshot ensemble. Stochastic sources draw every snapshot from
//! its own counter-derived generator, so the result is independent of
//! iteration order; geometric sources sample built-in synthetic element
//! patterns at the directions listed in a propagation-path file.

use std::collections::BTreeMap;
use std::path::Path;

use beamspace_core::channel::{
    iid_rayleigh, ricean, synthesize_beamspace_channel, synthesize_conventional_channel,
    ChannelEnsemble, ChannelRecord, EnsembleMeta, PathSet, PropagationPath,
};
use beamspace_core::farfield::{BasisPair, FarFieldPattern};
use beamspace_core::util::derive_seed;
use beamspace_core::C64;
use nalgebra::Matrix2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ChannelConfig, Mode, ScenarioConfig};
use crate::{numerical, validation, CliError};

/// Angular resolution of the built-in synthetic patterns (1° in theta,
/// 1° in phi).
const N_THETA: usize = 181;
const N_PHI: usize = 360;

/// Sub-stream index separating channel generation from the other seeded
/// stages of a scenario.
const CHANNEL_STREAM: u64 = 1;

/// Mirrored surrogate for the two states of a reconfigurable element:
/// azimuthal cardioids facing opposite directions with a small cross-polar
/// component, exact mirror images about the y-z plane so their even/odd
/// combinations form an orthogonal basis.
pub fn mirrored_state_patterns() -> (FarFieldPattern, FarFieldPattern) {
    let state = |flip: bool| {
        FarFieldPattern::from_fn(N_THETA, N_PHI, move |th, ph| {
            let ph = if flip { std::f64::consts::PI - ph } else { ph };
            (
                C64::new(th.sin() * (1.0 + ph.cos()), 0.0),
                C64::new(0.3 * th.sin() * ph.cos(), 0.1),
            )
        })
        .expect("static grid dimensions are valid")
    };
    (state(false), state(true))
}

/// Theta-polarized isotropic element.
fn isotropic_element() -> FarFieldPattern {
    FarFieldPattern::from_fn(N_THETA, N_PHI, |_, _| {
        (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    })
    .expect("static grid dimensions are valid")
}

/// Two-element receive fixture: isotropic elements displaced symmetrically
/// along x by the given spacing (in wavelengths).
pub fn receive_pair(spacing_wavelengths: f64) -> [FarFieldPattern; 2] {
    let base = isotropic_element();
    [
        base.displaced([0.5 * spacing_wavelengths, 0.0, 0.0], 1.0),
        base.displaced([-0.5 * spacing_wavelengths, 0.0, 0.0], 1.0),
    ]
}

/// Parses a propagation-path file: `#` comments, blank lines, and data rows
/// `s dep_theta dep_phi arr_theta arr_phi gain_re gain_im` (angles in
/// radians), grouped by the 1-based spatial index `s`.
pub fn parse_path_file(path: &Path) -> Result<BTreeMap<usize, Vec<PropagationPath>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("paths file {}: {e}", path.display())))?;
    let mut scenes: BTreeMap<usize, Vec<PropagationPath>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(validation(format!(
                "paths file {} line {}: expected 7 columns (s, departure theta/phi, \
                 arrival theta/phi, gain re/im), got {}",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let s: usize = fields[0].parse().map_err(|_| {
            validation(format!(
                "paths file {} line {}: spatial index must be a positive integer, got {:?}",
                path.display(),
                idx + 1,
                fields[0]
            ))
        })?;
        if s == 0 {
            return Err(validation(format!(
                "paths file {} line {}: spatial indices are 1-based",
                path.display(),
                idx + 1
            )));
        }
        let mut nums = [0.0f64; 6];
        for (k, f) in fields[1..].iter().enumerate() {
            nums[k] = f.parse().map_err(|_| {
                validation(format!(
                    "paths file {} line {}: column {} is not a number: {f:?}",
                    path.display(),
                    idx + 1,
                    k + 2
                ))
            })?;
        }
        scenes.entry(s).or_default().push(PropagationPath::co_polarized(
            (nums[0], nums[1]),
            (nums[2], nums[3]),
            C64::new(nums[4], nums[5]),
        ));
    }
    if scenes.is_empty() {
        return Err(validation(format!(
            "paths file {}: no path rows found",
            path.display()
        )));
    }
    Ok(scenes)
}

fn synthetic_record(s: usize, t: usize, h: Matrix2<C64>) -> Result<ChannelRecord, CliError> {
    ChannelRecord::new(s, t, h, None, None)
        .map_err(|e| numerical(format!("channel synthesis at point ({s}, {t}): {e}")))
}

/// Builds the snapshot ensemble the configured source describes.
pub fn build_ensemble(
    config: &ScenarioConfig,
    master_seed: u64,
) -> Result<ChannelEnsemble, CliError> {
    let chan_seed = derive_seed(master_seed, CHANNEL_STREAM, 0);
    match &config.channel {
        ChannelConfig::Rayleigh {
            spatial_points,
            snapshots,
        } => {
            let mut records = Vec::with_capacity(spatial_points * snapshots);
            for s in 1..=*spatial_points {
                for t in 1..=*snapshots {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(chan_seed, s as u64, t as u64));
                    records.push(synthetic_record(s, t, iid_rayleigh(&mut rng))?);
                }
            }
            let meta = EnsembleMeta {
                scenario: String::from("rayleigh"),
                s_count: *spatial_points,
                t_count: *snapshots,
                rx_spacing_mm: None,
                notes: None,
            };
            ChannelEnsemble::new(meta, records).map_err(|e| numerical(e.to_string()))
        }
        ChannelConfig::Ricean {
            k_factor,
            spatial_points,
            snapshots,
        } => {
            let ones = Matrix2::from_element(C64::new(1.0, 0.0));
            let mut records = Vec::with_capacity(spatial_points * snapshots);
            for s in 1..=*spatial_points {
                for t in 1..=*snapshots {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(chan_seed, s as u64, t as u64));
                    let h = ricean(*k_factor, &ones, &mut rng)
                        .map_err(|e| numerical(format!("channel.k_factor: {e}")))?;
                    records.push(synthetic_record(s, t, h)?);
                }
            }
            let meta = EnsembleMeta {
                scenario: String::from("ricean"),
                s_count: *spatial_points,
                t_count: *snapshots,
                rx_spacing_mm: None,
                notes: None,
            };
            ChannelEnsemble::new(meta, records).map_err(|e| numerical(e.to_string()))
        }
        ChannelConfig::File { path } => ChannelEnsemble::load(path)
            .map_err(|e| validation(format!("channel.path {}: {e}", path.display()))),
        ChannelConfig::Paths {
            path,
            tx_spacing_wavelengths,
            rx_spacing_wavelengths,
        } => {
            let scenes = parse_path_file(path)?;
            let rx = receive_pair(*rx_spacing_wavelengths);
            let mut records = Vec::with_capacity(scenes.len());
            let mut s_count = 0usize;
            match config.mode {
                Mode::BeamSpace => {
                    let (plus, minus) = mirrored_state_patterns();
                    let basis = BasisPair::from_states(&plus, &minus)
                        .map_err(|e| numerical(format!("basis construction: {e}")))?;
                    for (s, paths) in &scenes {
                        let set = PathSet::new(paths.clone())
                            .map_err(|e| validation(format!("paths file: {e}")))?;
                        let h = synthesize_beamspace_channel(&basis, &rx, &set);
                        records.push(synthetic_record(*s, 1, h)?);
                        s_count = s_count.max(*s);
                    }
                }
                Mode::Conventional => {
                    let spacing = tx_spacing_wavelengths
                        .expect("config validation guarantees the spacing is present");
                    let element = isotropic_element();
                    let tx = [element.clone(), element];
                    for (s, paths) in &scenes {
                        let set = PathSet::new(paths.clone())
                            .map_err(|e| validation(format!("paths file: {e}")))?;
                        let h = synthesize_conventional_channel(&tx, &rx, &set, spacing, 1.0);
                        records.push(synthetic_record(*s, 1, h)?);
                        s_count = s_count.max(*s);
                    }
                }
            }
            let meta = EnsembleMeta {
                scenario: String::from("paths"),
                s_count,
                t_count: 1,
                rx_spacing_mm: None,
                notes: None,
            };
            ChannelEnsemble::new(meta, records).map_err(|e| numerical(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MetricsConfig, SimConfig};
    use beamspace_core::baseband::LinkParams;

    fn scenario(mode: Mode, channel: ChannelConfig) -> ScenarioConfig {
        ScenarioConfig {
            mode,
            seed: 7,
            link: LinkParams::default(),
            channel,
            sim: SimConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    #[test]
    fn rayleigh_source_yields_one_record_per_grid_cell() {
        let config = scenario(
            Mode::BeamSpace,
            ChannelConfig::Rayleigh {
                spatial_points: 5,
                snapshots: 3,
            },
        );
        let e = build_ensemble(&config, 7).expect("synthetic source must build");
        assert_eq!(e.len(), 15, "every (point, snapshot) cell must be filled");
        assert_eq!(e.meta().s_count, 5);
        assert_eq!(e.meta().t_count, 3);
        assert!(
            e.records().iter().all(|r| r.measured_ser.is_none()),
            "synthetic snapshots carry no measured link quality"
        );
    }

    #[test]
    fn the_same_master_seed_reproduces_the_same_snapshots() {
        let config = scenario(
            Mode::BeamSpace,
            ChannelConfig::Rayleigh {
                spatial_points: 3,
                snapshots: 2,
            },
        );
        let a = build_ensemble(&config, 99).unwrap();
        let b = build_ensemble(&config, 99).unwrap();
        assert_eq!(a, b, "identical seeds must give identical ensembles");
        let c = build_ensemble(&config, 100).unwrap();
        assert_ne!(a, c, "different seeds must give different draws");
    }

    #[test]
    fn an_infinite_k_factor_reduces_to_the_line_of_sight_matrix() {
        let config = scenario(
            Mode::BeamSpace,
            ChannelConfig::Ricean {
                k_factor: f64::INFINITY,
                spatial_points: 2,
                snapshots: 1,
            },
        );
        let e = build_ensemble(&config, 1).unwrap();
        for r in e.records() {
            for v in r.h.iter() {
                assert!(
                    (v - C64::new(1.0, 0.0)).norm() < 1e-12,
                    "pure line of sight must return the all-ones matrix"
                );
            }
        }
    }

    #[test]
    fn path_files_report_malformed_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("scene.paths");
        std::fs::write(&file, "# header\n1 0.5 0.2 0.4 0.1 1.0 0.0\n1 0.5 bad 0.4 0.1 1.0 0.0\n")
            .unwrap();
        let err = parse_path_file(&file).expect_err("bad column must be rejected");
        assert!(err.to_string().contains("line 3"), "got: {err}");
    }

    #[test]
    fn paths_source_synthesizes_one_snapshot_per_spatial_point() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("scene.paths");
        let mut text = String::new();
        for s in 1..=4 {
            for p in 0..3 {
                text.push_str(&format!(
                    "{s} {} {} {} {} 0.7 -0.2\n",
                    0.3 + 0.1 * p as f64,
                    0.2 * s as f64,
                    1.0 + 0.2 * p as f64,
                    0.4 * s as f64
                ));
            }
        }
        std::fs::write(&file, text).unwrap();

        let beam = scenario(
            Mode::BeamSpace,
            ChannelConfig::Paths {
                path: file.clone(),
                tx_spacing_wavelengths: None,
                rx_spacing_wavelengths: 0.5,
            },
        );
        let e = build_ensemble(&beam, 5).unwrap();
        assert_eq!(e.len(), 4, "one snapshot per spatial point");
        assert_eq!(e.meta().t_count, 1);

        let conv = scenario(
            Mode::Conventional,
            ChannelConfig::Paths {
                path: file,
                tx_spacing_wavelengths: Some(1.0),
                rx_spacing_wavelengths: 0.5,
            },
        );
        let e2 = build_ensemble(&conv, 5).unwrap();
        assert_eq!(e2.len(), 4);
        let distinct = e2
            .records()
            .iter()
            .zip(e.records())
            .any(|(a, b)| (a.h - b.h).norm() > 1e-9);
        assert!(distinct, "the two transmit arms must synthesize different channels");
    }

    #[test]
    fn the_mirrored_surrogate_states_give_an_orthogonal_basis() {
        let (plus, minus) = mirrored_state_patterns();
        let basis = BasisPair::from_states(&plus, &minus).unwrap();
        assert!(
            basis.orthogonality_residual().unwrap() < 1e-9,
            "mirror symmetry must make the even/odd combinations orthogonal"
        );
    }
}
