//! Scenario configuration: one TOML file describing the transmitter mode,
//! the frame format, the channel source, link-simulation settings and the
//! metric grids. Relative file paths are resolved against the directory of
//! the configuration file, and every validation failure names the offending
//! key so misconfigured scenarios are quick to fix.

use std::path::{Path, PathBuf};

use beamspace_core::baseband::{FrameFormat, LinkParams};
use beamspace_core::evaluation::{DEFAULT_NOISE_SAMPLES, DEFAULT_TRIALS_PER_POINT};
use serde::{Deserialize, Serialize};

use crate::{validation, CliError};

/// Transmitter architecture the scenario models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Single-feed transmitter multiplexing two streams on the far-field
    /// basis patterns.
    #[serde(alias = "beamspace")]
    BeamSpace,
    /// Two-feed reference array transmitting one stream per element.
    Conventional,
}

impl Mode {
    pub fn frame_format(self) -> FrameFormat {
        match self {
            Mode::BeamSpace => FrameFormat::BeamSpace,
            Mode::Conventional => FrameFormat::Conventional,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::BeamSpace => "beam-space",
            Mode::Conventional => "conventional",
        }
    }
}

/// Where the 2×2 channel snapshots come from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ChannelConfig {
    /// Independent unit-variance circularly-symmetric Gaussian entries,
    /// drawn fresh for every spatial point and snapshot.
    Rayleigh { spatial_points: usize, snapshots: usize },
    /// Fixed all-ones line-of-sight component mixed with Rayleigh scatter
    /// at the given K-factor.
    Ricean {
        k_factor: f64,
        spatial_points: usize,
        snapshots: usize,
    },
    /// Line-oriented ensemble file recorded or synthesized earlier.
    File { path: PathBuf },
    /// Geometric synthesis from an explicit propagation-path file: one
    /// snapshot per spatial point, patterns sampled at the path directions.
    Paths {
        path: PathBuf,
        /// Element spacing of the two-feed reference array, in wavelengths.
        /// Required in conventional mode; ignored in beam-space mode.
        tx_spacing_wavelengths: Option<f64>,
        /// Receive-array element spacing in wavelengths.
        #[serde(default = "default_rx_spacing")]
        rx_spacing_wavelengths: f64,
    },
}

fn default_rx_spacing() -> f64 {
    0.5
}

impl ChannelConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ChannelConfig::Rayleigh { .. } => "rayleigh",
            ChannelConfig::Ricean { .. } => "ricean",
            ChannelConfig::File { .. } => "file",
            ChannelConfig::Paths { .. } => "paths",
        }
    }
}

/// Settings of the frame-by-frame link simulator (`simulate`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// SNR points simulated, in dB; one batch of frames per point.
    pub snr_db: Vec<f64>,
    pub n_frames: usize,
    /// Carrier frequency offset injected into every frame, in Hz.
    pub cfo_hz: f64,
    /// Integer sample delay prepended to every received frame.
    pub delay_samples: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![30.0],
            n_frames: 1,
            cfo_hz: 0.0,
            delay_samples: 0,
        }
    }
}

/// Settings of the ensemble metric stage (`sweep` and `run`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Strictly increasing SNR grid for the performance curves, in dB.
    pub snr_grid_db: Vec<f64>,
    /// Noise draws per (channel, SNR) point of the mutual-information
    /// estimator.
    pub n_noise_samples: usize,
    /// Monte-Carlo trials per SNR point of the symbol-error-rate sweep.
    pub n_trials: usize,
    /// Measured-SER exclusion threshold of the dataset filter stage.
    pub ser_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            n_noise_samples: DEFAULT_NOISE_SAMPLES,
            n_trials: DEFAULT_TRIALS_PER_POINT,
            ser_threshold: 0.1,
        }
    }
}

/// Root of the scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Frame format shared by transmitter and receiver; defaults to the
    /// reference layout (4×32 sync, 2×64 training, 256 data symbols).
    #[serde(default)]
    pub link: LinkParams,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    /// Reads, parses, resolves relative paths and validates the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
        let mut config: ScenarioConfig = toml::from_str(&text)
            .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.channel {
            ChannelConfig::File { path } | ChannelConfig::Paths { path, .. } => resolve(path),
            _ => {}
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.link
            .validate()
            .map_err(|e| validation(format!("link: {e}")))?;
        self.validate_channel()?;
        self.validate_sim()?;
        self.validate_metrics()
    }

    fn validate_channel(&self) -> Result<(), CliError> {
        match &self.channel {
            ChannelConfig::Rayleigh {
                spatial_points,
                snapshots,
            }
            | ChannelConfig::Ricean {
                spatial_points,
                snapshots,
                ..
            } => {
                if *spatial_points == 0 {
                    return Err(validation("channel.spatial_points: must be at least 1"));
                }
                if *snapshots == 0 {
                    return Err(validation("channel.snapshots: must be at least 1"));
                }
                if let ChannelConfig::Ricean { k_factor, .. } = &self.channel {
                    if !(k_factor.is_finite() && *k_factor >= 0.0) {
                        return Err(validation(format!(
                            "channel.k_factor: must be finite and non-negative, got {k_factor}"
                        )));
                    }
                }
            }
            ChannelConfig::File { path } => {
                if !path.is_file() {
                    return Err(validation(format!(
                        "channel.path: file not found: {}",
                        path.display()
                    )));
                }
            }
            ChannelConfig::Paths {
                path,
                tx_spacing_wavelengths,
                rx_spacing_wavelengths,
            } => {
                if !path.is_file() {
                    return Err(validation(format!(
                        "channel.path: file not found: {}",
                        path.display()
                    )));
                }
                match tx_spacing_wavelengths {
                    None if self.mode == Mode::Conventional => {
                        return Err(validation(
                            "channel.tx_spacing_wavelengths: required when mode = \
                             \"conventional\" and channel.source = \"paths\"",
                        ));
                    }
                    Some(s) if !(s.is_finite() && *s > 0.0) => {
                        return Err(validation(format!(
                            "channel.tx_spacing_wavelengths: must be finite and positive, got {s}"
                        )));
                    }
                    _ => {}
                }
                if !(rx_spacing_wavelengths.is_finite() && *rx_spacing_wavelengths > 0.0) {
                    return Err(validation(format!(
                        "channel.rx_spacing_wavelengths: must be finite and positive, got \
                         {rx_spacing_wavelengths}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_sim(&self) -> Result<(), CliError> {
        if self.sim.snr_db.is_empty() {
            return Err(validation("sim.snr_db: must list at least one SNR point"));
        }
        if self.sim.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(validation("sim.snr_db: all points must be finite"));
        }
        if self.sim.n_frames == 0 {
            return Err(validation("sim.n_frames: must be at least 1"));
        }
        if !self.sim.cfo_hz.is_finite() {
            return Err(validation(format!(
                "sim.cfo_hz: must be finite, got {}",
                self.sim.cfo_hz
            )));
        }
        Ok(())
    }

    fn validate_metrics(&self) -> Result<(), CliError> {
        let grid = &self.metrics.snr_grid_db;
        if grid.is_empty() {
            return Err(validation("metrics.snr_grid_db: must list at least one SNR point"));
        }
        if grid.iter().any(|s| !s.is_finite()) {
            return Err(validation("metrics.snr_grid_db: all points must be finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(validation(
                "metrics.snr_grid_db: points must be strictly increasing",
            ));
        }
        if self.metrics.n_noise_samples == 0 {
            return Err(validation("metrics.n_noise_samples: must be at least 1"));
        }
        if self.metrics.n_trials == 0 {
            return Err(validation("metrics.n_trials: must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.metrics.ser_threshold) {
            return Err(validation(format!(
                "metrics.ser_threshold: must lie in [0, 1], got {}",
                self.metrics.ser_threshold
            )));
        }
        Ok(())
    }
}
