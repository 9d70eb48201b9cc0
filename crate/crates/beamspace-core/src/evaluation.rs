//! Monte-Carlo performance engine: finite-alphabet mutual information,
//! Gaussian-input (ergodic) capacity, symbol-error-rate sweeps and empirical
//! CDFs over channel ensembles.
//!
//! SNR convention used throughout: `snr_db` is the per-symbol SNR, defined as
//! total transmit energy per channel use (the number of unit-energy streams)
//! over the per-receive-antenna noise variance. Equal power allocation across
//! streams is assumed everywhere.
//!
//! All estimators take explicit seeds. Trials are partitioned into fixed
//! blocks whose RNG streams derive from (seed, point index, block index), and
//! block results are reduced in index order, so outputs are bit-identical
//! regardless of how many worker threads execute the blocks.

use crate::baseband::Constellation;
use crate::util::{derive_seed, pairwise_sum};
use crate::C64;
use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Noise draws per (channel, SNR) point in mutual-information estimates,
/// unless a caller picks its own budget.
pub const DEFAULT_NOISE_SAMPLES: usize = 500;

/// Monte-Carlo trials per SNR point in symbol-error-rate sweeps, unless a
/// caller picks its own budget.
pub const DEFAULT_TRIALS_PER_POINT: usize = 100_000;

/// Condition number beyond which a channel is inverted via pseudo-inverse
/// and flagged rather than aborting a sweep.
const CONDITION_LIMIT: f64 = 1e12;

/// Trials per deterministic RNG block.
const TRIAL_BLOCK: usize = 4096;

/// Errors produced by the evaluation engine.
#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("channel ensemble is empty")]
    EmptyEnsemble,
    #[error("channel {index} is {got_rows}x{got_cols}, expected {rows}x{cols} like the rest")]
    MixedDimensions {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("SNR grid must be strictly increasing, violated at index {index}")]
    NonIncreasingGrid { index: usize },
    #[error("SNR grid is empty")]
    EmptyGrid,
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter {
        name: &'static str,
        message: String,
    },
    #[error("{metric} value {value} is outside its admissible range")]
    OutOfRange { metric: &'static str, value: f64 },
    #[error("non-finite input: {what}")]
    NonFiniteInput { what: &'static str },
}

/// Strictly increasing list of SNR points in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid {
    points: Vec<f64>,
}

impl SnrGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, EvaluationError> {
        if points.is_empty() {
            return Err(EvaluationError::EmptyGrid);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(EvaluationError::NonFiniteInput { what: "SNR point" });
        }
        for (index, pair) in points.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(EvaluationError::NonIncreasingGrid { index: index + 1 });
            }
        }
        Ok(SnrGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which quantity a [`PerformanceCurve`] tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    MutualInformationBits,
    CapacityBits,
    SymbolErrorRate,
}

/// A metric evaluated over an SNR grid, with per-point standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCurve {
    pub metric: MetricKind,
    pub snr_db: Vec<f64>,
    pub values: Vec<f64>,
    /// Monte-Carlo standard error of each value.
    pub std_errors: Vec<f64>,
    pub n_trials: usize,
    /// Number of trials that went through the pseudo-inverse fallback
    /// because their channel draw was rank deficient.
    pub pinv_fallbacks: usize,
}

impl PerformanceCurve {
    /// Validates ranges: error rates in [0, 1], information metrics
    /// non-negative and bounded by `bits_cap` when one is given.
    pub fn validate(&self, bits_cap: Option<f64>) -> Result<(), EvaluationError> {
        if self.values.len() != self.snr_db.len() || self.std_errors.len() != self.snr_db.len() {
            return Err(EvaluationError::InvalidParameter {
                name: "curve lengths",
                message: format!(
                    "{} SNR points vs {} values / {} errors",
                    self.snr_db.len(),
                    self.values.len(),
                    self.std_errors.len()
                ),
            });
        }
        for &v in &self.values {
            match self.metric {
                MetricKind::SymbolErrorRate => {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(EvaluationError::OutOfRange {
                            metric: "symbol error rate",
                            value: v,
                        });
                    }
                }
                MetricKind::MutualInformationBits | MetricKind::CapacityBits => {
                    if v < -1e-9 || bits_cap.is_some_and(|cap| v > cap + 1e-9) {
                        return Err(EvaluationError::OutOfRange {
                            metric: "information bits",
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// A Monte-Carlo mutual-information estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub bits: f64,
    pub std_err: f64,
}

fn check_channel_finite(h: &Matrix2<C64>) -> Result<(), EvaluationError> {
    if h.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(EvaluationError::NonFiniteInput {
            what: "channel matrix",
        });
    }
    Ok(())
}

fn snr_linear(snr_db: f64) -> Result<f64, EvaluationError> {
    if !snr_db.is_finite() {
        return Err(EvaluationError::NonFiniteInput { what: "snr_db" });
    }
    Ok(10f64.powf(snr_db / 10.0))
}

/// Finite-alphabet mutual information of a 2×2 channel with equiprobable
/// per-stream inputs, estimated by Monte-Carlo integration over the noise.
///
/// With input vectors `x_i` ranging over all `M²` stream pairs and noise
/// variance `N0 = 2/snr` per receive antenna (two unit-energy streams),
///
/// `I = 2·log2(M) − (1/M²)·Σ_i E_n[ log2 Σ_j exp((−‖H(x_i−x_j)+n‖² + ‖n‖²)/N0) ]`
///
/// evaluated with log-sum-exp stabilization. `n_noise_samples` fresh noise
/// vectors are drawn per input point; the returned standard error is the
/// sample error of the per-draw averages.
pub fn mutual_information_mc(
    h: &Matrix2<C64>,
    snr_db: f64,
    constellation: &Constellation,
    n_noise_samples: usize,
    rng_seed: u64,
) -> Result<MiEstimate, EvaluationError> {
    check_channel_finite(h)?;
    if n_noise_samples == 0 {
        return Err(EvaluationError::InvalidParameter {
            name: "n_noise_samples",
            message: "need at least one noise draw".to_string(),
        });
    }
    let snr = snr_linear(snr_db)?;
    let m = constellation.order();
    let n_inputs = m * m;
    let n0 = 2.0 / snr;

    // Precompute H(x_i − x_j) for every ordered input pair.
    let inputs: Vec<[C64; 2]> = (0..n_inputs)
        .map(|i| {
            [
                constellation.points()[i / m],
                constellation.points()[i % m],
            ]
        })
        .collect();
    let mut hdiff = vec![[C64::new(0.0, 0.0); 2]; n_inputs * n_inputs];
    for i in 0..n_inputs {
        for j in 0..n_inputs {
            let d = [inputs[i][0] - inputs[j][0], inputs[i][1] - inputs[j][1]];
            hdiff[i * n_inputs + j] = [
                h[(0, 0)] * d[0] + h[(0, 1)] * d[1],
                h[(1, 0)] * d[0] + h[(1, 1)] * d[1],
            ];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sigma = (n0 / 2.0).sqrt();
    let max_bits = 2.0 * (m as f64).log2();
    let mut per_draw = Vec::with_capacity(n_noise_samples);
    let mut exponents = vec![0.0f64; n_inputs];
    for _ in 0..n_noise_samples {
        let mut inner_sum = 0.0;
        for i in 0..n_inputs {
            let n = [
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma,
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sigma,
            ];
            let n_energy = n[0].norm_sqr() + n[1].norm_sqr();
            for j in 0..n_inputs {
                let hd = &hdiff[i * n_inputs + j];
                let shifted = (hd[0] + n[0]).norm_sqr() + (hd[1] + n[1]).norm_sqr();
                exponents[j] = (n_energy - shifted) / n0;
            }
            let peak = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = exponents.iter().map(|e| (e - peak).exp()).sum();
            inner_sum += (peak + sum_exp.ln()) / std::f64::consts::LN_2;
        }
        per_draw.push(max_bits - inner_sum / n_inputs as f64);
    }
    let mean = pairwise_sum(&per_draw) / n_noise_samples as f64;
    let std_err = if n_noise_samples > 1 {
        let sq: Vec<f64> = per_draw.iter().map(|g| (g - mean) * (g - mean)).collect();
        (pairwise_sum(&sq) / (n_noise_samples as f64 - 1.0) / n_noise_samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(MiEstimate {
        bits: mean,
        std_err,
    })
}

/// Gaussian-input capacity `log2 det(I + (snr/2)·H·H^H)` in bits per channel
/// use, for equal power allocation over two transmit streams.
pub fn ergodic_capacity(h: &Matrix2<C64>, snr_db: f64) -> Result<f64, EvaluationError> {
    check_channel_finite(h)?;
    let snr = snr_linear(snr_db)?;
    let scale = C64::new(snr / 2.0, 0.0);
    let gram = h * h.adjoint();
    let m = Matrix2::identity() + gram.map(|x| x * scale);
    let det = m.determinant();
    Ok(det.re.max(f64::MIN_POSITIVE).log2())
}

/// Mean and empirical distribution of per-channel mutual information over an
/// ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMi {
    pub mean: f64,
    sorted: Vec<f64>,
}

impl EnsembleMi {
    /// Per-channel values in ascending order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Empirical CDF at `x`: fraction of channels with MI ≤ `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|v| *v <= x);
        k as f64 / self.sorted.len() as f64
    }

    /// Plotting pairs `(value, k/N)` for the sorted values, `k = 1..=N`.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(k, v)| (*v, (k + 1) as f64 / n))
            .collect()
    }

    /// Order-statistic percentile with linear interpolation, `q` in [0, 1].
    pub fn percentile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        if n == 1 {
            return self.sorted[0];
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.sorted[lo] * (1.0 - frac) + self.sorted[hi] * frac
    }
}

/// Per-channel mutual information over an ensemble, reduced to its mean and
/// empirical CDF.
///
/// Channels are processed in parallel with per-channel RNG streams derived
/// from `(rng_seed, channel index)`; results are reduced in index order, so
/// the outcome does not depend on the worker count.
pub fn mi_over_ensemble(
    ensemble: &[Matrix2<C64>],
    snr_db: f64,
    constellation: &Constellation,
    n_noise_samples: usize,
    rng_seed: u64,
) -> Result<EnsembleMi, EvaluationError> {
    if ensemble.is_empty() {
        return Err(EvaluationError::EmptyEnsemble);
    }
    let per_channel: Vec<f64> = ensemble
        .par_iter()
        .enumerate()
        .map(|(idx, h)| {
            mutual_information_mc(
                h,
                snr_db,
                constellation,
                n_noise_samples,
                derive_seed(rng_seed, idx as u64, 0),
            )
            .map(|est| est.bits)
        })
        .collect::<Result<_, _>>()?;
    let mean = pairwise_sum(&per_channel) / per_channel.len() as f64;
    let mut sorted = per_channel;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("MI values are finite"));
    Ok(EnsembleMi { mean, sorted })
}

/// Prepared inverse (or pseudo-inverse) of one ensemble channel.
struct PreparedChannel {
    h: DMatrix<C64>,
    inv: DMatrix<C64>,
    used_pinv: bool,
}

fn prepare_channels(ensemble: &[DMatrix<C64>]) -> Result<Vec<PreparedChannel>, EvaluationError> {
    if ensemble.is_empty() {
        return Err(EvaluationError::EmptyEnsemble);
    }
    let (rows, cols) = (ensemble[0].nrows(), ensemble[0].ncols());
    if rows == 0 || cols == 0 || rows < cols {
        return Err(EvaluationError::InvalidParameter {
            name: "channel shape",
            message: format!("need at least as many receive rows as streams, got {rows}x{cols}"),
        });
    }
    ensemble
        .iter()
        .enumerate()
        .map(|(index, h)| {
            if h.nrows() != rows || h.ncols() != cols {
                return Err(EvaluationError::MixedDimensions {
                    index,
                    rows,
                    cols,
                    got_rows: h.nrows(),
                    got_cols: h.ncols(),
                });
            }
            if h.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(EvaluationError::NonFiniteInput {
                    what: "channel matrix",
                });
            }
            let sv = h.clone().singular_values();
            let (s_max, s_min) = (sv.max(), sv.min());
            let well_conditioned = s_min > 0.0 && s_max / s_min < CONDITION_LIMIT;
            let svd = h.clone().svd(true, true);
            // Zero-forcing front end: the Moore-Penrose inverse equals the
            // plain inverse for well-conditioned square channels and keeps
            // rank-deficient draws from aborting the sweep.
            let eps = if well_conditioned {
                0.0
            } else {
                s_max.max(1.0) * 1e-12
            };
            let inv = svd
                .pseudo_inverse(eps)
                .map_err(|message| EvaluationError::InvalidParameter {
                    name: "channel svd",
                    message: message.to_string(),
                })?;
            Ok(PreparedChannel {
                h: h.clone(),
                inv,
                used_pinv: !well_conditioned,
            })
        })
        .collect()
}

/// Symbol-error-rate sweep over an SNR grid for a fixed channel ensemble.
///
/// Each trial draws a channel uniformly from the ensemble, one constellation
/// symbol per stream, and per-antenna noise of variance
/// `n_streams/snr` (unit-energy streams, per-symbol SNR convention), applies
/// exact-channel zero forcing and nearest-point quantization, and counts
/// wrong streams. Rank-deficient channels fall back to the pseudo-inverse
/// and are tallied in [`PerformanceCurve::pinv_fallbacks`] instead of
/// aborting. The standard error is computed over per-trial error fractions.
pub fn ser_sweep(
    ensemble: &[DMatrix<C64>],
    grid: &SnrGrid,
    constellation: &Constellation,
    n_trials_per_point: usize,
    rng_seed: u64,
) -> Result<PerformanceCurve, EvaluationError> {
    if n_trials_per_point == 0 {
        return Err(EvaluationError::InvalidParameter {
            name: "n_trials_per_point",
            message: "need at least one trial".to_string(),
        });
    }
    let prepared = prepare_channels(ensemble)?;
    let n_streams = prepared[0].h.ncols();
    let n_rx = prepared[0].h.nrows();
    let fallback_channels = prepared.iter().filter(|p| p.used_pinv).count();

    let mut values = Vec::with_capacity(grid.len());
    let mut std_errors = Vec::with_capacity(grid.len());
    let mut pinv_fallbacks = 0usize;
    for (point_idx, &snr_db) in grid.points().iter().enumerate() {
        let snr = snr_linear(snr_db)?;
        let n0 = n_streams as f64 / snr;
        let sigma = (n0 / 2.0).sqrt();
        let n_blocks = n_trials_per_point.div_ceil(TRIAL_BLOCK);
        // (sum of per-trial error fractions, sum of squares, trials, pinv uses)
        let blocks: Vec<(f64, f64, usize, usize)> = (0..n_blocks)
            .into_par_iter()
            .map(|block| {
                let start = block * TRIAL_BLOCK;
                let count = TRIAL_BLOCK.min(n_trials_per_point - start);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    rng_seed,
                    point_idx as u64,
                    block as u64,
                ));
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let mut pinv_uses = 0usize;
                let mut y = DMatrix::<C64>::zeros(n_rx, 1);
                for _ in 0..count {
                    let ch = &prepared[rng.random_range(0..prepared.len())];
                    if ch.used_pinv {
                        pinv_uses += 1;
                    }
                    let tx: Vec<usize> = (0..n_streams)
                        .map(|_| rng.random_range(0..constellation.order()))
                        .collect();
                    for r in 0..n_rx {
                        let mut acc =
                            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                                * sigma;
                        for (s, &sym) in tx.iter().enumerate() {
                            acc += ch.h[(r, s)] * constellation.points()[sym];
                        }
                        y[(r, 0)] = acc;
                    }
                    let x_hat = &ch.inv * &y;
                    let wrong = tx
                        .iter()
                        .enumerate()
                        .filter(|(s, &sym)| constellation.nearest(x_hat[(*s, 0)]) != sym)
                        .count();
                    let frac = wrong as f64 / n_streams as f64;
                    sum += frac;
                    sum_sq += frac * frac;
                }
                (sum, sum_sq, count, pinv_uses)
            })
            .collect();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut trials = 0usize;
        for (s, s2, c, p) in blocks {
            sum += s;
            sum_sq += s2;
            trials += c;
            pinv_fallbacks += p;
        }
        let mean = sum / trials as f64;
        let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
        std_errors.push((var / trials as f64).sqrt());
        values.push(mean);
    }
    let _ = fallback_channels;
    let curve = PerformanceCurve {
        metric: MetricKind::SymbolErrorRate,
        snr_db: grid.points().to_vec(),
        values,
        std_errors,
        n_trials: n_trials_per_point,
        pinv_fallbacks,
    };
    curve.validate(None)?;
    Ok(curve)
}
