//! Frame-based two-stream transceiver.
//!
//! The module covers the digital link end to end: frame construction for the
//! two supported transmit formats (shared-feed beam-space frames and
//! conventional two-antenna frames), root-raised-cosine pulse shaping, timing
//! acquisition, carrier-frequency-offset estimation, least-squares channel
//! estimation from the two-phase training structure, zero-forcing
//! equalization with nearest-point quantization, and a waveform-level link
//! simulator used by the evaluation pipeline.
//!
//! All randomized operations take explicit seeds and are bit-reproducible;
//! long reductions use pairwise summation so results do not depend on
//! accumulation shortcuts.

mod filters;
mod link;
mod sync;

pub use filters::{matched_filter_decimate, rrc_taps, upsample_shape};
pub use link::{receive_frame, simulate_link, ReceiverReport};
pub use sync::{
    demap_and_score, estimate_cfo, estimate_channel_ls, ls_estimate, timing_sync, zf_equalize,
    CfoEstimate, DemapReport, TimingEstimate, TIMING_RELIABILITY_THRESHOLD,
};

use crate::util::pairwise_sum;
use crate::C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;
use thiserror::Error;

/// Errors produced by the transceiver chain.
#[derive(Debug, Error)]
pub enum BasebandError {
    /// A length precondition between two sequences was violated.
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Pulse-shaping rolloff outside the half-open interval (0, 1].
    #[error("rolloff factor must lie in (0, 1], got {value}")]
    InvalidRolloff { value: f64 },
    /// A structural parameter (oversampling factor, segment length, rate)
    /// failed validation.
    #[error("invalid link parameter {name}: {message}")]
    InvalidParameter {
        name: &'static str,
        message: String,
    },
    /// An operation was handed fewer samples than its observation window.
    #[error("insufficient samples: needed {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    /// An input that must be non-empty was empty.
    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },
    /// The training Gram matrix is numerically singular, so no least-squares
    /// channel estimate exists.
    #[error("training sequence is singular (condition number {condition:.3e})")]
    SingularTraining { condition: f64 },
    /// The channel estimate cannot be inverted for zero-forcing.
    #[error("channel matrix is singular (condition number {condition:.3e}), cannot zero-force")]
    SingularChannel { condition: f64 },
    /// A frame failed its format-specific structural checks.
    #[error("frame invariant violated: {what}")]
    InvariantViolation { what: String },
    /// A numeric input contained NaN or infinity.
    #[error("non-finite input: {what}")]
    NonFiniteInput { what: &'static str },
}

/// Physical-layer parameters of one link.
///
/// The defaults describe the validation setup this module models: four
/// repetitions of a 32-symbol synchronization sequence, two 64-symbol
/// training phases, a 256-symbol data segment, 390.625 kHz symbol rate, and
/// 4× receive oversampling. `tx_oversample` records the DAC rate ratio of
/// that setup (100 MHz / 390.625 kHz = 256); simulation itself runs at the
/// receive rate, which is sufficient for a flat channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    pub n_sync: usize,
    pub l_sync: usize,
    pub l_train: usize,
    pub l_data: usize,
    /// Symbols per second.
    pub symbol_rate: f64,
    /// Transmit DAC oversampling factor (metadata; not used by the simulator).
    pub tx_oversample: usize,
    /// Receive-side samples per symbol; all waveform processing runs at this rate.
    pub rx_oversample: usize,
    pub rrc_rolloff: f64,
    pub rrc_span_symbols: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            n_sync: 4,
            l_sync: 32,
            l_train: 64,
            l_data: 256,
            symbol_rate: 390_625.0,
            tx_oversample: 256,
            rx_oversample: 4,
            rrc_rolloff: 0.5,
            rrc_span_symbols: 8,
        }
    }
}

impl LinkParams {
    /// Checks every structural invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), BasebandError> {
        if self.n_sync == 0 || self.l_sync == 0 || self.l_train == 0 {
            return Err(BasebandError::InvalidParameter {
                name: "segment lengths",
                message: format!(
                    "n_sync, l_sync and l_train must all be >= 1, got {}, {}, {}",
                    self.n_sync, self.l_sync, self.l_train
                ),
            });
        }
        if self.tx_oversample == 0 || self.rx_oversample == 0 {
            return Err(BasebandError::InvalidParameter {
                name: "oversample",
                message: format!(
                    "oversampling factors must be >= 1, got tx {}, rx {}",
                    self.tx_oversample, self.rx_oversample
                ),
            });
        }
        if !(self.symbol_rate.is_finite() && self.symbol_rate > 0.0) {
            return Err(BasebandError::InvalidParameter {
                name: "symbol_rate",
                message: format!("must be a positive finite rate, got {}", self.symbol_rate),
            });
        }
        if !(self.rrc_rolloff > 0.0 && self.rrc_rolloff <= 1.0) {
            return Err(BasebandError::InvalidRolloff {
                value: self.rrc_rolloff,
            });
        }
        if self.rrc_span_symbols == 0 {
            return Err(BasebandError::InvalidParameter {
                name: "rrc_span_symbols",
                message: "pulse span must cover at least one symbol".to_string(),
            });
        }
        Ok(())
    }

    /// Total frame length in symbols.
    pub fn frame_len(&self) -> usize {
        self.n_sync * self.l_sync + 2 * self.l_train + self.l_data
    }

    /// Length of the synchronization segment in symbols.
    pub fn sync_len(&self) -> usize {
        self.n_sync * self.l_sync
    }

    /// Symbol indices of the synchronization segment.
    pub fn sync_range(&self) -> Range<usize> {
        0..self.sync_len()
    }

    /// Symbol indices of the first training phase.
    pub fn train1_range(&self) -> Range<usize> {
        let start = self.sync_len();
        start..start + self.l_train
    }

    /// Symbol indices of the second training phase.
    pub fn train2_range(&self) -> Range<usize> {
        let start = self.sync_len() + self.l_train;
        start..start + self.l_train
    }

    /// Symbol indices of the data segment.
    pub fn data_range(&self) -> Range<usize> {
        let start = self.sync_len() + 2 * self.l_train;
        start..self.frame_len()
    }

    /// Receive-side sample rate in Hz.
    pub fn rx_sample_rate(&self) -> f64 {
        self.symbol_rate * self.rx_oversample as f64
    }

    /// Half-width of the unambiguous range of the repetition-based CFO
    /// estimator: offsets are observed modulo `2 ×` this value because the
    /// estimate comes from a phase measured over one `l_sync`-symbol lag.
    pub fn cfo_ambiguity_hz(&self) -> f64 {
        self.symbol_rate / (2.0 * self.l_sync as f64)
    }
}

/// A finite symbol alphabet with unit average energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
    bits_per_symbol: u32,
}

impl Constellation {
    /// Builds a constellation from explicit points.
    ///
    /// The point count must be a power of two (at least 2) so that the symbol
    ///-to-bit mapping is well defined, the mean point energy must be 1, and
    /// points must be pairwise distinct.
    pub fn new(points: Vec<C64>) -> Result<Self, BasebandError> {
        let m = points.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(BasebandError::InvalidParameter {
                name: "constellation order",
                message: format!("need a power of two >= 2 points, got {m}"),
            });
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(BasebandError::NonFiniteInput {
                what: "constellation point",
            });
        }
        let energies: Vec<f64> = points.iter().map(|p| p.norm_sqr()).collect();
        let mean_energy = pairwise_sum(&energies) / m as f64;
        if (mean_energy - 1.0).abs() > 1e-9 {
            return Err(BasebandError::InvalidParameter {
                name: "constellation energy",
                message: format!("mean point energy must be 1, got {mean_energy}"),
            });
        }
        for i in 0..m {
            for j in i + 1..m {
                if (points[i] - points[j]).norm() <= 1e-9 {
                    return Err(BasebandError::InvalidParameter {
                        name: "constellation points",
                        message: format!("points {i} and {j} coincide"),
                    });
                }
            }
        }
        Ok(Constellation {
            points,
            bits_per_symbol: m.trailing_zeros(),
        })
    }

    /// Unit-energy PSK alphabet with points at odd multiples of `π/order`,
    /// i.e. `exp(jπ(2k+1)/order)` for `k = 0..order`.
    ///
    /// For order 4 this is the diagonal QPSK alphabet `(±1 ± j)/√2`, whose
    /// pairwise symbol ratios are exactly `{+1, −1, +j, −j}`.
    pub fn psk(order: usize) -> Result<Self, BasebandError> {
        if order < 2 || !order.is_power_of_two() {
            return Err(BasebandError::InvalidParameter {
                name: "psk order",
                message: format!("need a power of two >= 2, got {order}"),
            });
        }
        let points = (0..order)
            .map(|k| C64::from_polar(1.0, PI * (2 * k + 1) as f64 / order as f64))
            .collect();
        Constellation::new(points)
    }

    /// The diagonal QPSK alphabet `(±1 ± j)/√2`.
    pub fn qpsk() -> Self {
        Constellation::psk(4).expect("QPSK construction cannot fail")
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    /// Index of the constellation point closest to `x` (ties resolve to the
    /// lowest index).
    pub fn nearest(&self, x: C64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_sqr();
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        best
    }

    /// Gray-coded bit label of a point: adjacent indices differ in one bit.
    pub fn gray_bits(&self, index: usize) -> u32 {
        (index ^ (index >> 1)) as u32
    }

    /// All distinct pairwise symbol ratios `p_i / p_j`.
    ///
    /// For a PSK alphabet of order `m` these are exactly the `m`-th roots of
    /// unity, which is the set of per-symbol stream ratios a data segment may
    /// exhibit.
    pub fn ratio_set(&self) -> Vec<C64> {
        let mut ratios: Vec<C64> = Vec::new();
        for i in 0..self.points.len() {
            for j in 0..self.points.len() {
                let r = self.points[i] / self.points[j];
                if !ratios.iter().any(|q| (q - r).norm() <= 1e-9) {
                    ratios.push(r);
                }
            }
        }
        ratios
    }

    /// True when `r` is within `tol` of some pairwise symbol ratio.
    pub fn contains_ratio(&self, r: C64, tol: f64) -> bool {
        self.ratio_set().iter().any(|q| (q - r).norm() <= tol)
    }

    /// Draws `n` uniformly random constellation symbols.
    pub fn random_symbols<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<C64> {
        (0..n)
            .map(|_| self.points[rng.random_range(0..self.points.len())])
            .collect()
    }
}

/// Transmit format of a frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameFormat {
    /// Both streams share one feed; synchronization and training are encoded
    /// as stream ratios (sync `x2 = −x1`, training phases `+x1` then `−x1`).
    BeamSpace,
    /// Two independent antennas; each stream carries its own synchronization
    /// sequence and trains while the other antenna stays silent.
    Conventional,
}

/// Two parallel symbol streams making up one transmitted frame.
///
/// Layout (in symbols): `n_sync` repetitions of an `l_sync` synchronization
/// sequence, two `l_train` training phases, then `l_data` payload symbols.
/// The structural rules for the sync and training segments depend on the
/// [`FrameFormat`]; see [`FramePair::check_invariants`].
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    format: FrameFormat,
    params: LinkParams,
    stream1: Vec<C64>,
    stream2: Vec<C64>,
}

impl FramePair {
    pub fn format(&self) -> FrameFormat {
        self.format
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn stream1(&self) -> &[C64] {
        &self.stream1
    }

    pub fn stream2(&self) -> &[C64] {
        &self.stream2
    }

    /// Both streams restricted to the synchronization segment.
    pub fn sync_rows(&self) -> [&[C64]; 2] {
        let r = self.params.sync_range();
        [&self.stream1[r.clone()], &self.stream2[r]]
    }

    /// Both streams restricted to the first training phase.
    pub fn train1_rows(&self) -> [&[C64]; 2] {
        let r = self.params.train1_range();
        [&self.stream1[r.clone()], &self.stream2[r]]
    }

    /// Both streams restricted to the second training phase.
    pub fn train2_rows(&self) -> [&[C64]; 2] {
        let r = self.params.train2_range();
        [&self.stream1[r.clone()], &self.stream2[r]]
    }

    /// Both streams restricted to the data segment.
    pub fn data_rows(&self) -> [&[C64]; 2] {
        let r = self.params.data_range();
        [&self.stream1[r.clone()], &self.stream2[r]]
    }

    /// Per-symbol stream ratio `stream2[k] / stream1[k]`, or `None` where the
    /// first stream is silent.
    pub fn state_sequence(&self) -> Vec<Option<C64>> {
        self.stream1
            .iter()
            .zip(&self.stream2)
            .map(|(a, b)| {
                if a.norm() <= 1e-12 {
                    None
                } else {
                    Some(b / a)
                }
            })
            .collect()
    }

    /// Verifies the structural rules of the frame's format.
    ///
    /// Beam-space frames must satisfy `stream2 = −stream1` over the sync
    /// segment, `stream2 = stream1` over training phase 1, `stream2 =
    /// −stream1` over phase 2, and every data-segment ratio must belong to
    /// the constellation's ratio set. Conventional frames must silence
    /// stream 2 during phase 1 and stream 1 during phase 2, carry two
    /// distinct sync sequences, and their data symbols must be constellation
    /// points.
    pub fn check_invariants(&self, constellation: &Constellation) -> Result<(), BasebandError> {
        let expected = self.params.frame_len();
        for (label, s) in [("stream1", &self.stream1), ("stream2", &self.stream2)] {
            if s.len() != expected {
                return Err(BasebandError::LengthMismatch {
                    what: "frame stream",
                    expected,
                    got: s.len(),
                });
            }
            if s.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(BasebandError::InvariantViolation {
                    what: format!("{label} contains a non-finite symbol"),
                });
            }
        }
        match self.format {
            FrameFormat::BeamSpace => self.check_beamspace(constellation),
            FrameFormat::Conventional => self.check_conventional(constellation),
        }
    }

    fn check_beamspace(&self, constellation: &Constellation) -> Result<(), BasebandError> {
        for k in self.params.sync_range() {
            if (self.stream2[k] + self.stream1[k]).norm() > 1e-12 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("sync symbol {k}: stream2 must equal -stream1"),
                });
            }
        }
        for k in self.params.train1_range() {
            if (self.stream2[k] - self.stream1[k]).norm() > 1e-12 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("training phase 1 symbol {k}: stream2 must equal stream1"),
                });
            }
        }
        for k in self.params.train2_range() {
            if (self.stream2[k] + self.stream1[k]).norm() > 1e-12 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("training phase 2 symbol {k}: stream2 must equal -stream1"),
                });
            }
        }
        for k in self.params.data_range() {
            if self.stream1[k].norm() <= 1e-12 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("data symbol {k}: stream1 is silent, ratio undefined"),
                });
            }
            let ratio = self.stream2[k] / self.stream1[k];
            if !constellation.contains_ratio(ratio, 1e-9) {
                return Err(BasebandError::InvariantViolation {
                    what: format!(
                        "data symbol {k}: stream ratio {ratio} is outside the alphabet's ratio set"
                    ),
                });
            }
        }
        Ok(())
    }

    fn check_conventional(&self, constellation: &Constellation) -> Result<(), BasebandError> {
        for k in self.params.train1_range() {
            if self.stream2[k].norm() > 0.0 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("training phase 1 symbol {k}: stream2 must be silent"),
                });
            }
        }
        for k in self.params.train2_range() {
            if self.stream1[k].norm() > 0.0 {
                return Err(BasebandError::InvariantViolation {
                    what: format!("training phase 2 symbol {k}: stream1 must be silent"),
                });
            }
        }
        let [s1, s2] = self.sync_rows();
        let sync_distinct = s1
            .iter()
            .zip(s2)
            .any(|(a, b)| (a - b).norm() > 1e-9 && (a + b).norm() > 1e-9);
        if !sync_distinct {
            return Err(BasebandError::InvariantViolation {
                what: "conventional sync sequences must differ between streams".to_string(),
            });
        }
        for k in self.params.data_range() {
            for (label, s) in [("stream1", &self.stream1), ("stream2", &self.stream2)] {
                let nearest = constellation.points()[constellation.nearest(s[k])];
                if (s[k] - nearest).norm() > 1e-9 {
                    return Err(BasebandError::InvariantViolation {
                        what: format!("data symbol {k} of {label} is not a constellation point"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_payloads(
    params: &LinkParams,
    payload1: &[C64],
    payload2: &[C64],
) -> Result<(), BasebandError> {
    params.validate()?;
    if payload1.len() != params.l_data {
        return Err(BasebandError::LengthMismatch {
            what: "payload1",
            expected: params.l_data,
            got: payload1.len(),
        });
    }
    if payload2.len() != params.l_data {
        return Err(BasebandError::LengthMismatch {
            what: "payload2",
            expected: params.l_data,
            got: payload2.len(),
        });
    }
    Ok(())
}

/// Builds a beam-space frame pair around the given payloads.
///
/// A pseudo-random QPSK synchronization sequence and training sequence are
/// drawn from `rng_seed`. The second stream mirrors the first with the fixed
/// ratios the format requires: `−1` over sync, `+1` over training phase 1,
/// `−1` over phase 2.
pub fn build_beamspace_frames(
    params: &LinkParams,
    payload1: &[C64],
    payload2: &[C64],
    rng_seed: u64,
) -> Result<FramePair, BasebandError> {
    check_payloads(params, payload1, payload2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let alphabet = Constellation::qpsk();
    let sync = alphabet.random_symbols(params.l_sync, &mut rng);
    let training = alphabet.random_symbols(params.l_train, &mut rng);

    let mut stream1 = Vec::with_capacity(params.frame_len());
    let mut stream2 = Vec::with_capacity(params.frame_len());
    for _ in 0..params.n_sync {
        stream1.extend_from_slice(&sync);
        stream2.extend(sync.iter().map(|s| -s));
    }
    stream1.extend_from_slice(&training);
    stream2.extend_from_slice(&training);
    stream1.extend_from_slice(&training);
    stream2.extend(training.iter().map(|s| -s));
    stream1.extend_from_slice(payload1);
    stream2.extend_from_slice(payload2);

    Ok(FramePair {
        format: FrameFormat::BeamSpace,
        params: *params,
        stream1,
        stream2,
    })
}

/// Builds a conventional two-antenna frame pair around the given payloads.
///
/// Each stream carries its own pseudo-random QPSK synchronization sequence
/// (transmitted simultaneously). Training is time-multiplexed: stream 1
/// trains while stream 2 is silent, then the roles swap.
pub fn build_conventional_frames(
    params: &LinkParams,
    payload1: &[C64],
    payload2: &[C64],
    rng_seed: u64,
) -> Result<FramePair, BasebandError> {
    check_payloads(params, payload1, payload2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let alphabet = Constellation::qpsk();
    let sync1 = alphabet.random_symbols(params.l_sync, &mut rng);
    let sync2 = alphabet.random_symbols(params.l_sync, &mut rng);
    let train1 = alphabet.random_symbols(params.l_train, &mut rng);
    let train2 = alphabet.random_symbols(params.l_train, &mut rng);
    let zero = C64::new(0.0, 0.0);

    let mut stream1 = Vec::with_capacity(params.frame_len());
    let mut stream2 = Vec::with_capacity(params.frame_len());
    for _ in 0..params.n_sync {
        stream1.extend_from_slice(&sync1);
        stream2.extend_from_slice(&sync2);
    }
    stream1.extend_from_slice(&train1);
    stream2.extend(std::iter::repeat_n(zero, params.l_train));
    stream1.extend(std::iter::repeat_n(zero, params.l_train));
    stream2.extend_from_slice(&train2);
    stream1.extend_from_slice(payload1);
    stream2.extend_from_slice(payload2);

    Ok(FramePair {
        format: FrameFormat::Conventional,
        params: *params,
        stream1,
        stream2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn qpsk_payloads(seed: u64, len: usize) -> (Vec<C64>, Vec<C64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet = Constellation::qpsk();
        (
            alphabet.random_symbols(len, &mut rng),
            alphabet.random_symbols(len, &mut rng),
        )
    }

    #[test]
    fn default_frame_layout_totals_512_symbols() {
        let p = LinkParams::default();
        assert_eq!(p.frame_len(), 512, "4*32 + 2*64 + 256 symbols");
        assert_eq!(p.sync_range(), 0..128);
        assert_eq!(p.train1_range(), 128..192);
        assert_eq!(p.train2_range(), 192..256);
        assert_eq!(p.data_range(), 256..512);
        assert_relative_eq!(p.rx_sample_rate(), 1_562_500.0);
        assert_relative_eq!(p.cfo_ambiguity_hz(), 390_625.0 / 64.0);
    }

    #[test]
    fn params_validation_rejects_bad_rolloff_and_oversample() {
        let mut p = LinkParams {
            rrc_rolloff: 0.0,
            ..LinkParams::default()
        };
        assert!(
            matches!(p.validate(), Err(BasebandError::InvalidRolloff { .. })),
            "zero rolloff must be rejected"
        );
        p.rrc_rolloff = 1.5;
        assert!(matches!(
            p.validate(),
            Err(BasebandError::InvalidRolloff { .. })
        ));
        p.rrc_rolloff = 1.0;
        p.rx_oversample = 0;
        assert!(
            p.validate().is_err(),
            "zero oversampling factor must be rejected"
        );
    }

    #[test]
    fn qpsk_alphabet_is_unit_energy_with_quarter_turn_ratios() {
        let q = Constellation::qpsk();
        assert_eq!(q.order(), 4);
        assert_eq!(q.bits_per_symbol(), 2);
        let mean_energy: f64 = q.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 4.0;
        assert_relative_eq!(mean_energy, 1.0, epsilon = 1e-12);

        let ratios = q.ratio_set();
        assert_eq!(ratios.len(), 4, "QPSK ratio set has exactly four elements");
        for expected in [
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, -1.0),
        ] {
            assert!(
                q.contains_ratio(expected, 1e-12),
                "ratio set must contain {expected}"
            );
        }
    }

    #[test]
    fn gray_labels_of_adjacent_psk_points_differ_in_one_bit() {
        let q = Constellation::psk(8).expect("8-PSK is a valid order");
        for k in 0..8 {
            let a = q.gray_bits(k);
            let b = q.gray_bits((k + 1) % 8);
            assert_eq!(
                (a ^ b).count_ones(),
                1,
                "neighbours {k} and {} must differ in exactly one bit",
                (k + 1) % 8
            );
        }
    }

    #[test]
    fn constellation_rejects_non_power_of_two_and_unnormalized_points() {
        assert!(Constellation::psk(3).is_err(), "order 3 is not a power of two");
        assert!(Constellation::psk(1).is_err());
        let doubled: Vec<C64> = Constellation::qpsk()
            .points()
            .iter()
            .map(|p| 2.0 * p)
            .collect();
        assert!(
            Constellation::new(doubled).is_err(),
            "mean energy 4 must be rejected"
        );
    }

    #[test]
    fn nearest_point_picks_the_closest_alphabet_entry() {
        let q = Constellation::qpsk();
        let idx = q.nearest(C64::new(0.9, 0.8));
        let best = q.points()[idx];
        assert!(best.re > 0.0 && best.im > 0.0, "closest point is (1+j)/sqrt(2)");
        // Exactly on a point.
        for (k, p) in q.points().iter().enumerate() {
            assert_eq!(q.nearest(*p), k);
        }
    }

    #[test]
    fn beamspace_frame_satisfies_its_segment_invariants() {
        let params = LinkParams::default();
        let (p1, p2) = qpsk_payloads(7, params.l_data);
        let frames = build_beamspace_frames(&params, &p1, &p2, 11).expect("valid build");
        assert_eq!(frames.format(), FrameFormat::BeamSpace);
        assert_eq!(frames.stream1().len(), 512);
        frames
            .check_invariants(&Constellation::qpsk())
            .expect("freshly built beam-space frame must pass its own invariants");

        // The sync segment repeats the same 32-symbol sequence n_sync times.
        let [s1, _] = frames.sync_rows();
        for rep in 1..params.n_sync {
            for k in 0..params.l_sync {
                assert_eq!(
                    s1[rep * params.l_sync + k],
                    s1[k],
                    "sync repetition {rep} differs at symbol {k}"
                );
            }
        }
    }

    #[test]
    fn equal_payloads_give_constant_unity_data_ratio() {
        let params = LinkParams::default();
        let (p1, _) = qpsk_payloads(3, params.l_data);
        let frames = build_beamspace_frames(&params, &p1, &p1, 5).expect("valid build");
        let states = frames.state_sequence();
        for k in params.data_range() {
            let ratio = states[k].expect("stream1 carries payload symbols");
            assert_relative_eq!(ratio.re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(ratio.im, 0.0, epsilon = 1e-12);
        }
        // And the sync segment holds ratio -1 throughout.
        for k in params.sync_range() {
            let ratio = states[k].expect("sync is never silent");
            assert_relative_eq!(ratio.re, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conventional_frame_silences_one_stream_per_training_phase() {
        let params = LinkParams::default();
        let (p1, p2) = qpsk_payloads(19, params.l_data);
        let frames = build_conventional_frames(&params, &p1, &p2, 23).expect("valid build");
        frames
            .check_invariants(&Constellation::qpsk())
            .expect("freshly built conventional frame must pass its own invariants");

        let [t1a, t1b] = frames.train1_rows();
        let [t2a, t2b] = frames.train2_rows();
        let phase1_silent_energy: f64 = t1b.iter().map(|x| x.norm_sqr()).sum();
        assert_eq!(
            phase1_silent_energy, 0.0,
            "stream 2 must be exactly silent during phase 1"
        );
        assert!(t2a.iter().all(|x| x.norm() == 0.0));
        assert!(t1a.iter().all(|x| x.norm() > 0.0));
        assert!(t2b.iter().all(|x| x.norm() > 0.0));

        let [s1, s2] = frames.sync_rows();
        assert!(
            s1.iter().zip(s2).any(|(a, b)| (a - b).norm() > 1e-9),
            "the two sync sequences must be distinct"
        );
    }

    #[test]
    fn frame_builders_reject_wrong_payload_length() {
        let params = LinkParams::default();
        let short = vec![C64::new(1.0, 0.0); params.l_data - 1];
        let ok = vec![C64::new(1.0, 0.0); params.l_data];
        let err = build_beamspace_frames(&params, &short, &ok, 0).unwrap_err();
        assert!(
            matches!(err, BasebandError::LengthMismatch { what: "payload1", .. }),
            "unexpected error: {err}"
        );
        let err = build_conventional_frames(&params, &ok, &short, 0).unwrap_err();
        assert!(matches!(
            err,
            BasebandError::LengthMismatch { what: "payload2", .. }
        ));
    }

    #[test]
    fn invariant_checker_rejects_corrupted_sync_symbol() {
        let params = LinkParams::default();
        let (p1, p2) = qpsk_payloads(2, params.l_data);
        let mut frames = build_beamspace_frames(&params, &p1, &p2, 2).expect("valid build");
        frames.stream2[5] = -frames.stream2[5];
        let err = frames.check_invariants(&Constellation::qpsk()).unwrap_err();
        assert!(
            matches!(err, BasebandError::InvariantViolation { ref what } if what.contains("sync")),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn frame_builders_are_deterministic_in_the_seed() {
        let params = LinkParams::default();
        let (p1, p2) = qpsk_payloads(1, params.l_data);
        let a = build_beamspace_frames(&params, &p1, &p2, 42).expect("valid build");
        let b = build_beamspace_frames(&params, &p1, &p2, 42).expect("valid build");
        assert_eq!(a, b, "same seed must reproduce the same frame");
        let c = build_beamspace_frames(&params, &p1, &p2, 43).expect("valid build");
        assert_ne!(
            a.sync_rows()[0],
            c.sync_rows()[0],
            "different seeds must draw different sync sequences"
        );
    }
}
