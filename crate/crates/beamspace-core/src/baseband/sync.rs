//! Receiver-side estimation: carrier-frequency offset, frame timing,
//! least-squares channel estimation, zero-forcing equalization and symbol
//! scoring.

use super::{rrc_taps, upsample_shape, BasebandError, Constellation, LinkParams};
use crate::util::{db10, pairwise_sum, pairwise_sum_c};
use crate::C64;
use nalgebra::Matrix2;
use std::f64::consts::PI;

/// Condition-number ceiling shared by the training solve and the equalizer.
const CONDITION_LIMIT: f64 = 1e12;

/// Peak-to-average ratio below which a correlation peak is reported as
/// unreliable.
pub const TIMING_RELIABILITY_THRESHOLD: f64 = 3.0;

/// Carrier-frequency-offset estimate from the repeated synchronization
/// segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfoEstimate {
    /// Estimated offset in Hz.
    pub hz: f64,
    /// Half-width of the unambiguous estimation range: true offsets are
    /// observed modulo `2 × ambiguity_hz`, folded into `±ambiguity_hz`.
    pub ambiguity_hz: f64,
}

/// Estimates the carrier frequency offset from the repetition structure of
/// the synchronization segment.
///
/// The synchronization segment transmits the same `l_sync`-symbol block
/// `n_sync` times, so in the absence of an offset the received waveform is
/// periodic with lag `L = l_sync·rx_oversample` samples. A frequency offset
/// turns that periodicity into a fixed phase advance per lag; the estimator
/// accumulates `r[n+L]·conj(r[n])` over both receive streams and the full
/// `(n_sync−1)·L` overlap window and reads the offset from the argument.
///
/// `rx` must start at the first synchronization sample (align with
/// [`timing_sync`](super::timing_sync) first). Offsets beyond
/// `±symbol_rate/(2·l_sync)` alias back into that range; the returned
/// [`CfoEstimate::ambiguity_hz`] documents the fold point.
pub fn estimate_cfo(rx: [&[C64]; 2], params: &LinkParams) -> Result<CfoEstimate, BasebandError> {
    params.validate()?;
    let lag = params.l_sync * params.rx_oversample;
    if params.n_sync < 2 {
        return Err(BasebandError::InsufficientSamples {
            needed: 2 * lag,
            got: params.n_sync * lag,
        });
    }
    let window = (params.n_sync - 1) * lag;
    let needed = lag + window;
    for row in rx {
        if row.len() < needed {
            return Err(BasebandError::InsufficientSamples {
                needed,
                got: row.len(),
            });
        }
    }
    let mut products = Vec::with_capacity(2 * window);
    for row in rx {
        for n in 0..window {
            products.push(row[n + lag] * row[n].conj());
        }
    }
    let acc = pairwise_sum_c(&products);
    let fs = params.rx_sample_rate();
    let hz = acc.arg() * fs / (2.0 * PI * lag as f64);
    Ok(CfoEstimate {
        hz,
        ambiguity_hz: params.cfo_ambiguity_hz(),
    })
}

/// Result of frame-start acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingEstimate {
    /// Sample index of the first synchronization sample in the record.
    pub offset: usize,
    /// Peak of the root-power correlation metric over its record average.
    pub peak_to_average: f64,
    /// True when `peak_to_average` reaches [`TIMING_RELIABILITY_THRESHOLD`].
    pub reliable: bool,
}

/// Locates the frame start by cross-correlating against the shaped
/// synchronization waveforms.
///
/// `sync_symbols` holds the full synchronization-segment symbol rows of the
/// transmitted frame (all repetitions, one row per stream). Each row is
/// pulse-shaped into a template; the metric at candidate offset `d` is the
/// root of the summed correlation powers over every (receive stream,
/// template) pair, and the reported offset is its argmax. Confidence is the
/// peak-to-average ratio of that metric: records of pure noise stay below
/// [`TIMING_RELIABILITY_THRESHOLD`] and are flagged unreliable.
pub fn timing_sync(
    rx: [&[C64]; 2],
    sync_symbols: [&[C64]; 2],
    params: &LinkParams,
) -> Result<TimingEstimate, BasebandError> {
    params.validate()?;
    if sync_symbols[0].is_empty() || sync_symbols[0].len() != sync_symbols[1].len() {
        return Err(BasebandError::LengthMismatch {
            what: "sync rows",
            expected: sync_symbols[0].len().max(1),
            got: sync_symbols[1].len(),
        });
    }
    if rx[0].len() != rx[1].len() {
        return Err(BasebandError::LengthMismatch {
            what: "receive rows",
            expected: rx[0].len(),
            got: rx[1].len(),
        });
    }
    let taps = rrc_taps(
        params.rrc_rolloff,
        params.rrc_span_symbols,
        params.rx_oversample,
    )?;
    let templates: [Vec<C64>; 2] = [
        upsample_shape(sync_symbols[0], &taps, params.rx_oversample)?,
        upsample_shape(sync_symbols[1], &taps, params.rx_oversample)?,
    ];
    let t_len = templates[0].len();
    if rx[0].len() < t_len {
        return Err(BasebandError::InsufficientSamples {
            needed: t_len,
            got: rx[0].len(),
        });
    }
    let n_lags = rx[0].len() - t_len + 1;
    let mut metric = vec![0.0f64; n_lags];
    for row in rx {
        for template in &templates {
            for (d, m) in metric.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (k, t) in template.iter().enumerate() {
                    acc += row[d + k] * t.conj();
                }
                *m += acc.norm_sqr();
            }
        }
    }
    for m in &mut metric {
        *m = m.sqrt();
    }
    let mut offset = 0;
    let mut peak = f64::NEG_INFINITY;
    for (d, m) in metric.iter().enumerate() {
        if *m > peak {
            peak = *m;
            offset = d;
        }
    }
    let average = pairwise_sum(&metric) / n_lags as f64;
    let peak_to_average = if average > 0.0 { peak / average } else { 0.0 };
    Ok(TimingEstimate {
        offset,
        peak_to_average,
        reliable: peak_to_average >= TIMING_RELIABILITY_THRESHOLD,
    })
}

fn condition2(m: &Matrix2<C64>) -> f64 {
    let sv = m.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// General least-squares channel fit `Ĥ = Y·T^H·(T·T^H)^{-1}` for a 2×2
/// channel observed through an arbitrary 2×N training matrix.
///
/// `y` are the received symbol rows over the training interval, `t` the
/// transmitted rows of the same length. Fails with
/// [`BasebandError::SingularTraining`] when the training Gram matrix is not
/// safely invertible (zero-energy or rank-deficient training).
pub fn ls_estimate(y: [&[C64]; 2], t: [&[C64]; 2]) -> Result<Matrix2<C64>, BasebandError> {
    let n = t[0].len();
    for row in y.iter().chain(t.iter()) {
        if row.len() != n {
            return Err(BasebandError::LengthMismatch {
                what: "training rows",
                expected: n,
                got: row.len(),
            });
        }
    }
    if n < 2 {
        return Err(BasebandError::InsufficientSamples { needed: 2, got: n });
    }
    let correlate = |a: &[C64], b: &[C64]| -> C64 {
        let products: Vec<C64> = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
        pairwise_sum_c(&products)
    };
    let gram = Matrix2::new(
        correlate(t[0], t[0]),
        correlate(t[0], t[1]),
        correlate(t[1], t[0]),
        correlate(t[1], t[1]),
    );
    let cond = condition2(&gram);
    if !(cond < CONDITION_LIMIT) {
        return Err(BasebandError::SingularTraining { condition: cond });
    }
    let cross = Matrix2::new(
        correlate(y[0], t[0]),
        correlate(y[0], t[1]),
        correlate(y[1], t[0]),
        correlate(y[1], t[1]),
    );
    let gram_inv = gram
        .try_inverse()
        .ok_or(BasebandError::SingularTraining { condition: cond })?;
    Ok(cross * gram_inv)
}

/// Least-squares channel estimate from the two-phase shared-feed training
/// structure.
///
/// Phase 1 transmits `(t, t)`, phase 2 `(t, −t)`, so the stacked training
/// matrix is `T = [t t; t −t]` and the estimate is `Ĥ = [y_t1
/// y_t2]·T^H·(T·T^H)^{-1}`. `y_t1` and `y_t2` are the received rows of the
/// two phases; `training` is the common sequence `t`.
pub fn estimate_channel_ls(
    y_t1: [&[C64]; 2],
    y_t2: [&[C64]; 2],
    training: &[C64],
) -> Result<Matrix2<C64>, BasebandError> {
    let l = training.len();
    for row in y_t1.iter().chain(y_t2.iter()) {
        if row.len() != l {
            return Err(BasebandError::LengthMismatch {
                what: "training observation rows",
                expected: l,
                got: row.len(),
            });
        }
    }
    let mut y_rows: [Vec<C64>; 2] = [Vec::with_capacity(2 * l), Vec::with_capacity(2 * l)];
    for m in 0..2 {
        y_rows[m].extend_from_slice(y_t1[m]);
        y_rows[m].extend_from_slice(y_t2[m]);
    }
    let mut t_row1 = Vec::with_capacity(2 * l);
    t_row1.extend_from_slice(training);
    t_row1.extend_from_slice(training);
    let mut t_row2 = Vec::with_capacity(2 * l);
    t_row2.extend_from_slice(training);
    t_row2.extend(training.iter().map(|x| -x));
    ls_estimate(
        [&y_rows[0], &y_rows[1]],
        [&t_row1, &t_row2],
    )
}

/// Zero-forcing equalization: multiplies the received symbol rows by the
/// inverse channel estimate.
pub fn zf_equalize(
    h_hat: &Matrix2<C64>,
    y: [&[C64]; 2],
) -> Result<[Vec<C64>; 2], BasebandError> {
    if y[0].len() != y[1].len() {
        return Err(BasebandError::LengthMismatch {
            what: "received rows",
            expected: y[0].len(),
            got: y[1].len(),
        });
    }
    if h_hat.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(BasebandError::NonFiniteInput {
            what: "channel estimate",
        });
    }
    let cond = condition2(h_hat);
    if !(cond < CONDITION_LIMIT) {
        return Err(BasebandError::SingularChannel { condition: cond });
    }
    let inv = h_hat
        .try_inverse()
        .ok_or(BasebandError::SingularChannel { condition: cond })?;
    let n = y[0].len();
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for k in 0..n {
        x1.push(inv[(0, 0)] * y[0][k] + inv[(0, 1)] * y[1][k]);
        x2.push(inv[(1, 0)] * y[0][k] + inv[(1, 1)] * y[1][k]);
    }
    Ok([x1, x2])
}

/// Outcome of quantizing an equalized symbol stream against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DemapReport {
    /// Nearest constellation point for each input symbol.
    pub symbols: Vec<C64>,
    /// Fraction of symbols whose nearest point differs from the reference.
    pub ser: f64,
    /// Received constellation error: `10·log10(mean‖x − x_ref‖² /
    /// mean‖x_ref‖²)`; `-inf` for an exact input.
    pub rce_db: f64,
}

/// Quantizes equalized symbols to the constellation and scores them against
/// the transmitted reference.
pub fn demap_and_score(
    x_eq: &[C64],
    constellation: &Constellation,
    reference: &[C64],
) -> Result<DemapReport, BasebandError> {
    if x_eq.is_empty() {
        return Err(BasebandError::EmptyInput { what: "x_eq" });
    }
    if x_eq.len() != reference.len() {
        return Err(BasebandError::LengthMismatch {
            what: "reference symbols",
            expected: x_eq.len(),
            got: reference.len(),
        });
    }
    let mut symbols = Vec::with_capacity(x_eq.len());
    let mut errors = 0usize;
    let mut err_power = Vec::with_capacity(x_eq.len());
    let mut ref_power = Vec::with_capacity(x_eq.len());
    for (x, r) in x_eq.iter().zip(reference) {
        let detected = constellation.nearest(*x);
        symbols.push(constellation.points()[detected]);
        if detected != constellation.nearest(*r) {
            errors += 1;
        }
        err_power.push((x - r).norm_sqr());
        ref_power.push(r.norm_sqr());
    }
    let num = pairwise_sum(&err_power);
    let den = pairwise_sum(&ref_power);
    if den <= 0.0 {
        return Err(BasebandError::EmptyInput {
            what: "reference energy",
        });
    }
    Ok(DemapReport {
        symbols,
        ser: errors as f64 / x_eq.len() as f64,
        rce_db: db10(num / den),
    })
}
