//! Root-raised-cosine pulse shaping and the matching receive filter.

use super::BasebandError;
use crate::util::pairwise_sum;
use crate::C64;
use std::f64::consts::{PI, SQRT_2};

/// Root-raised-cosine impulse response at symbol-normalized time `t`.
fn rrc_impulse(rolloff: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0 + rolloff * (4.0 / PI - 1.0);
    }
    // The closed form has a removable singularity at |t| = 1/(4·rolloff).
    if (t.abs() - 1.0 / (4.0 * rolloff)).abs() < 1e-9 {
        let a = PI / (4.0 * rolloff);
        return rolloff / SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - rolloff)).sin() + 4.0 * rolloff * t * (PI * t * (1.0 + rolloff)).cos();
    let den = PI * t * (1.0 - (4.0 * rolloff * t).powi(2));
    num / den
}

/// Unit-energy root-raised-cosine taps spanning `span_symbols` symbols at
/// `oversample` samples per symbol (`span_symbols·oversample + 1` taps).
///
/// The taps are built symmetric by construction, so `taps[k] ==
/// taps[N−1−k]` holds exactly. Cascading the filter with itself yields a
/// raised-cosine response whose value at nonzero integer symbol offsets is
/// zero up to truncation (below 1e-3 in magnitude for spans of 8 symbols and
/// up, shrinking as the span grows).
pub fn rrc_taps(
    rolloff: f64,
    span_symbols: usize,
    oversample: usize,
) -> Result<Vec<f64>, BasebandError> {
    if !rolloff.is_finite() || rolloff <= 0.0 || rolloff > 1.0 {
        return Err(BasebandError::InvalidRolloff { value: rolloff });
    }
    if span_symbols == 0 {
        return Err(BasebandError::InvalidParameter {
            name: "span_symbols",
            message: "pulse span must cover at least one symbol".to_string(),
        });
    }
    if oversample == 0 {
        return Err(BasebandError::InvalidParameter {
            name: "oversample",
            message: "oversampling factor must be >= 1".to_string(),
        });
    }
    let n = span_symbols * oversample;
    let mut taps = vec![0.0; n + 1];
    for i in 0..=n / 2 {
        let t = (i as f64 - n as f64 / 2.0) / oversample as f64;
        let h = rrc_impulse(rolloff, t);
        taps[i] = h;
        taps[n - i] = h;
    }
    let squares: Vec<f64> = taps.iter().map(|h| h * h).collect();
    let scale = 1.0 / pairwise_sum(&squares).sqrt();
    for h in &mut taps {
        *h *= scale;
    }
    Ok(taps)
}

/// Zero-stuffs `symbols` by `oversample` and convolves with `taps`.
///
/// The output has `symbols.len()·oversample + taps.len() − 1` samples; the
/// shaped pulse of symbol `k` peaks at sample `k·oversample + (taps.len()−1)/2`.
pub fn upsample_shape(
    symbols: &[C64],
    taps: &[f64],
    oversample: usize,
) -> Result<Vec<C64>, BasebandError> {
    if symbols.is_empty() {
        return Err(BasebandError::EmptyInput { what: "symbols" });
    }
    if taps.is_empty() {
        return Err(BasebandError::EmptyInput { what: "taps" });
    }
    if oversample == 0 {
        return Err(BasebandError::InvalidParameter {
            name: "oversample",
            message: "oversampling factor must be >= 1".to_string(),
        });
    }
    let mut out = vec![C64::new(0.0, 0.0); symbols.len() * oversample + taps.len() - 1];
    for (k, x) in symbols.iter().enumerate() {
        if x.re == 0.0 && x.im == 0.0 {
            continue;
        }
        let base = k * oversample;
        for (i, h) in taps.iter().enumerate() {
            out[base + i] += x * h;
        }
    }
    Ok(out)
}

/// Applies the matched (time-reversed, here symmetric) filter and samples at
/// symbol instants.
///
/// `timing_offset` is the index of the first signal sample within `samples`,
/// as reported by timing acquisition; the filter's own group delay is
/// accounted for internally. Returns `⌊(samples.len() − timing_offset) /
/// oversample⌋` symbols — the trailing few of which cover the shaping
/// filter's tail and carry no payload, so callers truncate to the frame
/// length they expect.
pub fn matched_filter_decimate(
    samples: &[C64],
    taps: &[f64],
    oversample: usize,
    timing_offset: usize,
) -> Result<Vec<C64>, BasebandError> {
    if taps.is_empty() {
        return Err(BasebandError::EmptyInput { what: "taps" });
    }
    if oversample == 0 {
        return Err(BasebandError::InvalidParameter {
            name: "oversample",
            message: "oversampling factor must be >= 1".to_string(),
        });
    }
    if samples.len() <= timing_offset {
        return Err(BasebandError::InsufficientSamples {
            needed: timing_offset + oversample,
            got: samples.len(),
        });
    }
    let n_sym = (samples.len() - timing_offset) / oversample;
    if n_sym == 0 {
        return Err(BasebandError::InsufficientSamples {
            needed: timing_offset + oversample,
            got: samples.len(),
        });
    }
    let t_len = taps.len();
    let mut symbols = Vec::with_capacity(n_sym);
    for k in 0..n_sym {
        // Full-convolution index of this symbol's raised-cosine peak.
        let n0 = timing_offset + t_len - 1 + k * oversample;
        let lo = n0.saturating_sub(t_len - 1);
        let hi = (n0 + 1).min(samples.len());
        let mut acc = C64::new(0.0, 0.0);
        for u in lo..hi {
            acc += samples[u] * taps[n0 - u];
        }
        symbols.push(acc);
    }
    Ok(symbols)
}
