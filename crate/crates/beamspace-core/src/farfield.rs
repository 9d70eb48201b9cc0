//! Sampled far-field pattern algebra on a regular spherical grid.
//!
//! Patterns are stored as complex `(e_theta, e_phi)` component arrays over a
//! uniform grid covering the full sphere: `theta` in `[0, pi]` inclusive and
//! `phi` in `[0, 2*pi)` exclusive. Radiated power and inner products use a
//! trapezoidal rule in `theta` and the periodic rectangle rule in `phi`
//! (spectrally accurate for trigonometric integrands), with pairwise
//! summation so results are bit-deterministic regardless of how callers
//! parallelize around this module.

use crate::util::{pairwise_sum, pairwise_sum_c};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FarFieldError {
    #[error("grid must have at least 2 polar and 1 azimuthal samples, got {0}x{1}")]
    DegenerateGrid(usize, usize),
    #[error("pattern arrays must both be {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("patterns are sampled on different grids ({0}x{1} vs {2}x{3})")]
    GridMismatch(usize, usize, usize, usize),
    #[error("pattern contains a non-finite field value at grid point ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("basis is degenerate: {0}")]
    DegenerateBasis(String),
    #[error("at least one constellation state is required")]
    NoStates,
    #[error("failed to parse pattern file: {0}")]
    Parse(String),
}

/// Complex far-field pattern sampled on a full-sphere grid.
///
/// Row index walks `theta` from 0 to `pi`; column index walks `phi` from 0
/// toward `2*pi` (exclusive). Fields are in normalized units where the
/// radiated power is the solid-angle integral of `|e_theta|^2 + |e_phi|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldPattern {
    theta: Vec<f64>,
    phi: Vec<f64>,
    pub e_theta: Array2<C64>,
    pub e_phi: Array2<C64>,
}

impl FarFieldPattern {
    pub fn new(e_theta: Array2<C64>, e_phi: Array2<C64>) -> Result<Self, FarFieldError> {
        let (n_theta, n_phi) = e_theta.dim();
        if n_theta < 2 || n_phi < 1 {
            return Err(FarFieldError::DegenerateGrid(n_theta, n_phi));
        }
        if e_phi.dim() != (n_theta, n_phi) {
            return Err(FarFieldError::ShapeMismatch {
                expected_rows: n_theta,
                expected_cols: n_phi,
                rows: e_phi.dim().0,
                cols: e_phi.dim().1,
            });
        }
        for ((i, j), v) in e_theta.indexed_iter().chain(e_phi.indexed_iter()) {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(FarFieldError::NonFinite(i, j));
            }
        }
        let theta = (0..n_theta)
            .map(|i| PI * i as f64 / (n_theta - 1) as f64)
            .collect();
        let phi = (0..n_phi)
            .map(|j| 2.0 * PI * j as f64 / n_phi as f64)
            .collect();
        Ok(Self {
            theta,
            phi,
            e_theta,
            e_phi,
        })
    }

    /// Samples an analytic pattern `(theta, phi) -> (e_theta, e_phi)` on an
    /// `n_theta x n_phi` grid.
    pub fn from_fn(
        n_theta: usize,
        n_phi: usize,
        f: impl Fn(f64, f64) -> (C64, C64),
    ) -> Result<Self, FarFieldError> {
        if n_theta < 2 || n_phi < 1 {
            return Err(FarFieldError::DegenerateGrid(n_theta, n_phi));
        }
        let mut e_theta = Array2::zeros((n_theta, n_phi));
        let mut e_phi = Array2::zeros((n_theta, n_phi));
        for i in 0..n_theta {
            let th = PI * i as f64 / (n_theta - 1) as f64;
            for j in 0..n_phi {
                let ph = 2.0 * PI * j as f64 / n_phi as f64;
                let (et, ep) = f(th, ph);
                e_theta[(i, j)] = et;
                e_phi[(i, j)] = ep;
            }
        }
        Self::new(e_theta, e_phi)
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phi.len()
    }

    pub fn theta_grid(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi_grid(&self) -> &[f64] {
        &self.phi
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n_theta() == other.n_theta() && self.n_phi() == other.n_phi()
    }

    fn require_same_grid(&self, other: &Self) -> Result<(), FarFieldError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(FarFieldError::GridMismatch(
                self.n_theta(),
                self.n_phi(),
                other.n_theta(),
                other.n_phi(),
            ))
        }
    }

    /// Trapezoidal weight in `theta` times the uniform periodic weight in
    /// `phi`, including the `sin(theta)` Jacobian, for grid row `i`.
    fn row_weight(&self, i: usize) -> f64 {
        let n_theta = self.n_theta();
        let d_theta = PI / (n_theta - 1) as f64;
        let d_phi = 2.0 * PI / self.n_phi() as f64;
        let edge = if i == 0 || i == n_theta - 1 { 0.5 } else { 1.0 };
        edge * d_theta * d_phi * self.theta[i].sin()
    }

    /// Total radiated power: quadrature of `(|e_theta|^2 + |e_phi|^2) sin(theta)`
    /// over the sphere.
    pub fn radiated_power(&self) -> f64 {
        let mut terms = Vec::with_capacity(self.n_theta() * self.n_phi());
        for i in 0..self.n_theta() {
            let w = self.row_weight(i);
            for j in 0..self.n_phi() {
                terms.push(w * (self.e_theta[(i, j)].norm_sqr() + self.e_phi[(i, j)].norm_sqr()));
            }
        }
        pairwise_sum(&terms)
    }

    /// Hermitian inner product over the sphere:
    /// quadrature of `(a_theta conj(b_theta) + a_phi conj(b_phi)) sin(theta)`.
    pub fn inner_product(&self, other: &Self) -> Result<C64, FarFieldError> {
        self.require_same_grid(other)?;
        let mut terms = Vec::with_capacity(self.n_theta() * self.n_phi());
        for i in 0..self.n_theta() {
            let w = self.row_weight(i);
            for j in 0..self.n_phi() {
                let v = self.e_theta[(i, j)] * other.e_theta[(i, j)].conj()
                    + self.e_phi[(i, j)] * other.e_phi[(i, j)].conj();
                terms.push(v * w);
            }
        }
        Ok(pairwise_sum_c(&terms))
    }

    /// Jones vector `(e_theta, e_phi)` at the grid point nearest to the
    /// requested direction; `phi` wraps periodically.
    pub fn sample_nearest(&self, theta: f64, phi: f64) -> (C64, C64) {
        let n_theta = self.n_theta();
        let d_theta = PI / (n_theta - 1) as f64;
        let i = ((theta.clamp(0.0, PI) / d_theta).round() as usize).min(n_theta - 1);
        let d_phi = 2.0 * PI / self.n_phi() as f64;
        let wrapped = phi.rem_euclid(2.0 * PI);
        let j = (wrapped / d_phi).round() as usize % self.n_phi();
        (self.e_theta[(i, j)], self.e_phi[(i, j)])
    }

    /// Pattern of the same element displaced by `position` meters from the
    /// phase origin: each direction gains the plane-wave phase
    /// `exp(+j * 2*pi/lambda * position . unit(theta, phi))`.
    pub fn displaced(&self, position: [f64; 3], wavelength: f64) -> Self {
        let k = 2.0 * PI / wavelength;
        let mut out = self.clone();
        for i in 0..self.n_theta() {
            let (st, ct) = self.theta[i].sin_cos();
            for j in 0..self.n_phi() {
                let (sp, cp) = self.phi[j].sin_cos();
                let dot = position[0] * st * cp + position[1] * st * sp + position[2] * ct;
                let phase = C64::from_polar(1.0, k * dot);
                out.e_theta[(i, j)] *= phase;
                out.e_phi[(i, j)] *= phase;
            }
        }
        out
    }

    /// Rotates the polarization frame by `psi` radians in the
    /// `(theta-hat, phi-hat)` plane at every direction.
    pub fn rotated_polarization(&self, psi: f64) -> Self {
        let (s, c) = psi.sin_cos();
        let mut out = self.clone();
        for i in 0..self.n_theta() {
            for j in 0..self.n_phi() {
                let et = self.e_theta[(i, j)];
                let ep = self.e_phi[(i, j)];
                out.e_theta[(i, j)] = et * c - ep * s;
                out.e_phi[(i, j)] = et * s + ep * c;
            }
        }
        out
    }

    /// Pointwise linear combination `self + weight * other`.
    pub fn axpy(&self, weight: C64, other: &Self) -> Result<Self, FarFieldError> {
        self.require_same_grid(other)?;
        let mut out = self.clone();
        for i in 0..self.n_theta() {
            for j in 0..self.n_phi() {
                out.e_theta[(i, j)] += weight * other.e_theta[(i, j)];
                out.e_phi[(i, j)] += weight * other.e_phi[(i, j)];
            }
        }
        Ok(out)
    }

    /// Uniform complex scaling of both components.
    pub fn scaled(&self, weight: C64) -> Self {
        let mut out = self.clone();
        out.e_theta.mapv_inplace(|v| v * weight);
        out.e_phi.mapv_inplace(|v| v * weight);
        out
    }

    // -- file format --------------------------------------------------------

    /// Serializes to the bundled structured-text format: comment header,
    /// `schema_version` / `n_theta` / `n_phi` keys, then one row per grid
    /// point in row-major order with lossless float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# sampled far-field pattern (rows: i_theta i_phi et_re et_im ep_re ep_im)\n");
        out.push_str("schema_version 1\n");
        out.push_str(&format!("n_theta {}\n", self.n_theta()));
        out.push_str(&format!("n_phi {}\n", self.n_phi()));
        for i in 0..self.n_theta() {
            for j in 0..self.n_phi() {
                let et = self.e_theta[(i, j)];
                let ep = self.e_phi[(i, j)];
                out.push_str(&format!("{i} {j} {} {} {} {}\n", et.re, et.im, ep.re, ep.im));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FarFieldError> {
        let mut n_theta: Option<usize> = None;
        let mut n_phi: Option<usize> = None;
        let mut e_theta: Option<Array2<C64>> = None;
        let mut e_phi: Option<Array2<C64>> = None;
        let mut seen = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["schema_version", v] => {
                    if *v != "1" {
                        return Err(FarFieldError::Parse(format!(
                            "unsupported schema_version {v}"
                        )));
                    }
                }
                ["n_theta", v] => {
                    let n = v.parse().map_err(|e| {
                        FarFieldError::Parse(format!("line {}: bad n_theta: {e}", lineno + 1))
                    })?;
                    n_theta = Some(n);
                }
                ["n_phi", v] => {
                    let n = v.parse().map_err(|e| {
                        FarFieldError::Parse(format!("line {}: bad n_phi: {e}", lineno + 1))
                    })?;
                    n_phi = Some(n);
                }
                [si, sj, a, b, c, d] => {
                    let (nt, np) = match (n_theta, n_phi) {
                        (Some(nt), Some(np)) => (nt, np),
                        _ => {
                            return Err(FarFieldError::Parse(format!(
                                "line {}: data row before n_theta/n_phi header",
                                lineno + 1
                            )))
                        }
                    };
                    if e_theta.is_none() {
                        e_theta = Some(Array2::zeros((nt, np)));
                        e_phi = Some(Array2::zeros((nt, np)));
                    }
                    let parse = |s: &str| -> Result<f64, FarFieldError> {
                        s.parse().map_err(|e| {
                            FarFieldError::Parse(format!("line {}: bad float: {e}", lineno + 1))
                        })
                    };
                    let i: usize = si.parse().map_err(|e| {
                        FarFieldError::Parse(format!("line {}: bad index: {e}", lineno + 1))
                    })?;
                    let j: usize = sj.parse().map_err(|e| {
                        FarFieldError::Parse(format!("line {}: bad index: {e}", lineno + 1))
                    })?;
                    if i >= nt || j >= np {
                        return Err(FarFieldError::Parse(format!(
                            "line {}: index ({i}, {j}) outside {nt}x{np} grid",
                            lineno + 1
                        )));
                    }
                    e_theta.as_mut().unwrap()[(i, j)] = C64::new(parse(a)?, parse(b)?);
                    e_phi.as_mut().unwrap()[(i, j)] = C64::new(parse(c)?, parse(d)?);
                    seen += 1;
                }
                _ => {
                    return Err(FarFieldError::Parse(format!(
                        "line {}: unrecognized line {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        let (nt, np) = match (n_theta, n_phi) {
            (Some(nt), Some(np)) => (nt, np),
            _ => return Err(FarFieldError::Parse("missing n_theta/n_phi header".into())),
        };
        if seen != nt * np {
            return Err(FarFieldError::Parse(format!(
                "expected {} data rows, found {seen}",
                nt * np
            )));
        }
        Self::new(e_theta.unwrap(), e_phi.unwrap())
    }
}

/// The two orthogonal basis patterns spanning the transmit beam space.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisPair {
    pub b1: FarFieldPattern,
    pub b2: FarFieldPattern,
}

impl BasisPair {
    pub fn new(b1: FarFieldPattern, b2: FarFieldPattern) -> Result<Self, FarFieldError> {
        b1.require_same_grid(&b2)?;
        Ok(Self { b1, b2 })
    }

    /// Recovers the basis from the two antipodal-state embedded patterns:
    /// `b1 = (e_plus + e_minus) / 2`, `b2 = (e_plus - e_minus) / 2`.
    pub fn from_states(
        e_plus: &FarFieldPattern,
        e_minus: &FarFieldPattern,
    ) -> Result<Self, FarFieldError> {
        let half = C64::new(0.5, 0.0);
        let b1 = e_plus.axpy(C64::new(1.0, 0.0), e_minus)?.scaled(half);
        let b2 = e_plus.axpy(C64::new(-1.0, 0.0), e_minus)?.scaled(half);
        Self::new(b1, b2)
    }

    /// Instantaneous radiated pattern for one combination ratio:
    /// `b1 + xbar * b2`.
    pub fn instantaneous(&self, xbar: C64) -> FarFieldPattern {
        self.b1
            .axpy(xbar, &self.b2)
            .expect("basis grids are validated at construction")
    }

    /// Basis power imbalance `10*log10(P1/P2)` in dB.
    pub fn imbalance_ratio_db(&self) -> Result<f64, FarFieldError> {
        let p1 = self.b1.radiated_power();
        let p2 = self.b2.radiated_power();
        let floor = 1e-30;
        if p1 < floor || p2 < floor {
            return Err(FarFieldError::DegenerateBasis(format!(
                "basis powers ({p1:.3e}, {p2:.3e}) too small for an imbalance ratio"
            )));
        }
        Ok(10.0 * (p1 / p2).log10())
    }

    /// Magnitude of the basis inner product normalized by the geometric mean
    /// of the basis powers; 0 for perfectly orthogonal patterns.
    pub fn orthogonality_residual(&self) -> Result<f64, FarFieldError> {
        let p1 = self.b1.radiated_power();
        let p2 = self.b2.radiated_power();
        let floor = 1e-30;
        if p1 < floor || p2 < floor {
            return Err(FarFieldError::DegenerateBasis(format!(
                "basis powers ({p1:.3e}, {p2:.3e}) too small for an orthogonality residual"
            )));
        }
        let ip = self.b1.inner_product(&self.b2)?;
        Ok(ip.norm() / (p1 * p2).sqrt())
    }

    /// Per-direction reconstruction error of measured state patterns against
    /// the ideal combinations, as a dB map.
    ///
    /// At each grid point the squared error summed over states is divided by
    /// the summed ideal power; directions where the ideal power vanishes get
    /// a NaN sentinel and are excluded from the map's averages.
    pub fn evm_map(&self, states: &[(C64, &FarFieldPattern)]) -> Result<EvmMap, FarFieldError> {
        if states.is_empty() {
            return Err(FarFieldError::NoStates);
        }
        for (_, p) in states {
            self.b1.require_same_grid(p)?;
        }
        let (nt, np) = self.b1.e_theta.dim();
        let mut linear = Array2::zeros((nt, np));
        let mut excluded = 0usize;
        for i in 0..nt {
            for j in 0..np {
                let mut num = 0.0;
                let mut den = 0.0;
                for (xbar, measured) in states {
                    let ideal_t = self.b1.e_theta[(i, j)] + xbar * self.b2.e_theta[(i, j)];
                    let ideal_p = self.b1.e_phi[(i, j)] + xbar * self.b2.e_phi[(i, j)];
                    num += (ideal_t - measured.e_theta[(i, j)]).norm_sqr()
                        + (ideal_p - measured.e_phi[(i, j)]).norm_sqr();
                    den += ideal_t.norm_sqr() + ideal_p.norm_sqr();
                }
                linear[(i, j)] = if den > 0.0 {
                    num / den
                } else {
                    excluded += 1;
                    f64::NAN
                };
            }
        }
        let db = linear.mapv(|v| 10.0 * v.log10());
        Ok(EvmMap {
            db,
            linear,
            theta: self.b1.theta.clone(),
            phi: self.b1.phi.clone(),
            excluded_points: excluded,
        })
    }
}

/// Reconstruction-error map produced by [`BasisPair::evm_map`].
///
/// `db` holds the per-direction error in dB (`-inf` where reconstruction is
/// exact, NaN where the ideal power vanishes). Averages are taken in the
/// linear domain over non-sentinel points only.
#[derive(Debug, Clone)]
pub struct EvmMap {
    pub db: Array2<f64>,
    linear: Array2<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    pub excluded_points: usize,
}

impl EvmMap {
    /// Linear-domain mean over the whole sphere (sentinel points excluded),
    /// in dB.
    pub fn plane_average_db(&self) -> f64 {
        Self::mean_db(self.linear.iter().copied())
    }

    /// Linear-domain mean over the great-circle cut at azimuth `phi`
    /// (both the `phi` and `phi + pi` half-planes), in dB.
    pub fn phi_cut_average_db(&self, phi: f64) -> f64 {
        let j0 = self.nearest_phi(phi);
        let j1 = self.nearest_phi(phi + PI);
        let column = |j: usize| (0..self.theta.len()).map(move |i| self.linear[(i, j)]);
        if j0 == j1 {
            Self::mean_db(column(j0))
        } else {
            Self::mean_db(column(j0).chain(column(j1)))
        }
    }

    fn nearest_phi(&self, phi: f64) -> usize {
        let n = self.phi.len();
        let d_phi = 2.0 * PI / n as f64;
        (phi.rem_euclid(2.0 * PI) / d_phi).round() as usize % n
    }

    fn mean_db(values: impl Iterator<Item = f64>) -> f64 {
        let kept: Vec<f64> = values.filter(|v| !v.is_nan()).collect();
        if kept.is_empty() {
            return f64::NAN;
        }
        let mean = pairwise_sum(&kept) / kept.len() as f64;
        10.0 * mean.log10()
    }
}
