//! Channel matrices: geometric path-based synthesis, statistical baselines,
//! measured-ensemble ingestion, and second-order statistics.
//!
//! A 2x2 channel maps the two transmit branches (either the two beam-space
//! basis patterns of the single-feed radiator, or two conventional antenna
//! elements) onto two receive antennas. Ensembles of such matrices flow
//! through the post-processing pipeline `filter -> temporal average ->
//! normalize` before statistics (spatial correlation, ellipticity) are
//! computed.

use crate::farfield::{BasisPair, FarFieldPattern};
use crate::util::{pairwise_sum, pairwise_sum_c};
use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel matrix contains a non-finite entry")]
    NonFinite,
    #[error("record indices must be >= 1, got (s = {0}, t = {1})")]
    BadIndex(usize, usize),
    #[error("record index (s = {s}, t = {t}) exceeds ensemble dimensions {s_count} x {t_count}")]
    IndexOutOfRange {
        s: usize,
        t: usize,
        s_count: usize,
        t_count: usize,
    },
    #[error("duplicate record for spatial/temporal index ({0}, {1})")]
    DuplicateRecord(usize, usize),
    #[error("measured SER must lie in [0, 1], got {0}")]
    SerOutOfRange(f64),
    #[error("path set must contain at least one path")]
    EmptyPathSet,
    #[error("ensemble holds no matrices")]
    EmptyEnsemble,
    #[error("ensemble power is zero; normalization is undefined")]
    ZeroEnsemble,
    #[error("Ricean K-factor must be >= 0, got {0}")]
    BadKFactor(f64),
    #[error("failed to parse ensemble file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Geometric (path-based) synthesis
// ---------------------------------------------------------------------------

/// One propagation path: departure and arrival directions in `(theta, phi)`
/// radians, a complex gain, and a 2x2 polarization transfer mapping the
/// transmitted `(theta-hat, phi-hat)` components onto the received ones.
#[derive(Debug, Clone)]
pub struct PropagationPath {
    pub departure: (f64, f64),
    pub arrival: (f64, f64),
    pub gain: C64,
    pub polarization: Matrix2<C64>,
}

impl PropagationPath {
    /// Path with no polarization conversion.
    pub fn co_polarized(departure: (f64, f64), arrival: (f64, f64), gain: C64) -> Self {
        Self {
            departure,
            arrival,
            gain,
            polarization: Matrix2::identity(),
        }
    }
}

/// A non-empty collection of propagation paths.
#[derive(Debug, Clone)]
pub struct PathSet {
    paths: Vec<PropagationPath>,
}

impl PathSet {
    pub fn new(paths: Vec<PropagationPath>) -> Result<Self, ChannelError> {
        if paths.is_empty() {
            return Err(ChannelError::EmptyPathSet);
        }
        for p in &paths {
            let finite = p.gain.re.is_finite()
                && p.gain.im.is_finite()
                && p.polarization.iter().all(|v| v.re.is_finite() && v.im.is_finite());
            if !finite {
                return Err(ChannelError::NonFinite);
            }
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &[PropagationPath] {
        &self.paths
    }
}

/// Per-path contribution of one transmit Jones vector into one receive
/// pattern: `f_rx^T . O . e_tx` (plain transpose, not conjugate - the
/// receive pattern enters the reciprocity integral unconjugated).
fn path_coupling(rx: (C64, C64), pol: &Matrix2<C64>, tx: (C64, C64)) -> C64 {
    let through = (
        pol[(0, 0)] * tx.0 + pol[(0, 1)] * tx.1,
        pol[(1, 0)] * tx.0 + pol[(1, 1)] * tx.1,
    );
    rx.0 * through.0 + rx.1 * through.1
}

/// Channel of the single-feed beam-space transmitter: column `n` is the sum
/// over paths of the receive-pattern response to basis pattern `n` radiated
/// toward each departure direction.
pub fn synthesize_beamspace_channel(
    basis: &BasisPair,
    rx_patterns: &[FarFieldPattern; 2],
    paths: &PathSet,
) -> Matrix2<C64> {
    let tx = [&basis.b1, &basis.b2];
    let mut terms: [Vec<C64>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for p in &paths.paths {
        for (m, rx) in rx_patterns.iter().enumerate() {
            let f = rx.sample_nearest(p.arrival.0, p.arrival.1);
            for (n, pattern) in tx.iter().enumerate() {
                let b = pattern.sample_nearest(p.departure.0, p.departure.1);
                terms[2 * m + n].push(p.gain * path_coupling(f, &p.polarization, b));
            }
        }
    }
    Matrix2::new(
        pairwise_sum_c(&terms[0]),
        pairwise_sum_c(&terms[1]),
        pairwise_sum_c(&terms[2]),
        pairwise_sum_c(&terms[3]),
    )
}

/// Channel of a conventional two-element transmitter. The two elements share
/// the given patterns but sit at `x = +spacing/2` and `x = -spacing/2`, so
/// each path picks up a per-element plane-wave phase at its departure
/// direction.
pub fn synthesize_conventional_channel(
    tx_patterns: &[FarFieldPattern; 2],
    rx_patterns: &[FarFieldPattern; 2],
    paths: &PathSet,
    tx_spacing: f64,
    wavelength: f64,
) -> Matrix2<C64> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let offsets = [0.5 * tx_spacing, -0.5 * tx_spacing];
    let mut terms: [Vec<C64>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for p in &paths.paths {
        let (st, ct_) = p.departure.0.sin_cos();
        let _ = ct_;
        let ux = st * p.departure.1.cos();
        for (m, rx) in rx_patterns.iter().enumerate() {
            let f = rx.sample_nearest(p.arrival.0, p.arrival.1);
            for (n, pattern) in tx_patterns.iter().enumerate() {
                let b = pattern.sample_nearest(p.departure.0, p.departure.1);
                let phase = C64::from_polar(1.0, k * offsets[n] * ux);
                terms[2 * m + n].push(p.gain * phase * path_coupling(f, &p.polarization, b));
            }
        }
    }
    Matrix2::new(
        pairwise_sum_c(&terms[0]),
        pairwise_sum_c(&terms[1]),
        pairwise_sum_c(&terms[2]),
        pairwise_sum_c(&terms[3]),
    )
}

// ---------------------------------------------------------------------------
// Statistical baselines
// ---------------------------------------------------------------------------

fn cn01(rng: &mut impl Rng) -> C64 {
    let scale = 0.5f64.sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * scale, im * scale)
}

/// 2x2 matrix with i.i.d. circularly-symmetric complex Gaussian entries of
/// unit variance.
pub fn iid_rayleigh(rng: &mut impl Rng) -> Matrix2<C64> {
    Matrix2::new(cn01(rng), cn01(rng), cn01(rng), cn01(rng))
}

/// Ricean mixture `sqrt(K/(K+1)) H_los + sqrt(1/(K+1)) H_rayleigh`;
/// an infinite K-factor returns the line-of-sight matrix exactly.
pub fn ricean(
    k_factor: f64,
    h_los: &Matrix2<C64>,
    rng: &mut impl Rng,
) -> Result<Matrix2<C64>, ChannelError> {
    if !(k_factor >= 0.0) {
        return Err(ChannelError::BadKFactor(k_factor));
    }
    if k_factor.is_infinite() {
        return Ok(*h_los);
    }
    let los_w = (k_factor / (k_factor + 1.0)).sqrt();
    let nlos_w = (1.0 / (k_factor + 1.0)).sqrt();
    let scatter = iid_rayleigh(rng);
    Ok(h_los.map(|v| v * C64::new(los_w, 0.0)) + scatter.map(|v| v * C64::new(nlos_w, 0.0)))
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// One channel snapshot at spatial index `s` and temporal index `t`
/// (both 1-based), with optional link-quality metadata from measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub s: usize,
    pub t: usize,
    pub h: Matrix2<C64>,
    pub measured_ser: Option<f64>,
    pub rx_power_dbm: Option<[f64; 2]>,
}

impl ChannelRecord {
    pub fn new(
        s: usize,
        t: usize,
        h: Matrix2<C64>,
        measured_ser: Option<f64>,
        rx_power_dbm: Option<[f64; 2]>,
    ) -> Result<Self, ChannelError> {
        if s < 1 || t < 1 {
            return Err(ChannelError::BadIndex(s, t));
        }
        if !h.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(ChannelError::NonFinite);
        }
        if let Some(ser) = measured_ser {
            if !(0.0..=1.0).contains(&ser) {
                return Err(ChannelError::SerOutOfRange(ser));
            }
        }
        if let Some(p) = rx_power_dbm {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(ChannelError::NonFinite);
            }
        }
        Ok(Self {
            s,
            t,
            h,
            measured_ser,
            rx_power_dbm,
        })
    }
}

/// Ensemble metadata: scenario label and the nominal spatial/temporal grid
/// sizes the records index into.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMeta {
    pub scenario: String,
    pub s_count: usize,
    pub t_count: usize,
    pub rx_spacing_mm: Option<f64>,
    pub notes: Option<String>,
}

/// An immutable collection of channel snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    meta: EnsembleMeta,
    records: Vec<ChannelRecord>,
}

impl ChannelEnsemble {
    pub fn new(meta: EnsembleMeta, records: Vec<ChannelRecord>) -> Result<Self, ChannelError> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if r.s > meta.s_count || r.t > meta.t_count {
                return Err(ChannelError::IndexOutOfRange {
                    s: r.s,
                    t: r.t,
                    s_count: meta.s_count,
                    t_count: meta.t_count,
                });
            }
            if !seen.insert((r.s, r.t)) {
                return Err(ChannelError::DuplicateRecord(r.s, r.t));
            }
        }
        Ok(Self { meta, records })
    }

    pub fn meta(&self) -> &EnsembleMeta {
        &self.meta
    }

    pub fn records(&self) -> &[ChannelRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Result of the measured-SER exclusion filter.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub ensemble: ChannelEnsemble,
    /// Fraction of the nominal spatial grid retaining at least one record.
    pub spatial_retention: f64,
    pub kept: usize,
    pub dropped: usize,
    /// Records kept because they carry no measured SER at all.
    pub unmeasured_kept: usize,
}

/// Drops records whose measured symbol error rate exceeds `ser_threshold`.
/// Records without a measurement pass through (counted separately), so
/// synthetic ensembles are unaffected.
pub fn filter_records(e: &ChannelEnsemble, ser_threshold: f64) -> FilterOutcome {
    let mut kept_records = Vec::new();
    let mut dropped = 0usize;
    let mut unmeasured = 0usize;
    for r in &e.records {
        match r.measured_ser {
            Some(ser) if ser > ser_threshold => dropped += 1,
            Some(_) => kept_records.push(r.clone()),
            None => {
                unmeasured += 1;
                kept_records.push(r.clone());
            }
        }
    }
    let mut spatial: Vec<usize> = kept_records.iter().map(|r| r.s).collect();
    spatial.sort_unstable();
    spatial.dedup();
    let retention = if e.meta.s_count == 0 {
        0.0
    } else {
        spatial.len() as f64 / e.meta.s_count as f64
    };
    let kept = kept_records.len();
    FilterOutcome {
        ensemble: ChannelEnsemble {
            meta: e.meta.clone(),
            records: kept_records,
        },
        spatial_retention: retention,
        kept,
        dropped,
        unmeasured_kept: unmeasured,
    }
}

/// Entrywise complex mean over the surviving temporal snapshots of each
/// spatial point, ordered by spatial index. Points with no records are
/// absent from the output.
pub fn temporal_average(e: &ChannelEnsemble) -> Vec<(usize, Matrix2<C64>)> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<usize, Vec<&Matrix2<C64>>> = BTreeMap::new();
    for r in &e.records {
        groups.entry(r.s).or_default().push(&r.h);
    }
    groups
        .into_iter()
        .map(|(s, hs)| {
            let n = hs.len() as f64;
            let mut avg = Matrix2::zeros();
            for idx in 0..4 {
                let terms: Vec<C64> = hs.iter().map(|h| h[idx]).collect();
                avg[idx] = pairwise_sum_c(&terms) / n;
            }
            (s, avg)
        })
        .collect()
}

/// Target root-mean-square Frobenius norm after ensemble normalization:
/// unit average power per receive antenna and per transmit branch.
pub const NORMALIZED_FROBENIUS: f64 = 2.0;

/// Scales every matrix by one global constant so the root-mean-square
/// Frobenius norm over the ensemble equals [`NORMALIZED_FROBENIUS`].
/// Returns the scaled matrices and the scale factor; applying the function
/// twice leaves the matrices fixed (the second scale is 1).
pub fn normalize_ensemble(
    h_list: &[Matrix2<C64>],
) -> Result<(Vec<Matrix2<C64>>, f64), ChannelError> {
    if h_list.is_empty() {
        return Err(ChannelError::EmptyEnsemble);
    }
    let powers: Vec<f64> = h_list.iter().map(|h| h.iter().map(|v| v.norm_sqr()).sum()).collect();
    let mean_power = pairwise_sum(&powers) / powers.len() as f64;
    if mean_power <= 0.0 {
        return Err(ChannelError::ZeroEnsemble);
    }
    let c = NORMALIZED_FROBENIUS / mean_power.sqrt();
    let scaled = h_list
        .iter()
        .map(|h| h.map(|v| v * C64::new(c, 0.0)))
        .collect();
    Ok((scaled, c))
}

/// Column-stacking vectorization `[h11, h21, h12, h22]`.
fn vec_of(h: &Matrix2<C64>) -> Vector4<C64> {
    Vector4::new(h[(0, 0)], h[(1, 0)], h[(0, 1)], h[(1, 1)])
}

/// Sample spatial correlation matrix `E[vec(H) vec(H)^H]` over the ensemble.
pub fn correlation_matrix(h_list: &[Matrix2<C64>]) -> Result<Matrix4<C64>, ChannelError> {
    if h_list.is_empty() {
        return Err(ChannelError::EmptyEnsemble);
    }
    let n = h_list.len() as f64;
    let mut out = Matrix4::zeros();
    for r in 0..4 {
        for c in 0..4 {
            let terms: Vec<C64> = h_list
                .iter()
                .map(|h| {
                    let v = vec_of(h);
                    v[r] * v[c].conj()
                })
                .collect();
            out[(r, c)] = pairwise_sum_c(&terms) / n;
        }
    }
    Ok(out)
}

/// Ellipticity of a 2x2 channel: the ratio of geometric to arithmetic mean
/// of the eigenvalues of `H H^H`. Equals `2 |det H| / ||H||_F^2`, lies in
/// `[0, 1]`, is scale-invariant, and is defined as 0 for the zero matrix.
pub fn ellipticity(h: &Matrix2<C64>) -> f64 {
    let frob_sq: f64 = h.iter().map(|v| v.norm_sqr()).sum();
    if frob_sq <= 0.0 {
        return 0.0;
    }
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    (2.0 * det.norm() / frob_sq).min(1.0)
}

/// Ensemble ellipticity summary: linear mean, mean in dB, and the sorted
/// sample for empirical-CDF queries.
#[derive(Debug, Clone)]
pub struct EllipticityStats {
    pub mean: f64,
    pub mean_db: f64,
    sorted: Vec<f64>,
}

impl EllipticityStats {
    pub fn from_matrices(h_list: &[Matrix2<C64>]) -> Result<Self, ChannelError> {
        if h_list.is_empty() {
            return Err(ChannelError::EmptyEnsemble);
        }
        let mut values: Vec<f64> = h_list.iter().map(ellipticity).collect();
        let mean = pairwise_sum(&values) / values.len() as f64;
        let dbs: Vec<f64> = values.iter().map(|&g| 10.0 * g.log10()).collect();
        let mean_db = pairwise_sum(&dbs) / dbs.len() as f64;
        values.sort_by(|a, b| a.partial_cmp(b).expect("ellipticity is never NaN"));
        Ok(Self {
            mean,
            mean_db,
            sorted: values,
        })
    }

    /// Empirical CDF: fraction of samples `<= x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let idx = self.sorted.partition_point(|&v| v <= x);
        idx as f64 / self.sorted.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

// ---------------------------------------------------------------------------
// Ensemble file format
// ---------------------------------------------------------------------------

const ENSEMBLE_COLUMNS: &str =
    "s,t,h11_re,h11_im,h12_re,h12_im,h21_re,h21_im,h22_re,h22_im,ser,p_rx1_dbm,p_rx2_dbm";

impl ChannelEnsemble {
    /// Line-oriented structured text: `key value` header then one
    /// comma-separated record per line. Optional fields are left blank.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# beam-space channel ensemble\n");
        out.push_str("schema_version 1\n");
        out.push_str(&format!("scenario {}\n", self.meta.scenario));
        out.push_str(&format!("S {}\n", self.meta.s_count));
        out.push_str(&format!("T {}\n", self.meta.t_count));
        if let Some(mm) = self.meta.rx_spacing_mm {
            out.push_str(&format!("rx_spacing_mm {mm}\n"));
        }
        if let Some(notes) = &self.meta.notes {
            out.push_str(&format!("notes {notes}\n"));
        }
        out.push_str(&format!("columns {ENSEMBLE_COLUMNS}\n"));
        for r in &self.records {
            let h = &r.h;
            let ser = r.measured_ser.map(|v| v.to_string()).unwrap_or_default();
            let (p1, p2) = match r.rx_power_dbm {
                Some([a, b]) => (a.to_string(), b.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{ser},{p1},{p2}\n",
                r.s,
                r.t,
                h[(0, 0)].re,
                h[(0, 0)].im,
                h[(0, 1)].re,
                h[(0, 1)].im,
                h[(1, 0)].re,
                h[(1, 0)].im,
                h[(1, 1)].re,
                h[(1, 1)].im,
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ChannelError> {
        let mut scenario: Option<String> = None;
        let mut s_count: Option<usize> = None;
        let mut t_count: Option<usize> = None;
        let mut rx_spacing_mm = None;
        let mut notes = None;
        let mut records = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| {
                ChannelError::Parse(format!("line {}: {what}: {line:?}", lineno + 1))
            };
            if let Some((key, value)) = line.split_once(' ') {
                match key {
                    "schema_version" => {
                        if value.trim() != "1" {
                            return Err(bad("unsupported schema_version"));
                        }
                        continue;
                    }
                    "scenario" => {
                        scenario = Some(value.trim().to_string());
                        continue;
                    }
                    "S" => {
                        s_count =
                            Some(value.trim().parse().map_err(|_| bad("bad S"))?);
                        continue;
                    }
                    "T" => {
                        t_count =
                            Some(value.trim().parse().map_err(|_| bad("bad T"))?);
                        continue;
                    }
                    "rx_spacing_mm" => {
                        rx_spacing_mm =
                            Some(value.trim().parse().map_err(|_| bad("bad rx_spacing_mm"))?);
                        continue;
                    }
                    "notes" => {
                        notes = Some(value.trim().to_string());
                        continue;
                    }
                    "columns" => {
                        if value.trim() != ENSEMBLE_COLUMNS {
                            return Err(bad("unexpected column layout"));
                        }
                        continue;
                    }
                    _ => {}
                }
            }
            // anything else must be a data row
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 13 {
                return Err(bad("expected 13 comma-separated fields"));
            }
            let s: usize = fields[0].parse().map_err(|_| bad("bad s index"))?;
            let t: usize = fields[1].parse().map_err(|_| bad("bad t index"))?;
            let mut reals = [0.0f64; 8];
            for (i, r) in reals.iter_mut().enumerate() {
                *r = fields[2 + i]
                    .parse()
                    .map_err(|_| bad("bad channel coefficient"))?;
            }
            let h = Matrix2::new(
                C64::new(reals[0], reals[1]),
                C64::new(reals[2], reals[3]),
                C64::new(reals[4], reals[5]),
                C64::new(reals[6], reals[7]),
            );
            let ser = if fields[10].is_empty() {
                None
            } else {
                Some(fields[10].parse().map_err(|_| bad("bad ser"))?)
            };
            let power = match (fields[11].is_empty(), fields[12].is_empty()) {
                (true, true) => None,
                (false, false) => Some([
                    fields[11].parse().map_err(|_| bad("bad rx power"))?,
                    fields[12].parse().map_err(|_| bad("bad rx power"))?,
                ]),
                _ => return Err(bad("rx power must have both antennas or neither")),
            };
            records.push(
                ChannelRecord::new(s, t, h, ser, power)
                    .map_err(|e| ChannelError::Parse(format!("line {}: {e}", lineno + 1)))?,
            );
        }
        let meta = EnsembleMeta {
            scenario: scenario.ok_or_else(|| ChannelError::Parse("missing scenario".into()))?,
            s_count: s_count.ok_or_else(|| ChannelError::Parse("missing S".into()))?,
            t_count: t_count.ok_or_else(|| ChannelError::Parse("missing T".into()))?,
            rx_spacing_mm,
            notes,
        };
        ChannelEnsemble::new(meta, records)
    }

    pub fn save(&self, path: &Path) -> Result<(), ChannelError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path)?;
        if text.trim().is_empty() {
            return Err(ChannelError::Parse(format!(
                "{} is empty",
                path.display()
            )));
        }
        Self::from_text(&text)
    }
}
