//! Reactive load synthesis for the mirror-symmetric three-port radiator.
//!
//! The radiating element superimposes two orthogonal basis patterns whose
//! relative weight is a unit-modulus complex number `x̄` (the combination
//! ratio). Steering `x̄` is done purely by retuning the two passive-port
//! reactances; this module computes those reactances in closed form, builds
//! per-symbol schedules for even-order PSK alphabets, and sweeps the one
//! remaining free parameter against a physical tuner range to find feasible
//! operating regions.

use crate::network::{LoadTermination, NetworkError, ScatteringMatrix3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadSynthesisError {
    #[error("combination ratio must have unit modulus, got |x| = {0}")]
    NonUnitModulus(f64),
    #[error("constellation order must be a power of two >= 2, got {0}")]
    InvalidOrder(usize),
    #[error("network is not mirror-symmetric (asymmetry {0:.3e}); load synthesis assumes identical passive ports")]
    AsymmetricNetwork(f64),
    #[error("reactance formula has a pole at x1_free = {x1_free} for ratio {ratio} (denominator {denominator:.3e})")]
    Pole {
        ratio: C64,
        x1_free: f64,
        denominator: f64,
    },
    #[error("free parameter must be finite, got {0}")]
    NonFiniteFreeParameter(f64),
    #[error("sweep grid is empty or ill-ordered (start {start}, stop {stop}, step {step})")]
    BadGrid { start: f64, stop: f64, step: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Unit-modulus complex weight `x̄ = x2/x1` between the two basis patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinationRatio(C64);

/// Values with magnitude below this snap to an exact 0/±1 component so the
/// cardinal ratios (±1, ±j) and their half-angle terms evaluate exactly.
const SNAP_EPS: f64 = 1e-12;

fn snap(v: f64) -> f64 {
    if v.abs() < SNAP_EPS {
        0.0
    } else if (v - 1.0).abs() < SNAP_EPS {
        1.0
    } else if (v + 1.0).abs() < SNAP_EPS {
        -1.0
    } else {
        v
    }
}

impl CombinationRatio {
    pub fn new(value: C64) -> Result<Self, LoadSynthesisError> {
        let modulus = value.norm();
        if (modulus - 1.0).abs() > 1e-9 {
            return Err(LoadSynthesisError::NonUnitModulus(modulus));
        }
        Ok(Self(C64::new(snap(value.re), snap(value.im))))
    }

    pub fn value(&self) -> C64 {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(C64::new(snap(-self.0.re), snap(-self.0.im)))
    }

    /// Symbol schedule for a power-of-two PSK alphabet (the m-th roots of
    /// unity), arranged as consecutive negation pairs `(leader, -leader)`
    /// with leaders at `exp(j(pi - 2*pi*n/m))` for `n = 0 .. m/2 - 1`.
    ///
    /// Pairing each point with its antipode is what lets one closed-form
    /// reactance table serve both ports: the second port of one state reuses
    /// the first-port value of its negation. For `m = 4` the order is
    /// `-1, +1, +j, -j`; the `m = 2` schedule is the first half of that.
    pub fn psk_schedule(m: usize) -> Result<Vec<CombinationRatio>, LoadSynthesisError> {
        if m < 2 || !m.is_power_of_two() {
            return Err(LoadSynthesisError::InvalidOrder(m));
        }
        let mut out = Vec::with_capacity(m);
        for n in 0..m / 2 {
            let theta = std::f64::consts::PI * (1.0 - 2.0 * n as f64 / m as f64);
            let leader = CombinationRatio(C64::new(snap(theta.cos()), snap(theta.sin())));
            out.push(leader);
            out.push(leader.negated());
        }
        Ok(out)
    }

    /// `cos(arg(x)/2)`, evaluated through a half-angle identity so the
    /// cardinal ratios give exact 0, 1 or sqrt(1/2).
    fn cos_half_arg(&self) -> f64 {
        ((1.0 + self.0.re) / 2.0).max(0.0).sqrt()
    }

    /// `sin(arg(x)/2)` with the principal-branch sign convention
    /// (non-negative at `x = -1`, matching `arg = +pi`).
    fn sin_half_arg(&self) -> f64 {
        let magnitude = ((1.0 - self.0.re) / 2.0).max(0.0).sqrt();
        if self.0.im == 0.0 {
            magnitude
        } else {
            magnitude.copysign(self.0.im)
        }
    }
}

/// The two passive-port reactances realizing one combination ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactancePair {
    pub x1: f64,
    pub x2: f64,
}

impl ReactancePair {
    pub fn terminations(&self) -> [LoadTermination; 2] {
        [
            LoadTermination::reactive(self.x1),
            LoadTermination::reactive(self.x2),
        ]
    }
}

/// Closed-form reactance solver bound to one radiator.
///
/// Only two scalars of the scattering description actually enter the
/// formula: the reference impedance and the difference between a passive
/// port's own reflection and the coupling between the two passive ports.
#[derive(Debug, Clone)]
pub struct LoadSynthesizer {
    delta: C64,
    z0: f64,
    s_matrix_ref: String,
}

impl LoadSynthesizer {
    pub fn from_scattering(s: &ScatteringMatrix3) -> Result<Self, LoadSynthesisError> {
        let asym = s.mirror_asymmetry();
        if asym > 1e-9 {
            return Err(LoadSynthesisError::AsymmetricNetwork(asym));
        }
        Ok(Self {
            delta: s.s[(1, 1)] - s.s[(2, 1)],
            z0: s.z0,
            s_matrix_ref: String::from("unlabeled"),
        })
    }

    /// Attaches an identifier naming the matrix the synthesizer was built
    /// from; schedules carry it so output files are traceable.
    pub fn with_matrix_ref(mut self, label: impl Into<String>) -> Self {
        self.s_matrix_ref = label.into();
        self
    }

    /// Difference term `S_pp − S_pq` over the passive-port block.
    pub fn delta(&self) -> C64 {
        self.delta
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// First-port reactance for one ratio, with `x1_free` the value assigned
    /// to the `x = -1` anchor state (where the formula collapses to the free
    /// parameter identically, so we return it bit-exactly).
    fn first_port_reactance(
        &self,
        ratio: CombinationRatio,
        x1_free: f64,
    ) -> Result<f64, LoadSynthesisError> {
        if !x1_free.is_finite() {
            return Err(LoadSynthesisError::NonFiniteFreeParameter(x1_free));
        }
        let cos_h = ratio.cos_half_arg();
        if cos_h == 0.0 {
            return Ok(x1_free);
        }
        let sin_h = ratio.sin_half_arg();
        let d = self.delta;
        let z0 = self.z0;
        let one = C64::new(1.0, 0.0);
        let residual = 1.0 - d.norm_sqr();
        let c1 = 2.0 * d.im * cos_h + residual * sin_h;
        let c2 = z0 * (one + d).norm_sqr() * cos_h;
        let d1 = (one - d).norm_sqr() * cos_h;
        let d2 = 2.0 * z0 * d.im * cos_h - z0 * residual * sin_h;
        let denominator = d1 * x1_free + d2;
        if denominator.abs() < 1e-6 * z0 {
            return Err(LoadSynthesisError::Pole {
                ratio: ratio.value(),
                x1_free,
                denominator,
            });
        }
        Ok(-z0 * (c1 * x1_free + c2) / denominator)
    }

    /// Reactance pair for one ratio: the second port carries the first-port
    /// value of the negated ratio.
    pub fn reactances(
        &self,
        ratio: CombinationRatio,
        x1_free: f64,
    ) -> Result<ReactancePair, LoadSynthesisError> {
        Ok(ReactancePair {
            x1: self.first_port_reactance(ratio, x1_free)?,
            x2: self.first_port_reactance(ratio.negated(), x1_free)?,
        })
    }

    /// Full per-symbol schedule for a list of ratios at one free-parameter
    /// setting.
    pub fn schedule(
        &self,
        states: &[CombinationRatio],
        x1_free: f64,
    ) -> Result<LoadSchedule, LoadSynthesisError> {
        let mut entries = Vec::with_capacity(states.len());
        for &ratio in states {
            let pair = self.reactances(ratio, x1_free)?;
            entries.push(ScheduleEntry { ratio, pair });
        }
        Ok(LoadSchedule {
            x1_free,
            entries,
            s_matrix_ref: self.s_matrix_ref.clone(),
        })
    }
}

/// One constellation state together with its realizing load pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub ratio: CombinationRatio,
    pub pair: ReactancePair,
}

/// Per-symbol load table at a fixed free-parameter setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub x1_free: f64,
    pub entries: Vec<ScheduleEntry>,
    /// Identifier of the scattering matrix the schedule was derived from.
    pub s_matrix_ref: String,
}

impl LoadSchedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Inclusive reactance interval a physical tuning element can realize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRange {
    pub min: f64,
    pub max: f64,
}

impl TuningRange {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            min: a.min(b),
            max: a.max(b),
        }
    }

    pub fn unbounded() -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

/// Uniform inclusive grid over the free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepGrid {
    pub fn values(&self) -> Result<Vec<f64>, LoadSynthesisError> {
        if !(self.step > 0.0 && self.stop >= self.start)
            || !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite())
        {
            return Err(LoadSynthesisError::BadGrid {
                start: self.start,
                stop: self.stop,
                step: self.step,
            });
        }
        let n = ((self.stop - self.start) / self.step + 0.5).floor() as usize;
        Ok((0..=n).map(|k| self.start + k as f64 * self.step).collect())
    }
}

/// One grid point of a free-parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x1_free: f64,
    /// Some denominator in the closed form vanished at this setting.
    pub pole: bool,
    /// Every scheduled reactance fits the tuner range.
    pub feasible: bool,
    pub schedule: Option<LoadSchedule>,
}

/// Evaluates the schedule across a free-parameter grid, flagging poles and
/// checking every scheduled reactance against the tuner range. Pole points
/// are kept in the output (marked infeasible) rather than dropped, so the
/// result always has one entry per grid value.
pub fn sweep_free_parameter(
    synth: &LoadSynthesizer,
    states: &[CombinationRatio],
    grid: SweepGrid,
    range: TuningRange,
) -> Result<Vec<SweepPoint>, LoadSynthesisError> {
    let mut out = Vec::new();
    for f in grid.values()? {
        match synth.schedule(states, f) {
            Ok(schedule) => {
                let feasible = schedule
                    .entries
                    .iter()
                    .all(|e| range.contains(e.pair.x1) && range.contains(e.pair.x2));
                out.push(SweepPoint {
                    x1_free: f,
                    pole: false,
                    feasible,
                    schedule: Some(schedule),
                });
            }
            Err(LoadSynthesisError::Pole { .. }) => out.push(SweepPoint {
                x1_free: f,
                pole: true,
                feasible: false,
                schedule: None,
            }),
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}

/// Contiguous runs of feasible grid points, as closed intervals of the free
/// parameter.
pub fn feasible_intervals(points: &[SweepPoint]) -> Vec<(f64, f64)> {
    let mut intervals = Vec::new();
    let mut run_start: Option<f64> = None;
    let mut last = 0.0;
    for p in points {
        if p.feasible {
            if run_start.is_none() {
                run_start = Some(p.x1_free);
            }
            last = p.x1_free;
        } else if let Some(s) = run_start.take() {
            intervals.push((s, last));
        }
    }
    if let Some(s) = run_start {
        intervals.push((s, last));
    }
    intervals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::reference_radiator;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn amended_synthesizer() -> LoadSynthesizer {
        let s = reference_radiator().amend_with_losses(2.0, 2.0).unwrap();
        LoadSynthesizer::from_scattering(&s).unwrap()
    }

    #[test]
    fn quaternary_schedule_orders_states_as_negation_pairs() {
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let want = [(-1.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
        assert_eq!(states.len(), 4);
        for (s, (re, im)) in states.iter().zip(want) {
            assert_eq!(s.value().re, re, "cardinal states must snap exactly");
            assert_eq!(s.value().im, im, "cardinal states must snap exactly");
        }
    }

    #[test]
    fn binary_schedule_is_prefix_of_quaternary() {
        let m2 = CombinationRatio::psk_schedule(2).unwrap();
        let m4 = CombinationRatio::psk_schedule(4).unwrap();
        assert_eq!(&m4[..2], &m2[..]);
    }

    #[test]
    fn octal_schedule_covers_alphabet_in_negation_pairs() {
        let states = CombinationRatio::psk_schedule(8).unwrap();
        assert_eq!(states.len(), 8);
        for pair in states.chunks(2) {
            let sum = pair[0].value() + pair[1].value();
            assert!(sum.norm() < 1e-12, "adjacent states must be antipodal, sum = {sum}");
        }
        for (i, a) in states.iter().enumerate() {
            assert_relative_eq!(a.value().norm(), 1.0, epsilon = 1e-12);
            for b in &states[..i] {
                assert!((a.value() - b.value()).norm() > 0.1, "states must be distinct");
            }
        }
    }

    #[test]
    fn non_power_of_two_order_is_rejected() {
        assert!(matches!(
            CombinationRatio::psk_schedule(3),
            Err(LoadSynthesisError::InvalidOrder(3))
        ));
        assert!(CombinationRatio::psk_schedule(6).is_err());
        assert!(CombinationRatio::psk_schedule(0).is_err());
        assert!(CombinationRatio::psk_schedule(16).is_ok());
    }

    #[test]
    fn non_unit_ratio_is_rejected() {
        let err = CombinationRatio::new(C64::new(0.5, 0.5));
        assert!(matches!(err, Err(LoadSynthesisError::NonUnitModulus(_))));
    }

    #[test]
    fn anchor_state_returns_free_parameter_bit_exactly() {
        let synth = amended_synthesizer();
        let anchor = CombinationRatio::new(C64::new(-1.0, 0.0)).unwrap();
        for f in [-200.0, -123.456, -10.0, 77.7] {
            let pair = synth.reactances(anchor, f).unwrap();
            assert_eq!(pair.x1, f, "x = -1 must reproduce the free parameter exactly");
        }
    }

    #[test]
    fn quaternary_schedule_matches_frozen_reference_at_minus_200() {
        // Oracle: closed form evaluated independently (NumPy) on the
        // loss-amended reference radiator with the free parameter at -200.
        let synth = amended_synthesizer();
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let schedule = synth.schedule(&states, -200.0).unwrap();
        let want = [
            (-200.0, -66.705906735751),
            (-66.705906735751, -200.0),
            (-96.216879135065, -13.743411526209),
            (-13.743411526209, -96.216879135065),
        ];
        for (entry, (x1, x2)) in schedule.entries.iter().zip(want) {
            assert_relative_eq!(entry.pair.x1, x1, epsilon = 1e-8);
            assert_relative_eq!(entry.pair.x2, x2, epsilon = 1e-8);
        }
    }

    #[test]
    fn second_port_reuses_first_port_of_negated_state() {
        let synth = amended_synthesizer();
        let states = CombinationRatio::psk_schedule(8).unwrap();
        for pair in states.chunks(2) {
            let a = synth.reactances(pair[0], -150.0).unwrap();
            let b = synth.reactances(pair[1], -150.0).unwrap();
            assert_eq!(a.x1, b.x2, "negation pairs must swap port roles exactly");
            assert_eq!(a.x2, b.x1, "negation pairs must swap port roles exactly");
        }
    }

    #[test]
    fn denominator_zero_is_reported_as_pole() {
        let synth = amended_synthesizer();
        // For x = +1 the denominator is |1-d|^2 * f + 2*z0*Im(d); solve for
        // the root and hit it exactly.
        let d = synth.delta();
        let f_pole = -2.0 * synth.z0() * d.im / (C64::new(1.0, 0.0) - d).norm_sqr();
        let plus_one = CombinationRatio::new(C64::new(1.0, 0.0)).unwrap();
        match synth.reactances(plus_one, f_pole) {
            Err(LoadSynthesisError::Pole { .. }) => {}
            other => panic!("expected pole at f = {f_pole}, got {other:?}"),
        }
    }

    #[test]
    fn input_reflection_is_state_and_parameter_independent() {
        // The whole point of the synthesis: retuning the constellation state
        // (or moving the free parameter) must not change the match seen by
        // the single feed. Checked against the loss-amended radiator.
        let s = reference_radiator().amend_with_losses(2.0, 2.0).unwrap();
        let synth = LoadSynthesizer::from_scattering(&s).unwrap();
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut reference: Option<C64> = None;
        for _ in 0..20 {
            let f = rng.random_range(-260.0..-30.0);
            let schedule = match synth.schedule(&states, f) {
                Ok(sch) => sch,
                Err(LoadSynthesisError::Pole { .. }) => continue,
                Err(e) => panic!("unexpected synthesis failure: {e}"),
            };
            for entry in &schedule.entries {
                let g = s.input_reflection(&entry.pair.terminations()).unwrap();
                match reference {
                    None => reference = Some(g),
                    Some(r) => assert!(
                        (g - r).norm() < 1e-9,
                        "input reflection drifted across states/parameters: {g} vs {r}"
                    ),
                }
            }
        }
        assert!(reference.is_some(), "sweep produced no valid schedules");
    }

    #[test]
    fn arbitrary_unit_ratios_keep_input_reflection_fixed() {
        let s = reference_radiator().amend_with_losses(2.0, 2.0).unwrap();
        let synth = LoadSynthesizer::from_scattering(&s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let reference = {
            let anchor = CombinationRatio::new(C64::new(-1.0, 0.0)).unwrap();
            let pair = synth.reactances(anchor, -200.0).unwrap();
            s.input_reflection(&pair.terminations()).unwrap()
        };
        for _ in 0..50 {
            let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let ratio = CombinationRatio::new(C64::from_polar(1.0, theta)).unwrap();
            let pair = match synth.reactances(ratio, -200.0) {
                Ok(p) => p,
                Err(LoadSynthesisError::Pole { .. }) => continue,
            Err(e) => panic!("unexpected synthesis failure: {e}"),
            };
            let g = s.input_reflection(&pair.terminations()).unwrap();
            assert!(
                (g - reference).norm() < 1e-9,
                "ratio at angle {theta} broke the match: {g} vs {reference}"
            );
        }
    }

    #[test]
    fn asymmetric_network_is_rejected() {
        let mut s = reference_radiator();
        s.s[(1, 1)] += C64::new(0.01, 0.0);
        assert!(matches!(
            LoadSynthesizer::from_scattering(&s),
            Err(LoadSynthesisError::AsymmetricNetwork(_))
        ));
    }

    #[test]
    fn sweep_feasible_region_matches_frozen_reference() {
        // Oracle: 1-ohm sweep of the loss-amended radiator against the
        // varactor span [-210, -8], evaluated independently (NumPy):
        // four disjoint feasible runs totalling 40 grid points, no poles
        // landing on the grid, and the published operating point inside
        // the widest run.
        let synth = amended_synthesizer();
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let grid = SweepGrid {
            start: -500.0,
            stop: 500.0,
            step: 1.0,
        };
        let range = TuningRange::new(-210.0, -8.0);
        let points = sweep_free_parameter(&synth, &states, grid, range).unwrap();
        assert_eq!(points.len(), 1001);
        assert!(points.iter().all(|p| !p.pole), "no pole should land on the 1-ohm grid");
        assert_eq!(points.iter().filter(|p| p.feasible).count(), 40);
        let intervals = feasible_intervals(&points);
        let want = [(-210.0, -185.0), (-97.0, -95.0), (-67.0, -66.0), (-16.0, -8.0)];
        assert_eq!(intervals.len(), want.len(), "feasible runs: {intervals:?}");
        for ((lo, hi), (wlo, whi)) in intervals.iter().zip(want) {
            assert_relative_eq!(*lo, wlo, epsilon = 1e-12);
            assert_relative_eq!(*hi, whi, epsilon = 1e-12);
        }
        let at_op = points.iter().find(|p| p.x1_free == -200.0).unwrap();
        assert!(at_op.feasible, "published operating point must be feasible");
    }

    #[test]
    fn sweep_with_unbounded_range_is_feasible_away_from_poles() {
        let synth = amended_synthesizer();
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let grid = SweepGrid {
            start: -300.0,
            stop: -100.0,
            step: 10.0,
        };
        let points =
            sweep_free_parameter(&synth, &states, grid, TuningRange::unbounded()).unwrap();
        for p in &points {
            assert!(p.pole || p.feasible, "non-pole point {p:?} should be feasible");
        }
    }

    #[test]
    fn one_point_grid_at_pole_is_flagged_not_dropped() {
        let synth = amended_synthesizer();
        let d = synth.delta();
        let f_pole = -2.0 * synth.z0() * d.im / (C64::new(1.0, 0.0) - d).norm_sqr();
        let states = CombinationRatio::psk_schedule(4).unwrap();
        let grid = SweepGrid {
            start: f_pole,
            stop: f_pole,
            step: 1.0,
        };
        let points =
            sweep_free_parameter(&synth, &states, grid, TuningRange::unbounded()).unwrap();
        assert_eq!(points.len(), 1, "pole point must stay in the output");
        assert!(points[0].pole && !points[0].feasible);
        assert!(points[0].schedule.is_none());
    }

    #[test]
    fn grid_values_are_inclusive_of_both_endpoints() {
        let grid = SweepGrid {
            start: -3.0,
            stop: -1.0,
            step: 1.0,
        };
        assert_eq!(grid.values().unwrap(), vec![-3.0, -2.0, -1.0]);
        let bad = SweepGrid {
            start: 1.0,
            stop: -1.0,
            step: 1.0,
        };
        assert!(bad.values().is_err());
    }
}
