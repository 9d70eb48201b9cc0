//! Scattering/impedance algebra for the three-port reconfigurable radiator.
//!
//! Port convention used everywhere in this crate: port 0 is the active (fed)
//! port, ports 1 and 2 are the mirror-symmetric passive ports that carry the
//! variable reactive loads. All matrices are referenced to a single real
//! characteristic impedance `z0`.

use nalgebra::{Matrix2, Matrix3, RowVector2, Vector2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the condition number accepted for any linear solve in this
/// module; conversions whose pivot matrix is worse than this are refused
/// rather than silently amplified.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("reference impedance must be positive and finite, got {0}")]
    InvalidReferenceImpedance(f64),
    #[error("matrix entries must all be finite")]
    NonFiniteEntry,
    #[error("{context}: matrix is singular or ill-conditioned (condition number {cond:.3e} exceeds {limit:.3e})")]
    IllConditioned {
        context: &'static str,
        cond: f64,
        limit: f64,
    },
    #[error("reference impedances differ between operands ({0} vs {1})")]
    ReferenceMismatch(f64, f64),
    #[error("load resistance must be non-negative and finite, got {0}")]
    InvalidLoadResistance(f64),
    #[error("load impedance {0} coincides with -z0; its reflection coefficient is unbounded")]
    DegenerateLoad(C64),
    #[error("network is not mirror-symmetric: {0}")]
    AsymmetricNetwork(String),
    #[error("failed to parse scattering-matrix file: {0}")]
    Parse(String),
}

/// 3×3 scattering matrix of the radiator, with its reference impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix3 {
    pub s: Matrix3<C64>,
    pub z0: f64,
}

/// 3×3 impedance matrix, with the reference impedance it converts back to.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceMatrix3 {
    pub z: Matrix3<C64>,
    pub z0: f64,
}

/// One-port termination `z = r + jx` attached to a passive port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadTermination {
    pub resistance: f64,
    pub reactance: f64,
}

impl LoadTermination {
    /// Purely reactive termination (`r = 0`).
    pub fn reactive(reactance: f64) -> Self {
        Self {
            resistance: 0.0,
            reactance,
        }
    }

    pub fn impedance(&self) -> C64 {
        C64::new(self.resistance, self.reactance)
    }

    /// Reflection coefficient of the load against `z0`.
    pub fn reflection(&self, z0: f64) -> Result<C64, NetworkError> {
        if !(self.resistance >= 0.0 && self.resistance.is_finite() && self.reactance.is_finite()) {
            return Err(NetworkError::InvalidLoadResistance(self.resistance));
        }
        let z = self.impedance();
        let den = z + C64::new(z0, 0.0);
        if den.norm() < 1e-9 * z0 {
            return Err(NetworkError::DegenerateLoad(z));
        }
        Ok((z - C64::new(z0, 0.0)) / den)
    }
}

fn check_z0(z0: f64) -> Result<(), NetworkError> {
    if z0.is_finite() && z0 > 0.0 {
        Ok(())
    } else {
        Err(NetworkError::InvalidReferenceImpedance(z0))
    }
}

fn check_finite3(m: &Matrix3<C64>) -> Result<(), NetworkError> {
    if m.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(NetworkError::NonFiniteEntry)
    }
}

/// Condition number (2-norm) of a 3×3 complex matrix via its singular values.
fn condition3(m: &Matrix3<C64>) -> f64 {
    let sv = m.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `X · A = B` for X (i.e. right-division) with a condition check on A.
fn solve_right3(
    b: &Matrix3<C64>,
    a: &Matrix3<C64>,
    context: &'static str,
) -> Result<Matrix3<C64>, NetworkError> {
    let cond = condition3(a);
    if !(cond < CONDITION_LIMIT) {
        return Err(NetworkError::IllConditioned {
            context,
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let inv = a
        .try_inverse()
        .ok_or(NetworkError::IllConditioned {
            context,
            cond: f64::INFINITY,
            limit: CONDITION_LIMIT,
        })?;
    Ok(b * inv)
}

impl ScatteringMatrix3 {
    pub fn new(s: Matrix3<C64>, z0: f64) -> Result<Self, NetworkError> {
        check_z0(z0)?;
        check_finite3(&s)?;
        Ok(Self { s, z0 })
    }

    /// Largest absolute deviation from the mirror symmetry this radiator
    /// topology guarantees (`S12 = S13`, `S22 = S33`, `S23 = S32`).
    pub fn mirror_asymmetry(&self) -> f64 {
        let s = &self.s;
        [
            (s[(0, 1)] - s[(0, 2)]).norm(),
            (s[(1, 0)] - s[(2, 0)]).norm(),
            (s[(1, 1)] - s[(2, 2)]).norm(),
            (s[(1, 2)] - s[(2, 1)]).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Converts to the impedance representation, `Z = z0·(I + S)·(I − S)⁻¹`.
    pub fn to_impedance(&self) -> Result<ImpedanceMatrix3, NetworkError> {
        let i = Matrix3::identity();
        // (I + S)(I - S)^{-1}: right-divide by (I - S).
        let z = solve_right3(&(i + self.s), &(i - self.s), "impedance conversion (I - S)")?;
        Ok(ImpedanceMatrix3 {
            z: z * C64::new(self.z0, 0.0),
            z0: self.z0,
        })
    }

    /// Folds series resistances at the two passive ports into the matrix:
    /// `S' = (Z + diag(0, r1, r2) − z0·I)(Z + diag(0, r1, r2) + z0·I)⁻¹`.
    ///
    /// This is how lossy tuning elements are absorbed so that the load
    /// synthesis can keep assuming purely reactive terminations.
    pub fn amend_with_losses(&self, r1: f64, r2: f64) -> Result<ScatteringMatrix3, NetworkError> {
        for r in [r1, r2] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(NetworkError::InvalidLoadResistance(r));
            }
        }
        let mut zi = self.to_impedance()?;
        zi.z[(1, 1)] += C64::new(r1, 0.0);
        zi.z[(2, 2)] += C64::new(r2, 0.0);
        zi.to_scattering()
    }

    /// Reflection coefficient looking into the active port with the passive
    /// ports terminated by `loads`:
    /// `Γ_tot = S00 + S0p·Γ_L·(I − S_pp·Γ_L)⁻¹·S_p0`
    /// where `Γ_L` is the diagonal of the load reflection coefficients.
    ///
    /// For loads synthesized by the schedule builder (lossless case) the
    /// result is independent of both the modulation state and the free
    /// parameter; tests pin that invariance.
    pub fn input_reflection(&self, loads: &[LoadTermination; 2]) -> Result<C64, NetworkError> {
        let g1 = loads[0].reflection(self.z0)?;
        let g2 = loads[1].reflection(self.z0)?;
        let gl = Matrix2::new(g1, C64::new(0.0, 0.0), C64::new(0.0, 0.0), g2);
        let s = &self.s;
        let spp = Matrix2::new(s[(1, 1)], s[(1, 2)], s[(2, 1)], s[(2, 2)]);
        let s0p = RowVector2::new(s[(0, 1)], s[(0, 2)]);
        let sp0 = Vector2::new(s[(1, 0)], s[(2, 0)]);
        let a = Matrix2::identity() - spp * gl;
        let sv = a.singular_values();
        let cond = if sv.min() <= 0.0 {
            f64::INFINITY
        } else {
            sv.max() / sv.min()
        };
        if !(cond < CONDITION_LIMIT) {
            return Err(NetworkError::IllConditioned {
                context: "terminated-port resolvent (I - S_pp·Γ_L)",
                cond,
                limit: CONDITION_LIMIT,
            });
        }
        let inv = a.try_inverse().ok_or(NetworkError::IllConditioned {
            context: "terminated-port resolvent (I - S_pp·Γ_L)",
            cond: f64::INFINITY,
            limit: CONDITION_LIMIT,
        })?;
        Ok(s[(0, 0)] + (s0p * gl * inv * sp0)[(0, 0)])
    }
}

impl ImpedanceMatrix3 {
    pub fn new(z: Matrix3<C64>, z0: f64) -> Result<Self, NetworkError> {
        check_z0(z0)?;
        check_finite3(&z)?;
        Ok(Self { z, z0 })
    }

    /// Converts back to scattering form, `S = (Z − z0·I)(Z + z0·I)⁻¹`.
    pub fn to_scattering(&self) -> Result<ScatteringMatrix3, NetworkError> {
        let zi = Matrix3::identity() * C64::new(self.z0, 0.0);
        let s = solve_right3(&(self.z - zi), &(self.z + zi), "scattering conversion (Z + z0·I)")?;
        Ok(ScatteringMatrix3 { s, z0: self.z0 })
    }
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// On-disk representation of a scattering matrix: complex entries are
/// `[re, im]` pairs, row-major.
#[derive(Debug, Serialize, Deserialize)]
struct ScatteringMatrixFile {
    schema_version: u32,
    z0: f64,
    s: [[[f64; 2]; 3]; 3],
}

impl ScatteringMatrix3 {
    pub fn to_json(&self) -> String {
        let mut s = [[[0.0; 2]; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                s[r][c] = [self.s[(r, c)].re, self.s[(r, c)].im];
            }
        }
        let file = ScatteringMatrixFile {
            schema_version: 1,
            z0: self.z0,
            s,
        };
        serde_json::to_string_pretty(&file).expect("scattering matrix serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: ScatteringMatrixFile =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        let mut m = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = C64::new(file.s[r][c][0], file.s[r][c][1]);
            }
        }
        ScatteringMatrix3::new(m, file.z0)
    }
}

/// The reference radiator used across tests and bundled fixtures: a planar
/// folded-slot three-port prototype at 2.45 GHz, 50 Ω reference.
pub fn reference_radiator() -> ScatteringMatrix3 {
    let c = C64::new;
    let s = Matrix3::new(
        c(-0.23, -0.32),
        c(0.26, 0.43),
        c(0.26, 0.43),
        c(0.26, 0.43),
        c(0.16, 0.49),
        c(-0.19, -0.11),
        c(0.26, 0.43),
        c(-0.19, -0.11),
        c(0.16, 0.49),
    );
    ScatteringMatrix3 { s, z0: 50.0 }
}
