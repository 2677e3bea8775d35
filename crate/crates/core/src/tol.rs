//! Central numerical tolerances.
//!
//! Every magic threshold used by validation and diagnostics lives here, either
//! as a named constant (invariants that are not meant to be tuned) or as a
//! field of [`Tolerances`] (knobs that callers may legitimately override, e.g.
//! from a config file).

/// Hermiticity slack for matrices we construct ourselves.
pub const HERMITICITY: f64 = 1e-12;

/// Hermiticity slack for caller-supplied matrices entering diagonalization.
pub const INPUT_HERMITICITY: f64 = 1e-10;

/// Unit-trace slack for density matrices.
pub const TRACE: f64 = 1e-10;

/// How negative an eigenvalue of a nominally positive matrix may be.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

/// Unit-norm slack for state vectors.
pub const UNIT_NORM: f64 = 1e-12;

/// Population sum slack (sum must equal 1 within this).
pub const POPULATION_SUM: f64 = 1e-12;

/// Max |imaginary part| tolerated where a real number is expected.
pub const IMAG_RESIDUE: f64 = 1e-10;

/// Linear-constraint residual allowed on sampler output.
pub const CONSTRAINT: f64 = 1e-10;

/// Relative energy tolerance for the inverse-temperature bisection.
pub const BISECTION_REL: f64 = 1e-10;

/// Tunable thresholds. [`Tolerances::default`] gives the values used
/// everywhere unless a caller passes its own copy.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Two eigenvalues closer than this (in spectrum units) share a
    /// degeneracy group.
    pub degeneracy: f64,
    /// |sum n_j E_j| below this counts as a resonance hit.
    pub resonance: f64,
    /// sigma_f / Delta_f at or below this passes a typicality check.
    pub typicality: f64,
    /// Max admissible magnitude for an empirical Fourier probe average.
    pub phase_uniformity: f64,
    /// Effective-sample-size floor below which an MCMC run is flagged.
    pub ess_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            degeneracy: 1e-9,
            resonance: 1e-9,
            typicality: 0.05,
            phase_uniformity: 0.05,
            ess_floor: 50.0,
        }
    }
}
