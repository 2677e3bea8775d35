/// Errors surfaced by constructors and operations across the crate.
///
/// Anything that violates a documented precondition maps to a variant here;
/// internal numerical trouble that can be reported without lying (clamped
/// density evaluations, underflowed derivatives) is instead surfaced through
/// diagnostic fields on the result types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("model too large: {n_spins} spins exceeds the dense-diagonalization limit of {max}")]
    ModelTooLarge { n_spins: usize, max: usize },

    #[error("matrix not Hermitian: max |M - M^H| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid populations: {0}")]
    InvalidPopulations(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("energy window [{lo}, {hi}] contains no eigenvalues")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("target energy {e} lies outside the open range ({lo}, {hi}) spanned by the spectrum")]
    EnergyOutOfRange { e: f64, lo: f64, hi: f64 },

    #[error("need at least {needed} active levels, found {found}")]
    TooFewLevels { needed: usize, found: usize },

    #[error("top eigenvalue pair degenerate: the two largest energies must differ to solve for the dependent populations")]
    DegenerateTopPair,

    #[error("factorized fixed-energy law invalid here: predicted ground population {p1:.6} is negative")]
    FactorizedInvalid { p1: f64 },

    #[error("point outside the feasible set: {0}")]
    OutsideDomain(String),

    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),

    #[error("query {q} outside the tabulated range [{lo}, {hi}]")]
    QueryOutOfRange { q: f64, lo: f64, hi: f64 },

    #[error("invalid state function: {0}")]
    InvalidStateFunction(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
