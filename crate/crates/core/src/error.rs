use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("zero displacement: self-term excluded")]
    ZeroDisplacement,

    #[error("non-finite displacement component")]
    NonFinite,

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid impurity: {0}")]
    InvalidImpurity(String),

    #[error("plaquette ({i}, {j}) out of bounds for a {nx}x{ny} lattice")]
    PlaquetteOutOfBounds { i: usize, j: usize, nx: usize, ny: usize },

    #[error("impurities {0} and {1} coincide")]
    CoincidentImpurities(usize, usize),

    #[error("impurity index {index} out of range ({count} impurities)")]
    ImpurityIndex { index: usize, count: usize },

    #[error("k point ({kx}, {ky}) lies outside the first Brillouin zone")]
    OutsideBrillouinZone { kx: f64, ky: f64 },

    #[error("detuning {delta} sits on a lattice pole (nearest eigenvalue {nearest})")]
    Pole { delta: f64, nearest: Complex64 },

    #[error("dark detuning undefined: impurity dissipative projection vanishes")]
    UndefinedDetuning,

    #[error("unphysical parameters: effective linewidth {0} is negative")]
    Unphysical(f64),

    #[error("non-positive effective linewidth {0}")]
    NonPositiveLinewidth(f64),

    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("approximation invalid: {0}")]
    ApproximationInvalid(String),

    #[error("transfer metrics unavailable: {reason}")]
    MetricsUnavailable {
        reason: String,
        partial: Box<crate::dynamics::PartialMetrics>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl Error {
    /// True for errors caused by a detuning landing on a lattice resonance.
    pub fn is_pole(&self) -> bool {
        matches!(self, Error::Pole { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
