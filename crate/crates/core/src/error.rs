use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator is not Hermitian: max asymmetry {max_asymmetry:e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("register of {qubits} qubits exceeds the simulation limit {limit}")]
    RegisterTooLarge { qubits: usize, limit: usize },

    #[error("state is not normalized: squared norm {0}")]
    Unnormalized(f64),

    #[error("energy {energy} lies outside the phase-map span [{lo}, {hi}]")]
    Aliasing { energy: f64, lo: f64, hi: f64 },

    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("resultant magnitude {0:e} is too small to define a direction")]
    UndefinedDirection(f64),

    #[error("eigenvalue {index} is degenerate (gap {gap:e} hartree) and carries weight")]
    Degenerate { index: usize, gap: f64 },

    #[error("H(x) is not smooth along parameter {direction}: second difference {second_difference:e}")]
    NonSmooth { direction: usize, second_difference: f64 },

    #[error("unsupported element {0}: built-in integrals cover H and He only, import an FCIDUMP instead")]
    UnsupportedElement(String),

    #[error(
        "SCF not converged after {iterations} iterations (commutator {commutator:e}, energy change {energy_change:e})"
    )]
    ScfNotConverged {
        iterations: usize,
        commutator: f64,
        energy_change: f64,
    },

    #[error("FCIDUMP line {line}: {message}")]
    Fcidump { line: usize, message: String },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("input state has maximum eigenstate overlap {0:.3e} (below 0.1)")]
    PoorOverlap(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::UnsupportedElement(_)
                | Error::Fcidump { .. }
                | Error::Geometry(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::DimensionMismatch { .. }
                | Error::TooLarge { .. }
                | Error::RegisterTooLarge { .. }
        )
    }

    /// Short stable tag used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotHermitian { .. } => "not_hermitian",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TooLarge { .. } => "too_large",
            Error::RegisterTooLarge { .. } => "register_too_large",
            Error::Unnormalized(_) => "unnormalized",
            Error::Aliasing { .. } => "aliasing",
            Error::WeightSum(_) => "weight_sum",
            Error::UndefinedDirection(_) => "undefined_direction",
            Error::Degenerate { .. } => "degenerate",
            Error::NonSmooth { .. } => "non_smooth",
            Error::UnsupportedElement(_) => "unsupported_element",
            Error::ScfNotConverged { .. } => "scf_not_converged",
            Error::Fcidump { .. } => "fcidump",
            Error::Geometry(_) => "geometry",
            Error::Quadrature(_) => "quadrature",
            Error::PoorOverlap(_) => "poor_overlap",
            Error::InvalidInput(_) => "invalid_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
