use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expected {expected} entries for a {dim}x{dim} operator, got {got}")]
    BadLength { dim: usize, expected: usize, got: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("operator is not Hermitian (max |A - A^dag| entry = {max_deviation:.3e})")]
    NotHermitian { max_deviation: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("POVM elements do not sum to identity (HS residual {residual:.3e})")]
    Incomplete { residual: f64 },

    #[error("basis is not orthonormal (max overlap error {max_error:.3e})")]
    NotOrthonormal { max_error: f64 },

    #[error("density operator has trace {trace} (expected 1)")]
    BadTrace { trace: f64 },

    #[error("{what} = {value} is outside the allowed range {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no POVM assigned for party {party}, measurement {measurement}")]
    MissingAssignment { party: usize, measurement: usize },

    #[error("operator is not diagonal in the target basis (off-diagonal magnitude {magnitude:.3e})")]
    NotDiagonal { magnitude: f64 },

    #[error("expectation value has imaginary part {0:.3e}")]
    ComplexExpectation(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value,
            range: format!("[{lo}, {hi}]"),
        })
    }
}
