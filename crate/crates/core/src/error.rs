use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid too small: box misses the 6-sigma support along axis {axis} (truncated mass bound {mass_bound:.3e})")]
    GridTooSmall { axis: usize, mass_bound: f64 },

    #[error("operation requires a {expected} grid layout")]
    LayoutUnsupported { expected: &'static str },

    /// Phase advance per grid cell exceeds pi; the value would be an alias.
    #[error("aliasing: phase advance {phase_per_cell:.3} rad per cell exceeds pi at |x| = {distance:.3}")]
    Aliasing { distance: f64, phase_per_cell: f64 },

    #[error("under-resolved oscillatory quadrature: {what} ({measured:.3} > {limit:.3})")]
    Resolution {
        what: &'static str,
        measured: f64,
        limit: f64,
    },

    #[error("phase function has no stationary point")]
    NoStationaryPoint,

    #[error("explicit leading-term constant only known for a = 0 (got a = {0})")]
    UnsupportedA(f64),

    #[error("Green kernel is singular at the origin")]
    SingularOrigin,

    #[error("Born iteration does not contract: delta ratio >= 1 for 3 consecutive iterations (last ratio {ratio:.3} at iteration {iteration})")]
    NoContraction { iteration: usize, ratio: f64 },

    #[error("Born iteration stopped after {iterations} iterations with delta {delta:.3e} > tol {tol:.3e}")]
    TolNotReached {
        iterations: usize,
        delta: f64,
        tol: f64,
    },

    #[error("eigen-bank does not match the amplitude grid: {0}")]
    BankMismatch(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
