use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A precondition on an argument was violated (bad θ, dimension
    /// mismatch, nonpositive input, ...).
    Usage(String),
    /// The level-set function behaved inconsistently (e.g. no sign change
    /// on a segment whose endpoints straddle the interface).
    Geometry(String),
    /// The discretization cannot be built (e.g. a quadratic stencil has no
    /// back node inside the mesh).
    Assembly(String),
    /// Direct solver hit a (numerically) singular pivot.
    Singular(String),
    /// Iterative solver ran out of iterations; carries the best residual.
    NonConvergence { iterations: usize, residual: f64 },
    /// Requested mode/method is not available for this problem.
    Unsupported(String),
    /// Invalid experiment configuration.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Usage(m) => write!(f, "usage error: {m}"),
            Error::Geometry(m) => write!(f, "geometry inconsistency: {m}"),
            Error::Assembly(m) => write!(f, "assembly error: {m}"),
            Error::Singular(m) => write!(f, "singular system: {m}"),
            Error::NonConvergence { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (best residual {residual:.3e})"
            ),
            Error::Unsupported(m) => write!(f, "unsupported: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
