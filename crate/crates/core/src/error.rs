//! Crate-wide error type.

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A point left the chart or region an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Conformal factor Λ = (t − T*)² − |x|² too close to zero to invert.
    #[error("degenerate conformal chart: |Λ| = {lambda:.3e} below 1e-14 at (t, r) = ({t}, {r})")]
    DegenerateChart { lambda: f64, t: f64, r: f64 },

    /// Inputs whose lengths or truncations must agree did not.
    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    /// A mesh or sampled abscissa that must be strictly increasing is not.
    #[error("monotonicity violation: {0}")]
    Monotonicity(String),

    /// Precondition on an operation's arguments failed (weights, exponents, ranges).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The diamond march exceeded the blow-up guard.
    #[error("blow-up guard tripped at u = {u:.6}: max |ψ| = {max_psi:.3e} exceeds cap {cap:.1e}")]
    BlowUp { u: f64, max_psi: f64, cap: f64 },

    /// An ODE step could not reach its local error target.
    #[error("step failure in transport integrator at v = {v:.6}: local error {err:.3e} > {tol:.1e}")]
    StepFailure { v: f64, err: f64, tol: f64 },

    /// Malformed columnar text input (cone data, checkpoints, scattering data).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
