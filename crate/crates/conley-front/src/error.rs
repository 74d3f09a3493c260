use thiserror::Error;

/// Errors reported by the library.
///
/// The variants are grouped by how a caller should react: `Config` means the
/// input description is malformed (fix the data), `Precondition` means an
/// operation was called outside its contract (fix the call), `Numeric` and the
/// solver variants mean a computation failed (refine the discretization or the
/// seeds), and the property variants mean a structural invariant that the
/// theory guarantees was violated numerically (report, do not silently
/// continue).
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model or run description. `key` names the offending field in
    /// config notation, e.g. `grid.n`.
    #[error("invalid configuration at `{key}`: {message}")]
    Config { key: String, message: String },

    /// An operation was invoked outside its stated contract.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Linear algebra or floating-point failure (singular matrix, NaN, ...).
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Newton iteration did not reach the requested tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Homotopy continuation could not pass some coupling value even at the
    /// smallest allowed step.
    #[error("continuation stuck at coupling {last_good:.6} (minimum step {min_step:.6} reached)")]
    ContinuationStuck { last_good: f64, min_step: f64 },

    /// A boundary facet of a candidate block carries both inward and outward
    /// flow, so the set is not an isolating block for the flow.
    #[error("facet {facet} is not uniformly transverse: flow changes sign near {location}")]
    NotIsolatingBlock { facet: usize, location: String },

    /// The flow is numerically tangent to a facet sample.
    #[error("flow tangent to facet {facet} at {location} (|flux| = {flux:.3e})")]
    Tangency {
        facet: usize,
        location: String,
        flux: f64,
    },

    /// The composition of two consecutive boundary maps is nonzero over GF(2).
    #[error("boundary squared is nonzero from degree {degree} (generator {from} -> {to})")]
    BoundaryNotSquaredZero {
        degree: usize,
        from: String,
        to: String,
    },
}

impl Error {
    /// Shorthand for a `Config` error.
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
