//! Error taxonomy for the numerical core.
//!
//! Every failure mode that the experiment harness needs to distinguish gets
//! its own variant; the harness maps `Invariant`/`Numerical` failures to
//! per-sample discards and everything else to hard aborts.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor or routine was handed a parameter outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A conformal map was evaluated on or too close to its slit; the point
    /// distance fell below the proximity tolerance.
    #[error("evaluation point within {tol:e} of slit at xi={xi}: {what}")]
    SlitProximity { what: String, xi: f64, tol: f64 },

    /// An inverse slit map produced a point below the real axis beyond the
    /// branch tolerance, i.e. the requested preimage left the closed upper
    /// half-plane.
    #[error("branch failure inverting slit map: im={im:e} below -{tol:e}")]
    BranchFailure { im: f64, tol: f64 },

    /// The zipper was asked to encode a curve that is not simple in the upper
    /// half-plane (an image point had non-positive height).
    #[error("curve not encodable by vertical slits at point {index}: im={im:e}")]
    NotSimple { index: usize, im: f64 },

    /// A structural invariant of a computed quantity failed (ordering of
    /// boundary images, positivity of derivatives, ...).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Generic numerical degeneracy (division guards, overflow, NaN).
    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    /// Two retained exit rectangles share a coordinate and no strict splice
    /// ordering exists.
    #[error("exit-rectangle tie cannot be ordered: {0}")]
    RectangleTie(String),

    /// Importance weights were too concentrated for the weighted statistic.
    #[error("degenerate weights: effective sample size {n_eff:.1} below {min:.1}")]
    DegenerateWeights { n_eff: f64, min: f64 },
}
