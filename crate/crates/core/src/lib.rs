//! Numerical core for a chordal Loewner / SLE laboratory.
//!
//! The crate provides, bottom up:
//!
//! * [`conformal`] — vertical-slit maps, their inverses, boundary jets, and
//!   finite compositions (discrete chordal Loewner maps);
//! * [`loewner`] — driving paths, forward evolution, trace computation, the
//!   zipper that recovers a driving path from a curve, and hull exit times;
//! * [`sde`] — seeded noise streams and the Euler scheme for the coupled
//!   driver pair (two SLE(kappa, kappa-6) coordinates grown from opposite
//!   ends of an interval) together with its radial-part process;
//! * [`ensemble`] — the remainder maps obtained by conjugating one trace
//!   through the other side's Loewner map, the boundary jets `A`, the
//!   two-time weight `M`, and the interaction integral entering it;
//! * [`mstar`] — the spliced extension of `M` beyond the product of exit
//!   rectangles;
//! * [`stats`] — weighted and unweighted two-sample Kolmogorov-Smirnov
//!   statistics and small summary helpers.
//!
//! All numerics are generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the `f64` instantiation used by the experiment harness.

pub mod conformal;
pub mod ensemble;
pub mod error;
pub mod loewner;
pub mod mstar;
pub mod scalar;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type used by the experiment harness.
pub type Real = f64;
/// Complex double, re-exported for convenience.
pub type C64 = num_complex::Complex<f64>;

pub type SlitStep64 = conformal::SlitStep<Real>;
pub type Jet64 = conformal::Jet3<Real>;
pub type Map64 = conformal::MapComposition<Real>;
pub type DrivingPath64 = loewner::DrivingPath<Real>;
pub type Trace64 = loewner::Trace<Real>;
pub type HullSpec64 = loewner::HullSpec<Real>;
pub type PairDriver64 = sde::PairDriver<Real>;
pub type EnsemblePair64 = ensemble::EnsemblePair<Real>;
pub type MartingaleRecord64 = ensemble::MartingaleRecord<Real>;
pub type SpliceIndex64 = mstar::SpliceIndex<Real>;
