//! Vertical-slit building blocks for chordal Loewner evolutions.
//!
//! The discrete Loewner step with driving value `xi` and capacity duration
//! `dt` is the map
//!
//! ```text
//!     g(z) = xi + sqrt((z - xi)^2 + 4 dt)
//! ```
//!
//! with the square-root branch chosen so the closed upper half-plane maps to
//! itself.  It removes a vertical slit of height `2 sqrt(dt)` rooted at `xi`
//! and adds `2 dt` of half-plane capacity.  Compositions of such steps
//! approximate arbitrary chordal Loewner maps; everything downstream (traces,
//! zippers, martingale weights) is built from the four primitives here:
//! forward evaluation, inverse evaluation, boundary jets to third order, and
//! capacity bookkeeping.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default relative tolerance for the slit-proximity guard on forward maps.
pub const DEFAULT_PROXIMITY_TOL: f64 = 1e-9;

/// Default tolerance for accepting slightly-below-axis points when inverting
/// (they are snapped back onto the real axis).
pub const DEFAULT_BRANCH_TOL: f64 = 1e-9;

/// One discrete Loewner step: a vertical slit at `xi` of capacity `2 dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitStep<F> {
    pub xi: F,
    pub dt: F,
}

impl<F: Scalar> SlitStep<F> {
    pub fn new(xi: F, dt: F) -> Result<Self> {
        if !xi.is_finite() || !dt.is_finite() || dt <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "slit step needs finite xi and dt > 0, got xi={xi}, dt={dt}"
            )));
        }
        Ok(Self { xi, dt })
    }

    /// Height of the removed slit, `2 sqrt(dt)`.
    pub fn height(&self) -> F {
        F::real(2.0) * self.dt.sqrt()
    }

    /// Half-plane capacity added by this step.
    pub fn hcap(&self) -> F {
        F::real(2.0) * self.dt
    }

    /// Tip of the slit in the preimage plane, `xi + 2 i sqrt(dt)`.
    pub fn tip(&self) -> Complex<F> {
        Complex::new(self.xi, self.height())
    }
}

/// Value and first three derivatives of a map at a real boundary point.
///
/// All jets in this crate are taken at real points off the hull footprint,
/// where slit maps (and their compositions) are real with positive first
/// derivative, so the entries are stored as real scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3<F> {
    pub f: F,
    pub f1: F,
    pub f2: F,
    pub f3: F,
}

impl<F: Scalar> Jet3<F> {
    /// Jet of the identity map at `x`.
    pub fn identity(x: F) -> Self {
        Self {
            f: x,
            f1: F::one(),
            f2: F::zero(),
            f3: F::zero(),
        }
    }

    /// Jet of `g ∘ self` where `outer` is the jet of `g` at `self.f`
    /// (Faa di Bruno through third order).
    pub fn then(&self, outer: &Jet3<F>) -> Self {
        let three = F::real(3.0);
        Self {
            f: outer.f,
            f1: outer.f1 * self.f1,
            f2: outer.f2 * self.f1 * self.f1 + outer.f1 * self.f2,
            f3: outer.f3 * self.f1 * self.f1 * self.f1
                + three * outer.f2 * self.f1 * self.f2
                + outer.f1 * self.f3,
        }
    }
}

/// Square root mapping the plane cut along `[0, +inf)` into the closed upper
/// half-plane: the branch with nonnegative imaginary part.
#[inline]
fn sqrt_upper<F: Scalar>(w: Complex<F>) -> Complex<F> {
    let r = w.sqrt();
    // Principal sqrt has Re >= 0; reflect fourth-quadrant results (including
    // the negative real axis approached from below, im == -0.0) up.
    if r.im < F::zero() || (r.im == F::zero() && r.re < F::zero()) {
        -r
    } else {
        r
    }
}

/// Forward slit map applied to a point of the closed upper half-plane.
///
/// Errors with [`Error::SlitProximity`] if `z` is on (or within `tol`,
/// relatively scaled, of) the removed slit; the slit tip itself is a valid
/// input and maps to `xi`.
pub fn apply_slit<F: Scalar>(step: &SlitStep<F>, z: Complex<F>, tol: F) -> Result<Complex<F>> {
    let u = Complex::new(z.re - step.xi, z.im);
    if u.im < F::zero() {
        return Err(Error::InvalidParameter(format!(
            "apply_slit expects im(z) >= 0, got {z}"
        )));
    }
    let eps = tol * (F::one() + z.norm());
    let height = step.height();
    if u.re.abs() <= eps && u.im < height - eps {
        return Err(Error::SlitProximity {
            what: format!("apply_slit at z={z}"),
            xi: step.xi.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let four_dt = F::real(4.0) * step.dt;
    if u.im == F::zero() {
        // Real points stay real; do the arithmetic in reals so that no signed
        // zero leaks into the branch choice.
        let q = (u.re * u.re + four_dt).sqrt();
        let v = if u.re > F::zero() { q } else { -q };
        return Ok(Complex::new(step.xi + v, F::zero()));
    }
    let w = u * u + Complex::new(four_dt, F::zero());
    Ok(Complex::new(step.xi, F::zero()) + sqrt_upper(w))
}

/// Inverse slit map: sends the upper half-plane back onto the half-plane
/// minus the slit.  Points within `tol` below the real axis are snapped onto
/// it first; anything lower is a branch failure.
pub fn invert_slit<F: Scalar>(step: &SlitStep<F>, w: Complex<F>, tol: F) -> Result<Complex<F>> {
    let mut im = w.im;
    if im < F::zero() {
        let eps = tol * (F::one() + w.norm());
        if im < -eps {
            return Err(Error::BranchFailure {
                im: im.as_f64(),
                tol: tol.as_f64(),
            });
        }
        im = F::zero();
    }
    let u = Complex::new(w.re - step.xi, im);
    let four_dt = F::real(4.0) * step.dt;
    if u.im == F::zero() {
        let disc = u.re * u.re - four_dt;
        if disc >= F::zero() {
            let q = disc.sqrt();
            let v = if u.re > F::zero() { q } else { -q };
            return Ok(Complex::new(step.xi + v, F::zero()));
        }
        // Boundary points between the images of the slit sides pull back onto
        // the slit itself.
        return Ok(Complex::new(step.xi, (-disc).sqrt()));
    }
    let v = u * u - Complex::new(four_dt, F::zero());
    Ok(Complex::new(step.xi, F::zero()) + sqrt_upper(v))
}

/// Jet of the forward slit map at a real point off the slit base.
pub fn slit_jet<F: Scalar>(step: &SlitStep<F>, x: F, tol: F) -> Result<Jet3<F>> {
    let u = x - step.xi;
    let eps = tol * (F::one() + x.abs());
    if u.abs() <= eps {
        return Err(Error::SlitProximity {
            what: format!("slit_jet at x={x}"),
            xi: step.xi.as_f64(),
            tol: tol.as_f64(),
        });
    }
    let four_dt = F::real(4.0) * step.dt;
    let q = (u * u + four_dt).sqrt();
    let s = if u > F::zero() { F::one() } else { -F::one() };
    let q3 = q * q * q;
    Ok(Jet3 {
        f: step.xi + s * q,
        f1: s * u / q,
        f2: s * four_dt / q3,
        f3: -F::real(12.0) * step.dt * (s * u) / (q3 * q * q),
    })
}

/// Forward evaluation through a sequence of slit steps (first step applied
/// first).
pub fn apply_steps<F: Scalar>(steps: &[SlitStep<F>], z: Complex<F>, tol: F) -> Result<Complex<F>> {
    let mut w = z;
    for step in steps {
        w = apply_slit(step, w, tol)?;
    }
    Ok(w)
}

/// Jet of the composition of `steps` at the real point `x`.
pub fn jet_steps<F: Scalar>(steps: &[SlitStep<F>], x: F, tol: F) -> Result<Jet3<F>> {
    let mut jet = Jet3::identity(x);
    for step in steps {
        let outer = slit_jet(step, jet.f, tol)?;
        jet = jet.then(&outer);
    }
    Ok(jet)
}

/// Pull `w` back through the inverses of `steps`, last step first.
pub fn invert_steps<F: Scalar>(steps: &[SlitStep<F>], w: Complex<F>, tol: F) -> Result<Complex<F>> {
    let mut z = w;
    for step in steps.iter().rev() {
        z = invert_slit(step, z, tol)?;
    }
    Ok(z)
}

/// An ordered composition of slit steps, i.e. a discrete chordal Loewner map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapComposition<F> {
    steps: Vec<SlitStep<F>>,
    tol: F,
}

impl<F: Scalar> MapComposition<F> {
    pub fn new(steps: Vec<SlitStep<F>>) -> Self {
        Self {
            steps,
            tol: F::real(DEFAULT_PROXIMITY_TOL),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn with_tol(mut self, tol: F) -> Self {
        self.tol = tol;
        self
    }

    pub fn tol(&self) -> F {
        self.tol
    }

    pub fn steps(&self) -> &[SlitStep<F>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, step: SlitStep<F>) {
        self.steps.push(step);
    }

    /// Total half-plane capacity of the mapped-out hull.
    pub fn hcap(&self) -> F {
        self.steps.iter().map(|s| s.hcap()).sum()
    }

    pub fn apply(&self, z: Complex<F>) -> Result<Complex<F>> {
        apply_steps(&self.steps, z, self.tol)
    }

    pub fn jet(&self, x: F) -> Result<Jet3<F>> {
        jet_steps(&self.steps, x, self.tol)
    }

    pub fn invert(&self, w: Complex<F>) -> Result<Complex<F>> {
        invert_steps(&self.steps, w, self.tol)
    }

    /// Evaluation through the first `n` steps only.
    pub fn prefix_apply(&self, n: usize, z: Complex<F>) -> Result<Complex<F>> {
        apply_steps(&self.steps[..n], z, self.tol)
    }

    pub fn prefix_jet(&self, n: usize, x: F) -> Result<Jet3<F>> {
        jet_steps(&self.steps[..n], x, self.tol)
    }

    pub fn prefix_invert(&self, n: usize, w: Complex<F>) -> Result<Complex<F>> {
        invert_steps(&self.steps[..n], w, self.tol)
    }
}
