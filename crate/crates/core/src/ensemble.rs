//! Remainder maps and the two-time martingale weight for a coupled pair of
//! chordal evolutions grown from opposite ends of an interval.
//!
//! Side `j` of an [`EnsemblePair`] carries a discrete Loewner map `comp_j`
//! and its trace.  The *remainder map* of side `j` at grid times
//! `(i_self, i_other)` is obtained by pushing the other side's trace through
//! `comp_j` and re-encoding the image curve with the zipper; it removes the
//! image of the opposite hull from side `j`'s half-plane picture.  Boundary
//! jets of the remainder maps at the driving points,
//!
//! ```text
//!     A_{j,h} = d^h/dz^h  W_j(xi_j),   h = 0..3,
//! ```
//!
//! feed every derived quantity: the image gap `E = A_{2,0} - A_{1,0}`, the
//! interaction density `N = A_{1,1} A_{2,1} / E^2`, the interaction integral
//! `I` (the double integral of `2 N^2` over the elapsed rectangle, reduced
//! to a 1-D quadrature through a jet identity), and the two-time weight
//!
//! ```text
//!     M(t1,t2) = [ N(t1,t2) N(0,0) / (N(t1,0) N(0,t2)) ]^alpha * exp(-lambda I),
//!     alpha  = (6 - kappa) / (2 kappa),
//!     lambda = (8 - 3 kappa)(6 - kappa) / (2 kappa).
//! ```
//!
//! Axis values `M(t,0)` and `M(0,t)` are exactly one by construction here:
//! the same discrete route computes the numerator and denominator factors,
//! which then cancel identically.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_complex::Complex;

use crate::conformal::{Jet3, MapComposition};
use crate::error::{Error, Result};
use crate::loewner::{extract_driving, trace, Trace};
use crate::scalar::Scalar;
use crate::sde::PairDriver;

/// Default number of trapezoid intervals for the interaction integral.
pub const DEFAULT_N_QUAD: usize = 12;

/// Relative factor for the default near-collision guard on `E`.
pub const DEFAULT_EPS_E_REL: f64 = 1e-3;

/// Relative factor for the default trace-disjointness threshold.
pub const DEFAULT_DISJOINT_TOL_REL: f64 = 1e-9;

/// Label for the two sides of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn idx(self) -> usize {
        match self {
            Side::One => 0,
            Side::Two => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::One => Side::Two,
            Side::Two => Side::One,
        }
    }
}

/// Boundary jets of both remainder maps at the driving points, plus the gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AValues<F> {
    /// `side[0]` holds `A_{1,0..3}`, `side[1]` holds `A_{2,0..3}`.
    pub side: [Jet3<F>; 2],
    /// Image gap `E = A_{2,0} - A_{1,0}`.
    pub e: F,
}

impl<F: Scalar> AValues<F> {
    pub fn a(&self, side: Side, order: usize) -> F {
        let j = self.side[side.idx()];
        match order {
            0 => j.f,
            1 => j.f1,
            2 => j.f2,
            3 => j.f3,
            _ => panic!("jet order out of range"),
        }
    }
}

/// Interaction density `N = A_{1,1} A_{2,1} / E^2`.
pub fn compute_n<F: Scalar>(a: &AValues<F>) -> F {
    a.side[0].f1 * a.side[1].f1 / (a.e * a.e)
}

/// Exponents of the weight at a given `kappa`.
pub fn weight_exponents<F: Scalar>(kappa: F) -> (F, F) {
    let two_k = F::real(2.0) * kappa;
    let alpha = (F::real(6.0) - kappa) / two_k;
    let lambda = (F::real(8.0) - F::real(3.0) * kappa) * (F::real(6.0) - kappa) / two_k;
    (alpha, lambda)
}

/// Tuning knobs for weight records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordParams<F> {
    /// Trapezoid intervals for the interaction integral.
    pub n_quad: usize,
    /// Near-collision guard: records with `E < eps_e` are flagged invalid.
    pub eps_e: F,
}

impl<F: Scalar> RecordParams<F> {
    pub fn standard(x1: F, x2: F) -> Self {
        Self {
            n_quad: DEFAULT_N_QUAD,
            eps_e: F::real(DEFAULT_EPS_E_REL) * (x2 - x1),
        }
    }
}

/// One evaluation of the two-time weight and everything that went into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleRecord<F> {
    pub i1: usize,
    pub i2: usize,
    pub t1: F,
    pub t2: F,
    pub a: AValues<F>,
    pub n: F,
    /// Axis factors entering the ratio.
    pub n00: F,
    pub n10: F,
    pub n01: F,
    pub integral: F,
    pub alpha: F,
    pub lambda: F,
    pub m: F,
    pub valid: bool,
    /// Set when halving the quadrature grid moved the integral by > 1%.
    pub quad_warning: bool,
}

/// Outcome of the interaction-integral quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimate<F> {
    pub value: F,
    pub coarse_value: F,
    pub warning: bool,
}

/// Residuals of the two frozen-point time-derivative identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstVariationResiduals<F> {
    /// `d/dt W(w)` against `-3 A_{j,2}`.
    pub value_residual: F,
    /// `d/dt W'(w)` against `A_{j,1} [ (A_{j,2}/A_{j,1})^2 / 2 - (4/3) A_{j,3}/A_{j,1} ]`.
    pub slope_residual: F,
}

/// Capacity clock and mapped driving value of one side's remainder family
/// along a sub-grid of its own time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedChain<F> {
    pub indices: Vec<usize>,
    /// Capacity clock of the time-changed chain: half the capacity of the
    /// image of this side's own hull in the reduced picture,
    /// `v(i) = t_i + [hcap(W(i)) - hcap(W(0))] / 2` by capacity additivity.
    pub v: Vec<F>,
    /// Mapped driving value `eta(i) = W_j(xi_j(i))`.
    pub eta: Vec<F>,
}

type CacheKey = (u8, u32, u32);

/// Two coupled discrete evolutions with cached remainder maps.
#[derive(Debug)]
pub struct EnsemblePair<F> {
    pub kappa: F,
    pub x: [F; 2],
    pub dt: F,
    xi: [Vec<F>; 2],
    p: [Vec<F>; 2],
    comps: [MapComposition<F>; 2],
    traces: [Trace<F>; 2],
    cache: RefCell<HashMap<CacheKey, Rc<MapComposition<F>>>>,
}

impl<F: Scalar> EnsemblePair<F> {
    /// Assemble the pair from a driver, truncated at the per-side horizon
    /// indices, and verify that the two traces stay disjoint.
    pub fn from_driver(
        driver: &PairDriver<F>,
        horizon: [usize; 2],
        disjoint_tol: Option<F>,
    ) -> Result<Self> {
        let span = driver.x[1] - driver.x[0];
        let tol = disjoint_tol.unwrap_or_else(|| F::real(DEFAULT_DISJOINT_TOL_REL) * span);
        let mut xi = [Vec::new(), Vec::new()];
        let mut p = [Vec::new(), Vec::new()];
        let mut comps = [MapComposition::empty(), MapComposition::empty()];
        let mut traces = [
            Trace {
                times: Vec::new(),
                points: Vec::new(),
            },
            Trace {
                times: Vec::new(),
                points: Vec::new(),
            },
        ];
        for j in 0..2 {
            let chain = &driver.sides[j];
            if horizon[j] > chain.horizon() {
                return Err(Error::InvalidParameter(format!(
                    "horizon index {} beyond driver horizon {} on side {}",
                    horizon[j],
                    chain.horizon(),
                    j + 1
                )));
            }
            let path = chain.driving_path().truncated(horizon[j]);
            xi[j] = path.values().to_vec();
            p[j] = chain.p[..=horizon[j]].to_vec();
            comps[j] = crate::loewner::evolve(&path);
            traces[j] = trace(&path)?;
        }
        check_disjoint(&traces[0], &traces[1], tol)?;
        Ok(Self {
            kappa: driver.kappa,
            x: driver.x,
            dt: driver.dt,
            xi,
            p,
            comps,
            traces,
            cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn horizon(&self, side: Side) -> usize {
        self.xi[side.idx()].len() - 1
    }

    pub fn xi(&self, side: Side, i: usize) -> F {
        self.xi[side.idx()][i]
    }

    /// Driver-tracked image of the opposite endpoint.
    pub fn p(&self, side: Side, i: usize) -> F {
        self.p[side.idx()][i]
    }

    pub fn trace_of(&self, side: Side) -> &Trace<F> {
        &self.traces[side.idx()]
    }

    pub fn comp(&self, side: Side) -> &MapComposition<F> {
        &self.comps[side.idx()]
    }

    pub fn time(&self, i: usize) -> F {
        F::from_usize(i).unwrap() * self.dt
    }

    /// Remainder map of `side` at its own grid index `i_self`, with the
    /// opposite side grown to `i_other`: push the other trace through this
    /// side's map prefix and re-encode the image curve.  Results are cached.
    pub fn remainder_map(
        &self,
        side: Side,
        i_self: usize,
        i_other: usize,
    ) -> Result<Rc<MapComposition<F>>> {
        let key: CacheKey = (side.idx() as u8, i_self as u32, i_other as u32);
        if let Some(found) = self.cache.borrow().get(&key) {
            return Ok(found.clone());
        }
        let built = Rc::new(self.build_remainder(side, i_self, i_other)?);
        self.cache
            .borrow_mut()
            .insert(key, built.clone());
        Ok(built)
    }

    fn build_remainder(
        &self,
        side: Side,
        i_self: usize,
        i_other: usize,
    ) -> Result<MapComposition<F>> {
        if i_self > self.horizon(side) || i_other > self.horizon(side.other()) {
            return Err(Error::InvalidParameter(format!(
                "remainder indices ({i_self}, {i_other}) beyond horizons"
            )));
        }
        if i_other == 0 {
            return Ok(MapComposition::empty());
        }
        let comp = &self.comps[side.idx()];
        let other = &self.traces[side.other().idx()];
        let mut image = Vec::with_capacity(i_other + 1);
        for m in 0..=i_other {
            image.push(comp.prefix_apply(i_self, other.points[m])?);
        }
        let (_, rezipped) = extract_driving(&image)?;
        Ok(rezipped)
    }

    /// Jets of one side's remainder map at its own driving point.
    pub fn side_jets(&self, side: Side, i_self: usize, i_other: usize) -> Result<Jet3<F>> {
        let w = self.remainder_map(side, i_self, i_other)?;
        w.jet(self.xi(side, i_self))
    }

    /// Boundary jets of both remainder maps at `(i1, i2)`.
    pub fn compute_a(&self, i1: usize, i2: usize) -> Result<AValues<F>> {
        let j1 = self.side_jets(Side::One, i1, i2)?;
        let j2 = self.side_jets(Side::Two, i2, i1)?;
        if !(j2.f > j1.f) {
            return Err(Error::Invariant(format!(
                "image gap must be positive, got A10={} >= A20={}",
                j1.f, j2.f
            )));
        }
        if !(j1.f1 > F::zero()) || !(j2.f1 > F::zero()) {
            return Err(Error::Invariant(
                "boundary derivatives of remainder maps must be positive".into(),
            ));
        }
        Ok(AValues {
            side: [j1, j2],
            e: j2.f - j1.f,
        })
    }

    /// Interaction density at a grid pair.
    pub fn n_at(&self, i1: usize, i2: usize) -> Result<F> {
        Ok(compute_n(&self.compute_a(i1, i2)?))
    }

    /// Jet-identity integrand `g(s1; t2)`: the value of the inner integral
    /// `int_0^{t2} 2 N(s1, s2)^2 ds2` expressed through side-1 jets.
    fn inner_integral_value(&self, i1: usize, i2: usize) -> Result<F> {
        let j = self.side_jets(Side::One, i1, i2)?;
        let r2 = j.f2 / j.f1;
        let r3 = j.f3 / j.f1;
        Ok(F::real(0.25) * r2 * r2 - r3 / F::real(6.0))
    }

    /// Interaction integral `I(t1, t2)` by 1-D trapezoid over the jet
    /// identity, with a half-resolution consistency probe.
    pub fn integral_i(&self, i1: usize, i2: usize, n_quad: usize) -> Result<IntegralEstimate<F>> {
        if i1 == 0 || i2 == 0 {
            return Ok(IntegralEstimate {
                value: F::zero(),
                coarse_value: F::zero(),
                warning: false,
            });
        }
        let nodes = grid_nodes(i1, n_quad.max(2));
        let mut values = Vec::with_capacity(nodes.len());
        for &s in &nodes {
            values.push(self.inner_integral_value(s, i2)?);
        }
        let value = trapezoid(&nodes, &values, self.dt);
        let coarse_nodes: Vec<usize> = halved(&nodes);
        let coarse_vals: Vec<F> = coarse_nodes
            .iter()
            .map(|s| values[nodes.iter().position(|n| n == s).unwrap()])
            .collect();
        let coarse_value = trapezoid(&coarse_nodes, &coarse_vals, self.dt);
        let scale = value.abs().max(F::real(1e-12));
        let warning = (value - coarse_value).abs() > F::real(0.01) * scale;
        Ok(IntegralEstimate {
            value,
            coarse_value,
            warning,
        })
    }

    /// Brute-force 2-D trapezoid of `2 N^2` over `[0, t1] x [0, t2]` on an
    /// `m x m` interval grid; the independent cross-check route.
    pub fn integral_i_2d(&self, i1: usize, i2: usize, m: usize) -> Result<F> {
        if i1 == 0 || i2 == 0 {
            return Ok(F::zero());
        }
        let g1 = grid_nodes(i1, m.max(2));
        let g2 = grid_nodes(i2, m.max(2));
        let w1 = trapezoid_weights(&g1, self.dt);
        let w2 = trapezoid_weights(&g2, self.dt);
        let mut acc = F::zero();
        for (a, &s1) in g1.iter().enumerate() {
            for (b, &s2) in g2.iter().enumerate() {
                let n = self.n_at(s1, s2)?;
                acc += w1[a] * w2[b] * F::real(2.0) * n * n;
            }
        }
        Ok(acc)
    }

    /// Full weight record at a grid pair.
    pub fn compute_m(
        &self,
        i1: usize,
        i2: usize,
        params: &RecordParams<F>,
    ) -> Result<MartingaleRecord<F>> {
        let (alpha, lambda) = weight_exponents(self.kappa);
        let t1 = self.time(i1);
        let t2 = self.time(i2);
        let a = self.compute_a(i1, i2)?;
        let n = compute_n(&a);
        let n00 = compute_n(&self.compute_a(0, 0)?);
        let n10 = compute_n(&self.compute_a(i1, 0)?);
        let n01 = compute_n(&self.compute_a(0, i2)?);
        let mut rec = MartingaleRecord {
            i1,
            i2,
            t1,
            t2,
            a,
            n,
            n00,
            n10,
            n01,
            integral: F::zero(),
            alpha,
            lambda,
            m: F::nan(),
            valid: false,
            quad_warning: false,
        };
        if a.e < params.eps_e {
            return Ok(rec);
        }
        let ratio = (n * n00) / (n10 * n01);
        if !ratio.is_finite() || ratio <= F::zero() {
            return Ok(rec);
        }
        if lambda != F::zero() {
            let est = self.integral_i(i1, i2, params.n_quad)?;
            rec.integral = est.value;
            rec.quad_warning = est.warning;
        }
        let m = ratio.powf(alpha) * (-lambda * rec.integral).exp();
        if !m.is_finite() || m <= F::zero() {
            return Ok(rec);
        }
        rec.m = m;
        rec.valid = true;
        Ok(rec)
    }

    /// Residual of the commutation identity at an off-hull point `z`: grow
    /// side 1 first and remove side 2's image, or the other way round; both
    /// composites must agree.
    pub fn commutation_residual(&self, i1: usize, i2: usize, z: Complex<F>) -> Result<F> {
        let lhs = {
            let w = self.comps[0].prefix_apply(i1, z)?;
            self.remainder_map(Side::One, i1, i2)?.apply(w)?
        };
        let rhs = {
            let w = self.comps[1].prefix_apply(i2, z)?;
            self.remainder_map(Side::Two, i2, i1)?.apply(w)?
        };
        Ok((lhs - rhs).norm())
    }

    /// Frozen-point finite-difference checks of the two time-derivative
    /// identities, differencing `delta_steps` grid steps on `side`'s own
    /// time axis.
    pub fn first_variation_check(
        &self,
        side: Side,
        i_self: usize,
        i_other: usize,
        delta_steps: usize,
    ) -> Result<FirstVariationResiduals<F>> {
        if delta_steps == 0 || i_self < delta_steps
            || i_self + delta_steps > self.horizon(side)
        {
            return Err(Error::InvalidParameter(format!(
                "cannot difference {delta_steps} steps around index {i_self}"
            )));
        }
        let w = self.xi(side, i_self);
        let center = self.side_jets(side, i_self, i_other)?;
        let minus = self.remainder_map(side, i_self - delta_steps, i_other)?.jet(w)?;
        let plus = self.remainder_map(side, i_self + delta_steps, i_other)?.jet(w)?;
        let span = F::real(2.0) * F::from_usize(delta_steps).unwrap() * self.dt;
        let fd_value = (plus.f - minus.f) / span;
        let fd_slope = (plus.f1 - minus.f1) / span;
        let rhs_value = -F::real(3.0) * center.f2;
        let r2 = center.f2 / center.f1;
        let r3 = center.f3 / center.f1;
        let rhs_slope = center.f1 * (F::real(0.5) * r2 * r2 - F::real(4.0) / F::real(3.0) * r3);
        let guard = F::real(1e-10);
        Ok(FirstVariationResiduals {
            value_residual: (fd_value - rhs_value).abs() / rhs_value.abs().max(guard),
            slope_residual: (fd_slope - rhs_slope).abs() / rhs_slope.abs().max(guard),
        })
    }

    /// Capacity clock and mapped driving value of one side's remainder
    /// family along `indices` of its own time axis.
    pub fn time_change(
        &self,
        side: Side,
        i_other: usize,
        indices: &[usize],
    ) -> Result<TimeChangedChain<F>> {
        let base_hcap = self.remainder_map(side, 0, i_other)?.hcap();
        let mut v = Vec::with_capacity(indices.len());
        let mut eta = Vec::with_capacity(indices.len());
        for &i in indices {
            let w = self.remainder_map(side, i, i_other)?;
            // capacity of the image of this side's own hull: total capacity
            // of (own hull + image of the other hull) minus the other hull's
            v.push(self.time(i) + (w.hcap() - base_hcap) / F::real(2.0));
            eta.push(w.jet(self.xi(side, i))?.f);
        }
        Ok(TimeChangedChain {
            indices: indices.to_vec(),
            v,
            eta,
        })
    }
}

fn check_disjoint<F: Scalar>(a: &Trace<F>, b: &Trace<F>, tol: F) -> Result<()> {
    // bounding-box prefilter
    let bounds = |t: &Trace<F>| {
        let mut lo = Complex::new(F::infinity(), F::infinity());
        let mut hi = Complex::new(F::neg_infinity(), F::neg_infinity());
        for p in &t.points {
            lo.re = lo.re.min(p.re);
            lo.im = lo.im.min(p.im);
            hi.re = hi.re.max(p.re);
            hi.im = hi.im.max(p.im);
        }
        (lo, hi)
    };
    let (alo, ahi) = bounds(a);
    let (blo, bhi) = bounds(b);
    let gap_re = (blo.re - ahi.re).max(alo.re - bhi.re);
    let gap_im = (blo.im - ahi.im).max(alo.im - bhi.im);
    if gap_re > tol || gap_im > tol {
        return Ok(());
    }
    for p in &a.points {
        for q in &b.points {
            if (p - q).norm() <= tol {
                return Err(Error::Invariant(format!(
                    "traces collide: |{p} - {q}| <= {tol:e}"
                )));
            }
        }
    }
    Ok(())
}

/// `count`-interval index grid over `[0, last]`, deduplicated, including
/// both endpoints.
fn grid_nodes(last: usize, count: usize) -> Vec<usize> {
    let count = count.min(last);
    let mut nodes: Vec<usize> = (0..=count)
        .map(|k| ((k as f64 / count as f64) * last as f64).round() as usize)
        .collect();
    nodes.dedup();
    nodes
}

/// Every other node, endpoints kept.
fn halved(nodes: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = nodes.iter().cloned().step_by(2).collect();
    if *out.last().unwrap() != *nodes.last().unwrap() {
        out.push(*nodes.last().unwrap());
    }
    out
}

fn trapezoid<F: Scalar>(nodes: &[usize], values: &[F], dt: F) -> F {
    let mut acc = F::zero();
    for k in 0..nodes.len() - 1 {
        let h = F::from_usize(nodes[k + 1] - nodes[k]).unwrap() * dt;
        acc += h * (values[k] + values[k + 1]) / F::real(2.0);
    }
    acc
}

fn trapezoid_weights<F: Scalar>(nodes: &[usize], dt: F) -> Vec<F> {
    let mut w = vec![F::zero(); nodes.len()];
    for k in 0..nodes.len() - 1 {
        let h = F::from_usize(nodes[k + 1] - nodes[k]).unwrap() * dt;
        w[k] += h / F::real(2.0);
        w[k + 1] += h / F::real(2.0);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{build_pair_driver, Noise, RngSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn standard_pair(seed: u64, noise: Noise, n: usize) -> EnsemblePair<f64> {
        let driver = build_pair_driver(
            8.0 / 3.0,
            0.0,
            1.0,
            2e-4,
            n,
            1e-3,
            RngSpec::new(seed, 0),
            noise,
        )
        .unwrap();
        let h = driver.sides[0].horizon().min(driver.sides[1].horizon()).min(n);
        EnsemblePair::from_driver(&driver, [h, h], None).unwrap()
    }

    #[test]
    fn zero_time_values_are_exact() {
        let pair = standard_pair(3, Noise::Gaussian, 150);
        let a = pair.compute_a(0, 0).unwrap();
        assert_eq!(a.e, 1.0);
        assert_eq!(compute_n(&a), 1.0);
        assert_eq!(a.side[0].f1, 1.0);
        assert_eq!(a.side[1].f2, 0.0);
        let params = RecordParams::standard(0.0, 1.0);
        let rec = pair.compute_m(0, 0, &params).unwrap();
        assert!(rec.valid);
        assert_eq!(rec.m, 1.0);
    }

    #[test]
    fn axis_records_are_exactly_one() {
        let pair = standard_pair(5, Noise::Gaussian, 150);
        let params = RecordParams::standard(0.0, 1.0);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let r1 = pair.compute_m(h, 0, &params).unwrap();
        assert!(r1.valid);
        assert_eq!(r1.m, 1.0);
        assert_eq!(r1.integral, 0.0);
        let r2 = pair.compute_m(0, h, &params).unwrap();
        assert!(r2.valid);
        assert_eq!(r2.m, 1.0);
    }

    #[test]
    fn interior_record_is_finite_positive_and_order_one() {
        let pair = standard_pair(11, Noise::Gaussian, 150);
        let params = RecordParams::standard(0.0, 1.0);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let rec = pair.compute_m(h, h, &params).unwrap();
        assert!(rec.valid, "interior record should be valid");
        assert!(rec.m > 0.0 && rec.m.is_finite());
        assert!(rec.m > 0.2 && rec.m < 5.0, "weight badly scaled: {}", rec.m);
        assert!(rec.a.e > 0.0 && rec.a.e < 1.0);
        assert!(rec.n > 1.0, "interaction density should exceed its t=0 value");
    }

    #[test]
    fn jets_match_finite_differences_of_the_remainder_map() {
        let pair = standard_pair(17, Noise::Gaussian, 120);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let jets = pair.side_jets(Side::One, h, h).unwrap();
        let map = pair.remainder_map(Side::One, h, h).unwrap();
        let x = pair.xi(Side::One, h);
        let ev = |y: f64| map.apply(num_complex::Complex::new(y, 0.0)).unwrap().re;
        // first order at the small spec step, higher orders Richardson
        let e = pair.compute_a(h, h).unwrap().e;
        let h1 = 1e-4 * e;
        let d1 = (ev(x + h1) - ev(x - h1)) / (2.0 * h1);
        assert_relative_eq!(jets.f1, d1, max_relative = 1e-4);
        let second = |hh: f64| (ev(x + hh) - 2.0 * ev(x) + ev(x - hh)) / (hh * hh);
        let third = |hh: f64| {
            (ev(x + 2.0 * hh) - 2.0 * ev(x + hh) + 2.0 * ev(x - hh) - ev(x - 2.0 * hh))
                / (2.0 * hh * hh * hh)
        };
        let h2 = 2e-2 * e;
        let d2 = (4.0 * second(h2 / 2.0) - second(h2)) / 3.0;
        let d3 = (4.0 * third(h2 / 2.0) - third(h2)) / 3.0;
        assert_relative_eq!(jets.f2, d2, max_relative = 1e-4);
        assert_relative_eq!(jets.f3, d3, max_relative = 1e-4);
    }

    #[test]
    fn one_sided_density_matches_its_closed_form() {
        // With side 2 at time zero, N(t1, 0) has the closed form
        // phi_1'(t1, x2) / (p1(t1) - xi1(t1))^2 in terms of side 1's own map
        // and the driver-tracked image of x2.
        let pair = standard_pair(41, Noise::Gaussian, 120);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let n_route = pair.n_at(h, 0).unwrap();
        let jet = pair.comp(Side::One).prefix_jet(h, pair.x[1]).unwrap();
        let gap = pair.p(Side::One, h) - pair.xi(Side::One, h);
        let closed = jet.f1 / (gap * gap);
        assert_relative_eq!(n_route, closed, max_relative = 0.02);
    }

    #[test]
    fn opposite_axis_value_tracks_the_driver_image_point() {
        // A_{2,0}(t1, 0) is phi_1(t1, x2), which the driver tracks as p1.
        let pair = standard_pair(43, Noise::Gaussian, 120);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let a = pair.compute_a(h, 0).unwrap();
        assert_eq!(a.side[0].f, pair.xi(Side::One, h));
        assert_eq!(a.side[0].f1, 1.0);
        // zipper route vs driver route differ by discretization smoothing;
        // judge on the scale of the interval, not of the small displacement
        assert_abs_diff_eq!(a.side[1].f, pair.p(Side::One, h), epsilon = 5e-3);
        // and symmetrically with the roles swapped
        let b = pair.compute_a(0, h).unwrap();
        assert_eq!(b.side[1].f, pair.xi(Side::Two, h));
        assert_abs_diff_eq!(b.side[0].f, pair.p(Side::Two, h), epsilon = 5e-3);
    }

    fn rezip_final_base_error(pair: &EnsemblePair<f64>) -> f64 {
        // Last zipper base of side 2's remainder construction vs the other
        // side's mapped driving value A_{1,0}; equal by the commutation
        // identity applied at the tip of trace 1.
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let comp = pair.comp(Side::Two);
        let other = pair.trace_of(Side::One);
        let image: Vec<num_complex::Complex<f64>> = (0..=h)
            .map(|m| comp.prefix_apply(h, other.points[m]).unwrap())
            .collect();
        let (path, _) = crate::loewner::extract_driving(&image).unwrap();
        let final_base = *path.values().last().unwrap();
        let a10 = pair.side_jets(Side::One, h, h).unwrap().f;
        (final_base - a10).abs()
    }

    #[test]
    fn rezip_final_base_recovers_the_mapped_driving_value() {
        // Smooth (zero-noise) hulls: tip recovery is first-order accurate.
        let smooth = standard_pair(47, Noise::Zero, 100);
        assert!(
            rezip_final_base_error(&smooth) < 1e-3,
            "smooth tip recovery error {}",
            rezip_final_base_error(&smooth)
        );
        // Rough driving: the tip is the least-smoothed point of the zip, so
        // the error scales like the driving increment, sqrt(kappa dt).
        let rough = standard_pair(47, Noise::Gaussian, 100);
        let tol = 3.0 * (8.0 / 3.0 * rough.dt).sqrt();
        let err = rezip_final_base_error(&rough);
        assert!(err < tol, "rough tip recovery error {err} vs {tol}");
    }

    #[test]
    fn capacity_clock_speed_matches_squared_derivative() {
        // d/dt of the image capacity clock v(t) equals A_{j,1}(t)^2.
        let pair = standard_pair(53, Noise::Gaussian, 120);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let indices: Vec<usize> = (0..=h).collect();
        let chain = pair.time_change(Side::One, h, &indices).unwrap();
        assert_eq!(chain.v[0], 0.0);
        for w in chain.v.windows(2) {
            assert!(w[1] >= w[0], "capacity clock must be nondecreasing");
        }
        let delta = 6usize;
        for &i in &[h / 3, h / 2, 2 * h / 3] {
            let dv = (chain.v[i + delta] - chain.v[i - delta])
                / (2.0 * delta as f64 * pair.dt);
            let a1 = pair.side_jets(Side::One, i, h).unwrap().f1;
            assert_relative_eq!(dv, a1 * a1, max_relative = 0.05);
        }
    }

    #[test]
    fn remainder_cache_returns_shared_maps() {
        let pair = standard_pair(23, Noise::Gaussian, 80);
        let a = pair.remainder_map(Side::One, 40, 40).unwrap();
        let b = pair.remainder_map(Side::One, 40, 40).unwrap();
        assert!(Rc::ptr_eq(&a, &b));
        assert!(pair.remainder_map(Side::One, 40, 0).unwrap().is_empty());
    }

    #[test]
    fn zero_noise_pair_is_mirror_symmetric() {
        // with zero noise the construction is symmetric about the midpoint,
        // so the two sides' jets mirror each other
        let pair = standard_pair(1, Noise::Zero, 150);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let a = pair.compute_a(h, h).unwrap();
        assert_relative_eq!(a.side[0].f1, a.side[1].f1, max_relative = 1e-9);
        assert_relative_eq!(
            a.side[0].f - pair.x[0],
            pair.x[1] - a.side[1].f,
            max_relative = 1e-6
        );
        assert_relative_eq!(a.side[0].f2, -a.side[1].f2, max_relative = 1e-6);
    }

    #[test]
    fn integral_routes_agree_on_a_small_case() {
        let pair = standard_pair(29, Noise::Gaussian, 100);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let one_d = pair.integral_i(h, h, 12).unwrap();
        let two_d = pair.integral_i_2d(h, h, 12).unwrap();
        assert!(one_d.value > 0.0);
        assert_relative_eq!(one_d.value, two_d, max_relative = 0.05);
        assert!(!one_d.warning, "quadrature warning on a smooth integrand");
    }

    #[test]
    fn invalid_when_gap_below_guard() {
        let pair = standard_pair(31, Noise::Gaussian, 100);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let params = RecordParams {
            n_quad: 8,
            eps_e: 10.0, // absurdly large guard forces the flag
        };
        let rec = pair.compute_m(h, h, &params).unwrap();
        assert!(!rec.valid);
        assert!(rec.m.is_nan());
    }

    #[test]
    fn grid_helpers_are_well_formed() {
        assert_eq!(grid_nodes(10, 5), vec![0, 2, 4, 6, 8, 10]);
        assert_eq!(grid_nodes(3, 12), vec![0, 1, 2, 3]);
        let nodes = grid_nodes(100, 12);
        assert_eq!(*nodes.first().unwrap(), 0);
        assert_eq!(*nodes.last().unwrap(), 100);
        let h = halved(&nodes);
        assert_eq!(*h.last().unwrap(), 100);
        // trapezoid of a linear function is exact
        let vals: Vec<f64> = nodes.iter().map(|&n| n as f64).collect();
        let exact = 0.5 * 100.0_f64.powi(2) * 1e-3;
        assert_relative_eq!(trapezoid(&nodes, &vals, 1e-3), exact, max_relative = 1e-12);
        let w = trapezoid_weights(&nodes, 1e-3);
        assert_relative_eq!(w.iter().sum::<f64>(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn commutation_residual_is_small_on_zero_noise() {
        let pair = standard_pair(2, Noise::Zero, 150);
        let h = pair.horizon(Side::One).min(pair.horizon(Side::Two));
        let r = pair
            .commutation_residual(h, h, num_complex::Complex::new(0.5, 1.5))
            .unwrap();
        assert!(r < 1e-3, "commutation residual {r}");
    }

    #[test]
    fn horizon_bounds_are_enforced() {
        let pair = standard_pair(3, Noise::Zero, 50);
        let h = pair.horizon(Side::One);
        assert!(pair.remainder_map(Side::One, h + 1, 0).is_err());
        assert!(pair.first_variation_check(Side::One, 0, 10, 5).is_err());
    }
}
