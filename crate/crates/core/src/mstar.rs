//! Spliced extension of the two-time weight beyond the exit rectangles on
//! which it is natively defined.
//!
//! Each stopped sample yields a family of exit rectangles
//! `[0, T1^m] x [0, T2^m]`.  The retained *splice set* is the antichain of
//! maximal rectangles; ordered by increasing first coordinate (hence
//! decreasing second), it tiles the union of rectangles into cells.  Inside
//! a rectangle the extended weight equals the native one; outside it is the
//! alternating product over the staircase corners separating the query from
//! the covered region.  Axis values are fixed at one, and the formula is
//! arranged so sentinel corners only ever contribute axis factors — the
//! native surface is never consulted at an infinite time.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A native two-time weight surface, queried at strictly positive finite
/// times only.
pub trait MartingaleSurface<F> {
    fn m(&self, t1: F, t2: F) -> Result<F>;
}

/// Closure-backed surface for tests and synthetic checks.
pub struct FnSurface<G>(pub G);

impl<F: Scalar, G: Fn(F, F) -> F> MartingaleSurface<F> for FnSurface<G> {
    fn m(&self, t1: F, t2: F) -> Result<F> {
        Ok((self.0)(t1, t2))
    }
}

/// Retained maximal exit rectangles plus sentinel corners.
#[derive(Debug, Clone, PartialEq)]
pub struct SpliceIndex<F> {
    /// The full input family, as given.
    pub exits: Vec<(F, F)>,
    /// Input indices of retained rectangles, by increasing first coordinate.
    pub selected: Vec<usize>,
    /// First coordinates with sentinels: `[0, T1^(1), ..., T1^(L), +inf]`.
    t1s: Vec<F>,
    /// Second coordinates with sentinels: `[+inf, T2^(1), ..., T2^(L), 0]`.
    t2s: Vec<F>,
}

impl<F: Scalar> SpliceIndex<F> {
    /// Number of retained rectangles.
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Corner coordinates including sentinels (`k` in `0 ..= len+1`).
    pub fn corner_t1(&self, k: usize) -> F {
        self.t1s[k]
    }

    pub fn corner_t2(&self, k: usize) -> F {
        self.t2s[k]
    }

    /// Bracket `(k1, k2)` of a query: `k1` is the first corner with
    /// `t1 <= T1^(k1)`, `k2` the last with `t2 <= T2^(k2)`.  Queries inside
    /// the covered union give `k1 <= k2`.
    pub fn locate(&self, t1: F, t2: F) -> Result<(usize, usize)> {
        for (name, t) in [("t1", t1), ("t2", t2)] {
            if t.is_nan() || t < F::zero() {
                return Err(Error::InvalidParameter(format!(
                    "splice query needs {name} >= 0, got {t}"
                )));
            }
        }
        let k1 = (1..self.t1s.len())
            .find(|&k| t1 <= self.t1s[k])
            .expect("infinite sentinel bounds every query");
        let k2 = (0..self.t2s.len() - 1)
            .rev()
            .find(|&k| t2 <= self.t2s[k])
            .expect("infinite sentinel bounds every query");
        Ok((k1, k2))
    }
}

/// Retain the maximal rectangles of a family of exit rectangles.
///
/// Coordinates closer than `tie_tol` (default `1e-12` times the coordinate
/// scale) are treated as equal: fully duplicate rectangles are merged onto
/// the smallest input index, and a rectangle weakly dominated in both
/// coordinates is dropped.
pub fn select_s<F: Scalar>(exits: &[(F, F)], tie_tol: Option<F>) -> Result<SpliceIndex<F>> {
    if exits.is_empty() {
        return Err(Error::InvalidParameter(
            "splice selection needs at least one exit rectangle".into(),
        ));
    }
    let mut scale = F::one();
    for &(a, b) in exits {
        if !a.is_finite() || !b.is_finite() || a <= F::zero() || b <= F::zero() {
            return Err(Error::InvalidParameter(format!(
                "exit rectangles must have finite positive corners, got ({a}, {b})"
            )));
        }
        scale = scale.max(a).max(b);
    }
    let tol = tie_tol.unwrap_or_else(|| F::real(1e-12) * scale);
    let eq = |a: F, b: F| (a - b).abs() <= tol;
    let n = exits.len();
    let mut keep = Vec::new();
    'outer: for m in 0..n {
        let (a1, a2) = exits[m];
        for k in 0..n {
            if k == m {
                continue;
            }
            let (b1, b2) = exits[k];
            let ge1 = b1 > a1 || eq(a1, b1);
            let ge2 = b2 > a2 || eq(a2, b2);
            if ge1 && ge2 {
                let duplicate = eq(a1, b1) && eq(a2, b2);
                if !duplicate || k < m {
                    continue 'outer; // dominated, or a duplicate of an earlier entry
                }
            }
        }
        keep.push(m);
    }
    keep.sort_by(|&a, &b| exits[a].0.partial_cmp(&exits[b].0).unwrap());
    // retained corners must be strictly ordered in both coordinates
    for w in keep.windows(2) {
        let (a1, a2) = exits[w[0]];
        let (b1, b2) = exits[w[1]];
        if eq(a1, b1) || eq(a2, b2) || !(b1 > a1) || !(a2 > b2) {
            return Err(Error::RectangleTie(format!(
                "({a1}, {a2}) vs ({b1}, {b2})"
            )));
        }
    }
    let mut t1s = Vec::with_capacity(keep.len() + 2);
    let mut t2s = Vec::with_capacity(keep.len() + 2);
    t1s.push(F::zero());
    t2s.push(F::infinity());
    for &m in &keep {
        t1s.push(exits[m].0);
        t2s.push(exits[m].1);
    }
    t1s.push(F::infinity());
    t2s.push(F::zero());
    Ok(SpliceIndex {
        exits: exits.to_vec(),
        selected: keep,
        t1s,
        t2s,
    })
}

/// Native weight with the axis extension `M(t, 0) = M(0, t) = 1`.
fn m_or_axis<F: Scalar, S: MartingaleSurface<F>>(surface: &S, t1: F, t2: F) -> Result<F> {
    if t1 == F::zero() || t2 == F::zero() {
        return Ok(F::one());
    }
    if !t1.is_finite() || !t2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "native surface queried at non-finite times ({t1}, {t2})"
        )));
    }
    surface.m(t1, t2)
}

/// Extended weight with an explicitly chosen bracket; exposed so
/// well-definedness on cell boundaries can be probed from tests and suites.
pub fn mstar_eval_with<F: Scalar, S: MartingaleSurface<F>>(
    index: &SpliceIndex<F>,
    surface: &S,
    t1: F,
    t2: F,
    k1: usize,
    k2: usize,
) -> Result<F> {
    if k1 <= k2 {
        return m_or_axis(surface, t1, t2);
    }
    let mut num = m_or_axis(surface, index.t1s[k2], t2)?;
    for k in k2 + 1..k1 {
        num = num * m_or_axis(surface, index.t1s[k], index.t2s[k])?;
    }
    num = num * m_or_axis(surface, t1, index.t2s[k1])?;
    let mut den = F::one();
    for k in k2..k1 {
        den = den * m_or_axis(surface, index.t1s[k], index.t2s[k + 1])?;
    }
    if den == F::zero() || !den.is_finite() {
        return Err(Error::Numerical(format!(
            "splice denominator degenerate: {den}"
        )));
    }
    Ok(num / den)
}

/// Extended weight at `(t1, t2)`; `+inf` saturates an axis.
pub fn mstar_eval<F: Scalar, S: MartingaleSurface<F>>(
    index: &SpliceIndex<F>,
    surface: &S,
    t1: F,
    t2: F,
) -> Result<F> {
    let (k1, k2) = index.locate(t1, t2)?;
    mstar_eval_with(index, surface, t1, t2, k1, k2)
}

/// Terminal value `M*(inf, inf)`: the alternating product over the whole
/// retained staircase.
pub fn mstar_terminal<F: Scalar, S: MartingaleSurface<F>>(
    index: &SpliceIndex<F>,
    surface: &S,
) -> Result<F> {
    mstar_eval(index, surface, F::infinity(), F::infinity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn idx(exits: &[(f64, f64)]) -> SpliceIndex<f64> {
        select_s(exits, None).unwrap()
    }

    /// Exhaustive reference: the unique minimal covering subset is the set
    /// of maximal rectangles.
    fn brute_force_selection(exits: &[(f64, f64)]) -> Vec<usize> {
        let n = exits.len();
        let covers = |s: &Vec<usize>| {
            exits.iter().all(|&(a1, a2)| {
                s.iter()
                    .any(|&k| exits[k].0 >= a1 && exits[k].1 >= a2)
            })
        };
        let mut best: Option<Vec<usize>> = None;
        for mask in 1u32..(1 << n) {
            let s: Vec<usize> = (0..n).filter(|k| mask >> k & 1 == 1).collect();
            if covers(&s) {
                let better = match &best {
                    None => true,
                    Some(b) => s.len() < b.len(),
                };
                if better {
                    best = Some(s);
                }
            }
        }
        let mut s = best.unwrap();
        s.sort_by(|&a, &b| exits[a].0.partial_cmp(&exits[b].0).unwrap());
        s
    }

    #[test]
    fn selection_matches_exhaustive_reference() {
        let families: Vec<Vec<(f64, f64)>> = vec![
            vec![(1.0, 4.0), (2.0, 3.0), (3.0, 1.0)],
            vec![(1.0, 1.0)],
            vec![(2.0, 2.0), (1.0, 1.0)],
            vec![(1.0, 5.0), (2.0, 4.0), (1.5, 4.5), (0.5, 0.5), (2.5, 0.4)],
            vec![(3.0, 3.0), (3.0, 2.0), (2.0, 3.0)],
            vec![(0.1, 0.9), (0.2, 0.8), (0.3, 0.7), (0.25, 0.2), (0.05, 0.95)],
        ];
        for exits in families {
            let got = idx(&exits);
            assert_eq!(
                got.selected,
                brute_force_selection(&exits),
                "family {exits:?}"
            );
        }
    }

    #[test]
    fn duplicates_merge_to_smallest_index() {
        let got = idx(&[(2.0, 3.0), (2.0 + 1e-14, 3.0 - 1e-14), (1.0, 4.0)]);
        assert_eq!(got.selected, vec![2, 0]);
    }

    #[test]
    fn one_coordinate_ties_resolve_by_domination() {
        let got = idx(&[(1.0, 5.0), (1.0, 3.0)]);
        assert_eq!(got.selected, vec![0]);
        let got = idx(&[(1.0, 3.0), (1.0 + 1e-15, 5.0)]);
        assert_eq!(got.selected, vec![1]);
    }

    #[test]
    fn degenerate_rectangles_rejected() {
        assert!(select_s::<f64>(&[], None).is_err());
        assert!(select_s(&[(0.0, 1.0)], None).is_err());
        assert!(select_s(&[(1.0, f64::INFINITY)], None).is_err());
    }

    #[test]
    fn locate_brackets_by_hand() {
        let s = idx(&[(1.0, 4.0), (2.0, 3.0), (3.0, 1.0)]);
        assert_eq!(s.len(), 3);
        // inside rectangle 2
        assert_eq!(s.locate(1.5, 2.0).unwrap(), (2, 2));
        // inside rectangle 1 only
        assert_eq!(s.locate(0.5, 3.5).unwrap(), (1, 1));
        // outside the union
        assert_eq!(s.locate(2.5, 3.5).unwrap(), (3, 1));
        // saturation
        assert_eq!(s.locate(f64::INFINITY, f64::INFINITY).unwrap(), (4, 0));
        assert_eq!(s.locate(10.0, 0.5).unwrap(), (4, 3));
        assert!(s.locate(-1.0, 0.0).is_err());
        assert!(s.locate(f64::NAN, 0.0).is_err());
    }

    fn exp_surface() -> FnSurface<impl Fn(f64, f64) -> f64> {
        FnSurface(|t1: f64, t2: f64| (-t1 * t2).exp())
    }

    #[test]
    fn inside_the_union_equals_the_native_surface() {
        let s = idx(&[(1.0, 4.0), (2.0, 3.0), (3.0, 1.0)]);
        let surf = exp_surface();
        for &(a, b) in &[(0.5, 3.9), (1.9, 2.9), (2.9, 0.9), (1.0, 4.0)] {
            let v = mstar_eval(&s, &surf, a, b).unwrap();
            assert_abs_diff_eq!(v, (-a * b).exp(), epsilon = 1e-15);
        }
    }

    #[test]
    fn axis_values_are_exactly_one() {
        let s = idx(&[(1.0, 4.0), (3.0, 1.0)]);
        let surf = exp_surface();
        for t in [0.0, 0.7, 2.5, 10.0, f64::INFINITY] {
            assert_eq!(mstar_eval(&s, &surf, t, 0.0).unwrap(), 1.0);
            assert_eq!(mstar_eval(&s, &surf, 0.0, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn staircase_product_matches_hand_expansion() {
        let s = idx(&[(1.0, 4.0), (2.0, 3.0), (3.0, 1.0)]);
        let m = |a: f64, b: f64| (-a * b).exp();
        let surf = exp_surface();
        // query beyond rectangle 1 in t1, above rectangle 2 in t2:
        // bracket is k1 = 2, k2 = 1
        let got = mstar_eval(&s, &surf, 1.5, 3.5).unwrap();
        let expect = m(1.0, 3.5) * m(1.5, 3.0) / m(1.0, 3.0);
        assert_relative_eq!(got, expect, max_relative = 1e-14);
        // fully saturated query: the terminal staircase product
        let got = mstar_terminal(&s, &surf).unwrap();
        let expect = m(1.0, 4.0) * m(2.0, 3.0) * m(3.0, 1.0) / (m(1.0, 3.0) * m(2.0, 1.0));
        assert_relative_eq!(got, expect, max_relative = 1e-14);
        // terminal value of a single rectangle is its corner value
        let single = idx(&[(2.0, 5.0)]);
        let got = mstar_terminal(&single, &surf).unwrap();
        assert_relative_eq!(got, m(2.0, 5.0), max_relative = 1e-15);
    }

    #[test]
    fn cell_boundaries_are_consistent_for_any_surface() {
        // On a grid line both admissible brackets give the same value,
        // identically in the surface: the extra staircase factors cancel.
        let s = idx(&[(1.0, 4.0), (2.0, 3.0), (3.0, 1.0)]);
        let weird = FnSurface(|t1: f64, t2: f64| 1.0 + 0.3 * (t1 * 1.7).sin() * (t2 * 0.9).cos());
        for k in 1..=s.len() {
            let t1 = s.corner_t1(k);
            for &t2 in &[0.5, 2.0, 3.5, 5.0] {
                let (k1, k2) = s.locate(t1, t2).unwrap();
                assert_eq!(k1, k, "exact corner queries bracket at the corner");
                let lo = mstar_eval_with(&s, &weird, t1, t2, k, k2).unwrap();
                let hi = mstar_eval_with(&s, &weird, t1, t2, k + 1, k2).unwrap();
                assert_relative_eq!(lo, hi, max_relative = 1e-9);
            }
            // and the transposed check on a t2 grid line
            let t2 = s.corner_t2(k);
            for &t1 in &[0.5, 2.0, 3.5, 5.0] {
                let (k1, k2) = s.locate(t1, t2).unwrap();
                assert_eq!(k2, k);
                let lo = mstar_eval_with(&s, &weird, t1, t2, k1, k).unwrap();
                let hi = mstar_eval_with(&s, &weird, t1, t2, k1, k - 1).unwrap();
                assert_relative_eq!(lo, hi, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn monotone_family_reduces_to_largest_rectangle() {
        // nested rectangles: only the largest survives, and the extension
        // inside it is the native surface
        let s = idx(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert_eq!(s.selected, vec![2]);
        let surf = exp_surface();
        let v = mstar_eval(&s, &surf, 2.5, 2.5).unwrap();
        assert_relative_eq!(v, (-2.5 * 2.5_f64).exp(), max_relative = 1e-15);
    }
}
