//! Weighted and unweighted two-sample Kolmogorov-Smirnov statistics plus
//! small summary helpers.
//!
//! The weighted variant compares the importance-weighted empirical CDF of
//! one sample against the plain empirical CDF of another.  Effective sample
//! size follows the standard `(sum w)^2 / sum w^2` rule and replaces the raw
//! count in the critical value and in the p-value argument.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum effective sample size below which weighted statistics abort.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;

/// Sample mean and standard error of the mean.
pub fn mean_stderr<F: Scalar>(xs: &[F]) -> (F, F) {
    let n = F::from_usize(xs.len()).unwrap();
    let mean = xs.iter().cloned().sum::<F>() / n;
    if xs.len() < 2 {
        return (mean, F::zero());
    }
    let var = xs
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<F>()
        / (n - F::one());
    (mean, (var / n).sqrt())
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf<F: Scalar>(lambda: F) -> F {
    if lambda <= F::real(1e-3) {
        return F::one();
    }
    let mut acc = F::zero();
    let two = F::real(2.0);
    for k in 1..=100 {
        let kf = F::from_i32(k).unwrap();
        let term = (-two * kf * kf * lambda * lambda).exp();
        if k % 2 == 1 {
            acc += term;
        } else {
            acc -= term;
        }
        if term < F::real(1e-18) {
            break;
        }
    }
    (two * acc).max(F::zero()).min(F::one())
}

/// Two-sided critical scale factor `c(alpha) = sqrt(-ln(alpha/2)/2)`.
pub fn ks_critical_factor<F: Scalar>(alpha: F) -> F {
    (-(alpha / F::real(2.0)).ln() / F::real(2.0)).sqrt()
}

/// Outcome of a (possibly weighted) two-sample comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport<F> {
    /// Supremum distance between the two empirical CDFs.
    pub statistic: F,
    /// Effective size of the first (weighted) sample.
    pub n_eff: F,
    /// Size of the second sample.
    pub n_other: F,
    /// Rejection threshold for the statistic at the requested level.
    pub critical: F,
    /// Asymptotic p-value.
    pub p_value: F,
    pub alpha: F,
}

impl<F: Scalar> KsReport<F> {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical
    }
}

/// Weighted two-sample Kolmogorov-Smirnov comparison: `xs` with nonnegative
/// weights `ws` against unweighted `ys`.
pub fn weighted_ks<F: Scalar>(xs: &[F], ws: &[F], ys: &[F], alpha: F) -> Result<KsReport<F>> {
    if xs.len() != ws.len() || xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "weighted ks needs matching nonempty samples, got {}/{} and {}",
            xs.len(),
            ws.len(),
            ys.len()
        )));
    }
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let mut wsum = F::zero();
    let mut wsq = F::zero();
    for (&x, &w) in xs.iter().zip(ws) {
        if !x.is_finite() || !w.is_finite() || w < F::zero() {
            return Err(Error::InvalidParameter(
                "weighted ks sample entries must be finite with w >= 0".into(),
            ));
        }
        wsum += w;
        wsq += w * w;
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidParameter(
            "weighted ks reference entries must be finite".into(),
        ));
    }
    if !(wsum > F::zero()) {
        return Err(Error::InvalidParameter(
            "weighted ks needs a positive total weight".into(),
        ));
    }
    let n_eff = wsum * wsum / wsq;
    if n_eff < F::real(MIN_EFFECTIVE_SAMPLES) {
        return Err(Error::DegenerateWeights {
            n_eff: n_eff.as_f64(),
            min: MIN_EFFECTIVE_SAMPLES,
        });
    }

    let mut a: Vec<(F, F)> = xs.iter().cloned().zip(ws.iter().cloned()).collect();
    a.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
    let mut b: Vec<F> = ys.to_vec();
    b.sort_by(|l, r| l.partial_cmp(r).unwrap());

    let m = F::from_usize(b.len()).unwrap();
    let mut i = 0usize;
    let mut j = 0usize;
    let mut fa = F::zero();
    let mut fb = F::zero();
    let mut d = F::zero();
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&(x, _)), Some(&y)) => x.min(y),
            (Some(&(x, _)), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == v {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j] == v {
            fb += F::one();
            j += 1;
        }
        let diff = (fa / wsum - fb / m).abs();
        if diff > d {
            d = diff;
        }
    }

    let critical = ks_critical_factor(alpha) * (F::one() / n_eff + F::one() / m).sqrt();
    let lambda = d * (n_eff * m / (n_eff + m)).sqrt();
    Ok(KsReport {
        statistic: d,
        n_eff,
        n_other: m,
        critical,
        p_value: kolmogorov_sf(lambda),
        alpha,
    })
}

/// Unweighted two-sample comparison (all weights one).
pub fn ks_two_sample<F: Scalar>(xs: &[F], ys: &[F], alpha: F) -> Result<KsReport<F>> {
    let ws = vec![F::one(); xs.len()];
    weighted_ks(xs, &ws, ys, alpha)
}
