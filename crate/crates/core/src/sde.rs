//! Euler scheme for the coupled driver pair and its radial part.
//!
//! Two chordal evolutions are grown from the endpoints `x1 < x2` of an
//! interval.  Side `j` carries a driving coordinate `xi_j` and tracks the
//! image `p_j` of the opposite endpoint; with `Y_j = |xi_j - p_j|` the system
//! is, for sign `s = sign(xi_j(0) - p_j(0))`,
//!
//! ```text
//!     d xi = sqrt(kappa) dB + s (kappa - 6) / Y dt
//!     d p  = -s 2 / Y dt
//!     d Y  = s sqrt(kappa) dB + (kappa - 4) / Y dt
//! ```
//!
//! so `Y` is `sqrt(kappa)` times a Bessel-type process of dimension
//! `3 - 8/kappa`.  The three updates are performed with shared intermediate
//! quantities, which keeps the algebraic identity `xi - p = s Y` true to
//! rounding along the whole discrete path.  A floor guard stops a chain at
//! the first step that would take `Y` below the guard.
//!
//! All randomness flows through [`RngSpec`]: a (seed, stream) pair mapped to
//! a counter-based generator, so any sample of any ensemble can be
//! regenerated in isolation and results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::loewner::DrivingPath;
use crate::scalar::Scalar;

/// Seed plus stream index; equal specs reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derived spec for substream `k` (same seed, shifted stream).
    pub fn substream(&self, k: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self
                .stream
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(k),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Noise source for the Euler scheme; `Zero` runs the drift ODE alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Gaussian,
    Zero,
}

/// `n` standard normal draws (or zeros) from the given stream.
pub fn normal_draws<F: Scalar>(spec: RngSpec, noise: Noise, n: usize) -> Vec<F> {
    match noise {
        Noise::Zero => vec![F::zero(); n],
        Noise::Gaussian => {
            let mut rng = spec.rng();
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    F::real(z)
                })
                .collect()
        }
    }
}

/// Sampled radial part: `dY = sqrt(kappa) dB + (kappa - 4)/Y dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselSample<F> {
    /// States `Y(0), Y(dt), ...` up to and including the last state at or
    /// above the floor guard.
    pub y: Vec<F>,
    /// True if the chain was stopped by the floor guard before the horizon.
    pub stopped: bool,
}

pub fn sample_bessel<F: Scalar>(
    kappa: F,
    y0: F,
    dt: F,
    n_steps: usize,
    floor: F,
    spec: RngSpec,
    noise: Noise,
) -> Result<BesselSample<F>> {
    let draws = normal_draws::<F>(spec, noise, n_steps);
    sample_bessel_with_draws(kappa, y0, dt, floor, &draws)
}

/// Same scheme on caller-supplied standard-normal draws; lets refinement
/// studies couple paths across step sizes through a shared Brownian motion.
pub fn sample_bessel_with_draws<F: Scalar>(
    kappa: F,
    y0: F,
    dt: F,
    floor: F,
    draws: &[F],
) -> Result<BesselSample<F>> {
    check_positive("kappa", kappa)?;
    check_positive("dt", dt)?;
    check_positive("floor", floor)?;
    if !(y0 > floor) {
        return Err(Error::InvalidParameter(format!(
            "need y0 > floor, got {y0} <= {floor}"
        )));
    }
    let sqrt_k_dt = (kappa * dt).sqrt();
    let drift = (kappa - F::real(4.0)) * dt;
    let mut y = Vec::with_capacity(draws.len() + 1);
    y.push(y0);
    let mut cur = y0;
    let mut stopped = false;
    for &d in draws {
        let next = cur + sqrt_k_dt * d + drift / cur;
        if next < floor {
            stopped = true;
            break;
        }
        y.push(next);
        cur = next;
    }
    Ok(BesselSample { y, stopped })
}

/// One driver chain: the driving coordinate, the tracked image of the far
/// endpoint, and the gap process, all on a uniform `dt` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KrChain<F> {
    pub dt: F,
    pub xi: Vec<F>,
    pub p: Vec<F>,
    pub y: Vec<F>,
    pub stopped: bool,
}

impl<F: Scalar> KrChain<F> {
    /// Number of grid points (states), horizon index plus one.
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest valid grid index.
    pub fn horizon(&self) -> usize {
        self.xi.len() - 1
    }

    pub fn driving_path(&self) -> DrivingPath<F> {
        DrivingPath::from_uniform(self.dt, self.xi.clone())
            .expect("chain grids are valid by construction")
    }
}

fn check_positive<F: Scalar>(name: &str, v: F) -> Result<()> {
    if !v.is_finite() || !(v > F::zero()) {
        return Err(Error::InvalidParameter(format!("need {name} > 0, got {v}")));
    }
    Ok(())
}

fn kr_chain<F: Scalar>(
    kappa: F,
    start: F,
    force: F,
    dt: F,
    floor: F,
    draws: &[F],
) -> Result<KrChain<F>> {
    check_positive("kappa", kappa)?;
    check_positive("dt", dt)?;
    check_positive("floor", floor)?;
    let gap = (start - force).abs();
    if !(gap > floor) {
        return Err(Error::InvalidParameter(format!(
            "need |start - force| > floor, got {gap} <= {floor}"
        )));
    }
    let s = if start > force { F::one() } else { -F::one() };
    let sqrt_k_dt = (kappa * dt).sqrt();
    let k6 = kappa - F::real(6.0);
    let k4 = kappa - F::real(4.0);
    let two = F::real(2.0);
    let n = draws.len();
    let mut xi = Vec::with_capacity(n + 1);
    let mut p = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n + 1);
    xi.push(start);
    p.push(force);
    y.push(gap);
    let (mut cx, mut cp, mut cy) = (start, force, gap);
    let mut stopped = false;
    for &d in draws {
        let db = sqrt_k_dt * d;
        let inv = dt / cy;
        let ny = cy + s * db + k4 * inv;
        if ny < floor {
            stopped = true;
            break;
        }
        cx = cx + db + s * (k6 * inv);
        cp = cp - s * (two * inv);
        cy = ny;
        xi.push(cx);
        p.push(cp);
        y.push(cy);
    }
    Ok(KrChain {
        dt,
        xi,
        p,
        y,
        stopped,
    })
}

/// Driver with drift `(kappa - 6)/(xi - p)` toward a tracked force point.
///
/// `start` is the initial driving value, `force` the initial force point;
/// the chain runs `n_steps` Euler steps of size `dt` or until the gap hits
/// `floor`.
pub fn sle_kr_driver<F: Scalar>(
    kappa: F,
    start: F,
    force: F,
    dt: F,
    n_steps: usize,
    floor: F,
    spec: RngSpec,
    noise: Noise,
) -> Result<KrChain<F>> {
    let draws = normal_draws::<F>(spec, noise, n_steps);
    kr_chain(kappa, start, force, dt, floor, &draws)
}

/// Same chain fed with caller-supplied standard-normal draws, one per step.
///
/// Lets refinement studies couple a coarse chain to a fine one by block
/// summing the fine draws, exactly as [`sample_bessel_with_draws`] does for
/// the radial scheme.
pub fn sle_kr_driver_with_draws<F: Scalar>(
    kappa: F,
    start: F,
    force: F,
    dt: F,
    floor: F,
    draws: &[F],
) -> Result<KrChain<F>> {
    kr_chain(kappa, start, force, dt, floor, draws)
}

/// The coupled pair: side 1 grown from `x1` with force point `x2`, side 2
/// grown from `x2` with force point `x1`, driven by independent streams.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDriver<F> {
    pub kappa: F,
    pub x: [F; 2],
    pub dt: F,
    pub floor: F,
    /// `sides[0]` is side 1, `sides[1]` is side 2.
    pub sides: [KrChain<F>; 2],
}

impl<F: Scalar> PairDriver<F> {
    /// Driving path of side `j` (1-based side label).
    pub fn driving_path(&self, side: usize) -> DrivingPath<F> {
        self.sides[side - 1].driving_path()
    }
}

/// Build the two chains; side `j` consumes substream `2 * spec.stream + j - 1`
/// of `spec.seed`, so the sides are independent and each sample can be
/// regenerated in isolation.
pub fn build_pair_driver<F: Scalar>(
    kappa: F,
    x1: F,
    x2: F,
    dt: F,
    n_steps: usize,
    floor: F,
    spec: RngSpec,
    noise: Noise,
) -> Result<PairDriver<F>> {
    if !(x1 < x2) {
        return Err(Error::InvalidParameter(format!(
            "need x1 < x2, got {x1} >= {x2}"
        )));
    }
    let s1 = RngSpec::new(spec.seed, spec.stream.wrapping_mul(2));
    let s2 = RngSpec::new(spec.seed, spec.stream.wrapping_mul(2).wrapping_add(1));
    let side1 = sle_kr_driver(kappa, x1, x2, dt, n_steps, floor, s1, noise)?;
    let side2 = sle_kr_driver(kappa, x2, x1, dt, n_steps, floor, s2, noise)?;
    Ok(PairDriver {
        kappa,
        x: [x1, x2],
        dt,
        floor,
        sides: [side1, side2],
    })
}

/// Plain driving path `xi(t) = x0 + sqrt(kappa) B(t)` on a uniform grid.
pub fn standard_sle_driver<F: Scalar>(
    kappa: F,
    x0: F,
    dt: F,
    n_steps: usize,
    spec: RngSpec,
    noise: Noise,
) -> Result<DrivingPath<F>> {
    check_positive("kappa", kappa)?;
    check_positive("dt", dt)?;
    let draws = normal_draws::<F>(spec, noise, n_steps);
    let sqrt_k_dt = (kappa * dt).sqrt();
    let mut vals = Vec::with_capacity(n_steps + 1);
    let mut cur = x0;
    vals.push(cur);
    for d in draws {
        cur += sqrt_k_dt * d;
        vals.push(cur);
    }
    DrivingPath::from_uniform(dt, vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const SPEC: RngSpec = RngSpec { seed: 7, stream: 0 };

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = normal_draws::<f64>(SPEC, Noise::Gaussian, 64);
        let b = normal_draws::<f64>(SPEC, Noise::Gaussian, 64);
        assert_eq!(a, b);
        let c = normal_draws::<f64>(RngSpec::new(7, 1), Noise::Gaussian, 64);
        assert_ne!(a, c);
        let d = normal_draws::<f64>(RngSpec::new(8, 0), Noise::Gaussian, 64);
        assert_ne!(a, d);
        assert!(normal_draws::<f64>(SPEC, Noise::Zero, 8).iter().all(|z| *z == 0.0));
    }

    #[test]
    fn pair_identity_holds_to_rounding() {
        // xi_j - p_j == +/- Y_j along the whole discrete path
        let pd = build_pair_driver(3.0, 0.0, 1.0, 1e-4, 10_000, 1e-3, SPEC, Noise::Gaussian)
            .unwrap();
        for (j, sign) in [(0usize, -1.0), (1usize, 1.0)] {
            let ch = &pd.sides[j];
            for i in 0..ch.len() {
                let gap = ch.xi[i] - ch.p[i];
                assert_abs_diff_eq!(gap, sign * ch.y[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zero_noise_gap_follows_the_square_root_law() {
        // drift-only: Y' = (kappa - 4)/Y, so Y(t) = sqrt(y0^2 + 2(kappa-4) t)
        let kappa = 2.0;
        let dt = 1e-5;
        let b = sample_bessel(kappa, 1.0, dt, 30_000, 1e-3, SPEC, Noise::Zero).unwrap();
        assert!(b.stopped, "floor is reached before the 0.3 horizon");
        for (i, y) in b.y.iter().enumerate().step_by(500) {
            let t = i as f64 * dt;
            let exact = (1.0 - 4.0 * t).max(0.0).sqrt();
            if exact > 0.2 {
                assert_relative_eq!(*y, exact, max_relative = 2e-3);
            }
        }
    }

    #[test]
    fn zero_noise_floor_stop_time_is_correct() {
        // Y hits the floor near t = (y0^2 - floor^2)/4 for kappa = 2
        let dt = 1e-5;
        let b = sample_bessel(2.0, 1.0, dt, 60_000, 0.05, SPEC, Noise::Zero).unwrap();
        assert!(b.stopped);
        let t_stop = (b.y.len() - 1) as f64 * dt;
        assert_relative_eq!(t_stop, (1.0 - 0.05 * 0.05) / 4.0, max_relative = 2e-2);
        assert!(*b.y.last().unwrap() >= 0.05);
    }

    #[test]
    fn gaussian_pair_respects_floor_guard() {
        let pd = build_pair_driver(4.0, 0.0, 1.0, 1e-4, 50_000, 1e-2, SPEC, Noise::Gaussian)
            .unwrap();
        for ch in &pd.sides {
            assert!(ch.stopped, "kappa <= 4 chains must hit the floor");
            assert!(ch.y.iter().all(|y| *y >= 1e-2));
        }
    }

    #[test]
    fn side_one_equals_standalone_driver_on_same_stream() {
        let pd = build_pair_driver(3.0, 0.0, 1.0, 2e-4, 2000, 1e-3, RngSpec::new(11, 5),
            Noise::Gaussian)
            .unwrap();
        let lone = sle_kr_driver(3.0, 0.0, 1.0, 2e-4, 2000, 1e-3, RngSpec::new(11, 10),
            Noise::Gaussian)
            .unwrap();
        assert_eq!(pd.sides[0], lone);
    }

    #[test]
    fn radial_part_matches_chain_gap_with_mirrored_draws() {
        // side 1 has sign -1, so feeding the negated draws to the standalone
        // radial scheme reproduces its gap exactly
        let draws = normal_draws::<f64>(SPEC, Noise::Gaussian, 3000);
        let ch = kr_chain(2.5, 0.0, 1.0, 1e-4, 1e-3, &draws).unwrap();
        let neg: Vec<f64> = draws.iter().map(|d| -d).collect();
        let mut y = vec![1.0];
        let mut cur = 1.0_f64;
        let sqrt_k_dt = (2.5_f64 * 1e-4).sqrt();
        for d in &neg[..ch.len() - 1] {
            cur = cur + sqrt_k_dt * d + (2.5 - 4.0) * 1e-4 / cur;
            y.push(cur);
        }
        for (a, b) in ch.y.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_driver_variance_sanity() {
        let kappa = 8.0 / 3.0;
        let dt = 1e-3;
        let path = standard_sle_driver(kappa, 0.0, dt, 40_000, SPEC, Noise::Gaussian).unwrap();
        let incs: Vec<f64> = path.values().windows(2).map(|w| w[1] - w[0]).collect();
        let var = incs.iter().map(|x| x * x).sum::<f64>() / incs.len() as f64;
        assert_relative_eq!(var, kappa * dt, max_relative = 0.05);
        assert_eq!(path.values()[0], 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(sample_bessel(0.0, 1.0, 1e-4, 10, 1e-3, SPEC, Noise::Zero).is_err());
        assert!(sample_bessel(2.0, 1e-4, 1e-4, 10, 1e-3, SPEC, Noise::Zero).is_err());
        assert!(build_pair_driver(2.0, 1.0, 0.0, 1e-4, 10, 1e-3, SPEC, Noise::Zero).is_err());
        assert!(sle_kr_driver(2.0, 0.5, 0.5, 1e-4, 10, 1e-3, SPEC, Noise::Zero).is_err());
    }

    #[test]
    fn f32_instantiation_runs() {
        let b = sample_bessel(2.0_f32, 1.0, 1e-3, 100, 1e-2, SPEC, Noise::Gaussian).unwrap();
        assert!(b.y.len() > 1);
    }
}
