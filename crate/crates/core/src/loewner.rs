//! Discrete chordal Loewner evolution: driving paths, traces, the zipper
//! that encodes a curve back into a driving path, and hull exit times.
//!
//! A driving path sampled on a time grid is turned into a composition of
//! vertical-slit steps, one per grid interval, with the driving value frozen
//! at the left endpoint.  The trace of the evolution is recovered by pulling
//! the current driving value back through the prefix compositions.  The
//! zipper runs the construction in reverse: given a simple curve in the
//! upper half-plane started on the real axis, it peels off one vertical slit
//! per sample point and returns the accumulated driving path, parametrized
//! by half-plane capacity.

use num_complex::Complex;

use crate::conformal::{MapComposition, SlitStep, DEFAULT_BRANCH_TOL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A driving function sampled on a strictly increasing time grid starting at
/// zero; the value on `[times[i], times[i+1])` is `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingPath<F> {
    times: Vec<F>,
    values: Vec<F>,
}

impl<F: Scalar> DrivingPath<F> {
    pub fn new(times: Vec<F>, values: Vec<F>) -> Result<Self> {
        if times.len() != values.len() || times.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "driving path needs equal nonempty grids, got {} times / {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != F::zero() {
            return Err(Error::InvalidParameter(
                "driving path must start at t = 0".into(),
            ));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(
                    "driving times must be strictly increasing".into(),
                ));
            }
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "driving path entries must be finite".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// Uniform grid with spacing `dt`.
    pub fn from_uniform(dt: F, values: Vec<F>) -> Result<Self> {
        if !(dt > F::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("need dt > 0, got {dt}")));
        }
        let times = (0..values.len())
            .map(|i| F::from_usize(i).unwrap() * dt)
            .collect();
        Self::new(times, values)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn final_time(&self) -> F {
        *self.times.last().unwrap()
    }

    /// Restriction to the first `n + 1` grid points (capacity horizon index
    /// `n`).
    pub fn truncated(&self, n: usize) -> Self {
        let end = (n + 1).min(self.times.len());
        Self {
            times: self.times[..end].to_vec(),
            values: self.values[..end].to_vec(),
        }
    }
}

/// Forward evolution: one slit step per grid interval.  A grid interval of
/// Loewner time `dt` removes a slit of capacity `2 dt`, matching the
/// `hcap(K_t) = 2 t` normalization.
pub fn evolve<F: Scalar>(path: &DrivingPath<F>) -> MapComposition<F> {
    let mut steps = Vec::with_capacity(path.len().saturating_sub(1));
    for i in 0..path.len() - 1 {
        steps.push(SlitStep {
            xi: path.values[i],
            dt: path.times[i + 1] - path.times[i],
        });
    }
    MapComposition::new(steps)
}

/// A curve in the closed upper half-plane together with its capacity times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<F> {
    pub times: Vec<F>,
    pub points: Vec<Complex<F>>,
}

impl<F: Scalar> Trace<F> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Trace of the evolution driven by `path`: point `k` is the preimage of the
/// current driving value under the first `k` slit steps.
pub fn trace<F: Scalar>(path: &DrivingPath<F>) -> Result<Trace<F>> {
    let comp = evolve(path);
    let mut points = Vec::with_capacity(path.len());
    for k in 0..path.len() {
        let w = Complex::new(path.values[k], F::zero());
        points.push(comp.prefix_invert(k, w)?);
    }
    Ok(Trace {
        times: path.times.clone(),
        points,
    })
}

/// Zipper: encode a simple curve as a driving path.
///
/// `points[0]` must lie on the real axis; each subsequent point is mapped
/// through the already-accumulated composition.  An image strictly in the
/// upper half-plane determines one vertical slit step; an image on the real
/// axis (within roundoff) carries zero capacity and is skipped; an image
/// below the axis means the curve re-entered the closed hull and is an
/// error.  Returns the recovered driving path (capacity parametrization) and
/// the accumulated composition.  The recovery is a first-order scheme: it is
/// exact for vertical segments and accurate to O(sqrt(dt)) in the supremum
/// norm for smooth curves.
pub fn extract_driving<F: Scalar>(
    points: &[Complex<F>],
) -> Result<(DrivingPath<F>, MapComposition<F>)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "zipper needs at least two curve points".into(),
        ));
    }
    if points[0].im != F::zero() {
        return Err(Error::InvalidParameter(format!(
            "zipper curve must start on the real axis, got im={}",
            points[0].im
        )));
    }
    let btol = F::real(DEFAULT_BRANCH_TOL);
    let mut comp = MapComposition::empty();
    let mut times = vec![F::zero()];
    let mut values: Vec<F> = Vec::with_capacity(points.len());
    let mut t = F::zero();
    for (idx, &p) in points.iter().enumerate().skip(1) {
        if p.im < F::zero() {
            return Err(Error::NotSimple {
                index: idx,
                im: p.im.as_f64(),
            });
        }
        let w = match comp.apply(p) {
            Ok(w) => w,
            // The sample revisits the hull accumulated so far (e.g. a coarse
            // curve doubling back along an existing slit): zero new capacity.
            Err(Error::SlitProximity { .. }) => continue,
            Err(e) => return Err(e),
        };
        let eps = btol * (F::one() + w.norm());
        if w.im < -eps {
            return Err(Error::NotSimple {
                index: idx,
                im: w.im.as_f64(),
            });
        }
        if w.im <= eps {
            // On-axis point (up to roundoff): zero capacity, no slit.  These
            // occur legitimately when sampled curves touch the boundary, e.g.
            // coarse traces of rough driving paths.
            continue;
        }
        let dt = w.im * w.im / F::real(4.0);
        comp.push(SlitStep { xi: w.re, dt });
        values.push(w.re);
        t += dt;
        times.push(t);
    }
    // Knot k holds the base of slit k; repeat the final base so the path has
    // one value per time knot (a fully on-axis curve yields the trivial path).
    values.push(*values.last().unwrap_or(&points[0].re));
    Ok((DrivingPath { times, values }, comp))
}

/// Stopping regions for traces: geometric hulls attached to the real axis.
#[derive(Debug, Clone, PartialEq)]
pub enum HullSpec<F> {
    /// Open half-disk `{ |z - center| < radius, im z >= 0 }`.
    HalfDisk { center: F, radius: F },
    /// Simple polygon given by its vertex loop (closed implicitly).
    Polygon { vertices: Vec<(F, F)> },
}

impl<F: Scalar> HullSpec<F> {
    pub fn validate(&self) -> Result<()> {
        match self {
            HullSpec::HalfDisk { center, radius } => {
                if !center.is_finite() || !(*radius > F::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "half-disk needs finite center and radius > 0, got {center}, {radius}"
                    )));
                }
            }
            HullSpec::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidParameter(
                        "polygon hull needs at least 3 vertices".into(),
                    ));
                }
                if vertices
                    .iter()
                    .any(|(x, y)| !x.is_finite() || !y.is_finite() || *y < F::zero())
                {
                    return Err(Error::InvalidParameter(
                        "polygon vertices must be finite with im >= 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, z: Complex<F>) -> bool {
        if z.im < F::zero() {
            return false;
        }
        match self {
            HullSpec::HalfDisk { center, radius } => {
                let dx = z.re - *center;
                (dx * dx + z.im * z.im).sqrt() < *radius
            }
            HullSpec::Polygon { vertices } => {
                // even-odd ray casting
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let (x1, y1) = vertices[i];
                    let (x2, y2) = vertices[(i + 1) % n];
                    let crosses = (y1 > z.im) != (y2 > z.im);
                    if crosses {
                        let x_at = x1 + (z.im - y1) / (y2 - y1) * (x2 - x1);
                        if z.re < x_at {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// Interpolation parameter in `[0, 1]` at which the segment `a -> b`
    /// (with `a` inside, `b` outside) crosses the hull boundary.
    fn crossing_parameter(&self, a: Complex<F>, b: Complex<F>) -> F {
        match self {
            HullSpec::HalfDisk { center, radius } => {
                let d = |z: Complex<F>| {
                    let dx = z.re - *center;
                    (dx * dx + z.im * z.im).sqrt() - *radius
                };
                let da = d(a);
                let db = d(b);
                if db - da <= F::zero() {
                    return F::one();
                }
                ((-da) / (db - da)).max(F::zero()).min(F::one())
            }
            HullSpec::Polygon { vertices } => {
                let mut theta = F::one();
                let n = vertices.len();
                for i in 0..n {
                    let (x1, y1) = vertices[i];
                    let (x2, y2) = vertices[(i + 1) % n];
                    if let Some(t) =
                        segment_intersection_param(a, b, Complex::new(x1, y1), Complex::new(x2, y2))
                    {
                        if t < theta {
                            theta = t;
                        }
                    }
                }
                theta
            }
        }
    }

    /// Upper bound on the half-plane capacity of the hull (exact for half-
    /// disks, enclosing-half-disk bound for polygons).
    pub fn capacity_bound(&self) -> F {
        match self {
            HullSpec::HalfDisk { radius, .. } => *radius * *radius,
            HullSpec::Polygon { vertices } => {
                let xs: Vec<F> = vertices.iter().map(|v| v.0).collect();
                let min = xs.iter().cloned().fold(F::infinity(), F::min);
                let max = xs.iter().cloned().fold(F::neg_infinity(), F::max);
                let c = (min + max) / F::real(2.0);
                let r = vertices
                    .iter()
                    .map(|&(x, y)| ((x - c) * (x - c) + y * y).sqrt())
                    .fold(F::zero(), F::max);
                r * r
            }
        }
    }

    fn boundary_samples(&self) -> Vec<Complex<F>> {
        match self {
            HullSpec::HalfDisk { center, radius } => (0..=32)
                .map(|k| {
                    let th = F::real(std::f64::consts::PI) * F::from_usize(k).unwrap()
                        / F::real(32.0);
                    Complex::new(*center + *radius * th.cos(), *radius * th.sin())
                })
                .collect(),
            HullSpec::Polygon { vertices } => vertices
                .iter()
                .map(|&(x, y)| Complex::new(x, y))
                .collect(),
        }
    }

    /// Euclidean separation between two hulls (sampled boundaries; exact for
    /// half-disk pairs).
    pub fn separation(&self, other: &Self) -> F {
        if let (
            HullSpec::HalfDisk {
                center: c1,
                radius: r1,
            },
            HullSpec::HalfDisk {
                center: c2,
                radius: r2,
            },
        ) = (self, other)
        {
            return (*c2 - *c1).abs() - *r1 - *r2;
        }
        let a = self.boundary_samples();
        let b = other.boundary_samples();
        let mut best = F::infinity();
        for i in 0..a.len() {
            let p = a[i];
            let q = a[(i + 1) % a.len()];
            for j in 0..b.len() {
                let r = b[j];
                let s = b[(j + 1) % b.len()];
                let d = segment_distance(p, q, r, s);
                if d < best {
                    best = d;
                }
            }
        }
        best
    }
}

fn cross<F: Scalar>(o: Complex<F>, a: Complex<F>, b: Complex<F>) -> F {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Parameter of the first intersection of segment `a -> b` with segment
/// `p -> q`, if any.
fn segment_intersection_param<F: Scalar>(
    a: Complex<F>,
    b: Complex<F>,
    p: Complex<F>,
    q: Complex<F>,
) -> Option<F> {
    let r = b - a;
    let s = q - p;
    let denom = r.re * s.im - r.im * s.re;
    if denom == F::zero() {
        return None;
    }
    let t = ((p.re - a.re) * s.im - (p.im - a.im) * s.re) / denom;
    let u = ((p.re - a.re) * r.im - (p.im - a.im) * r.re) / denom;
    if t >= F::zero() && t <= F::one() && u >= F::zero() && u <= F::one() {
        Some(t)
    } else {
        None
    }
}

fn point_segment_distance<F: Scalar>(z: Complex<F>, a: Complex<F>, b: Complex<F>) -> F {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == F::zero() {
        return (z - a).norm();
    }
    let t = ((z.re - a.re) * ab.re + (z.im - a.im) * ab.im) / len2;
    let t = t.max(F::zero()).min(F::one());
    (z - (a + ab * t)).norm()
}

fn segment_distance<F: Scalar>(
    p: Complex<F>,
    q: Complex<F>,
    r: Complex<F>,
    s: Complex<F>,
) -> F {
    // crossing segments have distance zero
    let d1 = cross(p, q, r);
    let d2 = cross(p, q, s);
    let d3 = cross(r, s, p);
    let d4 = cross(r, s, q);
    if ((d1 > F::zero()) != (d2 > F::zero())) && ((d3 > F::zero()) != (d4 > F::zero())) {
        return F::zero();
    }
    point_segment_distance(r, p, q)
        .min(point_segment_distance(s, p, q))
        .min(point_segment_distance(p, r, s))
        .min(point_segment_distance(q, r, s))
}

/// Result of scanning a trace for its first exit from a hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitEvent<F> {
    /// Capacity time of the (linearly refined) boundary crossing.
    pub time: F,
    /// Index of the first trace point outside the hull (equals the last
    /// valid index if the trace never exits).
    pub index: usize,
    pub exited: bool,
}

/// Exit events of one trace against a list of hulls.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitTimeTable<F> {
    pub events: Vec<ExitEvent<F>>,
}

/// First exit of `trace` from `hull`, linearly refined between grid points.
///
/// The trace is assumed to start inside the hull; if it starts outside, the
/// exit is reported at time zero.
pub fn exit_time<F: Scalar>(trace: &Trace<F>, hull: &HullSpec<F>) -> ExitEvent<F> {
    for k in 0..trace.len() {
        if !hull.contains(trace.points[k]) {
            if k == 0 {
                return ExitEvent {
                    time: trace.times[0],
                    index: 0,
                    exited: true,
                };
            }
            let theta = hull.crossing_parameter(trace.points[k - 1], trace.points[k]);
            let t = trace.times[k - 1] + theta * (trace.times[k] - trace.times[k - 1]);
            return ExitEvent {
                time: t,
                index: k,
                exited: true,
            };
        }
    }
    ExitEvent {
        time: *trace.times.last().unwrap(),
        index: trace.len() - 1,
        exited: false,
    }
}

pub fn exit_table<F: Scalar>(trace: &Trace<F>, hulls: &[HullSpec<F>]) -> ExitTimeTable<F> {
    ExitTimeTable {
        events: hulls.iter().map(|h| exit_time(trace, h)).collect(),
    }
}

/// Compute the trace only until it first leaves `hull` (plus the crossing
/// point), returning the truncated trace and the exit event.  Saves the
/// quadratic tail cost when the exit is early.
pub fn trace_until_exit<F: Scalar>(
    path: &DrivingPath<F>,
    hull: &HullSpec<F>,
) -> Result<(Trace<F>, ExitEvent<F>)> {
    let comp = evolve(path);
    let mut points: Vec<Complex<F>> = Vec::new();
    let mut times: Vec<F> = Vec::new();
    for k in 0..path.len() {
        let w = Complex::new(path.values[k], F::zero());
        let p = comp.prefix_invert(k, w)?;
        points.push(p);
        times.push(path.times[k]);
        if !hull.contains(p) {
            let exited = ExitEvent {
                time: if k == 0 {
                    times[0]
                } else {
                    let theta = hull.crossing_parameter(points[k - 1], points[k]);
                    times[k - 1] + theta * (times[k] - times[k - 1])
                },
                index: k,
                exited: true,
            };
            return Ok((Trace { times, points }, exited));
        }
    }
    let exit = ExitEvent {
        time: *times.last().unwrap(),
        index: points.len() - 1,
        exited: false,
    };
    Ok((Trace { times, points }, exit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    type C = Complex<f64>;

    #[test]
    fn validation_rejects_bad_grids() {
        assert!(DrivingPath::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(DrivingPath::new(vec![0.1, 1.0], vec![0.0, 0.0]).is_err());
        assert!(DrivingPath::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(DrivingPath::new(vec![0.0, f64::NAN], vec![0.0, 0.0]).is_err());
        assert!(DrivingPath::from_uniform(0.0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn constant_driving_grows_a_vertical_slit() {
        // Closed form: the hull at time t is the segment [c, c + 2 i sqrt(t)].
        let c = 0.4;
        let n = 200;
        let dt = 1e-3;
        let path = DrivingPath::from_uniform(dt, vec![c; n + 1]).unwrap();
        let tr = trace(&path).unwrap();
        for k in [10usize, 50, 100, 200] {
            let t = k as f64 * dt;
            let p = tr.points[k];
            assert_abs_diff_eq!(p.re, c, epsilon = 1e-9);
            assert_relative_eq!(p.im, 2.0 * t.sqrt(), max_relative = 1e-9);
        }
        let comp = evolve(&path);
        assert_relative_eq!(comp.hcap(), 2.0 * n as f64 * dt, max_relative = 1e-12);
    }

    #[test]
    fn capacity_parametrization_is_preserved() {
        let vals: Vec<f64> = (0..=300).map(|i| (i as f64 * 0.01).sin()).collect();
        let path = DrivingPath::from_uniform(2e-3, vals).unwrap();
        let comp = evolve(&path);
        // hcap of the prefix composition equals twice the elapsed time
        let steps = comp.steps();
        let mut acc = 0.0;
        for (i, s) in steps.iter().enumerate() {
            acc += 2.0 * s.dt;
            assert_relative_eq!(acc, 2.0 * path.times()[i + 1], max_relative = 1e-12);
        }
    }

    #[test]
    fn zipper_encodes_vertical_segment_exactly() {
        let x = -0.7;
        let h = 0.6;
        let pts: Vec<C> = (0..=40).map(|k| C::new(x, h * k as f64 / 40.0)).collect();
        let (path, comp) = extract_driving(&pts).unwrap();
        for v in path.values() {
            assert_abs_diff_eq!(*v, x, epsilon = 1e-10);
        }
        // total capacity of a height-h slit is h^2 / 2, so the half-plane
        // capacity clock (hcap = 2 t) ends at h^2 / 4
        assert_relative_eq!(comp.hcap(), h * h / 2.0, max_relative = 1e-10);
        assert_relative_eq!(path.final_time(), h * h / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn zipper_roundtrip_on_smooth_driving() {
        // trace -> extract_driving recovers the driving path to O(sqrt(dt))
        let dt = 1e-3;
        let vals: Vec<f64> = (0..=250).map(|i| 0.8 * (i as f64 * dt * 6.0).sin()).collect();
        let path = DrivingPath::from_uniform(dt, vals).unwrap();
        let tr = trace(&path).unwrap();
        let (rec, _) = extract_driving(&tr.points).unwrap();
        assert_eq!(rec.len(), path.len());
        let sup = path
            .values()
            .iter()
            .zip(rec.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.02, "roundtrip sup error {sup}");
        // times agree as well (capacity parametrization)
        let tsup = path
            .times()
            .iter()
            .zip(rec.times())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(tsup < 5e-3, "roundtrip time error {tsup}");
    }

    #[test]
    fn zipper_rejects_curves_leaving_the_half_plane() {
        let pts = vec![C::new(0.0, 0.0), C::new(0.1, 0.3), C::new(0.1, -0.2)];
        assert!(matches!(
            extract_driving(&pts),
            Err(Error::NotSimple { .. }) | Err(Error::InvalidParameter(..))
        ));
    }

    #[test]
    fn half_disk_membership_and_separation() {
        let h = HullSpec::HalfDisk {
            center: 0.0,
            radius: 0.5,
        };
        assert!(h.contains(C::new(0.1, 0.2)));
        assert!(!h.contains(C::new(0.6, 0.0)));
        assert!(!h.contains(C::new(0.0, 0.5)));
        assert!(!h.contains(C::new(0.1, -0.1)));
        let h2 = HullSpec::HalfDisk {
            center: 2.0,
            radius: 0.5,
        };
        assert_abs_diff_eq!(h.separation(&h2), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.capacity_bound(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn polygon_membership_by_hand() {
        let square = HullSpec::Polygon {
            vertices: vec![(-0.5, 0.0), (0.5, 0.0), (0.5, 0.4), (-0.5, 0.4)],
        };
        assert!(square.contains(C::new(0.0, 0.2)));
        assert!(square.contains(C::new(-0.49, 0.01)));
        assert!(!square.contains(C::new(0.0, 0.45)));
        assert!(!square.contains(C::new(0.7, 0.2)));
        square.validate().unwrap();
        assert!(HullSpec::Polygon {
            vertices: vec![(0.0, 0.0), (1.0, 0.0)]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn exit_time_of_vertical_slit_from_half_disk() {
        // Constant driving at 0: trace height is 2 sqrt(t); it exits the
        // half-disk of radius r at t = r^2 / 4 exactly.
        let r: f64 = 0.4;
        let dt = 1e-4;
        let n = 600;
        let path = DrivingPath::from_uniform(dt, vec![0.0; n + 1]).unwrap();
        let tr = trace(&path).unwrap();
        let hull = HullSpec::HalfDisk {
            center: 0.0,
            radius: r,
        };
        let ev = exit_time(&tr, &hull);
        assert!(ev.exited);
        assert_relative_eq!(ev.time, r * r / 4.0, max_relative = 2e-3);
        // brute-force index oracle
        let first_out = tr
            .points
            .iter()
            .position(|p| !hull.contains(*p))
            .unwrap();
        assert_eq!(ev.index, first_out);
        // incremental variant agrees and truncates
        let (tr2, ev2) = trace_until_exit(&path, &hull).unwrap();
        assert_eq!(ev2.index, ev.index);
        assert_abs_diff_eq!(ev2.time, ev.time, epsilon = 1e-15);
        assert_eq!(tr2.len(), ev.index + 1);
    }

    #[test]
    fn exit_time_of_vertical_slit_from_box() {
        let dt = 1e-4;
        let path = DrivingPath::from_uniform(dt, vec![0.0; 701]).unwrap();
        let tr = trace(&path).unwrap();
        let boxy = HullSpec::Polygon {
            vertices: vec![(-0.5, 0.0), (0.5, 0.0), (0.5, 0.4), (-0.5, 0.4)],
        };
        let ev = exit_time(&tr, &boxy);
        assert!(ev.exited);
        // crosses the roof y = 0.4 at t = 0.04
        assert_relative_eq!(ev.time, 0.04, max_relative = 2e-3);
    }

    #[test]
    fn never_exiting_trace_reports_horizon() {
        let path = DrivingPath::from_uniform(1e-3, vec![0.0; 11]).unwrap();
        let tr = trace(&path).unwrap();
        let hull = HullSpec::HalfDisk {
            center: 0.0,
            radius: 5.0,
        };
        let ev = exit_time(&tr, &hull);
        assert!(!ev.exited);
        assert_eq!(ev.index, tr.len() - 1);
        assert_abs_diff_eq!(ev.time, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn exit_table_matches_individual_queries() {
        let path = DrivingPath::from_uniform(1e-3, vec![0.1; 101]).unwrap();
        let tr = trace(&path).unwrap();
        let hulls = vec![
            HullSpec::HalfDisk {
                center: 0.1,
                radius: 0.3,
            },
            HullSpec::HalfDisk {
                center: 0.1,
                radius: 0.5,
            },
        ];
        let table = exit_table(&tr, &hulls);
        assert_eq!(table.events.len(), 2);
        for (ev, h) in table.events.iter().zip(&hulls) {
            assert_eq!(*ev, exit_time(&tr, h));
        }
        assert!(table.events[0].time < table.events[1].time);
    }
}
