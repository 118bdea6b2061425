//! Experiment suites over the numerical core.
//!
//! Each suite draws independent samples (one RNG stream per sample index, so
//! results do not depend on the worker count), evaluates a family of checks,
//! and returns a [`SuiteReport`] plus optional illustration curves.  A failed
//! statistical check flips the report's `pass` flag; numerical breakdowns
//! that invalidate the run (for example an excessive per-sample discard rate)
//! surface as [`LabError`] instead.

use crate::config::{ConfigError, RunConfig};
use crate::report::{SuiteReport, TestReport};
use rayon::prelude::*;
use sle_lab_core::ensemble::{RecordParams, Side};
use sle_lab_core::loewner::{exit_table, trace, trace_until_exit};
use sle_lab_core::mstar::{mstar_eval, mstar_eval_with, mstar_terminal, select_s, MartingaleSurface};
use sle_lab_core::sde::{
    build_pair_driver, normal_draws, sle_kr_driver, sle_kr_driver_with_draws, Noise, PairDriver,
    RngSpec,
};
use sle_lab_core::stats::{ks_two_sample, weighted_ks};
use sle_lab_core::{C64, EnsemblePair64, Error as CoreError, HullSpec64, MartingaleRecord64};
use thiserror::Error;

/// Per-sample discard budget for the weighted suites.
pub const MAX_DISCARD_SHARE: f64 = 0.05;
/// Completion budget for the endpoint-to-endpoint suite, where crossing
/// times are heavy tailed and a tight budget would force absurd horizons.
pub const MIN_COMPLETION_SHARE: f64 = 0.5;
/// Sanity ceiling on importance weights ("bounded above" evidence).
pub const WEIGHT_CEILING: f64 = 1e6;
/// Minimum effective sample size for the conditional-law comparison.
pub const MIN_EFF_SAMPLES: f64 = 300.0;

#[derive(Debug, Error)]
pub enum LabError {
    /// Bad configuration or usage; maps to exit code 2.
    #[error("{0}")]
    Config(String),
    /// Numerical breakdown that invalidates the run; maps to exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl From<ConfigError> for LabError {
    fn from(e: ConfigError) -> Self {
        LabError::Config(e.to_string())
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        LabError::Numerical(e.to_string())
    }
}

/// Report plus side artifacts a subcommand may want to render.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub report: SuiteReport,
    /// Labelled curves for optional SVG illustration.
    pub curves: Vec<(String, Vec<C64>)>,
    /// Per-sample weight records (weighted suites only).
    pub records: Vec<MartingaleRecord64>,
}

impl SuiteOutcome {
    fn new(report: SuiteReport) -> Self {
        SuiteOutcome {
            report,
            curves: Vec::new(),
            records: Vec::new(),
        }
    }
}

/// Map sample indices `0..n` through `f` on a pool of `workers` threads.
///
/// The output order is the index order and every sample derives its
/// randomness from its own index, so the result is identical for any worker
/// count.
pub fn par_map_samples<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers <= 1 {
        return (0..n as u64).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool construction cannot fail for positive sizes");
    pool.install(|| (0..n as u64).into_par_iter().map(f).collect())
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn rel_dev(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn hull_pair(cfg: &RunConfig, k: usize) -> (HullSpec64, HullSpec64) {
    let (r1, r2) = cfg.hulls[k];
    (
        HullSpec64::HalfDisk {
            center: cfg.x1,
            radius: r1,
        },
        HullSpec64::HalfDisk {
            center: cfg.x2,
            radius: r2,
        },
    )
}

fn check_discards(report: &mut SuiteReport, n: usize, used: usize) -> Result<(), LabError> {
    let discarded = n - used;
    report.n_discarded = discarded;
    let share = discarded as f64 / n.max(1) as f64;
    report.push(TestReport::bounded(
        "discard_share",
        share,
        MAX_DISCARD_SHARE,
        used,
    ));
    if share > MAX_DISCARD_SHARE {
        return Err(LabError::Numerical(format!(
            "discarded {discarded} of {n} samples (share {share:.3} exceeds {MAX_DISCARD_SHARE})"
        )));
    }
    Ok(())
}

/// Evaluations of the configured observables on one stopped trace.
fn eval_observables(cfg: &RunConfig, points: &[C64]) -> Vec<Option<f64>> {
    cfg.observables.iter().map(|o| o.eval(points)).collect()
}

// ---------------------------------------------------------------------------
// Weighted-pair sampling shared by the weight and splice suites
// ---------------------------------------------------------------------------

struct PairSample {
    rec: MartingaleRecord64,
    obs1: Vec<Option<f64>>,
    /// Stopped traces of both sides, kept only when illustration is wanted.
    curves: Option<(Vec<C64>, Vec<C64>)>,
    /// Splice diagnostics (filled by the splice suite sampler).
    splice: Option<SpliceStats>,
}

struct SpliceStats {
    terminal: f64,
    boundary_dev: f64,
    rectangle_dev: f64,
    cell_dev: f64,
}

/// Weight surface backed by a concrete truncated pair: queries snap to the
/// nearest grid index of the capacity grid (exit corners sit exactly on it).
struct PairSurface<'a> {
    pair: &'a EnsemblePair64,
    params: &'a RecordParams<f64>,
}

impl PairSurface<'_> {
    fn snap(&self, t: f64, side: Side) -> Result<usize, CoreError> {
        if !t.is_finite() || t < 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "surface query time {t} outside the finite grid"
            )));
        }
        let i = (t / self.pair.dt).round() as usize;
        let h = self.pair.horizon(side);
        if i > h {
            return Err(CoreError::InvalidParameter(format!(
                "surface query time {t} beyond horizon index {h}"
            )));
        }
        Ok(i)
    }
}

impl MartingaleSurface<f64> for PairSurface<'_> {
    fn m(&self, t1: f64, t2: f64) -> Result<f64, CoreError> {
        let i1 = self.snap(t1, Side::One)?;
        let i2 = self.snap(t2, Side::Two)?;
        let rec = self.pair.compute_m(i1, i2, self.params)?;
        if rec.valid {
            Ok(rec.m)
        } else {
            Err(CoreError::Numerical(format!(
                "weight record invalid at grid indices ({i1}, {i2})"
            )))
        }
    }
}

/// Draw one coupled pair, stop each side at its configured hull exits, and
/// evaluate the two-time weight at the principal (last configured) exits.
///
/// `splice` additionally audits the extended surface over all hull pairs.
fn one_pair_sample(
    cfg: &RunConfig,
    stream: u64,
    keep_curves: bool,
    splice: bool,
) -> Option<PairSample> {
    let spec = RngSpec::new(cfg.seed, stream);
    let driver = build_pair_driver(
        cfg.kappa,
        cfg.x1,
        cfg.x2,
        cfg.dt,
        cfg.n_steps,
        cfg.floor_guard,
        spec,
        Noise::Gaussian,
    )
    .ok()?;

    // Trace each side until it leaves its largest configured hull; smaller
    // hulls are exited strictly earlier, so one truncated trace carries the
    // whole exit table for that side.
    let rmax1 = cfg.hulls.iter().map(|h| h.0).fold(0.0, f64::max);
    let rmax2 = cfg.hulls.iter().map(|h| h.1).fold(0.0, f64::max);
    let big1 = HullSpec64::HalfDisk {
        center: cfg.x1,
        radius: rmax1,
    };
    let big2 = HullSpec64::HalfDisk {
        center: cfg.x2,
        radius: rmax2,
    };
    let (tr1, ev1) = trace_until_exit(&driver.driving_path(1), &big1).ok()?;
    let (tr2, ev2) = trace_until_exit(&driver.driving_path(2), &big2).ok()?;
    if !ev1.exited || !ev2.exited || ev1.index == 0 || ev2.index == 0 {
        return None;
    }

    let hulls1: Vec<HullSpec64> = (0..cfg.hulls.len())
        .map(|k| hull_pair(cfg, k).0)
        .collect();
    let hulls2: Vec<HullSpec64> = (0..cfg.hulls.len())
        .map(|k| hull_pair(cfg, k).1)
        .collect();
    let tab1 = exit_table(&tr1, &hulls1);
    let tab2 = exit_table(&tr2, &hulls2);
    let mut exits = Vec::with_capacity(cfg.hulls.len());
    for k in 0..cfg.hulls.len() {
        let (e1, e2) = (&tab1.events[k], &tab2.events[k]);
        if !e1.exited || !e2.exited || e1.index == 0 || e2.index == 0 {
            return None;
        }
        exits.push((e1.index, e2.index));
    }

    let pair = EnsemblePair64::from_driver(&driver, [ev1.index, ev2.index], None).ok()?;
    let params = RecordParams::standard(cfg.x1, cfg.x2);
    let (i1, i2) = *exits.last().expect("at least one hull pair");
    let rec = pair.compute_m(i1, i2, &params).ok()?;
    if !rec.valid {
        return None;
    }

    let splice_stats = if splice {
        Some(audit_splice(&pair, &params, &exits)?)
    } else {
        None
    };

    // Observables are read off the side grown from `x1`, stopped at its
    // principal hull exit.
    let stop1 = exits.last().expect("nonempty").0;
    let obs1 = eval_observables(cfg, &tr1.points[..=stop1]);

    Some(PairSample {
        rec,
        obs1,
        curves: keep_curves.then(|| (tr1.points.clone(), tr2.points.clone())),
        splice: splice_stats,
    })
}

/// Structural audit of the extended (spliced) weight surface of one sample.
fn audit_splice(
    pair: &EnsemblePair64,
    params: &RecordParams<f64>,
    exits: &[(usize, usize)],
) -> Option<SpliceStats> {
    let dt = pair.dt;
    let corners: Vec<(f64, f64)> = exits
        .iter()
        .map(|&(i1, i2)| (i1 as f64 * dt, i2 as f64 * dt))
        .collect();
    let sidx = select_s(&corners, None).ok()?;
    let surf = PairSurface { pair, params };

    let terminal = mstar_terminal(&sidx, &surf).ok()?;

    // Axis values are pinned to one identically, inside and beyond coverage.
    let mut boundary_dev: f64 = 0.0;
    let l = sidx.len();
    let t1_far = sidx.corner_t1(l) * 1.5;
    let t2_far = sidx.corner_t2(1) * 1.5;
    for k in 1..=l {
        let b1 = mstar_eval(&sidx, &surf, sidx.corner_t1(k), 0.0).ok()?;
        let b2 = mstar_eval(&sidx, &surf, 0.0, sidx.corner_t2(k)).ok()?;
        boundary_dev = boundary_dev.max((b1 - 1.0).abs()).max((b2 - 1.0).abs());
    }
    let b1 = mstar_eval(&sidx, &surf, t1_far, 0.0).ok()?;
    let b2 = mstar_eval(&sidx, &surf, 0.0, t2_far).ok()?;
    boundary_dev = boundary_dev.max((b1 - 1.0).abs()).max((b2 - 1.0).abs());

    // On every retained exit rectangle corner the extension agrees with the
    // native two-time weight.
    let mut rectangle_dev: f64 = 0.0;
    for k in 1..=l {
        let (t1, t2) = (sidx.corner_t1(k), sidx.corner_t2(k));
        let native = surf.m(t1, t2).ok()?;
        let spliced = mstar_eval(&sidx, &surf, t1, t2).ok()?;
        rectangle_dev = rectangle_dev.max(rel_dev(native, spliced));
    }

    // Across every staircase grid line the two admissible bracket choices
    // agree: the extra telescoping factors cancel.
    let mut cell_dev: f64 = 0.0;
    for k in 1..=l {
        let t1 = sidx.corner_t1(k);
        let t2_probe = 0.5 * (sidx.corner_t2(k) + sidx.corner_t2(k + 1));
        if let Ok((_, k2)) = sidx.locate(t1, t2_probe) {
            let lo = mstar_eval_with(&sidx, &surf, t1, t2_probe, k, k2).ok()?;
            let hi = mstar_eval_with(&sidx, &surf, t1, t2_probe, k + 1, k2).ok()?;
            cell_dev = cell_dev.max(rel_dev(lo, hi));
        }
        let t2 = sidx.corner_t2(k);
        let t1_probe = 0.5 * (sidx.corner_t1(k) + sidx.corner_t1(k - 1));
        if let Ok((k1, _)) = sidx.locate(t1_probe, t2) {
            let lo = mstar_eval_with(&sidx, &surf, t1_probe, t2, k1, k).ok()?;
            let hi = mstar_eval_with(&sidx, &surf, t1_probe, t2, k1, k - 1).ok()?;
            cell_dev = cell_dev.max(rel_dev(lo, hi));
        }
    }

    Some(SpliceStats {
        terminal,
        boundary_dev,
        rectangle_dev,
        cell_dev,
    })
}

// ---------------------------------------------------------------------------
// Weight suite
// ---------------------------------------------------------------------------

/// Draw coupled pairs, evaluate the two-time weight at the hull exits, and
/// check that it averages to one, stays within a positive range, and
/// preserves the one-sided marginal law under reweighting.
pub fn run_martingale_test(cfg: &RunConfig) -> Result<SuiteOutcome, LabError> {
    cfg.validate()?;
    if cfg.hulls.is_empty() {
        return Err(LabError::Config("need at least one hull pair".into()));
    }
    let n = cfg.n_samples;
    let samples: Vec<Option<PairSample>> =
        par_map_samples(cfg.workers, n, |s| one_pair_sample(cfg, s, s == 0, false));
    let used: Vec<PairSample> = samples.into_iter().flatten().collect();

    let mut report = SuiteReport::new("martingale", cfg.kappa, cfg.seed, n);
    check_discards(&mut report, n, used.len())?;

    let ms: Vec<f64> = used.iter().map(|s| s.rec.m).collect();
    let (mean, se) = mean_and_stderr(&ms);
    report.push(
        TestReport::bounded("mean_weight_is_one", (mean - 1.0).abs(), 3.0 * se, ms.len())
            .with_estimate(mean, se),
    );
    report.push(TestReport::bounded(
        "mean_weight_stderr_budget",
        se,
        0.05,
        ms.len(),
    ));

    let min_m = ms.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_m = ms.iter().cloned().fold(0.0, f64::max);
    let violations = ms.iter().filter(|m| !(m.is_finite() && **m > 0.0)).count();
    report.push(
        TestReport::bounded("weights_positive_finite", violations as f64, 0.0, ms.len())
            .with_point_estimate(min_m),
    );
    report.push(
        TestReport::bounded("weights_bounded_above", max_m, WEIGHT_CEILING, ms.len())
            .with_point_estimate(max_m),
    );

    // Marginal preservation: the weighted first half of the side-1
    // observables must match the unweighted second half in distribution.
    let half = used.len() / 2;
    for (k, ob) in cfg.observables.iter().enumerate() {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for s in &used[..half] {
            if let Some(v) = s.obs1[k] {
                xs.push(v);
                ws.push(s.rec.m);
            }
        }
        let ys: Vec<f64> = used[half..].iter().filter_map(|s| s.obs1[k]).collect();
        let name = format!("marginal_{}_p_value", ob.label());
        match weighted_ks(&xs, &ws, &ys, cfg.alpha) {
            Ok(ks) => report.push(
                TestReport::at_least(&name, ks.p_value, cfg.alpha, xs.len() + ys.len())
                    .with_point_estimate(ks.statistic),
            ),
            Err(e) => {
                return Err(LabError::Numerical(format!(
                    "marginal comparison for {} failed: {e}",
                    ob.label()
                )))
            }
        }
    }

    let mut out = SuiteOutcome::new(report);
    out.records = used.iter().map(|s| s.rec).collect();
    if let Some((c1, c2)) = used.iter().find_map(|s| s.curves.clone()) {
        out.curves.push(("grown_from_left".into(), c1));
        out.curves.push(("grown_from_right".into(), c2));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splice suite
// ---------------------------------------------------------------------------

/// Audit the extended weight surface over a family of hull pairs: axis
/// values exactly one, agreement with the native weight on retained
/// rectangles, staircase-cell consistency, and terminal mean one.
pub fn run_mstar_test(cfg: &RunConfig) -> Result<SuiteOutcome, LabError> {
    cfg.validate()?;
    if cfg.hulls.len() < 2 {
        return Err(LabError::Config(
            "splice suite needs at least two hull pairs".into(),
        ));
    }
    let n = cfg.n_samples;
    let samples: Vec<Option<PairSample>> =
        par_map_samples(cfg.workers, n, |s| one_pair_sample(cfg, s, s == 0, true));
    let used: Vec<PairSample> = samples.into_iter().flatten().collect();

    let mut report = SuiteReport::new("mstar", cfg.kappa, cfg.seed, n);
    check_discards(&mut report, n, used.len())?;

    let stats: Vec<&SpliceStats> = used
        .iter()
        .filter_map(|s| s.splice.as_ref())
        .collect();
    let terminals: Vec<f64> = stats.iter().map(|s| s.terminal).collect();
    let (mean, se) = mean_and_stderr(&terminals);
    report.push(
        TestReport::bounded(
            "terminal_mean_is_one",
            (mean - 1.0).abs(),
            3.0 * se,
            terminals.len(),
        )
        .with_estimate(mean, se),
    );
    let boundary = stats.iter().map(|s| s.boundary_dev).fold(0.0, f64::max);
    let rectangle = stats.iter().map(|s| s.rectangle_dev).fold(0.0, f64::max);
    let cell = stats.iter().map(|s| s.cell_dev).fold(0.0, f64::max);
    report.push(TestReport::bounded(
        "axis_values_exactly_one",
        boundary,
        0.0,
        stats.len(),
    ));
    report.push(TestReport::bounded(
        "rectangle_agreement",
        rectangle,
        1e-9,
        stats.len(),
    ));
    report.push(TestReport::bounded(
        "cell_boundary_consistency",
        cell,
        1e-9,
        stats.len(),
    ));

    let mut out = SuiteOutcome::new(report);
    out.records = used.iter().map(|s| s.rec).collect();
    if let Some((c1, c2)) = used.iter().find_map(|s| s.curves.clone()) {
        out.curves.push(("grown_from_left".into(), c1));
        out.curves.push(("grown_from_right".into(), c2));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identity suite
// ---------------------------------------------------------------------------

/// Deterministic structural audits on a small fixed batch of pairs:
/// commutation of the two growths, the first-variation expansion of the
/// interaction term, agreement of the two interaction-integral routes, and
/// exactness at zero times.
pub fn run_identity_checks(cfg: &RunConfig) -> Result<SuiteOutcome, LabError> {
    cfg.validate()?;
    let params = RecordParams::standard(cfg.x1, cfg.x2);
    let gap = cfg.x2 - cfg.x1;
    let mid = 0.5 * (cfg.x1 + cfg.x2);

    let batch = 3usize;
    let mut report = SuiteReport::new("identities", cfg.kappa, cfg.seed, batch);
    let mut comm_max: f64 = 0.0;
    let mut value_max: f64 = 0.0;
    let mut slope_max: f64 = 0.0;
    let mut route_max: f64 = 0.0;
    let mut zero_weight_dev: f64 = 0.0;
    let mut zero_comm_dev: f64 = 0.0;
    let mut records = Vec::new();
    let mut curves = Vec::new();

    // First pass: build the fixed batch of pairs, so the probe points can be
    // placed at a fixed height that clears every sampled hull.
    let mut pairs = Vec::with_capacity(batch);
    for s in 0..batch as u64 {
        let driver = build_pair_driver(
            cfg.kappa,
            cfg.x1,
            cfg.x2,
            cfg.dt,
            cfg.n_steps,
            cfg.floor_guard,
            RngSpec::new(cfg.seed, s),
            Noise::Gaussian,
        )?;
        let h = [driver.sides[0].horizon(), driver.sides[1].horizon()];
        if h[0] < cfg.n_steps || h[1] < cfg.n_steps {
            return Err(LabError::Numerical(
                "driver stopped before the fixed identity horizon".into(),
            ));
        }
        pairs.push(EnsemblePair64::from_driver(&driver, h, None)?);
    }
    let hmax = pairs
        .iter()
        .flat_map(|p| {
            p.trace_of(Side::One)
                .points
                .iter()
                .chain(p.trace_of(Side::Two).points.iter())
        })
        .map(|z| z.im)
        .fold(0.0, f64::max);
    let base = (0.5 * gap).max(2.5 * hmax);
    let probes = [
        C64::new(mid, 1.2 * base),
        C64::new(cfg.x1 - 0.4 * gap, base),
        C64::new(cfg.x2 + 0.4 * gap, base),
        C64::new(mid - 0.25 * gap, 2.0 * base),
        C64::new(mid + 0.25 * gap, 2.8 * base),
    ];

    for (s, pair) in pairs.iter().enumerate() {
        let h = [pair.horizon(Side::One), pair.horizon(Side::Two)];
        let (i1, i2) = (h[0] / 2, h[1] / 2);

        for &z in &probes {
            comm_max = comm_max.max(pair.commutation_residual(i1, i2, z)?);
            zero_comm_dev = zero_comm_dev.max(pair.commutation_residual(0, 0, z)?);
        }

        let delta = ((1e-3 / cfg.dt).round() as usize).max(1);
        for side in [Side::One, Side::Two] {
            let (i_self, i_other) = match side {
                Side::One => (i1, i2),
                Side::Two => (i2, i1),
            };
            let res = pair.first_variation_check(side, i_self, i_other, delta)?;
            value_max = value_max.max(res.value_residual);
            slope_max = slope_max.max(res.slope_residual);
        }

        let one_d = pair.integral_i(i1, i2, cfg.n_eval)?;
        let two_d = pair.integral_i_2d(i1, i2, cfg.n_eval)?;
        route_max = route_max.max(rel_dev(one_d.value, two_d));

        let rec0 = pair.compute_m(i1, 0, &params)?;
        zero_weight_dev = zero_weight_dev.max((rec0.m - 1.0).abs());
        let rec0b = pair.compute_m(0, i2, &params)?;
        zero_weight_dev = zero_weight_dev.max((rec0b.m - 1.0).abs());

        let rec = pair.compute_m(i1, i2, &params)?;
        records.push(rec);
        if s == 0 {
            curves.push((
                "grown_from_left".to_string(),
                pair.trace_of(Side::One).points.clone(),
            ));
            curves.push((
                "grown_from_right".to_string(),
                pair.trace_of(Side::Two).points.clone(),
            ));
        }
    }

    report.push(TestReport::bounded(
        "commutation_residual",
        comm_max,
        1e-3,
        batch * probes.len(),
    ));
    report.push(TestReport::bounded(
        "first_variation_value_residual",
        value_max,
        0.05,
        batch * 2,
    ));
    report.push(TestReport::bounded(
        "first_variation_slope_residual",
        slope_max,
        0.05,
        batch * 2,
    ));
    report.push(TestReport::bounded(
        "integral_route_agreement",
        route_max,
        0.02,
        batch,
    ));
    report.push(TestReport::bounded(
        "zero_time_weight_exact",
        zero_weight_dev,
        0.0,
        batch * 2,
    ));
    report.push(TestReport::bounded(
        "zero_time_commutation_exact",
        zero_comm_dev,
        0.0,
        batch * probes.len(),
    ));

    // Refinement: on one Brownian path shared through block-summed draws,
    // halving the grid step must not worsen the two-route disagreement.
    let (coarse_res, fine_res) = integral_refinement_pair(cfg)?;
    report.push(
        TestReport::bounded(
            "integral_route_refinement",
            fine_res / coarse_res.max(1e-12),
            1.0,
            1,
        )
        .with_estimate(coarse_res, fine_res),
    );

    let mut out = SuiteOutcome::new(report);
    out.records = records;
    out.curves = curves;
    Ok(out)
}

/// Two-route interaction-integral residual on one pair, at the configured
/// grid step and at half that step, with coupled Brownian increments.
fn integral_refinement_pair(cfg: &RunConfig) -> Result<(f64, f64), LabError> {
    let n = cfg.n_steps;
    let mut sides_fine = Vec::new();
    let mut sides_coarse = Vec::new();
    for j in 0..2 {
        let spec = RngSpec::new(cfg.seed, 1000 + j as u64);
        let fine_draws: Vec<f64> = normal_draws(spec, Noise::Gaussian, 2 * n);
        let coarse_draws: Vec<f64> = fine_draws
            .chunks(2)
            .map(|c| (c[0] + c[1]) / std::f64::consts::SQRT_2)
            .collect();
        let (start, force) = if j == 0 {
            (cfg.x1, cfg.x2)
        } else {
            (cfg.x2, cfg.x1)
        };
        let fine = sle_kr_driver_with_draws(
            cfg.kappa,
            start,
            force,
            cfg.dt / 2.0,
            cfg.floor_guard,
            &fine_draws,
        )?;
        let coarse = sle_kr_driver_with_draws(
            cfg.kappa,
            start,
            force,
            cfg.dt,
            cfg.floor_guard,
            &coarse_draws,
        )?;
        if fine.horizon() < 2 * n || coarse.horizon() < n {
            return Err(LabError::Numerical(
                "refinement driver stopped before the fixed horizon".into(),
            ));
        }
        sides_fine.push(fine);
        sides_coarse.push(coarse);
    }
    let mk = |sides: Vec<sle_lab_core::sde::KrChain<f64>>, dt: f64| PairDriver {
        kappa: cfg.kappa,
        x: [cfg.x1, cfg.x2],
        dt,
        floor: cfg.floor_guard,
        sides: [sides[0].clone(), sides[1].clone()],
    };
    let coarse = mk(sides_coarse, cfg.dt);
    let fine = mk(sides_fine, cfg.dt / 2.0);
    let (i1, i2) = (n / 2, n / 2);

    let pc = EnsemblePair64::from_driver(&coarse, [n, n], None)?;
    let res_c = rel_dev(
        pc.integral_i(i1, i2, cfg.n_eval)?.value,
        pc.integral_i_2d(i1, i2, cfg.n_eval)?,
    );
    let pf = EnsemblePair64::from_driver(&fine, [2 * n, 2 * n], None)?;
    let res_f = rel_dev(
        pf.integral_i(2 * i1, 2 * i2, cfg.n_eval)?.value,
        pf.integral_i_2d(2 * i1, 2 * i2, cfg.n_eval)?,
    );
    Ok((res_c, res_f))
}

// ---------------------------------------------------------------------------
// Conditional-law coupling suite
// ---------------------------------------------------------------------------

struct CouplingSample {
    weight: f64,
    obs_a: Vec<Option<f64>>,
    obs_b: Vec<Option<f64>>,
    curves: Option<(Vec<C64>, Vec<C64>)>,
}

/// One reweighting-coupling draw: ensemble A is the side grown from `x1`
/// inside a coupled pair, weighted by the two-time weight at the hull exits;
/// ensemble B grows a fresh driver in the plane already mapped out by the
/// side grown from `x2`, and its trace is pulled back to the original plane.
fn one_coupling_sample(
    cfg: &RunConfig,
    n_total: usize,
    stream: u64,
    keep_curves: bool,
) -> Option<CouplingSample> {
    let (hull1, hull2) = hull_pair(cfg, cfg.hulls.len() - 1);
    let spec = RngSpec::new(cfg.seed, stream);
    let driver = build_pair_driver(
        cfg.kappa,
        cfg.x1,
        cfg.x2,
        cfg.dt,
        cfg.n_steps,
        cfg.floor_guard,
        spec,
        Noise::Gaussian,
    )
    .ok()?;
    let (tr1, ev1) = trace_until_exit(&driver.driving_path(1), &hull1).ok()?;
    let (_tr2, ev2) = trace_until_exit(&driver.driving_path(2), &hull2).ok()?;
    if !ev1.exited || !ev2.exited || ev1.index == 0 || ev2.index == 0 {
        return None;
    }
    let pair = EnsemblePair64::from_driver(&driver, [ev1.index, ev2.index], None).ok()?;
    let params = RecordParams::standard(cfg.x1, cfg.x2);
    let rec = pair.compute_m(ev1.index, ev2.index, &params).ok()?;
    if !rec.valid {
        return None;
    }
    let obs_a = eval_observables(cfg, &tr1.points);

    // Conditional growth: start from the image of x1 under the map that
    // removes the stopped side-2 hull, with the force point at its driving
    // value, using a stream disjoint from every pair stream.
    let i2 = ev2.index;
    let comp2 = pair.comp(Side::Two);
    let start = comp2.apply(C64::new(cfg.x1, 0.0)).ok()?.re;
    let force = pair.xi(Side::Two, i2);
    if !((start - force).abs() > cfg.floor_guard) {
        return None;
    }
    let cond_spec = RngSpec::new(cfg.seed, 2 * n_total as u64 + stream);
    let cond = sle_kr_driver(
        cfg.kappa,
        start,
        force,
        cfg.dt,
        cfg.n_steps,
        cfg.floor_guard,
        cond_spec,
        Noise::Gaussian,
    )
    .ok()?;
    let ctr = trace(&cond.driving_path()).ok()?;

    // Pull the conditional trace back to the original plane and stop it at
    // the first exit from the hull at x1.
    let mut back = Vec::new();
    let mut exited = false;
    for &w in &ctr.points {
        let z = comp2.prefix_invert(i2, w).ok()?;
        back.push(z);
        if !hull1.contains(z) {
            exited = true;
            break;
        }
    }
    if !exited {
        return None;
    }
    let obs_b = eval_observables(cfg, &back);

    Some(CouplingSample {
        weight: rec.m,
        obs_a,
        obs_b,
        curves: keep_curves.then(|| (tr1.points.clone(), back)),
    })
}

/// Weighted two-sample comparison of the directly grown ensemble against the
/// conditionally grown one, plus an unweighted null at zero far-side time.
pub fn run_coupling_test(cfg: &RunConfig) -> Result<SuiteOutcome, LabError> {
    cfg.validate()?;
    if cfg.hulls.is_empty() {
        return Err(LabError::Config("need at least one hull pair".into()));
    }
    let n = cfg.n_samples;
    let samples: Vec<Option<CouplingSample>> =
        par_map_samples(cfg.workers, n, |s| one_coupling_sample(cfg, n, s, s == 0));
    let used: Vec<CouplingSample> = samples.into_iter().flatten().collect();

    let mut report = SuiteReport::new("coupling", cfg.kappa, cfg.seed, n);
    check_discards(&mut report, n, used.len())?;

    for (k, ob) in cfg.observables.iter().enumerate() {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for s in &used {
            if let Some(v) = s.obs_a[k] {
                xs.push(v);
                ws.push(s.weight);
            }
        }
        let ys: Vec<f64> = used.iter().filter_map(|s| s.obs_b[k]).collect();
        let label = ob.label();
        match weighted_ks(&xs, &ws, &ys, cfg.alpha) {
            Ok(ks) => {
                report.push(
                    TestReport::at_least(
                        &format!("coupled_{label}_p_value"),
                        ks.p_value,
                        cfg.alpha,
                        xs.len() + ys.len(),
                    )
                    .with_point_estimate(ks.statistic),
                );
                report.push(TestReport::at_least(
                    &format!("coupled_{label}_effective_samples"),
                    ks.n_eff,
                    MIN_EFF_SAMPLES,
                    xs.len(),
                ));
            }
            Err(e) => {
                return Err(LabError::Numerical(format!(
                    "coupled comparison for {label} failed: {e}"
                )))
            }
        }
    }

    // Null with zero far-side time: the conditional construction reduces to
    // a fresh driver from x1, so the unweighted side-1 observables must
    // match fresh independent draws of the same stopped growth.
    let (hull1, _) = hull_pair(cfg, cfg.hulls.len() - 1);
    let null_samples: Vec<Option<Vec<Option<f64>>>> = par_map_samples(cfg.workers, n, |s| {
        let spec = RngSpec::new(cfg.seed, 3 * n as u64 + s);
        let chain = sle_kr_driver(
            cfg.kappa,
            cfg.x1,
            cfg.x2,
            cfg.dt,
            cfg.n_steps,
            cfg.floor_guard,
            spec,
            Noise::Gaussian,
        )
        .ok()?;
        let (tr, ev) = trace_until_exit(&chain.driving_path(), &hull1).ok()?;
        if !ev.exited || ev.index == 0 {
            return None;
        }
        Some(eval_observables(cfg, &tr.points))
    });
    let null_used: Vec<Vec<Option<f64>>> = null_samples.into_iter().flatten().collect();

    for (k, ob) in cfg.observables.iter().enumerate() {
        let xs: Vec<f64> = used.iter().filter_map(|s| s.obs_a[k]).collect();
        let ys: Vec<f64> = null_used.iter().filter_map(|o| o[k]).collect();
        let label = ob.label();
        match ks_two_sample(&xs, &ys, cfg.alpha) {
            Ok(ks) => report.push(
                TestReport::at_least(
                    &format!("null_{label}_p_value"),
                    ks.p_value,
                    cfg.alpha,
                    xs.len() + ys.len(),
                )
                .with_point_estimate(ks.statistic),
            ),
            Err(e) => {
                return Err(LabError::Numerical(format!(
                    "null comparison for {label} failed: {e}"
                )))
            }
        }
    }

    let mut out = SuiteOutcome::new(report);
    if let Some((a, b)) = used.iter().find_map(|s| s.curves.clone()) {
        out.curves.push(("grown_from_left".into(), a));
        out.curves.push(("conditional_pulled_back".into(), b));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reversal suite
// ---------------------------------------------------------------------------

/// Endpoint-to-endpoint draws: grow from one endpoint toward the other until
/// the gap process hits its floor, mirror the ensemble grown from the far
/// endpoint, and compare geometric observables between the two directions.
pub fn run_reversibility_test(cfg: &RunConfig) -> Result<SuiteOutcome, LabError> {
    cfg.validate()?;
    cfg.require_kappa_at_most_four()?;
    let n = cfg.n_samples;
    let n_r = (cfg.t_max / cfg.dt).round().max(1.0) as usize;

    let one_end = |start: f64, force: f64, base: u64, s: u64| -> Option<Vec<C64>> {
        let spec = RngSpec::new(cfg.seed, base + s);
        let chain = sle_kr_driver(
            cfg.kappa,
            start,
            force,
            cfg.dt,
            n_r,
            cfg.floor_guard,
            spec,
            Noise::Gaussian,
        )
        .ok()?;
        if !chain.stopped {
            return None;
        }
        let tr = trace(&chain.driving_path()).ok()?;
        Some(tr.points)
    };

    let forward: Vec<Option<Vec<C64>>> =
        par_map_samples(cfg.workers, n, |s| one_end(cfg.x1, cfg.x2, 0, s));
    let reversed: Vec<Option<Vec<C64>>> =
        par_map_samples(cfg.workers, n, |s| one_end(cfg.x2, cfg.x1, n as u64, s));
    let forward2: Vec<Option<Vec<C64>>> =
        par_map_samples(cfg.workers, n, |s| one_end(cfg.x1, cfg.x2, 2 * n as u64, s));

    let mirror = |points: Vec<C64>| -> Vec<C64> {
        points
            .into_iter()
            .map(|z| C64::new(cfg.x1 + cfg.x2 - z.re, z.im))
            .collect()
    };
    let f_curves: Vec<Vec<C64>> = forward.into_iter().flatten().collect();
    let r_curves: Vec<Vec<C64>> = reversed.into_iter().flatten().map(mirror).collect();
    let f2_curves: Vec<Vec<C64>> = forward2.into_iter().flatten().collect();

    let mut report = SuiteReport::new("reversibility", cfg.kappa, cfg.seed, n);
    let completed = f_curves.len().min(r_curves.len()).min(f2_curves.len());
    report.n_discarded = 3 * n - (f_curves.len() + r_curves.len() + f2_curves.len());
    let share = f_curves.len().min(r_curves.len()) as f64 / n as f64;
    report.push(TestReport::at_least(
        "completion_share",
        share,
        MIN_COMPLETION_SHARE,
        completed,
    ));
    if share < MIN_COMPLETION_SHARE {
        return Err(LabError::Numerical(format!(
            "completion share {share:.3} below {MIN_COMPLETION_SHARE}; raise t_max"
        )));
    }

    let eval_all = |curves: &[Vec<C64>], k: usize| -> Vec<f64> {
        curves
            .iter()
            .filter_map(|c| cfg.observables[k].eval(c))
            .collect()
    };
    for (k, ob) in cfg.observables.iter().enumerate() {
        let xs = eval_all(&f_curves, k);
        let ys = eval_all(&r_curves, k);
        let zs = eval_all(&f2_curves, k);
        let label = ob.label();
        match ks_two_sample(&xs, &ys, cfg.alpha) {
            Ok(ks) => report.push(
                TestReport::at_least(
                    &format!("reversal_{label}_p_value"),
                    ks.p_value,
                    cfg.alpha,
                    xs.len() + ys.len(),
                )
                .with_point_estimate(ks.statistic),
            ),
            Err(e) => {
                return Err(LabError::Numerical(format!(
                    "reversal comparison for {label} failed: {e}"
                )))
            }
        }
        match ks_two_sample(&xs, &zs, cfg.alpha) {
            Ok(ks) => report.push(
                TestReport::at_least(
                    &format!("null_{label}_p_value"),
                    ks.p_value,
                    cfg.alpha,
                    xs.len() + zs.len(),
                )
                .with_point_estimate(ks.statistic),
            ),
            Err(e) => {
                return Err(LabError::Numerical(format!(
                    "null comparison for {label} failed: {e}"
                )))
            }
        }
    }

    let mut out = SuiteOutcome::new(report);
    if let (Some(f), Some(r)) = (f_curves.first(), r_curves.first()) {
        out.curves.push(("grown_from_left".into(), f.clone()));
        out.curves
            .push(("grown_from_right_mirrored".into(), r.clone()));
    }
    Ok(out)
}
