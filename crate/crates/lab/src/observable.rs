//! Scalar summaries of a trace. Every observable is a function of the
//! trace's point set alone, so it is invariant under reparametrization and
//! under reversal of the curve — the property that makes two ensembles grown
//! from opposite ends comparable.

use sle_lab_core::C64;
use std::fmt;

/// Half-width of the acceptance window used by windowed observables: one
/// local grid cell, taken as the largest gap between consecutive sample
/// points so the window is never finer than the curve's own resolution.
fn cell_size(points: &[C64]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1] - w[0]).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Largest imaginary part over the point set.
    MaxHeight,
    /// Smallest imaginary part among points whose real part lies within one
    /// grid cell of `mid`; undefined if the curve never visits that strip.
    MidlineMinHeight { mid: f64 },
    /// Smallest real part among points whose imaginary part lies within one
    /// grid cell of `y0`; undefined if the curve never reaches that height.
    LineCrossLeftmost { y0: f64 },
}

impl Observable {
    /// Parse `max_height`, `midline_min_height`, or `line_cross_leftmost:Y`.
    /// The midline observable takes its center from the configuration, so it
    /// is spelled without an argument.
    pub fn parse(text: &str, mid: f64) -> Result<Self, String> {
        let t = text.trim();
        if t == "max_height" {
            return Ok(Observable::MaxHeight);
        }
        if t == "midline_min_height" {
            return Ok(Observable::MidlineMinHeight { mid });
        }
        if let Some(rest) = t.strip_prefix("line_cross_leftmost:") {
            let y0: f64 = rest
                .trim()
                .parse()
                .map_err(|_| format!("bad height in observable {t:?}"))?;
            if !(y0 > 0.0) {
                return Err(format!("observable height must be > 0, got {y0}"));
            }
            return Ok(Observable::LineCrossLeftmost { y0 });
        }
        Err(format!(
            "unknown observable {t:?} (expected max_height, midline_min_height, \
             or line_cross_leftmost:Y)"
        ))
    }

    /// Evaluate on a point set; `None` when the defining window is never
    /// visited (callers count these as discards).
    pub fn eval(&self, points: &[C64]) -> Option<f64> {
        if points.is_empty() {
            return None;
        }
        match *self {
            Observable::MaxHeight => points.iter().map(|p| p.im).reduce(f64::max),
            Observable::MidlineMinHeight { mid } => {
                let cell = cell_size(points);
                points
                    .iter()
                    .filter(|p| (p.re - mid).abs() <= cell)
                    .map(|p| p.im)
                    .reduce(f64::min)
            }
            Observable::LineCrossLeftmost { y0 } => {
                let cell = cell_size(points);
                points
                    .iter()
                    .filter(|p| (p.im - y0).abs() <= cell)
                    .map(|p| p.re)
                    .reduce(f64::min)
            }
        }
    }

    /// Short machine-friendly label used in reports.
    pub fn label(&self) -> String {
        match *self {
            Observable::MaxHeight => "max_height".into(),
            Observable::MidlineMinHeight { .. } => "midline_min_height".into(),
            Observable::LineCrossLeftmost { y0 } => format!("line_cross_leftmost:{y0}"),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
