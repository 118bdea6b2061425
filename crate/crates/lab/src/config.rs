//! Flat key=value run configuration.
//!
//! The format is UTF-8 lines of `key = value` with `#` comments and blank
//! lines; unknown keys are rejected so typos fail loudly.  Defaults marked
//! "derived" scale with the endpoint gap `x2 - x1` and are resolved after
//! the whole file is read.

use crate::observable::Observable;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kappa: f64,
    pub x1: f64,
    pub x2: f64,
    /// Capacity step of the Euler grid (derived default `1e-4 (x2-x1)^2`).
    pub dt: f64,
    /// Number of grid steps in the simulation horizon.
    pub n_steps: usize,
    /// Stop guard for the gap process (derived default `1e-3 (x2-x1)`).
    pub floor_guard: f64,
    /// Minimum hull separation (derived default `0.05 (x2-x1)`).
    pub sep_min: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Side length of the coarse index grid for weight-surface exports.
    pub n_eval: usize,
    /// Significance level of the statistical pass thresholds.
    pub alpha: f64,
    /// Capacity horizon for free-running (endpoint-to-endpoint) suites.
    pub t_max: f64,
    /// Half-disk radius pairs `(r at x1, r at x2)`, one per hull pair.
    pub hulls: Vec<(f64, f64)>,
    pub observables: Vec<Observable>,
    pub workers: usize,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Raw option set while keys are being read; resolved by `finish`.
#[derive(Default)]
struct Partial {
    kappa: Option<f64>,
    x1: Option<f64>,
    x2: Option<f64>,
    dt: Option<f64>,
    n_steps: Option<usize>,
    floor_guard: Option<f64>,
    sep_min: Option<f64>,
    n_samples: Option<usize>,
    seed: Option<u64>,
    n_eval: Option<usize>,
    alpha: Option<f64>,
    t_max: Option<f64>,
    hulls: Option<Vec<(f64, f64)>>,
    observables: Option<Vec<String>>,
    workers: Option<usize>,
}

fn parse_num<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| ConfigError(format!("bad value for {key}: {raw:?}")))
}

fn parse_hulls(raw: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for item in raw.split_whitespace() {
        let Some((a, b)) = item.split_once(':') else {
            return err(format!("hull pair must be r1:r2, got {item:?}"));
        };
        out.push((parse_num("hulls", a)?, parse_num("hulls", b)?));
    }
    if out.is_empty() {
        return err("hulls must list at least one r1:r2 pair");
    }
    Ok(out)
}

impl Partial {
    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "kappa" => self.kappa = Some(parse_num(key, raw)?),
            "x1" => self.x1 = Some(parse_num(key, raw)?),
            "x2" => self.x2 = Some(parse_num(key, raw)?),
            "dt" => self.dt = Some(parse_num(key, raw)?),
            "n_steps" => self.n_steps = Some(parse_num(key, raw)?),
            "floor_guard" => self.floor_guard = Some(parse_num(key, raw)?),
            "sep_min" => self.sep_min = Some(parse_num(key, raw)?),
            "n_samples" => self.n_samples = Some(parse_num(key, raw)?),
            "seed" => self.seed = Some(parse_num(key, raw)?),
            "n_eval" => self.n_eval = Some(parse_num(key, raw)?),
            "alpha" => self.alpha = Some(parse_num(key, raw)?),
            "t_max" => self.t_max = Some(parse_num(key, raw)?),
            "hulls" => self.hulls = Some(parse_hulls(raw)?),
            "observables" => {
                self.observables =
                    Some(raw.split(',').map(|s| s.trim().to_string()).collect())
            }
            "workers" => self.workers = Some(parse_num(key, raw)?),
            other => return err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    fn finish(self) -> Result<RunConfig> {
        let x1 = self.x1.unwrap_or(0.0);
        let x2 = self.x2.unwrap_or(1.0);
        let gap = x2 - x1;
        let mid = x1 + gap / 2.0;
        let observables = self
            .observables
            .unwrap_or_else(|| vec!["max_height".into()])
            .iter()
            .map(|s| Observable::parse(s, mid).map_err(ConfigError))
            .collect::<Result<Vec<_>>>()?;
        let cfg = RunConfig {
            kappa: self.kappa.unwrap_or(8.0 / 3.0),
            x1,
            x2,
            dt: self.dt.unwrap_or(1e-4 * gap * gap),
            n_steps: self.n_steps.unwrap_or(600),
            floor_guard: self.floor_guard.unwrap_or(1e-3 * gap),
            sep_min: self.sep_min.unwrap_or(0.05 * gap.abs()),
            n_samples: self.n_samples.unwrap_or(2000),
            seed: self.seed.unwrap_or(0),
            n_eval: self.n_eval.unwrap_or(20),
            alpha: self.alpha.unwrap_or(0.01),
            t_max: self.t_max.unwrap_or(1.5 * gap * gap),
            hulls: self.hulls.unwrap_or_else(|| vec![(0.3 * gap, 0.3 * gap)]),
            observables,
            workers: self.workers.unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Built-in defaults (the empty document).
    pub fn default_config() -> Self {
        Partial::default().finish().expect("defaults are valid")
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut partial = Partial::default();
        let mut seen = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return err(format!("line {}: expected key = value", lineno + 1));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return err(format!("line {}: duplicate key {key:?}", lineno + 1));
            }
            partial.set(key, raw)?;
        }
        partial.finish()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return err(format!("kappa must be > 0, got {}", self.kappa));
        }
        if !(self.x1 < self.x2) {
            return err(format!("need x1 < x2, got {} >= {}", self.x1, self.x2));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return err(format!("dt must be > 0, got {}", self.dt));
        }
        if self.n_steps == 0 {
            return err("n_steps must be >= 1");
        }
        if !(self.floor_guard > 0.0) {
            return err(format!("floor_guard must be > 0, got {}", self.floor_guard));
        }
        if !(self.t_max > 0.0) {
            return err(format!("t_max must be > 0, got {}", self.t_max));
        }
        if self.n_samples == 0 {
            return err("n_samples must be >= 1");
        }
        if self.n_eval < 2 {
            return err("n_eval must be >= 2");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if self.workers == 0 {
            return err("workers must be >= 1");
        }
        if self.observables.is_empty() {
            return err("at least one observable is required");
        }
        let gap = self.x2 - self.x1;
        for &(r1, r2) in &self.hulls {
            if !(r1 > 0.0) || !(r2 > 0.0) {
                return err(format!("hull radii must be > 0, got {r1}:{r2}"));
            }
            if r1 + r2 + self.sep_min > gap {
                return err(format!(
                    "hull pair {r1}:{r2} violates the separation requirement: \
                     {r1} + {r2} + sep_min {} exceeds x2 - x1 = {gap}",
                    self.sep_min
                ));
            }
        }
        Ok(())
    }

    /// Requirement shared by the coupling and reversibility suites.
    pub fn require_kappa_at_most_four(&self) -> Result<()> {
        if self.kappa > 4.0 {
            return err(format!(
                "this suite requires kappa in (0, 4], got {}",
                self.kappa
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_scaled_defaults() {
        let cfg = RunConfig::from_str("").unwrap();
        assert_eq!(cfg.x1, 0.0);
        assert_eq!(cfg.x2, 1.0);
        assert_eq!(cfg.dt, 1e-4);
        assert_eq!(cfg.floor_guard, 1e-3);
        assert_eq!(cfg.sep_min, 0.05);
        assert_eq!(cfg.hulls, vec![(0.3, 0.3)]);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let cfg = RunConfig::from_str(
            "# a comment\n\n  kappa = 3.0  # trailing comment\nseed=9\nhulls = 0.2:0.25 0.3:0.3\n",
        )
        .unwrap();
        assert_eq!(cfg.kappa, 3.0);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.hulls.len(), 2);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(RunConfig::from_str("kapa = 3.0").is_err());
        assert!(RunConfig::from_str("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::from_str("just a line").is_err());
    }

    #[test]
    fn physical_validation_fires() {
        assert!(RunConfig::from_str("kappa = -1").is_err());
        assert!(RunConfig::from_str("x1 = 2.0\nx2 = 1.0").is_err());
        assert!(RunConfig::from_str("dt = 0").is_err());
        assert!(RunConfig::from_str("hulls = 0.5:0.6").is_err()); // overlap
        assert!(RunConfig::from_str("observables = no_such").is_err());
    }

    #[test]
    fn derived_defaults_scale_with_the_gap() {
        let cfg = RunConfig::from_str("x1 = 0.0\nx2 = 2.0\nhulls = 0.5:0.5").unwrap();
        assert_eq!(cfg.dt, 4e-4);
        assert_eq!(cfg.floor_guard, 2e-3);
        assert_eq!(cfg.sep_min, 0.1);
    }
}
