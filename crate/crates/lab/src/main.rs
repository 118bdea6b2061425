//! Command-line front end for the experiment suites.
//!
//! Exit codes: `0` all statistical checks passed, `1` at least one check
//! failed, `2` usage or configuration error, `3` numerical abort.

use sle_lab::config::RunConfig;
use sle_lab::experiments::{
    run_coupling_test, run_identity_checks, run_martingale_test, run_mstar_test,
    run_reversibility_test, LabError, SuiteOutcome,
};
use sle_lab::report::{log_wall_time, martingale_grid_csv, trace_csv};
use sle_lab::svg::{render, Viewport};
use sle_lab_core::loewner::trace;
use sle_lab_core::sde::{build_pair_driver, Noise, RngSpec};
use std::path::{Path, PathBuf};
use std::time::Instant;

const USAGE: &str = "\
sle-lab <subcommand> [options]

Subcommands:
  trace          Draw one coupled pair of traces and export them
  martingale     Two-time weight: mean one, positivity, marginal preservation
  mstar          Extended weight surface over a hull family
  identities     Deterministic structural audits (commutation, variation,
                 interaction-integral routes)
  coupling       Direct growth vs reweighted conditional growth
  reversibility  Ensembles grown from opposite endpoints, one mirrored

Options:
  --config PATH    Key = value configuration file
  --seed N         Override the random seed
  --samples N      Override the sample count
  --kappa X        Override the diffusivity
  --out DIR        Output directory for reports and artifacts (default .)
  --format F       Report format: json (default) or csv
  --svg            Also render an SVG of representative curves
  --workers N      Worker threads (default: SLE_LAB_WORKERS or 1)
  --help           Show this message
";

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Json,
    Csv,
}

struct Cli {
    command: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<usize>,
    kappa: Option<f64>,
    out: PathBuf,
    format: Format,
    svg: bool,
    workers: Option<usize>,
}

fn parse_args(args: &[String]) -> Result<Cli, LabError> {
    if args.is_empty() {
        return Err(LabError::Config(format!("missing subcommand\n{USAGE}")));
    }
    if args.iter().any(|a| a == "--help" || a == "-h") {
        return Ok(Cli {
            command: "help".into(),
            config: None,
            seed: None,
            samples: None,
            kappa: None,
            out: PathBuf::from("."),
            format: Format::Json,
            svg: false,
            workers: None,
        });
    }
    let command = args[0].clone();
    if command.starts_with('-') {
        return Err(LabError::Config(format!(
            "expected a subcommand, got flag {command:?}\n{USAGE}"
        )));
    }
    let mut cli = Cli {
        command,
        config: None,
        seed: None,
        samples: None,
        kappa: None,
        out: PathBuf::from("."),
        format: Format::Json,
        svg: false,
        workers: None,
    };
    let mut it = args[1..].iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<&String, LabError> {
            it.next()
                .ok_or_else(|| LabError::Config(format!("flag {name} needs a value")))
        };
        match flag.as_str() {
            "--config" => cli.config = Some(PathBuf::from(value("--config")?)),
            "--seed" => {
                cli.seed = Some(parse_flag("--seed", value("--seed")?)?);
            }
            "--samples" => {
                cli.samples = Some(parse_flag("--samples", value("--samples")?)?);
            }
            "--kappa" => {
                cli.kappa = Some(parse_flag("--kappa", value("--kappa")?)?);
            }
            "--out" => cli.out = PathBuf::from(value("--out")?),
            "--format" => {
                cli.format = match value("--format")?.as_str() {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    other => {
                        return Err(LabError::Config(format!(
                            "unknown format {other:?}; expected json or csv"
                        )))
                    }
                }
            }
            "--svg" => cli.svg = true,
            "--workers" => {
                cli.workers = Some(parse_flag("--workers", value("--workers")?)?);
            }
            other => {
                return Err(LabError::Config(format!(
                    "unknown flag {other:?}\n{USAGE}"
                )))
            }
        }
    }
    Ok(cli)
}

fn parse_flag<T: std::str::FromStr>(name: &str, raw: &str) -> Result<T, LabError> {
    raw.parse()
        .map_err(|_| LabError::Config(format!("flag {name} got unparsable value {raw:?}")))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default_config(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.samples {
        cfg.n_samples = n;
    }
    if let Some(kappa) = cli.kappa {
        cfg.kappa = kappa;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    } else if let Ok(raw) = std::env::var("SLE_LAB_WORKERS") {
        cfg.workers = raw.parse().map_err(|_| {
            LabError::Config(format!("SLE_LAB_WORKERS got unparsable value {raw:?}"))
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, content: &str) -> Result<(), LabError> {
    std::fs::write(path, content)
        .map_err(|e| LabError::Config(format!("cannot write {}: {e}", path.display())))
}

fn render_curves(cfg: &RunConfig, curves: &[(String, Vec<sle_lab_core::C64>)]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let viewport = Viewport::standard(cfg.x1, cfg.x2);
    let layers: Vec<(&[sle_lab_core::C64], &str)> = curves
        .iter()
        .enumerate()
        .map(|(k, (_, pts))| (pts.as_slice(), COLORS[k % COLORS.len()]))
        .collect();
    render(&viewport, &layers)
}

fn emit_outcome(
    cli: &Cli,
    cfg: &RunConfig,
    outcome: &SuiteOutcome,
    wall: std::time::Duration,
) -> Result<i32, LabError> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| LabError::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    match cli.format {
        Format::Json => write_file(&cli.out.join("report.json"), &outcome.report.to_json())?,
        Format::Csv => write_file(&cli.out.join("report.csv"), &outcome.report.to_csv())?,
    }
    if !outcome.records.is_empty() {
        write_file(
            &cli.out.join("records.csv"),
            &martingale_grid_csv(&outcome.records),
        )?;
    }
    if cli.svg && !outcome.curves.is_empty() {
        write_file(
            &cli.out.join("curves.svg"),
            &render_curves(cfg, &outcome.curves),
        )?;
    }
    log_wall_time(&cli.out, &outcome.report.suite, wall);

    for t in &outcome.report.tests {
        let mark = if t.pass { "pass" } else { "FAIL" };
        println!(
            "[{mark}] {}: statistic {:.6e} vs threshold {:.6e} (n={})",
            t.name, t.statistic, t.threshold, t.n_used
        );
    }
    let verdict = if outcome.report.pass { "PASS" } else { "FAIL" };
    println!(
        "suite {} kappa={} seed={}: {verdict} ({} samples, {} discarded)",
        outcome.report.suite,
        outcome.report.kappa,
        outcome.report.seed,
        outcome.report.n_samples,
        outcome.report.n_discarded
    );
    Ok(if outcome.report.pass { 0 } else { 1 })
}

fn run_trace(cli: &Cli, cfg: &RunConfig) -> Result<i32, LabError> {
    let started = Instant::now();
    let driver = build_pair_driver(
        cfg.kappa,
        cfg.x1,
        cfg.x2,
        cfg.dt,
        cfg.n_steps,
        cfg.floor_guard,
        RngSpec::new(cfg.seed, 0),
        Noise::Gaussian,
    )?;
    let left = trace(&driver.driving_path(1))?;
    let right = trace(&driver.driving_path(2))?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| LabError::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    write_file(&cli.out.join("trace_left.csv"), &trace_csv(&left))?;
    write_file(&cli.out.join("trace_right.csv"), &trace_csv(&right))?;
    if cli.svg {
        let curves = vec![
            ("grown_from_left".to_string(), left.points.clone()),
            ("grown_from_right".to_string(), right.points.clone()),
        ];
        write_file(&cli.out.join("curves.svg"), &render_curves(cfg, &curves))?;
    }
    log_wall_time(&cli.out, "trace", started.elapsed());
    println!(
        "trace kappa={} seed={}: {} + {} points written to {}",
        cfg.kappa,
        cfg.seed,
        left.len(),
        right.len(),
        cli.out.display()
    );
    Ok(0)
}

fn run(args: &[String]) -> Result<i32, LabError> {
    let cli = parse_args(args)?;
    if cli.command == "help" {
        print!("{USAGE}");
        return Ok(0);
    }
    let cfg = resolve_config(&cli)?;
    if cli.command == "trace" {
        return run_trace(&cli, &cfg);
    }
    let started = Instant::now();
    let outcome = match cli.command.as_str() {
        "martingale" => run_martingale_test(&cfg)?,
        "mstar" => run_mstar_test(&cfg)?,
        "identities" => run_identity_checks(&cfg)?,
        "coupling" => run_coupling_test(&cfg)?,
        "reversibility" => run_reversibility_test(&cfg)?,
        other => {
            return Err(LabError::Config(format!(
                "unknown subcommand {other:?}\n{USAGE}"
            )))
        }
    };
    emit_outcome(&cli, &cfg, &outcome, started.elapsed())
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = match run(&args) {
        Ok(code) => code,
        Err(LabError::Config(msg)) => {
            eprintln!("ERROR: {msg}");
            2
        }
        Err(LabError::Numerical(msg)) => {
            eprintln!("ERROR: {msg}");
            3
        }
    };
    std::process::exit(code);
}
