//! Experiment harness for the chordal Loewner laboratory: run configuration,
//! geometric observables, statistical suites, and report serialization.
//!
//! The numerical machinery itself lives in `sle_lab_core`; this crate turns
//! it into repeatable experiments with deterministic seeding, pass/fail
//! reports, and artifact export for the command-line front end.

pub mod config;
pub mod experiments;
pub mod observable;
pub mod report;
pub mod svg;

pub use config::RunConfig;
pub use experiments::{LabError, SuiteOutcome};
pub use report::{SuiteReport, TestReport};
