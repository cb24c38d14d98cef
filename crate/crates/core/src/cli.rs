// Copyright 2026 The wfriend Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Command-line front end: `run`, `sweep` and `verify`.
//!
//! Exit codes: 0 on success, 2 for unusable flags, 1 for failures at run time
//! (including a failed self-test).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dilation::PLUS;
use crate::error::Error;
use crate::protocol::{
    run_protocol, ComparisonReport, ProtocolConfig, Rule, TrialLog, Variant, DEFAULT_SEED, DEFAULT_TRIALS,
};
use crate::verify::{self, VerifyOptions};

/// Caps the number of worker threads used for trials.
pub const THREADS_ENV: &str = "WFRIEND_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wfriend", version, about = "Wigner's-friend protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the protocol once and write the trial log and comparison report.
    Run(RunArgs),
    /// Run the protocol for every (dimension, rule) pair and write one CSV.
    Sweep(SweepArgs),
    /// Run the property self-test.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Clone)]
struct Common {
    #[arg(long, default_value_t = DEFAULT_TRIALS, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value = "messages-out", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, default_value = "wfriend-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    dimension: u64,
    #[arg(long, default_value = "standard", value_parser = parse_rule)]
    rule: Rule,
    /// Comma-separated dilation phases in radians, one per system level.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Comma-separated system dimensions.
    #[arg(long, required = true, value_delimiter = ',', num_args = 1.., value_parser = clap::value_parser!(u64).range(1..))]
    dimensions: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "standard,pair,modified", value_parser = parse_rule)]
    rules: Vec<Rule>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Test hook: measure with a phase offset (radians) on the first outcome
    /// that the dilation does not have.
    #[arg(long, hide = true, allow_hyphen_values = true)]
    inject_phase_mismatch: Option<f64>,
}

fn parse_rule(s: &str) -> Result<Rule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    version: &'static str,
    started_at: String,
    finished_at: String,
    config: serde_json::Value,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct RunOutput<'a> {
    config: &'a ProtocolConfig,
    report: &'a ComparisonReport,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    d: usize,
    rule: String,
    variant: String,
    #[serde(rename = "N")]
    n: u64,
    seed: u64,
    predicted_plus: f64,
    observed_plus: f64,
    tvd: f64,
    chi2: f64,
    p_value: f64,
}

#[derive(Debug, Serialize)]
struct TrialRow<'a> {
    round: u64,
    friend_outcome: &'a str,
    predicted_plus: f64,
    predicted_minus: f64,
    wigner_outcome: &'a str,
}

/// A failure after the flags were accepted.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // A pool may already exist when called more than once in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_manifest(dir: &Path, mut manifest: RunManifest) -> Result<PathBuf, Failure> {
    let path = dir.join("manifest.json");
    manifest.files.push(path.display().to_string());
    manifest.finished_at = now();
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

fn write_trials(path: &Path, log: &TrialLog) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &log.records {
        w.serialize(TrialRow {
            round: r.round,
            friend_outcome: &r.friend_outcome,
            predicted_plus: r.prediction.entries()[0].probability,
            predicted_minus: r.prediction.entries()[1].probability,
            wigner_outcome: &r.wigner_outcome,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let started_at = now();
    let config = ProtocolConfig {
        dimension: usize::try_from(args.dimension).map_err(|e| Failure::Usage(e.to_string()))?,
        trials: args.common.trials,
        seed: args.common.seed,
        rule: args.rule,
        variant: args.common.variant,
        phases: args.phases,
    };
    config.validate()?;
    let (log, report) = run_protocol(&config)?;

    let dir = &args.common.out;
    fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    fs::write(
        &report_path,
        serde_json::to_string_pretty(&RunOutput {
            config: &config,
            report: &report,
        })? + "\n",
    )?;
    let trials_path = dir.join("trials.csv");
    write_trials(&trials_path, &log)?;
    let manifest = write_manifest(
        dir,
        RunManifest {
            command: "run".into(),
            version: env!("CARGO_PKG_VERSION"),
            started_at,
            finished_at: String::new(),
            config: serde_json::to_value(&config)?,
            files: vec![report_path.display().to_string(), trials_path.display().to_string()],
        },
    )?;

    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "d={} rule={} variant={} N={} seed={}",
        config.dimension, config.rule, config.variant, config.trials, config.seed
    )?;
    writeln!(out, "list_a={}", report.list_a_summary)?;
    writeln!(out, "list_b={}", report.list_b_summary)?;
    writeln!(out, "tvd={}", report.tvd)?;
    writeln!(
        out,
        "chi2={} dof={} p_value={:e}",
        report.chi2_statistic, report.chi2_dof, report.p_value
    )?;
    writeln!(out, "open_lab={}", report.open_lab_outcome)?;
    writeln!(out, "manifest={}", manifest.display())?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let started_at = now();
    if args.dimensions.is_empty() || args.rules.is_empty() {
        return Err(Failure::Usage("sweep needs at least one dimension and one rule".into()));
    }
    let dir = &args.common.out;
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut configs = Vec::new();
    for &d in &args.dimensions {
        for &rule in &args.rules {
            let config = ProtocolConfig {
                dimension: usize::try_from(d).map_err(|e| Failure::Usage(e.to_string()))?,
                trials: args.common.trials,
                seed: args.common.seed,
                rule,
                variant: args.common.variant,
                phases: None,
            };
            config.validate()?;
            let (_, report) = run_protocol(&config)?;
            w.serialize(SweepRow {
                d: config.dimension,
                rule: rule.to_string(),
                variant: config.variant.to_string(),
                n: config.trials,
                seed: config.seed,
                predicted_plus: report.list_a_summary.probability(PLUS)?,
                observed_plus: report.list_b_summary.probability(PLUS)?,
                tvd: report.tvd,
                chi2: report.chi2_statistic,
                p_value: report.p_value,
            })?;
            configs.push(config);
        }
    }
    w.flush()?;
    let manifest = write_manifest(
        dir,
        RunManifest {
            command: "sweep".into(),
            version: env!("CARGO_PKG_VERSION"),
            started_at,
            finished_at: String::new(),
            config: serde_json::to_value(&configs)?,
            files: vec![csv_path.display().to_string()],
        },
    )?;
    println!("sweep={}", csv_path.display());
    println!("manifest={}", manifest.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let options = VerifyOptions {
        phase_mismatch: args.inject_phase_mismatch,
    };
    let results = verify::run_checks(&options)?;
    for r in &results {
        println!(
            "{} {:<28} tol={:e} max={:e}  {}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.tolerance,
            r.max_deviation,
            r.detail
        );
    }
    println!("{} checks", results.len());
    match results.iter().find(|r| !r.passed()) {
        Some(r) => Err(Failure::Runtime(format!("check `{}` failed", r.name))),
        None => Ok(()),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
