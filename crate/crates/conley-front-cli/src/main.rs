//! Command-line front end. Loads a JSON run configuration, applies command
//! line overrides, runs one analysis command, and writes `report.json` (plus
//! any data files) into the output directory. Timing data goes to a separate
//! `timings.json` so reports from identical runs are byte-identical.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical
//! failure, 3 violated structural property.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use conley_front::{Error, Result};

use commands::{CommandOutput, Context, LogLevel};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "conley-front",
    version,
    about = "Front structure of nonlocally coupled gradient-like systems"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and data files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides solver.workers.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides solver.shift_range; two integers as `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    seed_shift_range: Option<String>,
    /// Overrides the coupling strength of the system.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Locate constant solutions with Morse index and margin data.
    CriticalPoints,
    /// Solve one front between the configured endpoints.
    SolveFront,
    /// Count connecting fronts between two endpoints, mod 2.
    Count,
    /// Assemble the chain complex over a search box and compute homology.
    Complex,
    /// Check that the shift energy decreases along a solved front.
    LyapunovCheck,
    /// Classify a block boundary and test the comparison hypothesis.
    BlockVerify,
    /// Relative homology of a block modulo its egress boundary.
    RelHomology,
    /// Evaluate the forcing bound from constant count and homology ranks.
    Forcing,
    /// Scan the constant-coefficient symbol for hyperbolicity.
    SymbolScan,
    /// Compare fitted tail decay rates with characteristic roots.
    Decay,
    /// Run the bundled end-to-end case studies.
    CaseStudies,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CriticalPoints => "critical-points",
            Command::SolveFront => "solve-front",
            Command::Count => "count",
            Command::Complex => "complex",
            Command::LyapunovCheck => "lyapunov-check",
            Command::BlockVerify => "block-verify",
            Command::RelHomology => "rel-homology",
            Command::Forcing => "forcing",
            Command::SymbolScan => "symbol-scan",
            Command::Decay => "decay",
            Command::CaseStudies => "case-studies",
        }
    }
}

/// Report envelope. `config` echoes the configuration after command line
/// overrides, so the run can be reproduced from the report alone.
#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a RunConfig,
    results: serde_json::Value,
    warnings: &'a [String],
    property_violations: &'a [String],
}

fn parse_shift_range(text: &str) -> Result<(i64, i64)> {
    let invalid = || {
        Error::config(
            "seed-shift-range",
            format!("expected two integers as `lo,hi`, got `{text}`"),
        )
    };
    let (lo, hi) = text.split_once(',').ok_or_else(invalid)?;
    let lo: i64 = lo.trim().parse().map_err(|_| invalid())?;
    let hi: i64 = hi.trim().parse().map_err(|_| invalid())?;
    Ok((lo, hi))
}

fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        cfg.solver.workers = workers;
    }
    if let Some(text) = &cli.seed_shift_range {
        cfg.solver.shift_range = parse_shift_range(text)?;
    }
    if let Some(beta) = cli.beta {
        cfg.system.set_beta(beta);
    }
    cfg.validate()
}

fn dispatch(command: &Command, cfg: &RunConfig, ctx: &Context) -> Result<CommandOutput> {
    match command {
        Command::CriticalPoints => commands::critical_points(cfg, ctx),
        Command::SolveFront => commands::solve_front_cmd(cfg, ctx),
        Command::Count => commands::count(cfg, ctx),
        Command::Complex => commands::complex(cfg, ctx),
        Command::LyapunovCheck => commands::lyapunov_check(cfg, ctx),
        Command::BlockVerify => commands::block_verify(cfg, ctx),
        Command::RelHomology => commands::rel_homology(cfg, ctx),
        Command::Forcing => commands::forcing(cfg, ctx),
        Command::SymbolScan => commands::symbol_scan(cfg, ctx),
        Command::Decay => commands::decay(cfg, ctx),
        Command::CaseStudies => commands::case_studies(cfg, ctx),
    }
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config { .. } | Error::Precondition(_) => 1,
        Error::Numeric(_)
        | Error::NoConvergence { .. }
        | Error::ContinuationStuck { .. }
        | Error::NotIsolatingBlock { .. }
        | Error::Tangency { .. } => 2,
        Error::BoundaryNotSquaredZero { .. } => 3,
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let level = LogLevel::from_env()?;
    let started = Instant::now();
    let mut cfg = RunConfig::load(&cli.config)?;
    apply_overrides(&mut cfg, cli)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| {
        Error::config("out", format!("cannot create {}: {e}", cli.out.display()))
    })?;
    let ctx = Context {
        out_dir: &cli.out,
        level,
    };
    let name = cli.command.name();
    ctx.info(&format!("running `{name}`"));
    let output = dispatch(&cli.command, &cfg, &ctx)?;
    for warning in &output.warnings {
        ctx.info(&format!("warning: {warning}"));
    }

    let report = Report {
        command: name,
        config: &cfg,
        results: output.results,
        warnings: &output.warnings,
        property_violations: &output.property_violations,
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Numeric(format!("report serialisation: {e}")))?;
    text.push('\n');
    ctx.write_text("report.json", &text)?;

    let timings = json!({
        "command": name,
        "total_ms": started.elapsed().as_millis() as u64,
    });
    ctx.write_text("timings.json", &format!("{timings:#}\n"))?;
    ctx.info(&format!(
        "report written to {}",
        cli.out.join("report.json").display()
    ));

    if output.property_violations.is_empty() {
        Ok(0)
    } else {
        for violation in &output.property_violations {
            eprintln!("property violation: {violation}");
        }
        Ok(3)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_group_by_reaction() {
        assert_eq!(exit_code(&Error::config("grid.n", "must be odd")), 1);
        assert_eq!(exit_code(&Error::Precondition("bad call".into())), 1);
        assert_eq!(exit_code(&Error::Numeric("singular".into())), 2);
        assert_eq!(
            exit_code(&Error::NoConvergence {
                iterations: 60,
                residual: 1.0
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::ContinuationStuck {
                last_good: 0.5,
                min_step: 0.01
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::NotIsolatingBlock {
                facet: 0,
                location: "(0, 0)".into()
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::Tangency {
                facet: 0,
                location: "(0, 0)".into(),
                flux: 0.0
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::BoundaryNotSquaredZero {
                degree: 2,
                from: "a".into(),
                to: "b".into()
            }),
            3
        );
    }

    #[test]
    fn shift_range_parses_and_rejects() {
        assert_eq!(parse_shift_range("-3,4").unwrap(), (-3, 4));
        assert_eq!(parse_shift_range(" 0 , 0 ").unwrap(), (0, 0));
        assert!(parse_shift_range("5").is_err());
        assert!(parse_shift_range("a,b").is_err());
    }
}
