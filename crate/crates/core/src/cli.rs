//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid scenario, 2 simulation or output fault,
//! 64 usage error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::scenario::{
    export_report, load_scenario, render_report, run_simulation, table2_scenario, ReportFormat, ScenarioError,
    SimulationFault, SimulationReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAULT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "retailer-p2p", version, about = "Retailer-facilitated P2P electricity market simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write the report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Load and check a scenario without simulating it.
    Validate { scenario: PathBuf },
    /// Reproduce the built-in four-case toy example.
    Table2 {
        /// Report destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

/// Human-readable summary table, one line per interval.
pub fn summary_table(report: &SimulationReport) -> String {
    let header = [
        "case",
        "surplus kWh",
        "retail c",
        "spot c",
        "forecast c",
        "market",
        "total $",
        "retailer $",
        "prosumer $",
        "traditional $",
        "improvement",
    ];
    let rows: Vec<[String; 11]> = report
        .summary
        .iter()
        .map(|s| {
            let market = match (s.retail_market, s.spot_market) {
                (true, true) => "both",
                (true, false) => "retail",
                (false, true) => "spot",
                (false, false) => "-",
            };
            [
                s.interval.to_string(),
                s.total_surplus.to_kwh_string(),
                s.retail_price.to_cents_string(),
                s.spot_price.to_cents_string(),
                s.forecast.to_cents_string(),
                market.to_string(),
                s.total_revenue.to_dollars_string(),
                s.retailer_revenue.to_dollars_string(),
                s.prosumer_revenue.to_dollars_string(),
                s.baseline_revenue.to_dollars_string(),
                s.improvement.label(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        padded.join("  ") + "\n"
    };
    let mut out = line(header.to_vec());
    for r in &rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn scenario_exit(err: &ScenarioError) -> i32 {
    match err {
        ScenarioError::Io { .. }
        | ScenarioError::Parse { .. }
        | ScenarioError::Invalid { .. }
        | ScenarioError::Series { .. } => EXIT_INVALID,
    }
}

fn fault_exit(err: &SimulationFault) -> i32 {
    match err {
        SimulationFault::Scenario(e) => scenario_exit(e),
        SimulationFault::Interval { .. } => EXIT_FAULT,
    }
}

/// Runs one invocation and returns its exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            if informational {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    match cli.command {
        Command::Run { scenario, out: path, format } => {
            let config = match load_scenario(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return scenario_exit(&e);
                }
            };
            let report = match run_simulation(&config) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return fault_exit(&e);
                }
            };
            if let Err(e) = export_report(&report, format.into(), &path) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_FAULT;
            }
            EXIT_OK
        }
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(c) => {
                let _ = writeln!(
                    out,
                    "{}: ok ({} prosumers, {} retailers, {} intervals)",
                    scenario.display(),
                    c.prosumers.len(),
                    c.retailers.len(),
                    c.slots.len()
                );
                EXIT_OK
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                scenario_exit(&e)
            }
        },
        Command::Table2 { out: path, format } => {
            let report = match run_simulation(&table2_scenario()) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return fault_exit(&e);
                }
            };
            let _ = write!(out, "{}", summary_table(&report));
            match path {
                Some(p) => {
                    if let Err(e) = export_report(&report, format.into(), &p) {
                        let _ = writeln!(err, "error: {e}");
                        return EXIT_FAULT;
                    }
                }
                None => {
                    let _ = write!(out, "\n{}", render_report(&report, format.into()));
                }
            }
            EXIT_OK
        }
    }
}
