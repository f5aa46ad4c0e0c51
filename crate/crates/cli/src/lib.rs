//! `ivelox` command line: analytics, simulation and figure sweeps as CSV.

pub mod csv;
pub mod scenario;
pub mod sweep;
pub mod validation;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ivelox_core::analytic::{
    error_exponent, exact_failure_prob, failure_prob_bounds, information_velocity, AnalyticError,
    ExponentForm,
};
use ivelox_core::model::{LinkMode, ModelError};
use ivelox_core::sim::{
    empirical_failure_ratio, simulate_tandem_with, write_trace, SimError, SimOptions,
};
use thiserror::Error;

use crate::csv::{emit_csv, write_csv, Cell, Table};
use crate::scenario::{parse_document, read_scenario_file, Overrides, ScenarioFile};
use crate::validation::{Fault, Level};

pub const SEED_ENV: &str = "IVELOX_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "ivelox",
    version,
    about = "Information velocity of packet-erasure cascades"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the information velocity.
    Iv(Common),
    /// Error exponents at the given rates.
    Ee(Common),
    /// Exact arrive-failure probability and its bounds (homogeneous links).
    Bounds(Common),
    /// Run the tandem simulation.
    Simulate(Common),
    /// Evaluate a scenario file's sweep and write CSV.
    Sweep(Common),
    /// Run the built-in validation suite.
    Validate {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        #[arg(long = "inject-fault", value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    /// Delay budget(s), comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Rate(s) r/N, comma separated.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    packets: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantities to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<String>,
    /// 1e6 packets with the last 1e5 kept.
    #[arg(long = "paper-scale")]
    paper_scale: bool,
    /// Write the packet trace (packet_index,A,B).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Delayed,
    Instantaneous,
}

impl From<ModeArg> for LinkMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Delayed => LinkMode::Delayed,
            ModeArg::Instantaneous => LinkMode::Instantaneous,
        }
    }
}

const DEFAULT_PACKETS: u64 = 100_000;

impl Common {
    fn seed(&self) -> Result<Option<u64>, CliError> {
        if self.seed.is_some() {
            return Ok(self.seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map(Some).map_err(|_| {
                CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            }),
            Err(_) => Ok(None),
        }
    }

    fn overrides(&self) -> Result<Overrides, CliError> {
        Ok(Overrides {
            r: self.r,
            p: self.p,
            lambda: self.lambda,
            mode: self.mode.map(Into::into),
            seed: self.seed()?,
            packets: self.packets,
            warmup: self.warmup,
            paper_scale: self.paper_scale,
        })
    }

    /// The scenario file, or a homogeneous scenario built from --r/--p.
    fn load(&self) -> Result<ScenarioFile, CliError> {
        let doc = match &self.scenario {
            Some(path) => read_scenario_file(path)?,
            None => {
                let (r, p) = match (self.r, self.p) {
                    (Some(r), Some(p)) => (r, p),
                    _ => {
                        return Err(CliError::Usage(
                            "give --scenario FILE or both --r and --p".into(),
                        ))
                    }
                };
                serde_json::json!({
                    "profile": {"kind": "homogeneous", "p": p, "r": r},
                    "arrivals": {"kind": "single_packet"},
                    "num_packets": DEFAULT_PACKETS,
                })
            }
        };
        let file = parse_document(doc, &self.overrides()?)?;
        for s in &file.series {
            if !s.scenario.is_stable() {
                eprintln!(
                    "warning: {}arrival rate {} is not below 1 - max erasure probability {}; queues grow without bound",
                    s.label.as_ref().map(|l| format!("{l}: ")).unwrap_or_default(),
                    s.scenario.arrivals.rate(),
                    1.0 - s.scenario.profile.max_erasure()
                );
            }
        }
        Ok(file)
    }
}

/// Write the table to `--out`, or to stdout when no file is given.
fn deliver(table: &Table, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            emit_csv(table, path)?;
            println!("wrote {} rows to {}", table.rows.len(), path.display());
            Ok(())
        }
        None => write_csv(table, std::io::stdout().lock()).map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn lambda_of(s: &ivelox_core::model::Scenario) -> f64 {
    s.arrivals.rate()
}

fn cmd_iv(c: &Common) -> Result<(), CliError> {
    let file = c.load()?;
    let single = file.series.len() == 1;
    for s in &file.series {
        let iv =
            information_velocity(&s.scenario.profile, lambda_of(&s.scenario), s.scenario.mode)?;
        match (&s.label, single) {
            (Some(label), false) => println!("{label}\t{iv}"),
            _ => println!("{iv}"),
        }
    }
    Ok(())
}

fn cmd_ee(c: &Common) -> Result<(), CliError> {
    if c.alpha.is_empty() {
        return Err(CliError::Usage("ee needs --alpha".into()));
    }
    let file = c.load()?;
    let labelled = file.series.iter().any(|s| s.label.is_some());
    let mut header = if labelled { vec!["series"] } else { vec![] };
    header.extend(["alpha", "iv", "ee_chernoff", "ee_types"]);
    let mut table = Table::new(header);
    for s in &file.series {
        let (profile, lambda, mode) =
            (&s.scenario.profile, lambda_of(&s.scenario), s.scenario.mode);
        let iv = information_velocity(profile, lambda, mode)?;
        for &alpha in &c.alpha {
            let ee = |form| -> Result<f64, CliError> {
                if alpha >= iv {
                    return Ok(0.0);
                }
                Ok(error_exponent(profile, lambda, mode, alpha, form)?.ee)
            };
            let mut row = Vec::new();
            if labelled {
                row.push(s.label.clone().map_or(Cell::Empty, Cell::Text));
            }
            row.extend([
                alpha.into(),
                iv.into(),
                ee(ExponentForm::Chernoff)?.into(),
                ee(ExponentForm::Types)?.into(),
            ]);
            table.push(row);
        }
    }
    deliver(&table, c.out.as_deref())
}

fn cmd_bounds(c: &Common) -> Result<(), CliError> {
    if c.n.is_empty() {
        return Err(CliError::Usage("bounds needs --N".into()));
    }
    let file = c.load()?;
    let mut table = Table::new([
        "r",
        "N",
        "p_eff",
        "pe_lower",
        "pe_exact",
        "pe_chernoff",
        "pe_sum",
    ]);
    for s in &file.series {
        let p = match s.scenario.profile {
            ivelox_core::model::LinkProfile::Homogeneous { p, .. } => p,
            _ => {
                return Err(CliError::Config(
                    "bounds are defined for homogeneous links only".into(),
                ))
            }
        };
        let r = s.scenario.profile.link_count() as u64;
        let p_eff = p / (1.0 - lambda_of(&s.scenario));
        for &n in &c.n {
            let b = failure_prob_bounds(r, n, p_eff)?;
            debug_assert_eq!(b.exact, exact_failure_prob(r, n, p_eff));
            table.push(vec![
                r.into(),
                n.into(),
                p_eff.into(),
                b.lower.into(),
                b.exact.into(),
                b.chernoff_upper.into(),
                b.sum_upper.into(),
            ]);
        }
    }
    deliver(&table, c.out.as_deref())
}

fn cmd_simulate(c: &Common) -> Result<(), CliError> {
    let file = c.load()?;
    let [series] = file.series.as_slice() else {
        return Err(CliError::Config(
            "simulate takes a scenario without `series`".into(),
        ));
    };
    let s = &series.scenario;
    let stats = simulate_tandem_with(
        s,
        SimOptions {
            record_node_waits: false,
        },
    );
    let count = stats.packet_records.len();
    if count == 0 {
        return Err(SimError::EmptyTrace.into());
    }
    let mean = stats.delays().map(|d| d as f64).sum::<f64>() / count as f64;
    println!(
        "packets recorded: {count} (warm-up dropped: {})",
        stats.dropped_warmup
    );
    println!("horizon: {} slots", stats.horizon_slots);
    println!("mean delay: {mean}");
    println!(
        "empirical velocity r/mean delay: {}",
        s.profile.link_count() as f64 / mean
    );
    let mut table = Table::new(["N", "pe_empirical", "ci_lo", "ci_hi"]);
    for &n in &c.n {
        let fr = empirical_failure_ratio(&stats, n)?;
        println!(
            "N = {n}: failure ratio {} [{}, {}]",
            fr.ratio, fr.ci_lo, fr.ci_hi
        );
        table.push(vec![
            n.into(),
            fr.ratio.into(),
            fr.ci_lo.into(),
            fr.ci_hi.into(),
        ]);
    }
    if let Some(path) = &c.out {
        emit_csv(&table, path)?;
    }
    if let Some(path) = &c.trace {
        let io_err = |source| CliError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io_err)?;
        write_trace(&stats, std::io::BufWriter::new(f)).map_err(io_err)?;
    }
    Ok(())
}

fn cmd_sweep(c: &Common) -> Result<(), CliError> {
    if c.scenario.is_none() {
        return Err(CliError::Usage("sweep needs --scenario FILE".into()));
    }
    let file = c.load()?;
    let names = if c.outputs.is_empty() {
        &file.outputs
    } else {
        &c.outputs
    };
    let outputs = sweep::parse_outputs(names)?;
    let table = sweep::run_sweep(&file, &outputs)?;
    deliver(&table, c.out.as_deref())
}

fn cmd_validate(level: Level, fault: Option<Fault>) -> i32 {
    let checks = validation::run_validation_suite(level, fault);
    let mut stdout = std::io::stdout().lock();
    for ch in &checks {
        let verdict = if ch.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(
            stdout,
            "{verdict} {:<28} {:>7.2}s  {}",
            ch.name, ch.seconds, ch.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(stdout, "{} passed, {failed} failed", checks.len() - failed);
    i32::from(failed > 0)
}

/// Run the command line. Returns the process exit code: 0 on success, 1
/// when the validation suite fails, 2 on usage or configuration errors.
pub fn dispatch<S: AsRef<str>>(argv: &[S]) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(|a| a.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Iv(c) => cmd_iv(c),
        Command::Ee(c) => cmd_ee(c),
        Command::Bounds(c) => cmd_bounds(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Validate {
            level,
            inject_fault,
        } => return cmd_validate(*level, *inject_fault),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
