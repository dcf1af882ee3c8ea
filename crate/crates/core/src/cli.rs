//! Command-line front end. Exit codes: 0 success, 1 a check failed,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::curve::{curve_csv, delay_curve};
use crate::properties::{
    default_oracles, execution_set_included, falsify_time_agnostic, DelayGrid, Property,
};
use crate::protocol::ReplayError;
use crate::protocols::Transform;
use crate::scenario::Scenario;
use crate::time::ClockOracle;
use crate::trace::{decode, encode, find_gst_witness, retime, Execution, RetimeDirection};

/// Environment variable that replaces the scenario seed.
pub const SEED_ENV: &str = "PSYNC_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "psync",
    version,
    about = "Partial-synchrony simulation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trace.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a transformer to a scenario, or retime a trace.
    Transform(TransformArgs),
    /// Evaluate a property on a trace.
    CheckTrace {
        #[arg(long)]
        trace: PathBuf,
        /// termination | agreement | validity | message_count:N | output_by:T
        #[arg(long)]
        property: String,
        /// Also retime by identity, sqrt and compose(sqrt,sqrt) and report a
        /// verdict change.
        #[arg(long)]
        falsify: bool,
    },
    /// Smallest stabilization time under which a trace is GST-legal.
    Witness {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Clock used to read timestamps as real time.
        #[arg(long, default_value = "identity")]
        clock: ClockOracle,
    },
    /// Enumerate execution classes over a delay grid.
    Enumerate {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to half the scenario's delay bound.
        #[arg(long)]
        quantum: Option<f64>,
        #[arg(long)]
        bound: usize,
        /// Check that every class also occurs under this scenario.
        #[arg(long)]
        included_in: Option<PathBuf>,
    },
    /// Observed delay under the square-root clock as CSV.
    DelayCurve {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a trace is a faithful run of the scenario's protocol.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TransformArgs {
    #[arg(long, conflicts_with = "trace", required_unless_present = "trace")]
    scenario: Option<PathBuf>,
    #[arg(long, requires = "scenario", conflicts_with = "ignore_delta")]
    wrap: Option<ClockOracle>,
    #[arg(long, requires = "scenario")]
    ignore_delta: bool,
    #[arg(long, requires = "retime")]
    trace: Option<PathBuf>,
    #[arg(long, requires = "trace")]
    retime: Option<ClockOracle>,
    #[arg(long, requires = "retime")]
    unapply: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let mut scenario =
        Scenario::parse(&read(path)?).with_context(|| format!("loading {}", path.display()))?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let seed = seed
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer"))?;
        scenario = scenario.with_seed(seed);
    }
    Ok(scenario)
}

fn load_trace(path: &Path) -> anyhow::Result<Execution> {
    decode(&read(path)?).with_context(|| format!("decoding {}", path.display()))
}

/// Writes through a temporary file in the target directory.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Simulate { scenario, out } => {
            let scenario = load_scenario(&scenario)?;
            let e = scenario.simulate()?;
            write_atomic(&out, &encode(&e))?;
            println!("{} events, {} messages", e.events.len(), e.sent_count());
            Ok(EXIT_OK)
        }
        Command::Transform(args) => transform(args),
        Command::CheckTrace {
            trace,
            property,
            falsify,
        } => {
            let e = load_trace(&trace)?;
            let x = Property::parse(&property)?;
            let holds = x.check(&e);
            println!("{}: {}", x.name(), if holds { "holds" } else { "violated" });
            let mut ok = holds;
            if falsify {
                match falsify_time_agnostic(&x.with_claim(true), &e, &default_oracles())? {
                    Some(cx) => {
                        println!("not time-agnostic: {cx}");
                        ok = false;
                    }
                    None => println!("verdict unchanged under retiming"),
                }
            }
            Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Witness {
            trace,
            delta,
            clock,
        } => {
            if !(delta.is_finite() && delta >= 0.0) {
                bail!("delta must be finite and non-negative");
            }
            let e = load_trace(&trace)?;
            match find_gst_witness(&e, delta, &clock)? {
                Some(t) => {
                    println!("witness_T={t}");
                    Ok(EXIT_OK)
                }
                None => {
                    println!("no witness: a message is still undelivered past its deadline");
                    Ok(EXIT_CHECK_FAILED)
                }
            }
        }
        Command::Enumerate {
            scenario,
            quantum,
            bound,
            included_in,
        } => {
            let scenario = load_scenario(&scenario)?;
            let grid = match quantum {
                Some(q) => DelayGrid::new(q)?,
                None => DelayGrid::default_for(scenario.run.adversary.model.delta())?,
            };
            let classes = scenario.enumerate(grid, bound)?;
            println!("classes={}", classes.len());
            match included_in {
                None => Ok(EXIT_OK),
                Some(other) => {
                    let other = load_scenario(&other)?.enumerate(grid, bound)?;
                    let included = execution_set_included(&classes, &other);
                    println!("other_classes={}", other.len());
                    println!("included={included}");
                    Ok(if included { EXIT_OK } else { EXIT_CHECK_FAILED })
                }
            }
        }
        Command::DelayCurve {
            delta,
            t_max,
            samples,
            out,
        } => {
            let csv = curve_csv(&delay_curve(delta, t_max, samples)?);
            match out {
                Some(path) => write_atomic(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(EXIT_OK)
        }
        Command::Replay { scenario, trace } => {
            let scenario = load_scenario(&scenario)?;
            let e = load_trace(&trace)?;
            match scenario.replay(&e) {
                Ok(()) => {
                    println!("replay ok: {} events", e.events.len());
                    Ok(EXIT_OK)
                }
                Err(ReplayError::Diverged(d)) => {
                    println!("divergence at {d}");
                    Ok(EXIT_CHECK_FAILED)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn transform(args: TransformArgs) -> anyhow::Result<i32> {
    if let (Some(path), Some(oracle)) = (&args.trace, &args.retime) {
        let direction = if args.unapply {
            RetimeDirection::Unapply
        } else {
            RetimeDirection::Apply
        };
        let retimed = retime(&load_trace(path)?, oracle, direction)?;
        write_atomic(&args.out, &encode(&retimed))?;
        return Ok(EXIT_OK);
    }
    let path = args.scenario.expect("clap enforces a scenario");
    let mut scenario = load_scenario(&path)?;
    let transform = match (args.wrap, args.ignore_delta) {
        (Some(oracle), false) => Transform::WrapClock(oracle),
        (None, true) => Transform::IgnoreDelta,
        _ => bail!("pass exactly one of --wrap or --ignore-delta"),
    };
    if scenario.protocol.transform != Transform::None {
        bail!("scenario already applies `{}`", scenario.protocol.transform);
    }
    scenario.protocol.transform = transform;
    write_atomic(&args.out, &scenario.to_toml())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cli_main(["psync", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            cli_main(["psync", "delay-curve", "--delta", "1"]),
            EXIT_USAGE
        );
        assert_eq!(
            cli_main([
                "psync",
                "check-trace",
                "--trace",
                "/nonexistent",
                "--property",
                "agreement"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn bad_curve_arguments_exit_2() {
        assert_eq!(
            cli_main([
                "psync",
                "delay-curve",
                "--delta",
                "1",
                "--t-max",
                "4",
                "--samples",
                "1"
            ]),
            EXIT_USAGE
        );
    }
}
