use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use decrelax::report::{
    cmd_bound, cmd_check, cmd_dump_ir, cmd_simulate, cmd_sweep, BoundFlags, Format, Output, Overrides,
    ProgramKind, EXIT_SCHEMA,
};

#[derive(Parser)]
#[command(name = "decrelax", version, about = "Certified bounds for constrained decentralized control")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for Monte Carlo simulation (overrides the problem file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo samples (overrides the problem file).
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Solver feasibility and gap tolerance.
    #[arg(long, global = true, env = "DECRELAX_SOLVER_TOL")]
    tol: Option<f64>,

    /// Proceed even when the local-authority check fails.
    #[arg(long, global = true)]
    force: bool,

    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Lower,
    Upper,
}

#[derive(Subcommand)]
enum Command {
    /// Check modelling assumptions and the information structure.
    Check { file: PathBuf },
    /// Compute the lower bound, the affine upper bound and their gap.
    Bound {
        file: PathBuf,
        /// Run the lower bound.
        #[arg(long)]
        lower: bool,
        /// Run the upper bound.
        #[arg(long)]
        upper: bool,
        /// Run both bounds and report the gap (the default).
        #[arg(long)]
        gap: bool,
        /// Simulate the upper-bound policy with this many samples.
        #[arg(long, value_name = "N")]
        simulate: Option<usize>,
    },
    /// Run every matching problem file in a directory; CSV summary.
    Sweep {
        dir: PathBuf,
        #[arg(long, default_value = "*.json")]
        pattern: String,
    },
    /// Monte Carlo simulation of the upper-bound policy.
    Simulate {
        file: PathBuf,
        /// Samples kept in the CSV trace.
        #[arg(long, default_value_t = 1000)]
        trace_rows: usize,
    },
    /// Print the conic program of a bound as JSON.
    DumpIr {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Lower)]
        program: Which,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<Output> {
    let c = &cli.common;
    let ov = Overrides {
        seed: c.seed,
        samples: c.samples,
        tol: c.tol,
        force: c.force,
    };
    let format = match c.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
    };
    Ok(match &cli.command {
        Command::Check { file } => cmd_check(&read(file)?, &ov, format),
        Command::Bound {
            file,
            lower,
            upper,
            gap,
            simulate,
        } => {
            let flags = BoundFlags {
                lower: *lower,
                upper: *upper,
                gap: *gap,
                simulate: *simulate,
            };
            cmd_bound(&read(file)?, &flags, &ov, format)
        }
        Command::Sweep { dir, pattern } => cmd_sweep(dir, pattern, &ov),
        Command::Simulate { file, trace_rows } => cmd_simulate(&read(file)?, &ov, format, *trace_rows),
        Command::DumpIr { file, program } => {
            let kind = match program {
                Which::Lower => ProgramKind::Lower,
                Which::Upper => ProgramKind::Upper,
            };
            cmd_dump_ir(&read(file)?, kind, &ov)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_path = cli.common.out.clone();
    let output = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_SCHEMA as u8);
        }
    };
    for line in &output.stderr {
        eprintln!("{line}");
    }
    if !output.stdout.is_empty() {
        match &out_path {
            Some(p) => {
                if let Err(e) = fs::write(p, &output.stdout) {
                    eprintln!("error: cannot write {}: {e}", p.display());
                    return ExitCode::from(EXIT_SCHEMA as u8);
                }
            }
            None => print!("{}", output.stdout),
        }
    }
    ExitCode::from(output.code as u8)
}
