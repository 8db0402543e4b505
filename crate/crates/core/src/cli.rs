//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a run
//! errors, 2 on usage errors.

use crate::bench::{
    all_passed, quadrature_report, run_bench, run_scaling_sweep, verify_suite, write_record_csv, write_sweep_csv,
    BpConfig, BpKind, Check, MeasuredTimer, CSV_HEADER,
};
use crate::krylov::{SolveMode, DEFAULT_BENCH_ITERS, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::mesh::Deformation;
use crate::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bakeoff", about = "Matrix-free bake-off problems BP1-BP6", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time one configuration and print a single record
    Run(CommonArgs),
    /// Strong-scaling table over element counts and thread counts
    Sweep(CommonArgs),
    /// Oracle, symmetry and convergence checks
    Verify(CommonArgs),
    /// Exactness report of the quadrature rules
    Quadcheck {
        /// Largest number of points per rule
        #[arg(long, default_value_t = 10)]
        max_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Solve,
    Bench,
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, value_parser = parse_bp, default_value = "bp3")]
    bp: BpKind,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Element counts NXxNYxNZ; `sweep` accepts a comma-separated list
    #[arg(long, value_parser = parse_dims, value_delimiter = ',', default_value = "2x2x2")]
    elems: Vec<[usize; 3]>,
    /// Worker threads; `sweep` accepts a comma-separated list
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, value_parser = parse_deformation, default_value = "none")]
    deform: Deformation,
    /// CG iterations per timed loop in bench mode
    #[arg(long, default_value_t = DEFAULT_BENCH_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Mode::Bench)]
    mode: Mode,
    /// Disable the Jacobi preconditioner
    #[arg(long)]
    no_precond: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_bp(s: &str) -> Result<BpKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_deformation(s: &str) -> Result<Deformation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 3 {
        return Err(format!("expected NXxNYxNZ, got '{s}'"));
    }
    let mut dims = [0; 3];
    for (d, part) in dims.iter_mut().zip(parts) {
        *d = part.trim().parse().map_err(|_| format!("invalid element count in '{s}'"))?;
        if *d == 0 {
            return Err(format!("element counts must be positive in '{s}'"));
        }
    }
    Ok(dims)
}

impl CommonArgs {
    fn config(&self, dims: [usize; 3], threads: usize) -> BpConfig {
        BpConfig {
            bp: self.bp,
            p: self.degree,
            dims,
            deformation: self.deform,
            mode: match self.mode {
                Mode::Solve => SolveMode::Solve,
                Mode::Bench => SolveMode::FixedIterations(self.iters),
            },
            tol: self.tol,
            max_iter: DEFAULT_MAX_ITER,
            threads,
            jacobi: !self.no_precond,
        }
    }

    /// The single configuration of `run` and `verify`.
    fn single(&self, cmd: &str) -> Result<BpConfig, String> {
        if self.elems.len() != 1 || self.threads.len() != 1 {
            return Err(format!("'{cmd}' takes a single --elems and --threads value"));
        }
        let config = self.config(self.elems[0], self.threads[0]);
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Usage(msg),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_checks(checks: &[Check], format: Format, out: &mut dyn Write) -> Result<(), Failure> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, checks).map_err(|e| Failure::Run(e.to_string()))?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for c in checks {
                w.serialize(c).map_err(|e| Failure::Run(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn report_checks(checks: &[Check]) {
    for c in checks {
        eprintln!(
            "[{}] {}: {:.3e} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Run(args) => {
            let config = args.single("run").map_err(Failure::Usage)?;
            let record = run_bench(&config)?;
            let mut out = open_output(&args.out)?;
            match args.format.unwrap_or(Format::Json) {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &record).map_err(|e| Failure::Run(e.to_string()))?;
                    writeln!(out)?;
                }
                Format::Csv => write_record_csv(&record, &mut out)?,
            }
            Ok(EXIT_OK)
        }
        Command::Sweep(args) => {
            let template = args.config(args.elems[0], 1);
            template.validate()?;
            if args.threads.contains(&0) {
                return Err(Failure::Usage("thread counts must be positive".into()));
            }
            let result = run_scaling_sweep(&template, &args.elems, &args.threads, &MeasuredTimer)?;
            let mut out = open_output(&args.out)?;
            match args.format.unwrap_or(Format::Csv) {
                Format::Csv => write_sweep_csv(&result.rows, &mut out)?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &result).map_err(|e| Failure::Run(e.to_string()))?;
                    writeln!(out)?;
                }
            }
            let s = &result.summary;
            eprintln!(
                "r_max = {:.4e} DOFS/worker, C = {:.4e}, n_0.8 = {}, t_0.8 = {}",
                s.r_max,
                s.c,
                s.n_08.map_or("unavailable".into(), |v| format!("{v:.4e}")),
                s.t_08.map_or("unavailable".into(), |v| format!("{v:.4e} s")),
            );
            Ok(EXIT_OK)
        }
        Command::Verify(args) => {
            let config = args.single("verify").map_err(Failure::Usage)?;
            let checks = verify_suite(&config)?;
            report_checks(&checks);
            if let Some(format) = args.format {
                write_checks(&checks, format, &mut open_output(&args.out)?)?;
            }
            Ok(if all_passed(&checks) { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Quadcheck { max_points, out, format } => {
            if max_points == 0 {
                return Err(Failure::Usage("--max-points must be at least 1".into()));
            }
            let checks = quadrature_report(max_points)?;
            report_checks(&checks);
            write_checks(&checks, format, &mut open_output(&out)?)?;
            Ok(if all_passed(&checks) { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nSee 'bakeoff --help' for usage.");
            EXIT_USAGE
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Header of the sweep CSV, re-exported for consumers of the table.
pub fn sweep_csv_header() -> &'static str {
    CSV_HEADER
}
