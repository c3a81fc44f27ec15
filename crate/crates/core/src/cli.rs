//! Command-line front end. Exit codes: 0 converged, 1 input error,
//! 2 non-convergence.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::closed_form::classify_capacity;
use crate::error::Error;
use crate::iba::SolverConfig;
use crate::io::{classification_to_json, parse_instance, solution_to_json, sweep, sweep_csv, sweep_grid, SweepVar};
use crate::problem::ProblemInstance;
use crate::solve::solve_with;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mimo-ipc", version, about = "MIMO capacity under total-power and interference-power constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Stopping tolerance of the dual iteration.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bisection tolerance (defaults to epsilon / 100).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Outer iteration limit.
    #[arg(long)]
    pub kmax: Option<usize>,
}

impl ConfigArgs {
    fn config(&self) -> Result<SolverConfig, Error> {
        let mut cfg = match self.epsilon {
            Some(e) => SolverConfig::with_epsilon(e),
            None => SolverConfig::default(),
        };
        if let Some(d) = self.delta {
            cfg.delta = d;
        }
        if let Some(k) = self.kmax {
            cfg.k_max = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Var {
    #[value(name = "PT")]
    Pt,
    #[value(name = "PI")]
    Pi,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one instance and print the solution document.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Report the headline capacity in bits.
        #[arg(long)]
        bits: bool,
    },
    /// Sweep P_T or P_I over a grid and print CSV.
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum)]
        var: Var,
        #[arg(long, allow_negative_numbers = true)]
        min: f64,
        #[arg(long, allow_negative_numbers = true)]
        max: f64,
        #[arg(long, allow_negative_numbers = true)]
        step: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print structural capacity facts of an instance.
    Classify { file: PathBuf },
}

fn load(path: &PathBuf) -> Result<ProblemInstance, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

/// Runs a parsed command, writing results to `out` and diagnostics to `err`.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Solve { file, config, bits } => (|| {
            let inst = load(&file)?;
            let cfg = config.config()?;
            match solve_with(&inst, &cfg) {
                Ok(sol) => Ok((solution_to_json(&sol, bits), EXIT_OK)),
                Err(Error::NotConverged(sol)) => {
                    let _ = writeln!(err, "warning: {}", Error::NotConverged(sol.clone()));
                    Ok((solution_to_json(&sol, bits), EXIT_NOT_CONVERGED))
                }
                Err(e) => Err(e),
            }
        })(),
        Command::Sweep {
            file,
            var,
            min,
            max,
            step,
            config,
        } => (|| {
            let inst = load(&file)?;
            let cfg = config.config()?;
            let grid = sweep_grid(min, max, step)?;
            let var = match var {
                Var::Pt => SweepVar::PT,
                Var::Pi => SweepVar::PI,
            };
            let rows = sweep(&inst, var, &grid, &cfg)?;
            let code = if rows.iter().all(|r| r.converged) {
                EXIT_OK
            } else {
                let _ = writeln!(err, "warning: some sweep points did not converge");
                EXIT_NOT_CONVERGED
            };
            Ok((sweep_csv(inst.num_ipc(), &rows), code))
        })(),
        Command::Classify { file } => (|| {
            let inst = load(&file)?;
            Ok((classification_to_json(&classify_capacity(&inst)?), EXIT_OK))
        })(),
    };
    match result {
        Ok((text, code)) => {
            let text = if text.ends_with('\n') { text } else { text + "\n" };
            if out.write_all(text.as_bytes()).is_err() {
                return EXIT_INPUT;
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit 1.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            let shown = e.use_stderr();
            if shown {
                let _ = write!(err, "{}", e.render());
                EXIT_INPUT
            } else {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            }
        }
    }
}
