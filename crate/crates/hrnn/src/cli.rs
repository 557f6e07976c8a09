//! Argument parsing for the `hrnn` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hrnn_core::dataset::SynthSpec;

use crate::error::Result;
use crate::run::{cmd_prepare, cmd_run, cmd_synth, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "hrnn", version, about = "Hierarchical recurrent forecasting of index components")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert index levels into change rates.
    Prepare {
        /// Long-format CSV with columns node,period,value.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Input already holds rates; validate and copy it.
        #[arg(long)]
        already_rates: bool,
    },
    /// Train, evaluate and checkpoint the models of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        already_rates: bool,
        /// Select hyperparameters on a validation tail of the training data.
        #[arg(long)]
        grid: bool,
    },
    /// Write a synthetic hierarchy and its rate series.
    Synth {
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 3)]
        branching: usize,
        #[arg(long, default_value_t = 200)]
        length: usize,
        /// Standard deviation of the leaf noise.
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            input,
            out,
            already_rates,
        } => cmd_prepare(&input, &out, already_rates),
        Command::Run {
            config,
            out,
            seed,
            jobs,
            already_rates,
            grid,
        } => {
            let opts = RunOptions {
                out,
                seed,
                jobs,
                already_rates,
                grid,
            };
            let summary = cmd_run(&config, &opts)?;
            println!("wrote {}", summary.out.display());
            Ok(())
        }
        Command::Synth {
            depth,
            branching,
            length,
            noise,
            seed,
            out,
        } => {
            let spec = SynthSpec::new(depth, branching, length, noise, seed);
            let (h, s) = cmd_synth(&spec, &out)?;
            println!("wrote {} and {}", h.display(), s.display());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
