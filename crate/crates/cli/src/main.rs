#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use metapop::builtin::{list_builtin_models, Param};
use metapop::io::Format;

mod error;
mod run;
mod scenario;

use error::CliError;
use scenario::Overrides;

#[derive(Parser)]
#[command(name = "metapop", version, about = "Simulate and analyse metapopulation networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Output directory.
        #[arg(long, env = "METAPOP_OUT")]
        out: Option<PathBuf>,
        /// Trajectory file format.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// List the built-in models and their parameters.
    ListModels,
}

fn run_scenario(path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let s = scenario::parse(&text)?;
    let resolved = scenario::resolve(s, overrides, path)?;
    let output = run::run(&resolved)?;
    print!("{}", output.text);
    let names = run::write(&output, &resolved.out)?;
    println!("wrote {} files to {}", names.len(), resolved.out.display());
    Ok(())
}

fn list_models() {
    for info in list_builtin_models() {
        println!("{}: {}", info.name, info.summary);
        for slot in &info.slots {
            let value = match &slot.default {
                Param::Scalar(v) => format!("{v}"),
                Param::List(v) => format!("{v:?}"),
            };
            println!("    {} = {value}: {}", slot.name, slot.meaning);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListModels => {
            list_models();
            ExitCode::SUCCESS
        }
        Command::Run { scenario, seed, replicas, t_end, out, format } => {
            let overrides = Overrides {
                seed,
                replicas,
                t_end,
                out,
                format: format.map(|f| match f {
                    FormatArg::Csv => Format::Csv,
                    FormatArg::Json => Format::Json,
                }),
            };
            match run_scenario(&scenario, &overrides) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("metapop: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
