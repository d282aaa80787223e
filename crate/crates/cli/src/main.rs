use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "specdec", version, about = "Speculative decoding benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (a path or a shipped preset name) and write CSV results
    Run {
        config: PathBuf,
        /// Output directory
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads (defaults to the number of cores)
        #[arg(long)]
        threads: Option<usize>,
        /// Base seed, overriding the config
        #[arg(long, env = "SPECDEC_SEED")]
        seed: Option<u64>,
    },
    /// Summarize a JSON-lines trace written by `run`
    Trace {
        file: PathBuf,
        /// Also write SVG plots next to the trace
        #[arg(long)]
        plot: bool,
    },
    /// Print a static tree preset in spec format
    DumpTree { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
        } => specdec_bench::cmd_run(&config, &out, threads, seed).map(|report| {
            print!("{}", report.summary);
            for path in report.written {
                println!("wrote {}", path.display());
            }
        }),
        Command::Trace { file, plot } => specdec_bench::cmd_trace(&file, plot).map(|(report, plots)| {
            print!("{report}");
            for path in plots {
                println!("wrote {}", path.display());
            }
        }),
        Command::DumpTree { name } => specdec_bench::cmd_dump_tree(&name).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
