use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcnn::commands::{self, Overrides, RunConfig};

/// Fourier-optical CNN accelerator simulator.
#[derive(Parser, Debug)]
#[command(name = "dcnn", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bit-plane quantization of the training split.
    Quantize {
        /// Output PBM stack (default: <run dir>/planes.pbm).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stage-1 training of kernels and head.
    Train,
    /// Stage-2 head retraining on captured features.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Optical simulation of one tiled frame.
    Simulate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// A single P5 image instead of test images.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Test images to tile when no image is given.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Throughput and efficiency report.
    Perf,
}

fn run(cli: Cli) -> dcnn::Result<()> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = base.apply(&Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir,
        threads: cli.threads,
    });
    match cli.command {
        Command::Quantize { output } => commands::cmd_quantize(&cfg, output.as_deref()).map(drop),
        Command::Train => commands::cmd_train(&cfg).map(|p| println!("{}", p.display())),
        Command::Finetune { checkpoint } => {
            commands::cmd_finetune(&cfg, &checkpoint).map(|p| println!("{}", p.display()))
        }
        Command::Eval { checkpoint } => commands::cmd_eval(&cfg, &checkpoint).map(drop),
        Command::Simulate {
            checkpoint,
            image,
            count,
        } => {
            let images = commands::simulation_inputs(&cfg, image.as_deref(), count)?;
            commands::cmd_simulate(&cfg, &images, checkpoint.as_deref()).map(drop)
        }
        Command::Perf => commands::cmd_perf(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
