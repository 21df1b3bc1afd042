use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use revolver::cli::{cmd_bench, cmd_infer, cmd_verify, RunConfig};
use revolver::{BackendParams, Fault};

#[derive(Parser)]
#[command(name = "revolver", version, about = "Homomorphic CNN inference over a simulated SIMD backend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify images and write a prediction CSV.
    Infer(RunArgs),
    /// Compare homomorphic results against plaintext oracles.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop one convolution offset, e.g. `1,2`, to check that the
        /// partition check catches it.
        #[arg(long, value_name = "I,J")]
        skip_offset: Option<String>,
    },
    /// Report per-layer operation counts against closed-form predictions.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1200)]
    logq: u32,
    #[arg(long, default_value_t = 16)]
    logn: u32,
    #[arg(long, default_value_t = 45)]
    delta: u32,
    #[arg(long = "delta-c", default_value_t = 20)]
    delta_c: u32,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    encrypted_kernels: bool,
    #[arg(long)]
    sequential: bool,
    /// Random 8x8 network instead of the 28x28 one (ignored with --weights).
    #[arg(long)]
    reduced: bool,
}

impl RunArgs {
    fn config(self) -> revolver::Result<RunConfig> {
        Ok(RunConfig {
            params: BackendParams::new(self.logn, self.logq, self.delta, self.delta_c)?,
            batch: self.batch,
            weights: self.weights,
            images: self.images,
            labels: self.labels,
            out: self.out,
            encrypted_kernels: self.encrypted_kernels,
            parallel: !self.sequential,
            threads: self.threads,
            seed: self.seed,
            reduced: self.reduced,
        })
    }
}

fn parse_offset(s: &str) -> Option<Fault> {
    let (i, j) = s.split_once(',')?;
    Some(Fault::SkipConvOffset {
        row: i.trim().parse().ok()?,
        col: j.trim().parse().ok()?,
    })
}

fn run(cli: Cli, out: &mut dyn Write) -> revolver::Result<bool> {
    match cli.command {
        Command::Infer(args) => cmd_infer(&args.config()?, out).map(|_| true),
        Command::Bench(args) => {
            let r = cmd_bench(&args.config()?, out)?;
            Ok(r.counts_match && r.parallel_matches_sequential != Some(false))
        }
        Command::Verify { seed, skip_offset } => {
            let fault = match skip_offset.as_deref() {
                None => None,
                Some(s) => Some(parse_offset(s).ok_or_else(|| {
                    revolver::HeError::Argument(format!("--skip-offset expects I,J, got {s:?}"))
                })?),
            };
            cmd_verify(seed, fault, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
