use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use repvec::{run_command, Command, Context};

/// Patient representation learning pipeline.
#[derive(Debug, Parser)]
#[command(name = "repvec", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = Context::load(&args.config, args.seed, args.out).and_then(|ctx| {
        let manifest = run_command(args.command, &ctx)?;
        Ok((ctx, manifest))
    });
    match result {
        Ok((ctx, manifest)) => {
            for out in &manifest.outputs {
                println!("wrote {}", out.strip_prefix(&ctx.workspace.root).unwrap_or(out).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("repvec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
