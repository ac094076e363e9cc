mod dock;
mod eval;
mod io;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::io::MissingInput;

pub const DEFAULT_SEED: u64 = 0;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "paradock", version, about = "Rigid protein docking through predicted paraboloid interfaces")]
struct Cli {
    /// Random seed; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML or JSON config: training options for `train`, generator options for `synth`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dock a ligand onto a receptor, or every pair in a directory.
    Dock(dock::DockArgs),
    /// Train a model on bound complexes.
    Train(train::TrainArgs),
    /// Score predicted complexes against references.
    Eval(eval::EvalArgs),
    /// Generate synthetic complexes with known interfaces.
    Synth(SynthArgs),
    /// Summarize a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    checkpoint: PathBuf,
}

pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
}

fn synth(args: &SynthArgs, g: &Globals) -> anyhow::Result<()> {
    let cfg: paradock::synth::SynthConfig = io::load_config(g.config.as_deref())?;
    if args.n == 0 {
        return Err(paradock::Error::Config("--n must be at least 1".into()).into());
    }
    let seed = g.seed.unwrap_or(DEFAULT_SEED);
    for truth in paradock::synth::generate(&cfg, args.n, seed)? {
        paradock::synth::write_complex(&args.out, &truth)?;
    }
    println!("wrote {} complexes to {}", args.n, args.out.display());
    Ok(())
}

fn inspect(args: &InspectArgs) -> anyhow::Result<()> {
    io::require(&args.checkpoint)?;
    let ckpt = paradock::epit::load_checkpoint(&args.checkpoint)?;
    let tensors: Vec<_> = ckpt
        .params
        .network
        .entries
        .iter()
        .map(|e| serde_json::json!({"name": e.name, "shape": e.shape}))
        .collect();
    let extra: Vec<_> = ckpt.extra.iter().map(|e| serde_json::json!({"name": e.name, "shape": e.shape})).collect();
    let summary = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": ckpt.params.config(),
        "meta": ckpt.meta,
        "parameters": ckpt.params.len(),
        "tensors": tensors,
        "extra": extra,
    });
    io::emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<MissingInput>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<paradock::Error>() {
            return match e {
                paradock::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                paradock::Error::ShapeMismatch(..) => 3,
                paradock::Error::NoContacts => 4,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let globals = Globals {
        seed: cli.seed,
        config: cli.config,
    };
    let result = match &cli.command {
        Command::Dock(a) => dock::run(a),
        Command::Train(a) => train::run(a, &globals),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth(a, &globals),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
