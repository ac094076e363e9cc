use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use paradock::epit::{load_checkpoint, save_checkpoint, Checkpoint, ModelParams};
use paradock::train::{evaluate, fixed_augmentation, train_loop, EpochLog, RetainedCheckpoint, TrainConfig};

use crate::io::{load_config, load_dataset, require};
use crate::{Globals, DEFAULT_SEED, REPORT_SCHEMA_VERSION};

#[derive(Args)]
pub struct TrainArgs {
    /// Directory of bound complexes.
    #[arg(long)]
    data: PathBuf,
    /// Validation complexes (default: the training set).
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    no_fit: bool,
    #[arg(long)]
    no_overlap: bool,
    #[arg(long)]
    no_ref: bool,
    #[arg(long)]
    no_dock: bool,
    /// Train without the refinement rotation in the composed motion.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    config: &'a TrainConfig,
    complexes: usize,
    steps: usize,
    stopped_early: bool,
    /// Total loss on a fixed augmentation of the training set.
    initial_loss: f64,
    final_loss: f64,
    epochs: &'a [EpochLog],
    retained: &'a [RetainedCheckpoint],
    warnings: &'a [String],
}

fn resolve_config(args: &TrainArgs, g: &Globals) -> anyhow::Result<TrainConfig> {
    let mut cfg: TrainConfig = load_config(g.config.as_deref())?;
    cfg.seed = g.seed.unwrap_or(if g.config.is_some() { cfg.seed } else { DEFAULT_SEED });
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if args.max_steps.is_some() {
        cfg.max_steps = args.max_steps;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    for (off, w) in [
        (args.no_fit, &mut cfg.weights.fit),
        (args.no_overlap, &mut cfg.weights.overlap),
        (args.no_ref, &mut cfg.weights.refinement),
        (args.no_dock, &mut cfg.weights.dock),
    ] {
        if off {
            *w = 0.0;
        }
    }
    if args.no_refine {
        cfg.refine = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs, g: &Globals) -> anyhow::Result<()> {
    let mut cfg = resolve_config(args, g)?;
    let init = match &args.init {
        Some(p) => {
            require(p)?;
            let params = load_checkpoint(p)?.params;
            cfg.model = params.config().clone();
            params
        }
        None => ModelParams::init(&cfg.model, cfg.seed)?,
    };
    let train = load_dataset(&args.data, &cfg.model)?;
    if train.is_empty() {
        return Err(paradock::Error::Config(format!("no complexes found in {}", args.data.display())).into());
    }
    let val = match &args.val {
        Some(dir) => load_dataset(dir, &cfg.model)?,
        None => Vec::new(),
    };
    std::fs::create_dir_all(&args.out)?;
    let probe = fixed_augmentation(&train, cfg.seed, cfg.translation_half_width);
    let initial_loss = evaluate(&init, &probe, &cfg.weights, cfg.refine)?.total;

    let mut log = std::io::BufWriter::new(std::fs::File::create(args.out.join("steps.jsonl"))?);
    let mut log_error = None;
    let outcome = train_loop(init, &train, &val, &cfg, Some(&args.out), &mut |s| {
        if log_error.is_none() {
            if let Err(e) = serde_json::to_writer(&mut log, s).map_err(std::io::Error::from).and_then(|_| writeln!(log)) {
                log_error = Some(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    log.flush()?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }

    let final_loss = evaluate(&outcome.params, &probe, &cfg.weights, cfg.refine)?.total;
    let ckpt = Checkpoint {
        params: outcome.params.clone(),
        extra: outcome.optimizer.to_arrays(),
        meta: serde_json::json!({"steps": outcome.steps, "final_loss": final_loss}),
    };
    save_checkpoint(&args.out.join("final.ckpt"), &ckpt)?;
    let summary = Summary {
        schema_version: REPORT_SCHEMA_VERSION,
        config: &cfg,
        complexes: train.len(),
        steps: outcome.steps,
        stopped_early: outcome.stopped_early,
        initial_loss,
        final_loss,
        epochs: &outcome.epochs,
        retained: &outcome.retained,
        warnings: &outcome.warnings,
    };
    std::fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "trained {} steps on {} complexes: loss {initial_loss:.4} -> {final_loss:.4}",
        outcome.steps,
        train.len()
    );
    Ok(())
}
