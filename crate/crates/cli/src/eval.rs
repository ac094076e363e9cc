use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use paradock::metrics::{aggregate_csv, evaluate_complex, ComplexCoords, MetricReport};
use paradock::protein_io::ProteinStructure;
use paradock::synth::{read_truth, truth_path};

use crate::io::{ids_with_suffix, read_structure, require, MissingInput};
use crate::REPORT_SCHEMA_VERSION;

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "pred_dir")]
    pred: Option<PathBuf>,
    #[arg(long = "ref", required_unless_present = "pred_dir")]
    reference: Option<PathBuf>,
    /// Ligand and receptor chains as `LIG:REC`, e.g. `HL:A`. Default: the
    /// reference's first chain is the ligand, the rest the receptor.
    #[arg(long)]
    split: Option<String>,
    /// Batch mode: `{id}_docked.pdb` files scored against `{id}_bound.pdb`,
    /// or against the bound complex in `{id}_truth.json`.
    #[arg(long, requires = "ref_dir", conflicts_with_all = ["pred", "reference"])]
    pred_dir: Option<PathBuf>,
    #[arg(long)]
    ref_dir: Option<PathBuf>,
    /// JSON report destination (stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Aggregate median/mean/std table (batch mode; stdout when absent).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    id: String,
    #[serde(flatten)]
    metrics: MetricReport,
}

fn parse_split(spec: Option<&str>, reference: &ProteinStructure) -> anyhow::Result<(Vec<char>, Vec<char>)> {
    match spec {
        Some(s) => {
            let (l, r) = s
                .split_once(':')
                .ok_or_else(|| paradock::Error::Config(format!("split {s:?} is not of the form LIG:REC")))?;
            let (l, r): (Vec<char>, Vec<char>) = (l.chars().collect(), r.chars().collect());
            if l.is_empty() || r.is_empty() {
                return Err(paradock::Error::Config(format!("split {s:?} needs chains on both sides")).into());
            }
            Ok((l, r))
        }
        None => {
            let ids = reference.chain_ids();
            if ids.len() < 2 {
                return Err(paradock::Error::Config("reference has a single chain; pass --split".into()).into());
            }
            Ok((ids[..1].to_vec(), ids[1..].to_vec()))
        }
    }
}

fn score(pred: &Path, r: &ProteinStructure, split: Option<&str>) -> anyhow::Result<MetricReport> {
    let (_, p) = read_structure(pred)?;
    let (lig, rec) = parse_split(split, r)?;
    let coords = |s: &ProteinStructure, ids: &[char]| s.select_chains(ids).coords();
    let (rl, rr, pl, pr) = (coords(r, &lig), coords(r, &rec), coords(&p, &lig), coords(&p, &rec));
    if rl.len() != pl.len() {
        return Err(paradock::Error::ShapeMismatch(rl.len(), pl.len()).into());
    }
    if rr.len() != pr.len() {
        return Err(paradock::Error::ShapeMismatch(rr.len(), pr.len()).into());
    }
    Ok(evaluate_complex(
        &ComplexCoords { ligand: &rl, receptor: &rr },
        &ComplexCoords { ligand: &pl, receptor: &pr },
    )?)
}

fn load_reference(dir: &Path, id: &str) -> anyhow::Result<ProteinStructure> {
    let pdb = dir.join(format!("{id}_bound.pdb"));
    if pdb.exists() {
        return Ok(read_structure(&pdb)?.1);
    }
    Ok(read_truth(&truth_path(dir, id))?.bound_complex())
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => crate::io::emit(text)?,
    }
    Ok(())
}

pub fn run(args: &EvalArgs) -> anyhow::Result<()> {
    if let Some(dir) = &args.pred_dir {
        return run_batch(args, dir, args.ref_dir.as_ref().unwrap());
    }
    let (pred, reference) = (args.pred.as_ref().unwrap(), args.reference.as_ref().unwrap());
    let (_, r) = read_structure(reference)?;
    let metrics = score(pred, &r, args.split.as_deref())?;
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        id: pred.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        metrics,
    };
    write_or_print(args.report.as_ref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn run_batch(args: &EvalArgs, pred_dir: &Path, ref_dir: &Path) -> anyhow::Result<()> {
    require(ref_dir)?;
    let ids = ids_with_suffix(pred_dir, "_docked.pdb")?;
    if ids.is_empty() {
        return Err(paradock::Error::Config(format!("no *_docked.pdb files in {}", pred_dir.display())).into());
    }
    for id in &ids {
        let (pdb, truth) = (ref_dir.join(format!("{id}_bound.pdb")), truth_path(ref_dir, id));
        if !pdb.exists() && !truth.exists() {
            return Err(MissingInput(pdb).into());
        }
    }
    let scored: Vec<anyhow::Result<MetricReport>> = ids
        .par_iter()
        .map(|id| {
            let reference = load_reference(ref_dir, id)?;
            score(&pred_dir.join(format!("{id}_docked.pdb")), &reference, args.split.as_deref()).with_context(|| format!("complex {id}"))
        })
        .collect();
    let mut reports = Vec::new();
    for (id, s) in ids.iter().zip(scored) {
        reports.push(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            id: id.clone(),
            metrics: s?,
        });
    }
    if let Some(p) = &args.report {
        std::fs::write(p, serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    let metrics: Vec<MetricReport> = reports.iter().map(|r| r.metrics).collect();
    write_or_print(args.csv.as_ref(), &aggregate_csv(&metrics))
}
