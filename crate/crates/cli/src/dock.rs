use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use paradock::dock::{dock, dock_with_interfaces, DockOptions, DockingResult, InterfacePrediction};
use paradock::epit::{load_checkpoint, ModelParams};
use paradock::geometry::{Quadric, RigidTransform, StandardParaboloid};
use paradock::protein_io::{build_graph, map_atom_records};
use paradock::synth::{ligand_path, read_truth, receptor_path, truth_path, SynthTruth};

use crate::io::{ids_with_suffix, read_structure, require};
use crate::REPORT_SCHEMA_VERSION;

#[derive(Args)]
pub struct DockArgs {
    #[arg(long, required_unless_present = "pairs_dir")]
    ligand: Option<PathBuf>,
    #[arg(long, required_unless_present = "pairs_dir")]
    receptor: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, required_unless_present = "oracle")]
    params: Option<PathBuf>,
    /// Use the interfaces recorded in a synthetic truth file instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Truth JSON for `--oracle` on a single pair.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, required_unless_present = "pairs_dir")]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Drop the refinement rotation from the composed motion.
    #[arg(long)]
    no_refine: bool,
    /// Dock every `{id}_ligand.pdb` / `{id}_receptor.pdb` pair in a directory.
    #[arg(long, conflicts_with_all = ["ligand", "receptor", "out", "report", "truth"], requires = "out_dir")]
    pairs_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct DockReport {
    schema_version: u32,
    mode: &'static str,
    refine: bool,
    transform: RigidTransform,
    theta: f64,
    standard: StandardParaboloid,
    ligand_frame: RigidTransform,
    receptor_frame: RigidTransform,
    ligand_interface: Quadric,
    receptor_interface: Quadric,
    chain_renames: BTreeMap<char, char>,
}

enum Source {
    Model(ModelParams),
    Oracle,
}

const CHAIN_IDS: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// Ligand chain ids that clash with the receptor move to the first free id.
fn chain_renames(ligand: &[char], receptor: &[char]) -> BTreeMap<char, char> {
    let mut used: BTreeSet<char> = receptor.iter().copied().collect();
    let mut renames = BTreeMap::new();
    for &c in ligand {
        if used.contains(&c) {
            if let Some(free) = CHAIN_IDS.chars().find(|x| !used.contains(x) && !ligand.contains(x)) {
                renames.insert(c, free);
                used.insert(free);
            }
        } else {
            used.insert(c);
        }
    }
    renames
}

fn dock_pair(ligand: &Path, receptor: &Path, source: &Source, truth: Option<&SynthTruth>, refine: bool) -> anyhow::Result<(String, String)> {
    let (lig_text, lig) = read_structure(ligand)?;
    let (rec_text, rec) = read_structure(receptor)?;
    let result: DockingResult = match source {
        Source::Model(params) => {
            let features = params.config().feature_config();
            let g1 = build_graph(&lig, &features)?;
            let g2 = build_graph(&rec, &features)?;
            dock(params, &g1, &g2, DockOptions { refine, training: false })?
        }
        Source::Oracle => {
            let t = truth.context("--oracle needs a truth file")?;
            if t.unbound_ligand.len() != lig.len() || t.receptor.len() != rec.len() {
                return Err(paradock::Error::ShapeMismatch(t.unbound_ligand.len(), lig.len()).into());
            }
            let iface = InterfacePrediction::new(t.standard, t.ligand_frame, t.receptor_frame);
            dock_with_interfaces(iface, t.theta, refine, &lig.coords())
        }
    };
    let renames = chain_renames(&lig.chain_ids(), &rec.chain_ids());
    let atoms_only: String = lig_text
        .lines()
        .filter(|l| l.starts_with("ATOM  ") || l.starts_with("HETATM") || l.starts_with("TER"))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut pdb = map_atom_records(&atoms_only, |x| result.transform.apply(&x), |c| *renames.get(&c).unwrap_or(&c));
    for line in rec_text.lines() {
        if line.starts_with("END") && !line.starts_with("ENDMDL") {
            continue;
        }
        pdb.push_str(line);
        pdb.push('\n');
    }
    pdb.push_str("END\n");
    let iface = &result.interfaces;
    let report = DockReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: if matches!(source, Source::Oracle) { "oracle" } else { "model" },
        refine,
        transform: result.transform,
        theta: result.theta,
        standard: iface.standard,
        ligand_frame: iface.transforms[0],
        receptor_frame: iface.transforms[1],
        ligand_interface: iface.general[0],
        receptor_interface: iface.general[1],
        chain_renames: renames,
    };
    Ok((pdb, serde_json::to_string_pretty(&report)? + "\n"))
}

fn load_source(args: &DockArgs) -> anyhow::Result<Source> {
    if args.oracle {
        return Ok(Source::Oracle);
    }
    let path = args.params.as_ref().context("--params is required without --oracle")?;
    require(path)?;
    Ok(Source::Model(load_checkpoint(path)?.params))
}

pub fn run(args: &DockArgs) -> anyhow::Result<()> {
    let refine = !args.no_refine;
    if let Some(dir) = &args.pairs_dir {
        return run_batch(args, dir, refine);
    }
    let (ligand, receptor) = (args.ligand.as_ref().unwrap(), args.receptor.as_ref().unwrap());
    require(ligand)?;
    require(receptor)?;
    let truth = match (&args.truth, args.oracle) {
        (Some(p), _) => {
            require(p)?;
            Some(read_truth(p)?)
        }
        (None, true) => anyhow::bail!("--oracle needs --truth for a single pair"),
        (None, false) => None,
    };
    let source = load_source(args)?;
    let (pdb, report) = dock_pair(ligand, receptor, &source, truth.as_ref(), refine)?;
    std::fs::write(args.out.as_ref().unwrap(), pdb)?;
    match &args.report {
        Some(p) => std::fs::write(p, report)?,
        None => crate::io::emit(&report)?,
    }
    Ok(())
}

fn run_batch(args: &DockArgs, dir: &Path, refine: bool) -> anyhow::Result<()> {
    let out_dir = args.out_dir.as_ref().unwrap();
    let ids: Vec<String> = ids_with_suffix(dir, "_ligand.pdb")?.into_iter().filter(|id| receptor_path(dir, id).exists()).collect();
    let source = load_source(args)?;
    let results: Vec<anyhow::Result<(String, String)>> = ids
        .par_iter()
        .map(|id| {
            let truth = if args.oracle { Some(read_truth(&truth_path(dir, id))?) } else { None };
            dock_pair(&ligand_path(dir, id), &receptor_path(dir, id), &source, truth.as_ref(), refine).with_context(|| format!("complex {id}"))
        })
        .collect();
    std::fs::create_dir_all(out_dir)?;
    let mut first_error = None;
    let mut done = 0;
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok((pdb, report)) => {
                std::fs::write(out_dir.join(format!("{id}_docked.pdb")), pdb)?;
                std::fs::write(out_dir.join(format!("{id}_dock.json")), report)?;
                done += 1;
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                first_error.get_or_insert(e);
            }
        }
    }
    println!("docked {done} of {} pairs into {}", ids.len(), out_dir.display());
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
