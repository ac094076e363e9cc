//! Synthetic complexes with a known paraboloid interface.
//!
//! Ligand residues are sampled just below the standard surface
//! (`phi < 0`) and receptor residues just above it; both proteins are then
//! moved by independent random motions to give the unbound inputs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{random_transform, refinement_rotation, RigidTransform, StandardParaboloid};
use crate::linalg::*;
use crate::protein_io::{extract_pockets, Chain, ProteinStructure, Residue, ResidueType, POCKET_THRESHOLD};

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub ligand_residues: usize,
    pub receptor_residues: usize,
    pub lambda_range: [f64; 2],
    pub beta_range: [f64; 2],
    /// Radius of the disc (in the standard xy plane) residues are drawn from.
    pub radius: f64,
    /// Vertical distance of residues from the surface.
    pub depth_range: [f64; 2],
    /// Minimum distance of every residue from the surface.
    pub surface_margin: f64,
    /// Minimum distance between residues of the same protein.
    pub spacing: f64,
    /// Half-width of the translation cube of the unbound motions.
    pub motion_half_width: f64,
    /// Give half of the ligands a half-turn about the interface axis, which
    /// the refinement angle must undo.
    pub twist: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            ligand_residues: 24,
            receptor_residues: 28,
            lambda_range: [0.05, 0.2],
            beta_range: [0.5, 1.5],
            radius: 11.0,
            depth_range: [0.6, 7.0],
            surface_margin: 0.5,
            spacing: 3.0,
            motion_half_width: 20.0,
            twist: true,
        }
    }
}

/// Cross-protein clearance implied by the surface margin on both sides.
pub fn clearance(cfg: &SynthConfig) -> f64 {
    2.0 * cfg.surface_margin
}

/// Ground truth of one synthetic complex. Coordinates are stored at full
/// precision; the PDB files round them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub schema_version: u32,
    pub id: String,
    pub standard: StandardParaboloid,
    /// Maps the standard frame onto the unbound ligand.
    pub ligand_frame: RigidTransform,
    /// Maps the standard frame onto the receptor.
    pub receptor_frame: RigidTransform,
    /// Refinement angle that reconciles the two frames.
    pub theta: f64,
    /// Unbound ligand = `q_gt * bound ligand + t_gt`.
    pub q_gt: Mat3,
    pub t_gt: Vec3,
    /// Ligand-to-receptor motion that restores the bound complex.
    pub docking_transform: RigidTransform,
    pub ligand_types: Vec<ResidueType>,
    pub receptor_types: Vec<ResidueType>,
    pub unbound_ligand: Vec<Vec3>,
    pub bound_ligand: Vec<Vec3>,
    pub receptor: Vec<Vec3>,
}

impl SynthTruth {
    pub fn ligand_structure(&self, coords: &[Vec3]) -> ProteinStructure {
        structure('A', &self.ligand_types, coords)
    }

    pub fn receptor_structure(&self) -> ProteinStructure {
        structure('B', &self.receptor_types, &self.receptor)
    }

    pub fn unbound_ligand_structure(&self) -> ProteinStructure {
        self.ligand_structure(&self.unbound_ligand)
    }

    /// Bound ligand (chain A) followed by the receptor (chain B).
    pub fn bound_complex(&self) -> ProteinStructure {
        self.bound_ligand_structure().concat(&self.receptor_structure())
    }

    pub fn bound_ligand_structure(&self) -> ProteinStructure {
        self.ligand_structure(&self.bound_ligand)
    }
}

fn structure(chain: char, types: &[ResidueType], coords: &[Vec3]) -> ProteinStructure {
    let residues = types
        .iter()
        .zip(coords)
        .enumerate()
        .map(|(i, (&kind, &ca))| Residue {
            kind,
            name: kind.name().to_string(),
            seq: i as i32 + 1,
            icode: ' ',
            ca,
        })
        .collect();
    ProteinStructure {
        chains: vec![Chain { id: chain, residues }],
        unknown_residues: 0,
    }
}

/// Safe lower bound on the distance from `x` to the surface: `phi` cannot
/// change sign within `r` of `x` when `|phi(x)| > r * max |grad phi|` on that
/// ball.
fn clear_of_surface(s: &StandardParaboloid, x: &Vec3, r: f64) -> bool {
    let phi = s.lambda1 * x[0] * x[0] + s.lambda2 * x[1] * x[1] + s.beta * x[2];
    let gx = 2.0 * s.lambda1 * (x[0].abs() + r);
    let gy = 2.0 * s.lambda2 * (x[1].abs() + r);
    let grad = (gx * gx + gy * gy + s.beta * s.beta).sqrt();
    phi.abs() > r * grad
}

fn sample_side<R: Rng>(rng: &mut R, s: &StandardParaboloid, cfg: &SynthConfig, n: usize, below: bool) -> Result<Vec<Vec3>> {
    let mut pts: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0;
    while pts.len() < n {
        attempts += 1;
        if attempts > 200_000 {
            return Err(Error::Config("synthetic sampler could not place residues; increase radius or reduce counts".into()));
        }
        let r = cfg.radius * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, y) = (r * a.cos(), r * a.sin());
        let surface_z = -(s.lambda1 * x * x + s.lambda2 * y * y) / s.beta;
        let depth = rng.random_range(cfg.depth_range[0]..cfg.depth_range[1]);
        let p = [x, y, if below { surface_z - depth } else { surface_z + depth }];
        if !clear_of_surface(s, &p, cfg.surface_margin) {
            continue;
        }
        if pts.iter().any(|q| norm3(&sub3(q, &p)) < cfg.spacing) {
            continue;
        }
        pts.push(p);
    }
    Ok(pts)
}

/// One complex from a dedicated random stream.
pub fn generate_one(cfg: &SynthConfig, seed: u64, id: &str) -> Result<SynthTruth> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = StandardParaboloid {
        lambda1: rng.random_range(cfg.lambda_range[0]..=cfg.lambda_range[1]),
        lambda2: rng.random_range(cfg.lambda_range[0]..=cfg.lambda_range[1]),
        beta: rng.random_range(cfg.beta_range[0]..=cfg.beta_range[1]),
    };
    let lig_std = sample_side(&mut rng, &standard, cfg, cfg.ligand_residues, true)?;
    let rec_std = sample_side(&mut rng, &standard, cfg, cfg.receptor_residues, false)?;
    extract_pockets(&lig_std, &rec_std, POCKET_THRESHOLD)?;
    let ligand_types = (0..cfg.ligand_residues).map(|_| ResidueType(rng.random_range(0..20))).collect();
    let receptor_types = (0..cfg.receptor_residues).map(|_| ResidueType(rng.random_range(0..20))).collect();

    let g1 = random_transform(&mut rng, cfg.motion_half_width);
    let g2 = random_transform(&mut rng, cfg.motion_half_width);
    let psi = if cfg.twist && rng.random::<bool>() { std::f64::consts::PI } else { 0.0 };
    let twist = RigidTransform {
        rotation: refinement_rotation(psi),
        translation: [0.0; 3],
    };
    let ligand_frame = g1.after(&twist);
    let receptor_frame = g2;
    let docking_transform = g2.after(&g1.inverse());
    let gt = docking_transform.inverse();
    Ok(SynthTruth {
        schema_version: TRUTH_SCHEMA_VERSION,
        id: id.to_string(),
        standard,
        ligand_frame,
        receptor_frame,
        theta: psi,
        q_gt: gt.rotation,
        t_gt: gt.translation,
        docking_transform,
        ligand_types,
        receptor_types,
        unbound_ligand: g1.apply_all(&lig_std),
        bound_ligand: g2.apply_all(&lig_std),
        receptor: g2.apply_all(&rec_std),
    })
}

/// `n` complexes; complex `i` uses its own stream derived from `seed`.
pub fn generate(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Vec<SynthTruth>> {
    (0..n)
        .map(|i| {
            let sub = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            generate_one(cfg, sub, &format!("synth_{i:03}"))
        })
        .collect()
}

pub fn ligand_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}_ligand.pdb"))
}

pub fn receptor_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}_receptor.pdb"))
}

pub fn truth_path(dir: &Path, id: &str) -> std::path::PathBuf {
    dir.join(format!("{id}_truth.json"))
}

/// Writes the unbound ligand, the receptor and the truth JSON.
pub fn write_complex(dir: &Path, truth: &SynthTruth) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(ligand_path(dir, &truth.id), truth.unbound_ligand_structure().to_pdb())?;
    std::fs::write(receptor_path(dir, &truth.id), truth.receptor_structure().to_pdb())?;
    std::fs::write(truth_path(dir, &truth.id), serde_json::to_string_pretty(truth)?)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<SynthTruth> {
    let truth: SynthTruth = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if truth.schema_version != TRUTH_SCHEMA_VERSION {
        return Err(Error::Config(format!("unsupported truth schema version {}", truth.schema_version)));
    }
    Ok(truth)
}
