//! Binding-site pockets: midpoints of close cross-protein residue pairs in
//! the bound complex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::linalg::{norm3, sub3, Vec3};

pub const POCKET_THRESHOLD: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Ligand,
    Receptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PocketSet {
    pub midpoints: Vec<Vec3>,
    pub ligand_indices: Vec<usize>,
    pub receptor_indices: Vec<usize>,
}

impl PocketSet {
    pub fn len(&self) -> usize {
        self.midpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midpoints.is_empty()
    }
}

/// Every ligand/receptor pair closer than `threshold` (strict), ordered by
/// ligand index then receptor index.
pub fn extract_pockets(ligand: &[Vec3], receptor: &[Vec3], threshold: f64) -> Result<PocketSet> {
    let mut out = PocketSet {
        midpoints: Vec::new(),
        ligand_indices: Vec::new(),
        receptor_indices: Vec::new(),
    };
    for (i, a) in ligand.iter().enumerate() {
        for (j, b) in receptor.iter().enumerate() {
            if norm3(&sub3(a, b)) < threshold {
                out.midpoints.push([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0]);
                out.ligand_indices.push(i);
                out.receptor_indices.push(j);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoContacts);
    }
    Ok(out)
}

/// Moves the pocket copy belonging to `side` along with that protein.
///
/// Both sides share the same bound midpoints; the side only labels which
/// protein's motion is applied.
pub fn track_pockets(pockets: &PocketSet, t: &RigidTransform, _side: Side) -> PocketSet {
    PocketSet {
        midpoints: t.apply_all(&pockets.midpoints),
        ..pockets.clone()
    }
}
