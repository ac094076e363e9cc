//! Complex-quality metrics on alpha-carbon coordinates.
//!
//! `dockq` here is a residue-level approximation ("DockQ-lite"): contacts
//! are alpha-carbon pairs closer than 8 angstrom rather than heavy atoms
//! within 5 angstrom.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::kabsch;
use crate::linalg::{norm3, sub3, Vec3};
use crate::protein_io::{PocketSet, POCKET_THRESHOLD};

pub const DOCKQ_IRMSD_SCALE: f64 = 1.5;
pub const DOCKQ_LRMSD_SCALE: f64 = 8.5;
pub const CONTACT_THRESHOLD: f64 = POCKET_THRESHOLD;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub crmsd: f64,
    pub irmsd: f64,
    /// DockQ-lite: residue-level contacts, not the heavy-atom tool.
    #[serde(rename = "dockq_lite")]
    pub dockq: f64,
    pub fnat: f64,
    pub lrmsd: f64,
}

/// Ligand and receptor coordinates of one complex, in residue order.
#[derive(Clone, Copy, Debug)]
pub struct ComplexCoords<'a> {
    pub ligand: &'a [Vec3],
    pub receptor: &'a [Vec3],
}

impl ComplexCoords<'_> {
    fn all(&self) -> Vec<Vec3> {
        self.ligand.iter().chain(self.receptor).copied().collect()
    }
}

fn plain_rmsd(a: &[Vec3], b: &[Vec3]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| {
        let d = sub3(x, y);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }).sum();
    (sum / a.len() as f64).sqrt()
}

/// RMSD after superposing `pred` onto `reference`.
pub fn crmsd(reference: &[Vec3], pred: &[Vec3]) -> Result<f64> {
    if reference.len() != pred.len() {
        return Err(Error::ShapeMismatch(reference.len(), pred.len()));
    }
    if reference.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: reference.len() });
    }
    let t = kabsch(pred, reference)?;
    Ok(plain_rmsd(reference, &t.apply_all(pred)))
}

fn check_shapes(reference: &ComplexCoords, pred: &ComplexCoords) -> Result<()> {
    if reference.ligand.len() != pred.ligand.len() {
        return Err(Error::ShapeMismatch(reference.ligand.len(), pred.ligand.len()));
    }
    if reference.receptor.len() != pred.receptor.len() {
        return Err(Error::ShapeMismatch(reference.receptor.len(), pred.receptor.len()));
    }
    Ok(())
}

/// Nodes named by the pockets: all ligand-side indices, then all
/// receptor-side indices (repeats kept).
fn pocket_nodes(c: &ComplexCoords, pockets: &PocketSet) -> Vec<Vec3> {
    pockets
        .ligand_indices
        .iter()
        .map(|&i| c.ligand[i])
        .chain(pockets.receptor_indices.iter().map(|&j| c.receptor[j]))
        .collect()
}

/// RMSD over the `2K` ground-truth pocket nodes after their own
/// superposition.
pub fn irmsd(reference: &ComplexCoords, pred: &ComplexCoords, pockets: &PocketSet) -> Result<f64> {
    check_shapes(reference, pred)?;
    if pockets.is_empty() {
        return Err(Error::NoContacts);
    }
    crmsd(&pocket_nodes(reference, pockets), &pocket_nodes(pred, pockets))
}

fn contacts(c: &ComplexCoords) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in c.ligand.iter().enumerate() {
        for (j, b) in c.receptor.iter().enumerate() {
            if norm3(&sub3(a, b)) < CONTACT_THRESHOLD {
                out.push((i, j));
            }
        }
    }
    out
}

/// Fraction of reference contacts present in the prediction.
pub fn fnat(reference: &ComplexCoords, pred: &ComplexCoords) -> Result<f64> {
    check_shapes(reference, pred)?;
    let native = contacts(reference);
    if native.is_empty() {
        return Err(Error::NoContacts);
    }
    let kept = native
        .iter()
        .filter(|&&(i, j)| norm3(&sub3(&pred.ligand[i], &pred.receptor[j])) < CONTACT_THRESHOLD)
        .count();
    Ok(kept as f64 / native.len() as f64)
}

/// Ligand RMSD after superposing the predicted receptor onto the reference
/// receptor.
pub fn lrmsd(reference: &ComplexCoords, pred: &ComplexCoords) -> Result<f64> {
    check_shapes(reference, pred)?;
    let t = kabsch(pred.receptor, reference.receptor)?;
    Ok(plain_rmsd(reference.ligand, &t.apply_all(pred.ligand)))
}

pub fn dockq_score(fnat: f64, irmsd: f64, lrmsd: f64) -> f64 {
    let i = irmsd / DOCKQ_IRMSD_SCALE;
    let l = lrmsd / DOCKQ_LRMSD_SCALE;
    (fnat + 1.0 / (1.0 + i * i) + 1.0 / (1.0 + l * l)) / 3.0
}

/// All metrics for one predicted complex; pockets come from the reference.
pub fn evaluate_complex(reference: &ComplexCoords, pred: &ComplexCoords) -> Result<MetricReport> {
    check_shapes(reference, pred)?;
    let pockets = crate::protein_io::extract_pockets(reference.ligand, reference.receptor, POCKET_THRESHOLD)?;
    let crmsd = crmsd(&reference.all(), &pred.all())?;
    let irmsd = irmsd(reference, pred, &pockets)?;
    let fnat = fnat(reference, pred)?;
    let lrmsd = lrmsd(reference, pred)?;
    Ok(MetricReport {
        crmsd,
        irmsd,
        dockq: dockq_score(fnat, irmsd, lrmsd),
        fnat,
        lrmsd,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Some(Aggregate { median, mean, std: var.sqrt() })
}

/// CSV with one row per statistic and one column per metric.
pub fn aggregate_csv(reports: &[MetricReport]) -> String {
    let cols: [(&str, fn(&MetricReport) -> f64); 5] = [
        ("crmsd", |r| r.crmsd),
        ("irmsd", |r| r.irmsd),
        ("dockq_lite", |r| r.dockq),
        ("fnat", |r| r.fnat),
        ("lrmsd", |r| r.lrmsd),
    ];
    let aggs: Vec<Option<Aggregate>> = cols.iter().map(|(_, f)| aggregate(&reports.iter().map(f).collect::<Vec<_>>())).collect();
    let mut out = String::from("stat");
    for (name, _) in &cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (stat, pick) in [("median", 0), ("mean", 1), ("std", 2)] {
        out.push_str(stat);
        for a in &aggs {
            let v = a.map(|a| [a.median, a.mean, a.std][pick]).unwrap_or(f64::NAN);
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}
