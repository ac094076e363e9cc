//! Residue-level PDB reading and writing (alpha carbons only).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec3;

const RESIDUE_NAMES: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET", "PHE", "PRO",
    "SER", "THR", "TRP", "TYR", "VAL",
];

/// Residue type code: the 20 canonical amino acids followed by `UNK`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResidueType(pub u8);

impl ResidueType {
    pub const COUNT: usize = 21;
    pub const UNK: ResidueType = ResidueType(20);

    pub fn from_name(name: &str) -> Option<Self> {
        RESIDUE_NAMES.iter().position(|n| *n == name).map(|i| ResidueType(i as u8))
    }

    pub fn name(self) -> &'static str {
        RESIDUE_NAMES.get(self.0 as usize).copied().unwrap_or("UNK")
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residue {
    pub kind: ResidueType,
    /// Name as written in the file (may differ from `kind` for `UNK`).
    pub name: String,
    pub seq: i32,
    pub icode: char,
    pub ca: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub id: char,
    pub residues: Vec<Residue>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProteinStructure {
    pub chains: Vec<Chain>,
    /// Residues whose name was not one of the canonical twenty.
    pub unknown_residues: usize,
}

impl ProteinStructure {
    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.residues.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn residues(&self) -> impl Iterator<Item = (&Chain, &Residue)> {
        self.chains.iter().flat_map(|c| c.residues.iter().map(move |r| (c, r)))
    }

    pub fn coords(&self) -> Vec<Vec3> {
        self.residues().map(|(_, r)| r.ca).collect()
    }

    pub fn residue_types(&self) -> Vec<ResidueType> {
        self.residues().map(|(_, r)| r.kind).collect()
    }

    /// Index of every residue within its own chain.
    pub fn chain_positions(&self) -> Vec<usize> {
        self.chains.iter().flat_map(|c| 0..c.residues.len()).collect()
    }

    pub fn chain_ids(&self) -> Vec<char> {
        self.chains.iter().map(|c| c.id).collect()
    }

    /// Replaces every CA coordinate, in residue order.
    pub fn with_coords(&self, coords: &[Vec3]) -> Self {
        assert_eq!(coords.len(), self.len());
        let mut out = self.clone();
        let mut it = coords.iter();
        for chain in &mut out.chains {
            for r in &mut chain.residues {
                r.ca = *it.next().expect("coordinate count checked");
            }
        }
        out
    }

    /// Keeps only the listed chains, in their original order.
    pub fn select_chains(&self, ids: &[char]) -> Self {
        ProteinStructure {
            chains: self.chains.iter().filter(|c| ids.contains(&c.id)).cloned().collect(),
            unknown_residues: 0,
        }
    }

    /// Appends the chains of `other`.
    pub fn concat(&self, other: &ProteinStructure) -> Self {
        let mut chains = self.chains.clone();
        chains.extend(other.chains.iter().cloned());
        ProteinStructure {
            chains,
            unknown_residues: self.unknown_residues + other.unknown_residues,
        }
    }

    /// CA-only PDB text.
    pub fn to_pdb(&self) -> String {
        let mut out = String::new();
        let mut serial = 1;
        for chain in &self.chains {
            let mut last = None;
            for r in &chain.residues {
                let _ = writeln!(out, "{}", atom_line(serial, r, chain.id));
                serial += 1;
                last = Some(r);
            }
            if let Some(r) = last {
                let _ = writeln!(out, "TER   {:>5}      {:>3} {}{:>4}{}", serial, r.name, chain.id, r.seq, r.icode);
                serial += 1;
            }
        }
        out.push_str("END\n");
        out
    }
}

fn atom_line(serial: usize, r: &Residue, chain: char) -> String {
    format!(
        "ATOM  {:>5}  CA  {:>3} {}{:>4}{}   {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}           C  ",
        serial % 100_000,
        r.name,
        chain,
        r.seq,
        r.icode,
        r.ca[0],
        r.ca[1],
        r.ca[2],
        1.0,
        0.0
    )
}

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        return "";
    }
    line.get(start..end).unwrap_or("")
}

fn parse_num<T: std::str::FromStr>(line: &str, lineno: usize, start: usize, end: usize, what: &str) -> Result<T> {
    field(line, start, end).trim().parse().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("malformed {what} field"),
    })
}

struct Candidate {
    residue: Residue,
    occupancy: f64,
}

/// Parses PDB text into one residue per `(chain, resSeq, iCode)` that has a
/// CA atom in an `ATOM` record.
///
/// Alternate locations resolve to the highest occupancy (first wins ties),
/// only the first `MODEL` is read, and `HETATM` records are ignored.
pub fn parse_pdb(text: &str) -> Result<ProteinStructure> {
    let mut order: Vec<(char, i32, char)> = Vec::new();
    let mut best: HashMap<(char, i32, char), Candidate> = HashMap::new();
    let mut models_seen = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with("MODEL") {
            models_seen += 1;
            if models_seen > 1 {
                break;
            }
            continue;
        }
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM  ") {
            continue;
        }
        if line.len() < 54 {
            return Err(Error::Parse {
                line: lineno,
                message: "ATOM record shorter than the coordinate columns".into(),
            });
        }
        let seq: i32 = parse_num(line, lineno, 22, 26, "residue sequence")?;
        let x: f64 = parse_num(line, lineno, 30, 38, "x coordinate")?;
        let y: f64 = parse_num(line, lineno, 38, 46, "y coordinate")?;
        let z: f64 = parse_num(line, lineno, 46, 54, "z coordinate")?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite coordinate".into(),
            });
        }
        if field(line, 12, 16).trim() != "CA" {
            continue;
        }
        let occupancy = match field(line, 54, 60).trim() {
            "" => 1.0,
            s => s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: "malformed occupancy field".into(),
            })?,
        };
        let name = field(line, 17, 20).trim().to_string();
        let chain = field(line, 21, 22).chars().next().unwrap_or(' ');
        let icode = field(line, 26, 27).chars().next().unwrap_or(' ');
        let kind = ResidueType::from_name(&name).unwrap_or(ResidueType::UNK);
        let key = (chain, seq, icode);
        let cand = Candidate {
            residue: Residue {
                kind,
                name,
                seq,
                icode,
                ca: [x, y, z],
            },
            occupancy,
        };
        match best.get_mut(&key) {
            Some(prev) => {
                if cand.occupancy > prev.occupancy {
                    *prev = cand;
                }
            }
            None => {
                order.push(key);
                best.insert(key, cand);
            }
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyStructure);
    }
    let mut structure = ProteinStructure::default();
    for key in order {
        let cand = best.remove(&key).expect("key recorded once");
        if cand.residue.kind == ResidueType::UNK && cand.residue.name != "UNK" {
            structure.unknown_residues += 1;
        }
        match structure.chains.iter_mut().find(|c| c.id == key.0) {
            Some(c) => c.residues.push(cand.residue),
            None => structure.chains.push(Chain {
                id: key.0,
                residues: vec![cand.residue],
            }),
        }
    }
    for chain in &mut structure.chains {
        chain.residues.sort_by_key(|r| (r.seq, r.icode));
    }
    Ok(structure)
}

/// Rewrites the coordinates of every `ATOM`/`HETATM` record with `f`,
/// renaming chains through `rename`. Other records pass through unchanged.
pub fn map_atom_records<F, G>(text: &str, mut f: F, rename: G) -> String
where
    F: FnMut(Vec3) -> Vec3,
    G: Fn(char) -> char,
{
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let is_atom = line.starts_with("ATOM  ") || line.starts_with("HETATM");
        let is_ter = line.starts_with("TER");
        if is_atom && line.len() >= 54 && line.is_ascii() {
            let parse = |s: usize, e: usize| field(line, s, e).trim().parse::<f64>().ok();
            if let (Some(x), Some(y), Some(z)) = (parse(30, 38), parse(38, 46), parse(46, 54)) {
                let p = f([x, y, z]);
                let chain = rename(field(line, 21, 22).chars().next().unwrap_or(' '));
                let _ = writeln!(
                    out,
                    "{}{}{}{:>8.3}{:>8.3}{:>8.3}{}",
                    &line[..21],
                    chain,
                    &line[22..30],
                    p[0],
                    p[1],
                    p[2],
                    &line[54..]
                );
                continue;
            }
        }
        if is_ter && line.len() >= 22 && line.is_ascii() {
            let chain = rename(field(line, 21, 22).chars().next().unwrap_or(' '));
            let _ = writeln!(out, "{}{}{}", &line[..21], chain, &line[22..]);
            continue;
        }
        if line.starts_with("END") && !line.starts_with("ENDMDL") {
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}
