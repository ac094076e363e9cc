use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;

use paradock::epit::ModelConfig;
use paradock::protein_io::{parse_pdb, ProteinStructure};
use paradock::synth::{ligand_path, read_truth, receptor_path};
use paradock::train::Complex;

#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "input not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

pub fn require(path: &Path) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingInput(path.to_path_buf()).into())
    }
}

pub fn read_structure(path: &Path) -> anyhow::Result<(String, ProteinStructure)> {
    require(path)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let structure = parse_pdb(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((text, structure))
}

/// Defaults when no file is given; `.json` files are JSON, anything else TOML.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    require(path)?;
    let text = std::fs::read_to_string(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| paradock::Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| paradock::Error::Config(format!("{}: {e}", path.display())))?
    };
    Ok(parsed)
}

/// Sorted ids of files named `{id}{suffix}` in `dir`.
pub fn ids_with_suffix(dir: &Path, suffix: &str) -> anyhow::Result<Vec<String>> {
    require(dir)?;
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(suffix) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Bound complexes of a dataset directory. A `{id}_truth.json` from the
/// generator wins; otherwise `{id}_ligand.pdb` and `{id}_receptor.pdb` are
/// taken as the bound pair.
pub fn load_dataset(dir: &Path, model: &ModelConfig) -> anyhow::Result<Vec<Complex>> {
    let mut out = Vec::new();
    let truths = ids_with_suffix(dir, "_truth.json")?;
    for id in ids_with_suffix(dir, "_ligand.pdb")? {
        if truths.contains(&id) {
            continue;
        }
        let rec = receptor_path(dir, &id);
        if !rec.exists() {
            continue;
        }
        let (_, ligand) = read_structure(&ligand_path(dir, &id))?;
        let (_, receptor) = read_structure(&rec)?;
        out.push(Complex::from_structures(&id, &ligand, &receptor, model)?);
    }
    for id in &truths {
        let truth = read_truth(&dir.join(format!("{id}_truth.json")))?;
        out.push(Complex::from_truth(&truth, model)?);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Writes report text to stdout; a reader that closed the pipe early is not an error.
pub fn emit(text: &str) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}
