//! Checkpoint files: a text manifest followed by a little-endian f64 blob.
//!
//! ```text
//! paradock-checkpoint v1
//! config {"embed_dim":64,...}
//! meta {...}
//! tensor embed 21,64 0 1344
//! ...
//! end
//! <raw bytes>
//! ```
//!
//! Offsets and lengths count f64 values from the start of the blob.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "paradock-checkpoint v1";

/// Extra array stored after the model weights (optimiser moments and the
/// like).
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub extra: Vec<NamedArray>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Checkpoint {
            params,
            extra: Vec::new(),
            meta: serde_json::Value::Null,
        }
    }

    pub fn extra(&self, name: &str) -> Option<&NamedArray> {
        self.extra.iter().find(|a| a.name == name)
    }
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> Result<()> {
    let p = &ckpt.params;
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "config {}", serde_json::to_string(p.config())?)?;
    writeln!(out, "meta {}", serde_json::to_string(&ckpt.meta)?)?;
    for e in &p.network.entries {
        writeln!(out, "tensor {} {} {} {}", e.name, shape_str(&e.shape), e.offset, e.len())?;
    }
    let mut offset = p.len();
    for a in &ckpt.extra {
        if a.name.contains(char::is_whitespace) {
            return Err(bad(format!("array name {:?} contains whitespace", a.name)));
        }
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::ShapeMismatch(a.shape.iter().product(), a.data.len()));
        }
        writeln!(out, "extra {} {} {} {}", a.name, shape_str(&a.shape), offset, a.data.len())?;
        offset += a.data.len();
    }
    writeln!(out, "end")?;
    let mut blob = Vec::with_capacity(offset * 8);
    for v in p.values.iter().chain(ckpt.extra.iter().flat_map(|a| a.data.iter())) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&blob)?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<Checkpoint> {
    let mut line = String::new();
    let mut next_line = |line: &mut String| -> Result<()> {
        line.clear();
        if input.read_line(line)? == 0 {
            return Err(bad("unexpected end of manifest"));
        }
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        Ok(())
    };
    next_line(&mut line)?;
    if line != CHECKPOINT_MAGIC {
        return Err(bad(format!("unrecognised header {line:?}")));
    }
    let mut config: Option<ModelConfig> = None;
    let mut meta = serde_json::Value::Null;
    let mut tensors = Vec::new();
    let mut extras = Vec::new();
    loop {
        next_line(&mut line)?;
        if line == "end" {
            break;
        }
        let (kind, rest) = line.split_once(' ').ok_or_else(|| bad(format!("malformed manifest line {line:?}")))?;
        match kind {
            "config" => config = Some(serde_json::from_str(rest)?),
            "meta" => meta = serde_json::from_str(rest)?,
            "tensor" | "extra" => {
                let f: Vec<&str> = rest.split(' ').collect();
                if f.len() != 4 {
                    return Err(bad(format!("malformed {kind} line {line:?}")));
                }
                let shape = if f[1].is_empty() {
                    Vec::new()
                } else {
                    f[1].split(',').map(|d| d.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|e| bad(e.to_string()))?
                };
                let offset: usize = f[2].parse().map_err(|_| bad(format!("bad offset in {line:?}")))?;
                let len: usize = f[3].parse().map_err(|_| bad(format!("bad length in {line:?}")))?;
                let item = (f[0].to_string(), shape, offset, len);
                if kind == "tensor" {
                    tensors.push(item);
                } else {
                    extras.push(item);
                }
            }
            _ => return Err(bad(format!("unknown manifest entry {kind:?}"))),
        }
    }
    drop(next_line);
    let config = config.ok_or_else(|| bad("missing config line"))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(bad("blob length is not a multiple of 8"));
    }
    let blob: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let slice = |offset: usize, len: usize| -> Result<&[f64]> {
        blob.get(offset..offset + len).ok_or_else(|| bad("array extends past end of blob"))
    };

    let mut params = ModelParams::zeros(&config)?;
    if tensors.len() != params.network.entries.len() {
        return Err(bad(format!("expected {} tensors, found {}", params.network.entries.len(), tensors.len())));
    }
    for (name, shape, offset, len) in &tensors {
        let entry = params.network.entry(name).ok_or_else(|| bad(format!("unexpected tensor {name}")))?.clone();
        if &entry.shape != shape || entry.len() != *len {
            return Err(bad(format!("shape of {name} does not match the configuration")));
        }
        params.values[entry.range()].copy_from_slice(slice(*offset, *len)?);
    }
    let extra = extras
        .into_iter()
        .map(|(name, shape, offset, len)| {
            Ok(NamedArray {
                name,
                shape,
                data: slice(offset, len)?.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Checkpoint { params, extra, meta })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
