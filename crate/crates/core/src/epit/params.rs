//! Flat parameter storage with a named layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::protein_io::ResidueType;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Input width used for initialisation bounds; 0 marks an embedding
    /// table.
    pub fan_in: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Affine (or linear) map stored as an `[out, inp]` row-major weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lin {
    pub w: usize,
    pub b: Option<usize>,
    pub inp: usize,
    pub out: usize,
}

/// `Linear -> SiLU -> Linear`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fc(pub Lin, pub Lin);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerIndex {
    pub msg: Fc,
    pub qkv: Fc,
    pub gtl_out: Fc,
    pub vec_gate: Lin,
    pub upd_u: Lin,
    pub upd_v: Lin,
    pub upd: Fc,
    pub inter_w: Lin,
    pub inter_fc: Fc,
}

/// Offsets of every weight for one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    pub entries: Vec<ParamEntry>,
    pub embed: usize,
    pub input: Lin,
    pub layers: Vec<LayerIndex>,
    pub f_w: Lin,
    pub f_fc: Fc,
    pub e_lin: Lin,
    pub n_params: usize,
}

struct Builder {
    entries: Vec<ParamEntry>,
    next: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        let offset = self.next;
        let entry = ParamEntry { name, shape, offset, fan_in };
        self.next += entry.len();
        self.entries.push(entry);
        offset
    }

    fn lin(&mut self, name: &str, inp: usize, out: usize, bias: bool) -> Lin {
        let w = self.push(format!("{name}.w"), vec![out, inp], inp);
        let b = bias.then(|| self.push(format!("{name}.b"), vec![out], inp));
        Lin { w, b, inp, out }
    }

    fn fc(&mut self, name: &str, inp: usize, hidden: usize, out: usize) -> Fc {
        Fc(self.lin(&format!("{name}.0"), inp, hidden, true), self.lin(&format!("{name}.1"), hidden, out, true))
    }
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let h = config.hidden_dim;
        let u = config.heads;
        let e = config.edge_dim();
        let mut b = Builder { entries: Vec::new(), next: 0 };
        let embed = b.push("embed".into(), vec![ResidueType::COUNT, d], 0);
        let input = b.lin("input", 2 * d, h, true);
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("layer{l}");
                LayerIndex {
                    msg: b.fc(&format!("{p}.msg"), h + e, h, h),
                    qkv: b.fc(&format!("{p}.qkv"), h, h, 3 * u * h),
                    gtl_out: b.fc(&format!("{p}.gtl_out"), u * h, h, h),
                    vec_gate: b.lin(&format!("{p}.vec_gate"), h, 2 * h, true),
                    upd_u: b.lin(&format!("{p}.upd_u"), h, h, false),
                    upd_v: b.lin(&format!("{p}.upd_v"), h, h, false),
                    upd: b.fc(&format!("{p}.upd"), 2 * h, h, 3 * h),
                    inter_w: b.lin(&format!("{p}.inter_w"), h, h, false),
                    inter_fc: b.fc(&format!("{p}.inter_fc"), h, h, h),
                }
            })
            .collect();
        let f_w = b.lin("head.f_w", h, h, false);
        let f_fc = b.fc("head.f_fc", h, h, 4);
        let e_lin = b.lin("head.e_lin", h, 3 * config.m + 1, false);
        Ok(Network {
            config: config.clone(),
            entries: b.entries,
            embed,
            input,
            layers,
            f_w,
            f_fc,
            e_lin,
            n_params: b.next,
        })
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Named parameter arrays backed by one contiguous buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub network: Network,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for every weight and
    /// bias, uniform `(-1, 1)` for the residue embedding.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let network = Network::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; network.n_params];
        for e in &network.entries {
            let bound = if e.fan_in == 0 { 1.0 } else { 1.0 / (e.fan_in as f64).sqrt() };
            for v in &mut values[e.range()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(ModelParams { network, values })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let network = Network::new(config)?;
        let values = vec![0.0; network.n_params];
        Ok(ModelParams { network, values })
    }

    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<Self> {
        let network = Network::new(config)?;
        if values.len() != network.n_params {
            return Err(Error::ShapeMismatch(network.n_params, values.len()));
        }
        Ok(ModelParams { network, values })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.network.entry(name).map(|e| &self.values[e.range()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.network.entry(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
