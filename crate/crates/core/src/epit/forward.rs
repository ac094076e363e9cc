//! Forward pass, written once over [`Scalar`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Fc, LayerIndex, Lin, Network};
use crate::linalg::{norm3, sub3};
use crate::protein_io::ProteinGraph;
use crate::scalar::Scalar;

/// Added under the square root of vector-channel norms so the update block
/// stays differentiable at zero vectors.
pub const VECTOR_NORM_EPS: f64 = 1e-8;

/// Attention logits are scaled by `1/sqrt(H)` with full-width heads.
pub fn attention_scale(hidden: usize) -> f64 {
    1.0 / (hidden as f64).sqrt()
}

/// Inverted dropout on attention outputs, active only in training.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

impl Dropout {
    fn mask(&mut self) -> f64 {
        if self.rng.random::<f64>() < self.rate {
            0.0
        } else {
            1.0 / (1.0 - self.rate)
        }
    }
}

/// Invariant features `h` (`N x H`) and equivariant vector channels `v`,
/// stored per node as three rows of `H` channels (`v[(i * 3 + axis) * H + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState<T> {
    pub n: usize,
    pub hidden: usize,
    pub h: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> NodeState<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.h[i * self.hidden..(i + 1) * self.hidden]
    }

    /// Channel `c` of node `i` as a 3-vector.
    pub fn vector(&self, i: usize, c: usize) -> [T; 3] {
        let h = self.hidden;
        [self.v[(i * 3) * h + c], self.v[(i * 3 + 1) * h + c], self.v[(i * 3 + 2) * h + c]]
    }

    fn axis(&self, i: usize, axis: usize) -> &[T] {
        let h = self.hidden;
        &self.v[(i * 3 + axis) * h..(i * 3 + axis + 1) * h]
    }

    pub fn value(&self) -> NodeState<f64> {
        NodeState {
            n: self.n,
            hidden: self.hidden,
            h: self.h.iter().map(|x| x.value()).collect(),
            v: self.v.iter().map(|x| x.value()).collect(),
        }
    }
}

pub(crate) fn linear<T: Scalar>(w: &[T], l: &Lin, x: &[T]) -> Vec<T> {
    debug_assert_eq!(x.len(), l.inp);
    (0..l.out)
        .map(|o| {
            let row = &w[l.w + o * l.inp..l.w + (o + 1) * l.inp];
            let y = T::dot(row, x);
            match l.b {
                Some(b) => y + w[b + o],
                None => y,
            }
        })
        .collect()
}

pub(crate) fn fc<T: Scalar>(w: &[T], f: &Fc, x: &[T]) -> Vec<T> {
    let mut hidden = linear(w, &f.0, x);
    for v in hidden.iter_mut() {
        *v = v.silu();
    }
    linear(w, &f.1, &hidden)
}

fn mean_rows<T: Scalar>(h: &[T], n: usize, width: usize) -> Vec<T> {
    let inv = 1.0 / n as f64;
    (0..width)
        .map(|c| {
            let col: Vec<T> = (0..n).map(|i| h[i * width + c]).collect();
            T::sum(&col).scale(inv)
        })
        .collect()
}

/// `H^(0) = Linear(concat(embedding[type], positional))`, `V^(0) = 0`.
pub fn initial_state<T: Scalar>(net: &Network, w: &[T], g: &ProteinGraph) -> NodeState<T> {
    let d = net.config.embed_dim;
    let hidden = net.config.hidden_dim;
    let mut h = Vec::with_capacity(g.len() * hidden);
    let mut x = Vec::with_capacity(2 * d);
    for i in 0..g.len() {
        x.clear();
        let t = g.residue_types[i].index();
        x.extend_from_slice(&w[net.embed + t * d..net.embed + (t + 1) * d]);
        x.extend(g.positional_row(i).iter().map(|&p| T::constant(p)));
        h.extend(linear(w, &net.input, &x));
    }
    NodeState {
        n: g.len(),
        hidden,
        h,
        v: vec![T::zero(); g.len() * 3 * hidden],
    }
}

/// `m_{j->i} = FC(concat(h_j, e_{j->i}))`.
pub fn edge_message<T: Scalar>(layer: &LayerIndex, w: &[T], h_j: &[T], e: &[f64]) -> Vec<T> {
    let mut x = Vec::with_capacity(h_j.len() + e.len());
    x.extend_from_slice(h_j);
    x.extend(e.iter().map(|&v| T::constant(v)));
    fc(w, &layer.msg, &x)
}

/// Multi-head attention over each node's incoming messages followed by a
/// neighbourhood mean. `messages` is aligned with the graph's edges.
///
/// Returns the aggregated `N x H` messages and the attention weights
/// (`E x U`, values only).
pub fn gtl_forward<T: Scalar>(
    layer: &LayerIndex,
    w: &[T],
    g: &ProteinGraph,
    messages: &[Vec<T>],
    hidden: usize,
    heads: usize,
    mut dropout: Option<&mut Dropout>,
) -> (Vec<T>, Vec<f64>) {
    let scale = attention_scale(hidden);
    let mut out = vec![T::zero(); g.len() * hidden];
    let mut attention = vec![0.0; g.num_edges() * heads];
    for i in 0..g.len() {
        let (start, end) = (g.offsets[i], g.offsets[i + 1]);
        if start == end {
            continue;
        }
        let qkv: Vec<Vec<T>> = (start..end).map(|e| fc(w, &layer.qkv, &messages[e])).collect();
        let mut o: Vec<Vec<T>> = vec![Vec::with_capacity(heads * hidden); end - start];
        for u in 0..heads {
            let q = |k: usize| &qkv[k][(3 * u) * hidden..(3 * u + 1) * hidden];
            let key = |k: usize| &qkv[k][(3 * u + 1) * hidden..(3 * u + 2) * hidden];
            let logits: Vec<T> = (0..end - start).map(|k| T::dot(q(k), key(k)).scale(scale)).collect();
            let max = logits.iter().map(|l| l.value()).fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<T> = logits.iter().map(|&l| (l - T::constant(max)).exp()).collect();
            let denom = T::sum(&ex);
            for (k, &x) in ex.iter().enumerate() {
                let alpha = x / denom;
                attention[(start + k) * heads + u] = alpha.value();
                let v = &qkv[k][(3 * u + 2) * hidden..(3 * u + 3) * hidden];
                for &vc in v {
                    let mut oc = alpha * vc;
                    if let Some(d) = dropout.as_deref_mut() {
                        oc = oc.scale(d.mask());
                    }
                    o[k].push(oc);
                }
            }
        }
        let inv = 1.0 / (end - start) as f64;
        let row = &mut out[i * hidden..(i + 1) * hidden];
        let per_edge: Vec<Vec<T>> = o.iter().map(|ok| fc(w, &layer.gtl_out, ok)).collect();
        for (c, slot) in row.iter_mut().enumerate() {
            let col: Vec<T> = per_edge.iter().map(|m| m[c]).collect();
            *slot = T::sum(&col).scale(inv);
        }
    }
    (out, attention)
}

/// One intra-protein block: edge messages, attention aggregation into the
/// invariant features, gated vector messages, then the channel-mixing
/// update.
pub fn painn_block<T: Scalar>(
    net: &Network,
    layer: &LayerIndex,
    w: &[T],
    state: &NodeState<T>,
    g: &ProteinGraph,
    dropout: Option<&mut Dropout>,
) -> NodeState<T> {
    let hd = state.hidden;
    let n = state.n;
    let messages: Vec<Vec<T>> = (0..g.num_edges())
        .map(|e| edge_message(layer, w, state.row(g.sources[e]), g.edge_feature(e)))
        .collect();
    let (aggregated, _) = gtl_forward(layer, w, g, &messages, hd, net.config.heads, dropout);

    let mut h: Vec<T> = state.h.iter().zip(&aggregated).map(|(&a, &b)| a + b).collect();
    let mut v = state.v.clone();

    // vector messages
    for i in 0..n {
        let (start, end) = (g.offsets[i], g.offsets[i + 1]);
        if start == end {
            continue;
        }
        let inv = 1.0 / (end - start) as f64;
        let mut acc: Vec<Vec<T>> = vec![Vec::with_capacity(end - start); 3 * hd];
        for e in start..end {
            let j = g.sources[e];
            let gate = linear(w, &layer.vec_gate, &messages[e]);
            let s = sub3(&g.coords[i], &g.coords[j]);
            let len = norm3(&s);
            let dir = if len < 1e-12 { [0.0; 3] } else { [s[0] / len, s[1] / len, s[2] / len] };
            for axis in 0..3 {
                let vj = state.axis(j, axis);
                for c in 0..hd {
                    acc[axis * hd + c].push(gate[c] * vj[c] + gate[hd + c].scale(dir[axis]));
                }
            }
        }
        for axis in 0..3 {
            for c in 0..hd {
                v[(i * 3 + axis) * hd + c] += T::sum(&acc[axis * hd + c]).scale(inv);
            }
        }
    }

    // update
    for i in 0..n {
        let mut uv = Vec::with_capacity(3);
        let mut vv = Vec::with_capacity(3);
        for axis in 0..3 {
            let col = &v[(i * 3 + axis) * hd..(i * 3 + axis + 1) * hd];
            uv.push(linear(w, &layer.upd_u, col));
            vv.push(linear(w, &layer.upd_v, col));
        }
        let mut x = Vec::with_capacity(2 * hd);
        x.extend_from_slice(&h[i * hd..(i + 1) * hd]);
        for c in 0..hd {
            let sq = vv[0][c] * vv[0][c] + vv[1][c] * vv[1][c] + vv[2][c] * vv[2][c];
            x.push((sq + T::constant(VECTOR_NORM_EPS)).sqrt());
        }
        let a = fc(w, &layer.upd, &x);
        for c in 0..hd {
            let inner = uv[0][c] * vv[0][c] + uv[1][c] * vv[1][c] + uv[2][c] * vv[2][c];
            h[i * hd + c] += a[hd + c] * inner + a[2 * hd + c];
            for axis in 0..3 {
                v[(i * 3 + axis) * hd + c] += a[c] * uv[axis][c];
            }
        }
    }
    NodeState { n, hidden: hd, h, v }
}

fn gated_update<T: Scalar>(layer: &LayerIndex, w: &[T], h: &[T], other_mean: &[T], hidden: usize) -> Vec<T> {
    let wh = linear(w, &layer.inter_w, other_mean);
    let mut out = h.to_vec();
    for (row_in, row_out) in h.chunks(hidden).zip(out.chunks_mut(hidden)) {
        let beta = T::dot(row_in, &wh).sigmoid();
        let f = fc(w, &layer.inter_fc, row_in);
        for (o, fv) in row_out.iter_mut().zip(f) {
            *o += beta * fv;
        }
    }
    out
}

/// `beta_p = sigmoid(mean_k h_p W h_other[k])`, `H_p' = H_p + beta_p FC(H_p)`,
/// for both proteins from the same pre-update features.
pub fn inter_update<T: Scalar>(layer: &LayerIndex, w: &[T], h1: &[T], h2: &[T], hidden: usize) -> (Vec<T>, Vec<T>) {
    let m1 = mean_rows(h1, h1.len() / hidden, hidden);
    let m2 = mean_rows(h2, h2.len() / hidden, hidden);
    (gated_update(layer, w, h1, &m2, hidden), gated_update(layer, w, h2, &m1, hidden))
}

/// Full network on a ligand/receptor pair.
pub fn epit_forward<T: Scalar>(
    net: &Network,
    w: &[T],
    g1: &ProteinGraph,
    g2: &ProteinGraph,
    mut dropout: Option<&mut Dropout>,
) -> (NodeState<T>, NodeState<T>) {
    debug_assert_eq!(w.len(), net.n_params);
    let mut s1 = initial_state(net, w, g1);
    let mut s2 = initial_state(net, w, g2);
    for layer in &net.layers {
        s1 = painn_block(net, layer, w, &s1, g1, dropout.as_deref_mut());
        s2 = painn_block(net, layer, w, &s2, g2, dropout.as_deref_mut());
        let (h1, h2) = inter_update(layer, w, &s1.h, &s2.h, net.config.hidden_dim);
        s1.h = h1;
        s2.h = h2;
    }
    (s1, s2)
}

/// `F_p = sum_j FC(h_j * sigmoid(mean_k h_j W' h_other[k]))`.
pub fn compute_f<T: Scalar>(net: &Network, w: &[T], h: &[T], h_other: &[T]) -> [T; 4] {
    let hd = net.config.hidden_dim;
    let wh = linear(w, &net.f_w, &mean_rows(h_other, h_other.len() / hd, hd));
    let mut acc: [Vec<T>; 4] = Default::default();
    for row in h.chunks(hd) {
        let gate = T::dot(row, &wh).sigmoid();
        let x: Vec<T> = row.iter().map(|&r| r * gate).collect();
        let y = fc(w, &net.f_fc, &x);
        for k in 0..4 {
            acc[k].push(y[k]);
        }
    }
    [T::sum(&acc[0]), T::sum(&acc[1]), T::sum(&acc[2]), T::sum(&acc[3])]
}

/// `E_p = sum_j LinearNoBias(h_j * V_j)`: `3M + 1` rows, each an
/// equivariant 3-vector.
pub fn compute_e<T: Scalar>(net: &Network, w: &[T], state: &NodeState<T>) -> Vec<[T; 3]> {
    let hd = state.hidden;
    let mut gated: [Vec<T>; 3] = Default::default();
    for (axis, out) in gated.iter_mut().enumerate() {
        // the map is linear, so summing over nodes first is exact
        *out = (0..hd)
            .map(|c| {
                let terms: Vec<T> = (0..state.n).map(|i| state.h[i * hd + c] * state.v[(i * 3 + axis) * hd + c]).collect();
                T::sum(&terms)
            })
            .collect();
    }
    let cols: Vec<Vec<T>> = gated.iter().map(|x| linear(w, &net.e_lin, x)).collect();
    (0..net.e_lin.out).map(|r| [cols[0][r], cols[1][r], cols[2][r]]).collect()
}
