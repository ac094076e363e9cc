//! k-nearest-neighbour residue graphs with rigid-motion invariant edge
//! features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot3, norm3, sub3, Vec3};
use crate::protein_io::pdb::{ProteinStructure, ResidueType};

/// Orders of the resultant-force edge features.
pub const FORCE_ORDERS: [i32; 3] = [2, 3, 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Neighbours per node.
    pub k: usize,
    pub rbf_size: usize,
    /// Upper end of the evenly spaced RBF centres, in angstrom.
    pub rbf_max: f64,
    /// Gaussian length scale of each RBF, in angstrom.
    pub radial_cut: f64,
    /// Width of the positional embedding (even).
    pub positional_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            k: 10,
            rbf_size: 20,
            rbf_max: 20.0,
            radial_cut: 3.0,
            positional_dim: 64,
        }
    }
}

impl FeatureConfig {
    /// RBF responses, three force features and the raw distance.
    pub fn edge_dim(&self) -> usize {
        self.rbf_size + FORCE_ORDERS.len() + 1
    }
}

/// Residue graph. Learned residue embeddings are looked up by the network
/// from `residue_types`; everything stored here is geometry-derived and
/// invariant except `coords`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProteinGraph {
    pub coords: Vec<Vec3>,
    pub residue_types: Vec<ResidueType>,
    /// `N x positional_dim`, row-major.
    pub positional: Vec<f64>,
    pub positional_dim: usize,
    /// CSR layout: in-neighbours of node `i` are
    /// `sources[offsets[i]..offsets[i + 1]]`.
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
    /// `E x edge_dim`, aligned with `sources`.
    pub edge_features: Vec<f64>,
    pub edge_dim: usize,
}

impl ProteinGraph {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn edge_feature(&self, edge: usize) -> &[f64] {
        &self.edge_features[edge * self.edge_dim..(edge + 1) * self.edge_dim]
    }

    pub fn positional_row(&self, i: usize) -> &[f64] {
        &self.positional[i * self.positional_dim..(i + 1) * self.positional_dim]
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.coords.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.coords {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Same graph with every coordinate replaced; topology and invariant
    /// features are kept.
    pub fn with_coords(&self, coords: Vec<Vec3>) -> Self {
        assert_eq!(coords.len(), self.coords.len());
        ProteinGraph {
            coords,
            ..self.clone()
        }
    }

    /// Permutes node order: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.len();
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut offsets = vec![0];
        let mut sources = Vec::with_capacity(self.sources.len());
        let mut edge_features = Vec::with_capacity(self.edge_features.len());
        let mut positional = Vec::with_capacity(self.positional.len());
        for &old in perm {
            for e in self.offsets[old]..self.offsets[old + 1] {
                sources.push(inverse[self.sources[e]]);
                edge_features.extend_from_slice(self.edge_feature(e));
            }
            offsets.push(sources.len());
            positional.extend_from_slice(self.positional_row(old));
        }
        ProteinGraph {
            coords: perm.iter().map(|&o| self.coords[o]).collect(),
            residue_types: perm.iter().map(|&o| self.residue_types[o]).collect(),
            positional,
            positional_dim: self.positional_dim,
            offsets,
            sources,
            edge_features,
            edge_dim: self.edge_dim,
        }
    }
}

/// `concat_d [i sin(w_d), i cos(w_d)]` with `w_d = 10000^(-2d/D)`; the
/// index multiplies the trigonometric terms rather than entering them.
pub fn positional_embedding(i: usize, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::Config(format!("positional width must be even, got {dim}")));
    }
    let x = i as f64;
    let mut out = Vec::with_capacity(dim);
    for d in 0..dim / 2 {
        let w = 10000f64.powf(-2.0 * d as f64 / dim as f64);
        out.push(x * w.sin());
        out.push(x * w.cos());
    }
    Ok(out)
}

pub fn rbf_centers(cfg: &FeatureConfig) -> Vec<f64> {
    let n = cfg.rbf_size;
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|m| cfg.rbf_max * m as f64 / (n - 1) as f64).collect()
}

/// Gaussian responses `exp(-(d - mu_m)^2 / (2 sigma^2))`.
pub fn rbf_expand(distance: f64, cfg: &FeatureConfig) -> Vec<f64> {
    let s2 = 2.0 * cfg.radial_cut * cfg.radial_cut;
    rbf_centers(cfg)
        .into_iter()
        .map(|mu| (-(distance - mu).powi(2) / s2).exp())
        .collect()
}

/// k nearest neighbours by Euclidean distance, ties to the lower index.
pub fn knn(coords: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let n = coords.len();
    let take = k.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = sub3(&coords[i], &coords[j]);
                    (dot3(&d, &d), j)
                })
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(take).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Unit direction of the resultant order-`alpha` force on every node, with
/// zero when the resultant vanishes.
pub fn resultant_directions(coords: &[Vec3], neighbors: &[Vec<usize>], alpha: i32) -> Vec<Vec3> {
    coords
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut r = [0.0; 3];
            for &j in &neighbors[i] {
                // s points from node j to node i
                let s = sub3(xi, &coords[j]);
                let len = norm3(&s);
                if len < 1e-12 {
                    continue;
                }
                let w = len.powi(-alpha - 1);
                for k in 0..3 {
                    r[k] += w * s[k];
                }
            }
            let m = norm3(&r);
            if m < 1e-12 {
                [0.0; 3]
            } else {
                [r[0] / m, r[1] / m, r[2] / m]
            }
        })
        .collect()
}

/// Inner product of the resultant force directions at the two ends of
/// edge `j -> i`.
pub fn resultant_force_feature(coords: &[Vec3], neighbors: &[Vec<usize>], j: usize, i: usize, alpha: i32) -> f64 {
    let dirs = resultant_directions(coords, neighbors, alpha);
    dot3(&dirs[i], &dirs[j])
}

pub fn build_graph(s: &ProteinStructure, cfg: &FeatureConfig) -> Result<ProteinGraph> {
    let positions = s.chain_positions();
    build_graph_from_parts(&s.coords(), &s.residue_types(), &positions, cfg)
}

/// Graph construction from raw coordinates, residue types and per-chain
/// residue positions.
pub fn build_graph_from_parts(
    coords: &[Vec3],
    residue_types: &[ResidueType],
    chain_positions: &[usize],
    cfg: &FeatureConfig,
) -> Result<ProteinGraph> {
    if coords.is_empty() {
        return Err(Error::EmptyStructure);
    }
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if coords.len() != residue_types.len() || coords.len() != chain_positions.len() {
        return Err(Error::ShapeMismatch(coords.len(), residue_types.len()));
    }
    let neighbors = knn(coords, cfg.k);
    let dirs: Vec<Vec<Vec3>> = FORCE_ORDERS
        .iter()
        .map(|&a| resultant_directions(coords, &neighbors, a))
        .collect();
    let edge_dim = cfg.edge_dim();
    let mut offsets = vec![0];
    let mut sources = Vec::new();
    let mut edge_features = Vec::new();
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let dist = norm3(&sub3(&coords[i], &coords[j]));
            edge_features.extend(rbf_expand(dist, cfg));
            for d in &dirs {
                edge_features.push(dot3(&d[i], &d[j]));
            }
            edge_features.push(dist);
            sources.push(j);
        }
        offsets.push(sources.len());
    }
    let mut positional = Vec::with_capacity(coords.len() * cfg.positional_dim);
    for &p in chain_positions {
        positional.extend(positional_embedding(p, cfg.positional_dim)?);
    }
    Ok(ProteinGraph {
        coords: coords.to_vec(),
        residue_types: residue_types.to_vec(),
        positional,
        positional_dim: cfg.positional_dim,
        offsets,
        sources,
        edge_features,
        edge_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_transform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)])
            .collect()
    }

    fn graph(coords: &[Vec3], k: usize) -> ProteinGraph {
        let cfg = FeatureConfig {
            k,
            positional_dim: 8,
            ..Default::default()
        };
        let types = vec![ResidueType(0); coords.len()];
        let pos: Vec<usize> = (0..coords.len()).collect();
        build_graph_from_parts(coords, &types, &pos, &cfg).unwrap()
    }

    #[test]
    fn collinear_neighbors() {
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        let g = graph(&coords, 2);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(3), &[2, 1]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let g = graph(&coords, 2);
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn small_graph_is_complete() {
        let coords = cloud(5, 1);
        let g = graph(&coords, 10);
        for i in 0..5 {
            let mut n = g.neighbors(i).to_vec();
            n.sort();
            let expected: Vec<usize> = (0..5).filter(|&j| j != i).collect();
            assert_eq!(n, expected);
        }
    }

    #[test]
    fn knn_matches_brute_force() {
        for (n, seed) in [(7, 3), (40, 4), (200, 5)] {
            let coords = cloud(n, seed);
            let g = graph(&coords, 10);
            for i in 0..n {
                let nb = g.neighbors(i);
                assert_eq!(nb.len(), 10.min(n - 1));
                assert!(!nb.contains(&i));
                // every non-neighbour is at least as far as the farthest neighbour
                let far = nb.iter().map(|&j| norm3(&sub3(&coords[i], &coords[j]))).fold(0.0, f64::max);
                for j in (0..n).filter(|j| *j != i && !nb.contains(j)) {
                    assert!(norm3(&sub3(&coords[i], &coords[j])) >= far);
                }
            }
        }
    }

    #[test]
    fn features_invariant_under_rigid_motion() {
        let coords = cloud(30, 8);
        let g = graph(&coords, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let t = random_transform(&mut rng, 25.0);
            let moved = graph(&t.apply_all(&coords), 10);
            assert_eq!(moved.sources, g.sources);
            for (a, b) in moved.edge_features.iter().zip(&g.edge_features) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(moved.positional, g.positional);
        }
    }

    #[test]
    fn positional_embedding_values() {
        assert!(positional_embedding(0, 8).unwrap().iter().all(|&x| x == 0.0));
        let e = positional_embedding(2, 4).unwrap();
        assert!((e[0] - 1.682942).abs() < 1e-6);
        assert!((e[1] - 1.080605).abs() < 1e-6);
        let a = positional_embedding(1, 16).unwrap();
        let b = positional_embedding(3, 16).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(3.0 * x, *y);
        }
        assert!(matches!(positional_embedding(1, 5), Err(Error::Config(_))));
    }

    #[test]
    fn resultant_force_two_nodes_is_antiparallel() {
        let coords = [[0.0, 0.0, 0.0], [3.0, 1.0, 0.0]];
        let nbrs = knn(&coords, 10);
        for a in FORCE_ORDERS {
            assert!((resultant_force_feature(&coords, &nbrs, 1, 0, a) + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn resultant_force_symmetric_fixture() {
        // node 0 has neighbours 1 and 2 placed symmetrically about the x axis;
        // node 3 sits on the x axis
        let coords = [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [2.0, 0.0, 0.0]];
        let nbrs = vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]];
        for a in FORCE_ORDERS {
            // brute force resultants
            let res = |i: usize| {
                let mut r = [0.0; 3];
                for &j in &nbrs[i] {
                    let s = sub3(&coords[i], &coords[j]);
                    let l = norm3(&s);
                    for k in 0..3 {
                        r[k] += s[k] / l.powi(a + 1);
                    }
                }
                let m = norm3(&r);
                [r[0] / m, r[1] / m, r[2] / m]
            };
            let expected = dot3(&res(0), &res(3));
            let f = resultant_force_feature(&coords, &nbrs, 3, 0, a);
            assert!((f - expected).abs() < 1e-14);
            // node 0 is pushed along -x, node 3 along +x
            assert!((f + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn force_features_bounded() {
        let g = graph(&cloud(25, 12), 10);
        for e in 0..g.num_edges() {
            let f = g.edge_feature(e);
            for v in &f[20..23] {
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rbf_values() {
        let cfg = FeatureConfig::default();
        let centers = rbf_centers(&cfg);
        for (m, mu) in centers.iter().enumerate() {
            assert!((rbf_expand(*mu, &cfg)[m] - 1.0).abs() < 1e-15);
        }
        let zero = rbf_expand(0.0, &cfg);
        assert!(zero.iter().all(|&v| v <= zero[0] && v > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let d: f64 = rng.random_range(0.0..25.0);
            let out = rbf_expand(d, &cfg);
            for (m, v) in out.iter().enumerate() {
                let mu = 20.0 * m as f64 / 19.0;
                assert!((v - (-(d - mu) * (d - mu) / 18.0).exp()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn permutation_relabels_consistently() {
        let coords = cloud(9, 14);
        let g = graph(&coords, 4);
        let perm = [3, 0, 8, 1, 7, 2, 6, 4, 5];
        let p = g.permuted(&perm);
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(p.coords[new], g.coords[old]);
            let mapped: Vec<usize> = g.neighbors(old).iter().map(|&j| perm.iter().position(|&x| x == j).unwrap()).collect();
            assert_eq!(p.neighbors(new), mapped.as_slice());
        }
    }
}
