//! Structure parsing and writing, residue graphs, and binding pockets.

pub mod graph;
pub mod pdb;
pub mod pockets;

pub use graph::{build_graph, build_graph_from_parts, positional_embedding, rbf_expand, resultant_force_feature, FeatureConfig, ProteinGraph};
pub use pdb::{map_atom_records, parse_pdb, Chain, ProteinStructure, Residue, ResidueType};
pub use pockets::{extract_pockets, track_pockets, PocketSet, Side, POCKET_THRESHOLD};
