//! Rigid protein-protein docking by predicting a shared elliptic-paraboloid
//! interface for a ligand/receptor pair and superposing the two predicted
//! interfaces.

pub mod autodiff;
pub mod dock;
pub mod epit;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod protein_io;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
