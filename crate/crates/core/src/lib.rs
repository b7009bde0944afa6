//! Level-set percolation of the Gaussian free field on metric graphs:
//! exact finite-volume simulation and estimation of the critical and
//! off-critical volume laws.
//!
//! The crate is organized along the pipeline:
//! graph windows -> discrete potential theory -> exact GFF sampling ->
//! edge openings and cluster labeling -> random interlacements ->
//! statistical estimators.

pub mod estimators;
pub mod gff;
pub mod graph;
pub mod interlacements;
pub mod linalg;
pub mod percolation;
pub mod potential;
pub mod rng;
pub mod spectral;

pub use graph::{ball, build_gasket_product, build_lattice, BuildBudget, Window};
pub use rng::{Purpose, StreamId};
