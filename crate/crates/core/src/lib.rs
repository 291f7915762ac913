//! Finite-volume Anderson Hamiltonians `H = Δ + V` on boxes of `Z^d`,
//! eigenvalue counting in shrinking energy windows, and the ensemble
//! experiments that probe their Poisson and Gaussian limit laws.

pub mod cli;
pub mod dos;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod lattice;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use hamiltonian::{sample_operator, DisorderedOperator, PotentialSpec};
pub use lattice::{make_box, BoxPartition, LatticeBox, MesoWindow, PartitionTree};
