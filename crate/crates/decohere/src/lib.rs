//! Numerics for cluster states under local Pauli decoherence.
//!
//! The crate is organised bottom-up:
//!
//! * [`pauli`]: symplectic Pauli algebra, stabilizer tableaux, GF(2) ranks.
//! * [`dense`]: brute-force state vectors and density matrices (the oracle).
//! * [`statmech`]: Ising, non-Hermitian and plaquette Ising models.
//! * [`fidelity`]: fidelity correlators in 1D and 2D.
//! * [`negativity`]: exact and Monte Carlo negativity, spurious TEN.
//! * [`mpdo`]: MPDO tensors and moment transfer matrices.

pub mod dense;
pub mod error;
pub mod fidelity;
pub mod logsum;
pub mod mpdo;
pub mod negativity;
pub mod pauli;
pub mod statmech;

pub use error::{Error, Result};
