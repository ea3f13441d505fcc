//! Numerical core for decoherent-histories quantum mechanics of small
//! closed systems.
//!
//! The crate is `no_std` (with `alloc`): it holds the linear algebra,
//! history bookkeeping, measurement models, Bohmian grid dynamics and
//! lattice path sums. File formats, the CLI and thread pools live in the
//! `histories-lab` crate.

#![no_std]

extern crate alloc;

pub mod bohm;
pub mod error;
pub mod hilbert;
pub mod histories;
pub mod measurement;
pub mod pathsum;

pub use error::{Error, Result};
pub use hilbert::{
    build_ring_hamiltonian, evolve_unitary, heisenberg_projector, position_decomposition, tensor,
    Decomposition, ModelSpec, Operator, Projector, QubitCouplings, Spectrum, StateVector, C64,
};
