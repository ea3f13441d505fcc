//! Bohmian mechanics on a configuration-space grid.
//!
//! The wavefunction evolves under the lattice Hamiltonian
//! H = Σ_d −(1/2m_d) Δ_d + V, with Δ_d the three-point Laplacian. One step
//! is the diagonal [2/2] Padé approximant of exp(−iH dt), applied as two
//! tridiagonal solves and unitary by construction; 2D grids use a Strang
//! split over the axes. Particles
//! follow v = j/ρ built from the lattice probability current, and history
//! probabilities are ensemble frequencies over |Ψ|²-distributed starts.

mod compare;
mod ensemble;
mod evolve;
mod grid;
mod guidance;

pub use compare::{
    compare_bohm_dh, BohmDhComparison, BohmDhScenario, ComparisonRow, AGREEMENT_Z, DH_GRID_CAP,
    DISAGREEMENT_Z,
};
pub use ensemble::{
    bohm_history_probability, equivariance_chi2, integrate_ensemble, integrate_ensemble_with,
    ordering_violations, sample_initial, BohmHistoryTable, Chi2, Ensemble, Executor,
    IntegrationOutput, OrderingCheck, RegionSchedule, Sequential, SlabPartition, Trajectory, Walker,
};
pub use evolve::{evolve_wavefunction, GridPropagator, MAX_PHASE_PER_STEP, NORM_DRIFT_TOL};
pub use grid::{
    grid_hamiltonian, harmonic_potential, Axis, ConfigGrid, GaussianPacket, GridWavefunction,
    DEFAULT_POINT_CAP,
};
pub use guidance::{velocity_field, VelocityField, NODE_CUTOFF};
