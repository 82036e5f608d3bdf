//! Interacting-photon Thouless pumping in a modulated Bose-Hubbard resonator
//! array: exact Fock-space dynamics, effective trimer models, mean-field
//! bands, lossy trajectories and circuit parameter mapping.

pub mod circuit;
pub mod effective;
pub mod error;
pub mod fockspace;
pub mod krylov;
pub mod meanfield;
pub mod model;
pub mod opensys;
pub mod propagate;
pub mod robustness;

pub use error::{Error, Result};
pub use fockspace::{build_basis, FockBasis, FockState, SparseOperator};
pub use krylov::{KrylovPropagator, KrylovSettings, LinearOperator};
pub use model::{ModelParams, NoiseSpec, PumpHamiltonian, PumpPath};
pub use propagate::{pump_run, ObservableSeries, PumpExperiment, PumpSettings, StateVector};
