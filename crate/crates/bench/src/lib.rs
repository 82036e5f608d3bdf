//! Shared fixtures for the benchmarks.

use bosepump_core::model::{ModelParams, PumpPath};
use bosepump_core::{FockBasis, PumpHamiltonian, StateVector};

/// Three photons on an L-site chain at Δ = 10, U = −1, started mid-chain.
pub struct PumpFixture {
    pub basis: FockBasis,
    pub params: ModelParams,
    pub path: PumpPath,
    pub psi: StateVector,
}

impl PumpFixture {
    pub fn new(sites: usize, omega: f64, cycles: f64) -> Self {
        let basis = FockBasis::new(sites, 3, 3).expect("basis");
        let params = ModelParams::new(sites, 1.0, -1.0, 10.0).expect("params");
        let path = PumpPath::phase_sweep(omega, 0.0, cycles).expect("path");
        let site = sites / 2 - (sites / 2) % 3;
        let psi = StateVector::localized(&basis, site, 3).expect("state");
        PumpFixture { basis, params, path, psi }
    }

    pub fn hamiltonian(&self, t: f64) -> PumpHamiltonian {
        let mut h = PumpHamiltonian::new(&self.basis, &self.params).expect("hamiltonian");
        h.set_time(t, &self.path, None).expect("time in range");
        h
    }
}
