//! Time-dependent modulated Bose-Hubbard Hamiltonian, pump paths and noise.
//!
//! Units: ħ = 1, energies in units of the hopping J, times in 1/J. The
//! carrier frequency ω₀ commutes with the dynamics and is stored only for
//! reporting.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{self, FockBasis, RealCsr, SparseOperator};
use crate::krylov::LinearOperator;

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sites: usize,
    /// J > 0
    pub hopping: f64,
    /// U ≤ 0 (attractive Kerr)
    pub interaction: f64,
    /// Δ > 0
    pub modulation: f64,
    /// ω₀; never enters the dynamics.
    #[serde(default)]
    pub carrier: f64,
}

impl ModelParams {
    pub fn new(sites: usize, hopping: f64, interaction: f64, modulation: f64) -> Result<Self> {
        let p = ModelParams { sites, hopping, interaction, modulation, carrier: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::invalid("sites", "need at least one site"));
        }
        if !(self.hopping > 0.0) {
            return Err(Error::invalid("hopping", format!("J must be positive, got {}", self.hopping)));
        }
        if !(self.interaction <= 0.0) {
            return Err(Error::invalid("interaction", format!("U must be ≤ 0, got {}", self.interaction)));
        }
        if !(self.modulation > 0.0) {
            return Err(Error::invalid("modulation", format!("Δ must be positive, got {}", self.modulation)));
        }
        Ok(())
    }

    /// Lattices that are not whole trimers are allowed but unusual.
    pub fn is_trimer_lattice(&self) -> bool {
        self.sites % 3 == 0
    }
}

/// Schedule of the on-site energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PumpPath {
    /// φ(t) = Ω t + φ₀, sites get Δ cos(2πm/3 + φ(t)).
    PhaseSweep { omega: f64, phi0: f64, cycles: f64 },
    /// Closed polygon in the (ω_A − ω_B, ω_A − ω_C) plane with ω_A pinned at
    /// zero, traversed at uniform speed along its perimeter.
    ParametricLoop { vertices: Vec<(f64, f64)>, duration: f64 },
}

impl PumpPath {
    pub fn phase_sweep(omega: f64, phi0: f64, cycles: f64) -> Result<Self> {
        if omega == 0.0 && cycles > 0.0 {
            return Err(Error::invalid("omega", "a finite number of cycles needs Ω ≠ 0"));
        }
        if !(cycles >= 0.0) {
            return Err(Error::invalid("cycles", format!("must be ≥ 0, got {cycles}")));
        }
        Ok(PumpPath::PhaseSweep { omega, phi0, cycles })
    }

    pub fn parametric_loop(vertices: Vec<(f64, f64)>, duration: f64) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::invalid("vertices", "a loop needs at least two vertices"));
        }
        let (first, last) = (vertices[0], vertices[vertices.len() - 1]);
        if (first.0 - last.0).abs() > 1e-12 || (first.1 - last.1).abs() > 1e-12 {
            return Err(Error::invalid("vertices", "loop is not closed (last vertex ≠ first)"));
        }
        if !(duration > 0.0) {
            return Err(Error::invalid("duration", format!("must be positive, got {duration}")));
        }
        Ok(PumpPath::ParametricLoop { vertices, duration })
    }

    /// Square loop that never encloses the degeneracy point: corners
    /// (Δ/2, Δ/2), (3Δ/2, Δ/2), (3Δ/2, 3Δ/2), (Δ/2, 3Δ/2).
    pub fn trivial_square(modulation: f64, duration: f64) -> Result<Self> {
        let (lo, hi) = (0.5 * modulation, 1.5 * modulation);
        Self::parametric_loop(vec![(lo, lo), (hi, lo), (hi, hi), (lo, hi), (lo, lo)], duration)
    }

    pub fn duration(&self) -> f64 {
        match self {
            PumpPath::PhaseSweep { omega, cycles, .. } => {
                if *cycles == 0.0 {
                    0.0
                } else {
                    cycles * TWO_PI / omega.abs()
                }
            }
            PumpPath::ParametricLoop { duration, .. } => *duration,
        }
    }

    /// Pump period T_p; a loop's period is its duration.
    pub fn period(&self) -> f64 {
        match self {
            PumpPath::PhaseSweep { omega, .. } => TWO_PI / omega.abs(),
            PumpPath::ParametricLoop { duration, .. } => *duration,
        }
    }

    pub fn cycles(&self) -> f64 {
        match self {
            PumpPath::PhaseSweep { cycles, .. } => *cycles,
            PumpPath::ParametricLoop { .. } => 1.0,
        }
    }

    /// On-site energies of sublattices A, B, C at time `t` (no range check).
    pub fn sublattice_energies(&self, t: f64, modulation: f64) -> [f64; 3] {
        match self {
            PumpPath::PhaseSweep { omega, phi0, .. } => {
                let phi = omega * t + phi0;
                [0.0, 1.0, 2.0].map(|s| modulation * (TWO_PI * s / 3.0 + phi).cos())
            }
            PumpPath::ParametricLoop { vertices, duration } => {
                let (x, y) = polygon_point(vertices, (t / duration).clamp(0.0, 1.0));
                [0.0, -x, -y]
            }
        }
    }

    /// Point of the path in the (ω_A − ω_B, ω_A − ω_C) plane.
    pub fn parameter_point(&self, t: f64, modulation: f64) -> (f64, f64) {
        let [a, b, c] = self.sublattice_energies(t, modulation);
        (a - b, a - c)
    }

    /// `samples` points spread over the whole duration (last point excluded).
    pub fn sample_loop(&self, modulation: f64, samples: usize) -> Vec<(f64, f64)> {
        let d = self.duration();
        (0..samples)
            .map(|k| self.parameter_point(d * k as f64 / samples as f64, modulation))
            .collect()
    }
}

fn polygon_point(vertices: &[(f64, f64)], fraction: f64) -> (f64, f64) {
    let lengths: Vec<f64> = vertices
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 {
        return vertices[0];
    }
    let mut target = fraction * total;
    for (w, len) in vertices.windows(2).zip(&lengths) {
        if target <= *len && *len > 0.0 {
            let s = target / len;
            return (w[0].0 + s * (w[1].0 - w[0].0), w[0].1 + s * (w[1].1 - w[0].1));
        }
        target -= len;
    }
    *vertices.last().unwrap()
}

/// Signed number of turns of a closed polyline around `center`
/// (counter-clockwise positive). The polyline is closed implicitly.
pub fn winding_number(points: &[(f64, f64)], center: (f64, f64)) -> i32 {
    if points.len() < 2 {
        return 0;
    }
    let angle = |p: &(f64, f64)| (p.1 - center.1).atan2(p.0 - center.0);
    let mut total = 0.0;
    for k in 0..points.len() {
        let a = angle(&points[k]);
        let b = angle(&points[(k + 1) % points.len()]);
        let mut d = b - a;
        while d > PI {
            d -= TWO_PI;
        }
        while d < -PI {
            d += TWO_PI;
        }
        total += d;
    }
    (total / TWO_PI).round() as i32
}

/// Winding of a pump path around the triple degeneracy ω_A = ω_B = ω_C.
pub fn path_winding(path: &PumpPath, modulation: f64) -> i32 {
    winding_number(&path.sample_loop(modulation, 4096), (0.0, 0.0))
}

/// ω_m(t) − ω₀ for site `m`.
pub fn onsite_energy(site: usize, t: f64, params: &ModelParams, path: &PumpPath) -> Result<f64> {
    check_time(t, path)?;
    Ok(path.sublattice_energies(t, params.modulation)[site % 3])
}

fn check_time(t: f64, path: &PumpPath) -> Result<()> {
    let d = path.duration();
    let slack = 1e-9 * d.max(1.0);
    if !(t >= -slack && t <= d + slack) {
        return Err(Error::TimeOutOfRange { t, duration: d });
    }
    Ok(())
}

fn site_energies(t: f64, params: &ModelParams, path: &PumpPath, noise: Option<&[f64]>) -> Result<Vec<f64>> {
    let sub = path.sublattice_energies(t, params.modulation);
    let mut w: Vec<f64> = (0..params.sites).map(|m| sub[m % 3]).collect();
    if let Some(noise) = noise {
        if noise.len() != params.sites {
            return Err(Error::LengthMismatch { expected: params.sites, got: noise.len() });
        }
        w.iter_mut().zip(noise).for_each(|(w, n)| *w += n);
    }
    Ok(w)
}

/// H(t) as an explicit sparse matrix. `noise` holds the already scaled
/// per-site shifts η r_m.
pub fn build_hamiltonian(
    t: f64,
    basis: &FockBasis,
    params: &ModelParams,
    path: &PumpPath,
    noise: Option<&[f64]>,
) -> Result<SparseOperator> {
    check_time(t, path)?;
    if basis.sites() != params.sites {
        return Err(Error::LengthMismatch { expected: params.sites, got: basis.sites() });
    }
    let w = site_energies(t, params, path, noise)?;
    let mut diag = fockspace::number_weighted_diagonal(basis, &w)?;
    for (d, u) in diag.iter_mut().zip(fockspace::interaction_diagonal(basis, params.interaction)) {
        *d += u;
    }
    Ok(SparseOperator::diagonal(&diag).add(&fockspace::hopping_operator(basis, params.hopping)))
}

/// Pump Hamiltonian with the hopping and interaction parts assembled once;
/// only the site energies are refreshed per time step.
#[derive(Debug, Clone)]
pub struct PumpHamiltonian {
    params: ModelParams,
    hopping: RealCsr,
    interaction: Vec<f64>,
    // (site, occupation) lists per state, flattened
    occ_ptr: Vec<usize>,
    occ: Vec<(u32, f64)>,
    diagonal: Vec<f64>,
}

impl PumpHamiltonian {
    pub fn new(basis: &FockBasis, params: &ModelParams) -> Result<Self> {
        if basis.sites() != params.sites {
            return Err(Error::LengthMismatch { expected: params.sites, got: basis.sites() });
        }
        let mut occ_ptr = Vec::with_capacity(basis.dim() + 1);
        occ_ptr.push(0);
        let mut occ = Vec::new();
        for s in basis.states() {
            for (m, &n) in s.occupations().iter().enumerate() {
                if n > 0 {
                    occ.push((m as u32, n as f64));
                }
            }
            occ_ptr.push(occ.len());
        }
        let interaction = fockspace::interaction_diagonal(basis, params.interaction);
        Ok(PumpHamiltonian {
            params: *params,
            hopping: fockspace::hopping_csr(basis, params.hopping),
            diagonal: interaction.clone(),
            interaction,
            occ_ptr,
            occ,
        })
    }

    /// Refresh the diagonal for time `t` (path range is not checked).
    pub fn set_time(&mut self, t: f64, path: &PumpPath, noise: Option<&[f64]>) -> Result<()> {
        let w = site_energies(t, &self.params, path, noise)?;
        self.set_site_energies(&w);
        Ok(())
    }

    pub fn set_site_energies(&mut self, w: &[f64]) {
        for (i, d) in self.diagonal.iter_mut().enumerate() {
            let mut e = self.interaction[i];
            for &(m, n) in &self.occ[self.occ_ptr[i]..self.occ_ptr[i + 1]] {
                e += w[m as usize] * n;
            }
            *d = e;
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Dense real symmetric matrix of the current H.
    pub fn to_dense_real(&self) -> nalgebra::DMatrix<f64> {
        let n = self.diagonal.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r)] = self.diagonal[r];
            for k in self.hopping.row_ptr[r]..self.hopping.row_ptr[r + 1] {
                m[(r, self.hopping.col_idx[k] as usize)] += self.hopping.values[k];
            }
        }
        m
    }
}

impl LinearOperator for PumpHamiltonian {
    fn dim(&self) -> usize {
        self.diagonal.len()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = x[r] * self.diagonal[r] + self.hopping.row_dot(r, x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// η ≥ 0
    pub amplitude: f64,
    /// Time between independent redraws (> 0).
    pub redraw_dt: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(amplitude: f64, redraw_dt: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0) {
            return Err(Error::invalid("amplitude", format!("η must be ≥ 0, got {amplitude}")));
        }
        if !(redraw_dt > 0.0) {
            return Err(Error::invalid("redraw_dt", format!("must be positive, got {redraw_dt}")));
        }
        Ok(NoiseSpec { amplitude, redraw_dt, seed })
    }

    pub fn bin(&self, t: f64) -> u64 {
        (t / self.redraw_dt).floor().max(0.0) as u64
    }
}

/// Uniform draws r_m ∈ [0, 1), one per site, constant within a redraw bin
/// and fully determined by (seed, bin).
pub fn sample_noise(spec: &NoiseSpec, t: f64, sites: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(spec.bin(t));
    (0..sites).map(|_| rng.random::<f64>()).collect()
}

/// Independent child seed for `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1 << 40));
    rng.random()
}
