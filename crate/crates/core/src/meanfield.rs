//! Mean-field picture of a trimer chain: classical energy, the quadratic
//! fluctuation Hamiltonian at α = 0, its bands and where they close.
//!
//! At α = 0 the anomalous terms α_m² (b†_m)² + h.c. vanish identically, so
//! the quadratic Hamiltonian is already particle-number conserving and no
//! Bogoliubov rotation is needed.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimerFrequencies {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TrimerFrequencies {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        TrimerFrequencies { a, b, c }
    }

    /// ω_μ = ω₀ + Δ cos(φ₀ + 2π s_μ/3)
    pub fn from_phase(carrier: f64, modulation: f64, phi0: f64) -> Self {
        let w = |s: f64| carrier + modulation * (phi0 + TWO_PI * s / 3.0).cos();
        TrimerFrequencies { a: w(0.0), b: w(1.0), c: w(2.0) }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// (ω_A − ω_B, ω_A − ω_C)
    pub fn detunings(&self) -> (f64, f64) {
        (self.a - self.b, self.a - self.c)
    }
}

pub type MeanFields = [Complex64; 3];

/// Σ ω_μ|α_μ|² − J(α*_Aα_B + α*_Bα_C + α*_Cα_A + c.c.) + (U/2) Σ |α_μ|²(|α_μ|² − 1)
pub fn classical_energy(alpha: &MeanFields, omega: &TrimerFrequencies, hopping: f64, interaction: f64) -> f64 {
    let w = omega.as_array();
    let mut e = 0.0;
    for m in 0..3 {
        let n = alpha[m].norm_sqr();
        e += w[m] * n + 0.5 * interaction * n * (n - 1.0);
        let hop = alpha[m].conj() * alpha[(m + 1) % 3];
        e -= hopping * 2.0 * hop.re;
    }
    e
}

/// Largest component of the central-difference gradient of the classical
/// energy with respect to (Re α_μ, Im α_μ).
pub fn energy_gradient_norm(alpha: &MeanFields, omega: &TrimerFrequencies, hopping: f64, interaction: f64) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for m in 0..3 {
        for dir in [Complex64::new(h, 0.0), Complex64::new(0.0, h)] {
            let mut plus = *alpha;
            let mut minus = *alpha;
            plus[m] += dir;
            minus[m] -= dir;
            let g = (classical_energy(&plus, omega, hopping, interaction)
                - classical_energy(&minus, omega, hopping, interaction))
                / (2.0 * h);
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// E_{μ,k} = ω_μ − U/2 + 2J cos k for μ = A, B, C.
pub fn bdg_bands(k: f64, omega: &TrimerFrequencies, hopping: f64, interaction: f64) -> [f64; 3] {
    omega.as_array().map(|w| w - 0.5 * interaction + 2.0 * hopping * k.cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdgBandTable {
    pub k: Vec<f64>,
    pub energies: Vec<[f64; 3]>,
}

impl BdgBandTable {
    /// `n` momenta spanning [−π, π].
    pub fn scan(n: usize, omega: &TrimerFrequencies, hopping: f64, interaction: f64) -> Self {
        let k: Vec<f64> = (0..n)
            .map(|i| if n == 1 { 0.0 } else { -std::f64::consts::PI + TWO_PI * i as f64 / (n - 1) as f64 })
            .collect();
        let energies = k.iter().map(|&k| bdg_bands(k, omega, hopping, interaction)).collect();
        BdgBandTable { k, energies }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::propagate::fmt12;
        writeln!(w, "k,E_A,E_B,E_C")?;
        for (k, e) in self.k.iter().zip(&self.energies) {
            writeln!(w, "{},{},{},{}", fmt12(*k), fmt12(e[0]), fmt12(e[1]), fmt12(e[2]))?;
        }
        Ok(())
    }
}

/// Phases at which two sublattice frequencies coincide.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GapClosings {
    /// ω_A = ω_B
    pub ab: Vec<f64>,
    /// ω_A = ω_C
    pub ac: Vec<f64>,
    /// ω_B = ω_C
    pub bc: Vec<f64>,
}

impl GapClosings {
    /// All critical phases, sorted, duplicates within 1e-9 merged.
    pub fn all(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.ab.iter().chain(&self.ac).chain(&self.bc).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.all()).expect("floats serialize")
    }
}

/// Locate band touchings over a φ₀ grid. Bands differ only by ω_μ, so a
/// closing is a root of ω_μ(φ₀) − ω_ν(φ₀): sign changes between neighbouring
/// grid points (the grid is treated as periodic) are refined by bisection,
/// and grid points already within `tol` are reported as they are.
pub fn gap_closing_scan(grid: &[f64], modulation: f64, tol: f64) -> GapClosings {
    let diff = |pair: (usize, usize), phi: f64| {
        let w = TrimerFrequencies::from_phase(0.0, modulation, phi).as_array();
        w[pair.0] - w[pair.1]
    };
    let scan = |pair: (usize, usize)| -> Vec<f64> {
        let mut roots = Vec::new();
        let n = grid.len();
        for i in 0..n {
            let (x0, f0) = (grid[i], diff(pair, grid[i]));
            if f0.abs() < tol {
                roots.push(x0);
                continue;
            }
            if n < 2 {
                continue;
            }
            let mut x1 = grid[(i + 1) % n];
            if i + 1 == n {
                x1 += TWO_PI;
            }
            let f1 = diff(pair, x1);
            if f1.abs() < tol || f0.signum() == f1.signum() {
                continue;
            }
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = diff(pair, m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
                if b - a < 1e-15 {
                    break;
                }
            }
            roots.push((0.5 * (a + b)).rem_euclid(TWO_PI));
        }
        roots.sort_by(f64::total_cmp);
        roots
    };
    GapClosings { ab: scan((0, 1)), ac: scan((0, 2)), bc: scan((1, 2)) }
}

/// True when the three sublattice frequencies coincide within `tol`.
pub fn critical_point_check(omega: &TrimerFrequencies, tol: f64) -> bool {
    let (x, y) = omega.detunings();
    x.abs() < tol && y.abs() < tol
}
