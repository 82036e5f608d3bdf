//! Effective single-trimer model: bare band energies, the Schrieffer-Wolff
//! elimination of the |210⟩/|120⟩ manifold, and exact checks on the
//! 10-state trimer sector.
//!
//! Generator convention: H' = e^{−G} H e^{G} with G = iλS₁ + iλ²S₂ + iλ³S₃
//! real and antisymmetric. The first-order generator is then
//! G₁ = Σ ⟨α|V|β⟩/(ε_β − ε_α) |α⟩⟨β| over pairs in different manifolds.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{build_basis, FockBasis, FockState};
use crate::model::{ModelParams, PumpHamiltonian, PumpPath, TWO_PI};

/// Bare three-photon bands |300⟩, |030⟩, |003⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrimerBand {
    #[serde(rename = "300")]
    A,
    #[serde(rename = "030")]
    B,
    #[serde(rename = "003")]
    C,
}

impl TrimerBand {
    pub const ALL: [TrimerBand; 3] = [TrimerBand::A, TrimerBand::B, TrimerBand::C];

    pub fn sublattice(self) -> usize {
        match self {
            TrimerBand::A => 0,
            TrimerBand::B => 1,
            TrimerBand::C => 2,
        }
    }

    pub fn fock_state(self) -> FockState {
        FockState::localized(3, self.sublattice(), 3)
    }
}

/// E^μ₀(φ) = 3Δ cos(φ + 2π s_μ/3) + 3U
pub fn band_energy(band: TrimerBand, phi: f64, modulation: f64, interaction: f64) -> f64 {
    3.0 * modulation * (phi + TWO_PI * band.sublattice() as f64 / 3.0).cos() + 3.0 * interaction
}

/// Energy ordering of the three gapped bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandPosition {
    Low,
    Mid,
    High,
}

impl BandPosition {
    pub const ALL: [BandPosition; 3] = [BandPosition::Low, BandPosition::Mid, BandPosition::High];

    /// The outer bands share the same topology; the middle one carries the
    /// opposite, doubled charge.
    pub fn chern_number(self) -> i32 {
        match self {
            BandPosition::Low | BandPosition::High => 1,
            BandPosition::Mid => -2,
        }
    }
}

/// Position of the band holding a three-photon Fock state at phase φ (J = 0
/// picture, ties resolved toward the higher band).
pub fn band_position_at(band: TrimerBand, phi: f64, modulation: f64) -> BandPosition {
    let e = |b: TrimerBand| band_energy(b, phi, modulation, 0.0);
    let own = e(band);
    let below = TrimerBand::ALL.iter().filter(|&&b| b != band && e(b) < own - 1e-12).count();
    match below {
        0 => BandPosition::Low,
        1 => BandPosition::Mid,
        _ => BandPosition::High,
    }
}

/// 𝒥 = J³/(√2 U²), the three-photon hopping amplitude quoted for the
/// |300⟩ ↔ |030⟩ anticrossing.
pub fn effective_hopping(hopping: f64, interaction: f64) -> Result<f64> {
    if interaction == 0.0 {
        return Err(Error::ZeroInteraction);
    }
    Ok(hopping.powi(3) / (2f64.sqrt() * interaction * interaction))
}

/// Three-photon hopping obtained from the self-consistent third-order
/// series on the 4-state subspace: 3J³/(2U²).
pub fn effective_hopping_series(hopping: f64, interaction: f64) -> Result<f64> {
    if interaction == 0.0 {
        return Err(Error::ZeroInteraction);
    }
    Ok(1.5 * hopping.powi(3) / (interaction * interaction))
}

/// Ordered states {|300⟩, |030⟩, |210⟩, |120⟩}; P₃ = first two, P₂ = last two.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimerSubspace {
    pub states: [FockState; 4],
}

impl Default for TrimerSubspace {
    fn default() -> Self {
        TrimerSubspace {
            states: [
                FockState::new(vec![3, 0, 0]),
                FockState::new(vec![0, 3, 0]),
                FockState::new(vec![2, 1, 0]),
                FockState::new(vec![1, 2, 0]),
            ],
        }
    }
}

impl TrimerSubspace {
    pub const P3: [usize; 2] = [0, 1];
    pub const P2: [usize; 2] = [2, 3];

    pub fn p3() -> Matrix4<f64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 0.0, 0.0))
    }

    pub fn p2() -> Matrix4<f64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, 0.0, 1.0, 1.0))
    }

    fn manifold(i: usize) -> usize {
        usize::from(i >= 2)
    }

    /// Unperturbed diagonal at phase φ: on-site plus interaction energies.
    pub fn h0(&self, phi: f64, modulation: f64, interaction: f64) -> Matrix4<f64> {
        let w: Vec<f64> = (0..3).map(|m| modulation * (TWO_PI * m as f64 / 3.0 + phi).cos()).collect();
        let mut h = Matrix4::zeros();
        for (i, s) in self.states.iter().enumerate() {
            let occ = s.occupations();
            h[(i, i)] = (0..3)
                .map(|m| w[m] * occ[m] as f64 + 0.5 * interaction * (occ[m] as f64) * (occ[m] as f64 - 1.0))
                .sum();
        }
        h
    }

    /// Hopping restricted to the subspace (bosonic matrix elements).
    pub fn hopping(&self, hopping: f64) -> Matrix4<f64> {
        let mut v = Matrix4::zeros();
        for (i, s) in self.states.iter().enumerate() {
            for m in 0..2 {
                if let Some((target, amp)) = crate::fockspace::hop_element(s, m, 3) {
                    if let Some(j) = self.states.iter().position(|x| *x == target) {
                        v[(j, i)] += -hopping * amp;
                        v[(i, j)] += -hopping * amp;
                    }
                }
            }
        }
        v
    }
}

/// Generators iλS₁, iλ²S₂, iλ³S₃ and the transformed Hamiltonian order by order.
#[derive(Debug, Clone, PartialEq)]
pub struct SwSeries {
    pub generators: [Matrix4<f64>; 3],
    /// H'⁽⁰⁾ … H'⁽³⁾, all block diagonal.
    pub orders: [Matrix4<f64>; 4],
}

impl SwSeries {
    pub fn s1(&self) -> &Matrix4<f64> {
        &self.generators[0]
    }

    pub fn s2(&self) -> &Matrix4<f64> {
        &self.generators[1]
    }

    pub fn s3(&self) -> &Matrix4<f64> {
        &self.generators[2]
    }

    pub fn generator(&self) -> Matrix4<f64> {
        self.generators.iter().sum()
    }

    pub fn effective(&self) -> Matrix4<f64> {
        self.orders.iter().sum()
    }
}

type Series = [Matrix4<f64>; 4];

fn series_mul(a: &Series, b: &Series) -> Series {
    let mut out = [Matrix4::zeros(); 4];
    for i in 0..4 {
        for j in 0..4 - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// Order-by-order expansion of e^{−G} H e^{G} up to λ³ via nested commutators.
fn transformed(h: &Series, g: &Series) -> Series {
    let comm = |x: &Series| -> Series {
        let xg = series_mul(x, g);
        let gx = series_mul(g, x);
        let mut out = [Matrix4::zeros(); 4];
        for k in 0..4 {
            out[k] = xg[k] - gx[k];
        }
        out
    };
    let mut total = *h;
    let mut term = *h;
    for n in 1..=3 {
        term = comm(&term);
        for k in 0..4 {
            total[k] += term[k] / factorial(n);
        }
    }
    total
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Self-consistent third-order Schrieffer-Wolff series on the 4-state
/// subspace around phase φ.
pub fn sw_series(hopping: f64, interaction: f64, modulation: f64, phi: f64) -> Result<SwSeries> {
    if interaction == 0.0 {
        return Err(Error::ZeroInteraction);
    }
    let sub = TrimerSubspace::default();
    let h0 = sub.h0(phi, modulation, interaction);
    let h: Series = [h0, sub.hopping(hopping), Matrix4::zeros(), Matrix4::zeros()];
    let mut g: Series = [Matrix4::zeros(); 4];
    for n in 1..=3 {
        let r = transformed(&h, &g)[n];
        let mut gn = Matrix4::zeros();
        for a in 0..4 {
            for b in 0..4 {
                if TrimerSubspace::manifold(a) != TrimerSubspace::manifold(b) {
                    gn[(a, b)] = r[(a, b)] / (h0[(b, b)] - h0[(a, a)]);
                }
            }
        }
        g[n] = gn;
    }
    let orders = transformed(&h, &g);
    Ok(SwSeries { generators: [g[1], g[2], g[3]], orders })
}

/// iλS₁ and iλ²S₂ at the |300⟩/|030⟩ degeneracy φ = 2π/3.
pub fn sw_generators(hopping: f64, interaction: f64) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    let s = sw_series(hopping, interaction, 1.0, TWO_PI / 3.0)?;
    Ok((s.generators[0], s.generators[1]))
}

/// Largest entry of P₂ e^{−G} H e^{G} P₃ with the truncated generator
/// exponentiated exactly.
pub fn block_residual(hopping: f64, interaction: f64, modulation: f64, phi: f64) -> Result<f64> {
    let sub = TrimerSubspace::default();
    let s = sw_series(hopping, interaction, modulation, phi)?;
    let g = s.generator();
    let h = sub.h0(phi, modulation, interaction) + sub.hopping(hopping);
    let rotated = (-g).exp() * h * g.exp();
    let off = TrimerSubspace::p2() * rotated * TrimerSubspace::p3();
    Ok(off.amax())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveBlock {
    /// 2×2 Hamiltonian on {|300⟩, |030⟩}.
    pub matrix: Matrix2<f64>,
    /// False when 0 < √3J < −2U does not hold.
    pub perturbative: bool,
}

pub fn perturbative_condition(hopping: f64, interaction: f64) -> bool {
    let x = 3f64.sqrt() * hopping;
    0.0 < x && x < -2.0 * interaction
}

/// P₃ block of the third-order effective Hamiltonian at φ*.
pub fn effective_block_hamiltonian(
    hopping: f64,
    interaction: f64,
    modulation: f64,
    phi_star: f64,
) -> Result<EffectiveBlock> {
    let h = sw_series(hopping, interaction, modulation, phi_star)?.effective();
    Ok(EffectiveBlock {
        matrix: h.fixed_view::<2, 2>(0, 0).into_owned(),
        perturbative: perturbative_condition(hopping, interaction),
    })
}

fn trimer_setup(hopping: f64, interaction: f64, modulation: f64) -> Result<(FockBasis, PumpHamiltonian, PumpPath)> {
    // J = 0 is allowed here (crossings), so bypass the J > 0 validation.
    let params = ModelParams { sites: 3, hopping, interaction, modulation, carrier: 0.0 };
    let basis = build_basis(3, 3, 3)?;
    let ham = PumpHamiltonian::new(&basis, &params)?;
    let path = PumpPath::PhaseSweep { omega: 1.0, phi0: 0.0, cycles: 1.0 };
    Ok((basis, ham, path))
}

fn trimer_eigen(ham: &mut PumpHamiltonian, path: &PumpPath, phi: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    ham.set_time(phi, path, None)?;
    Ok(SymmetricEigen::new(ham.to_dense_real()))
}

/// Gap between the two eigenstates carrying the most |300⟩+|030⟩ weight.
fn p3_pair_gap(basis: &FockBasis, eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> f64 {
    let i300 = basis.index_of(&TrimerBand::A.fock_state()).unwrap();
    let i030 = basis.index_of(&TrimerBand::B.fock_state()).unwrap();
    let v = &eig.eigenvectors;
    let mut w: Vec<(usize, f64)> =
        (0..v.ncols()).map(|k| (k, v[(i300, k)].powi(2) + v[(i030, k)].powi(2))).collect();
    w.sort_by(|a, b| b.1.total_cmp(&a.1));
    (eig.eigenvalues[w[0].0] - eig.eigenvalues[w[1].0]).abs()
}

/// Exact anticrossing gap of the |300⟩/|030⟩ pair on the full 10-state
/// trimer, minimized over φ within ±0.2 of `phi_star`.
pub fn trimer_gap_exact(hopping: f64, interaction: f64, modulation: f64, phi_star: f64) -> Result<AnticrossingGap> {
    let (basis, mut ham, path) = trimer_setup(hopping, interaction, modulation)?;
    let mut gap_at = |phi: f64| -> Result<f64> { Ok(p3_pair_gap(&basis, &trimer_eigen(&mut ham, &path, phi)?)) };

    let half = 0.2;
    let n = 400;
    let mut best = (phi_star, gap_at(phi_star)?);
    for k in 0..=n {
        let phi = phi_star - half + 2.0 * half * k as f64 / n as f64;
        let g = gap_at(phi)?;
        if g < best.1 {
            best = (phi, g);
        }
    }
    // golden-section refinement in the bracketing cell
    let step = 2.0 * half / n as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (gap_at(c)?, gap_at(d)?);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = gap_at(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = gap_at(d)?;
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    let (phi, gap) = if fc < fd { (c, fc) } else { (d, fd) };
    let (phi, gap) = if gap < best.1 { (phi, gap) } else { best };
    Ok(AnticrossingGap { phi, gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnticrossingGap {
    pub phi: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpectrum {
    pub phi: Vec<f64>,
    /// Per φ: [low, mid, high].
    pub energies: Vec<[f64; 3]>,
}

impl BandSpectrum {
    pub fn gaps(&self, i: usize) -> (f64, f64) {
        let e = self.energies[i];
        (e[1] - e[0], e[2] - e[1])
    }

    pub fn min_gap(&self) -> f64 {
        (0..self.phi.len()).map(|i| {
            let (a, b) = self.gaps(i);
            a.min(b)
        })
        .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        use crate::propagate::fmt12;
        writeln!(w, "phi,E_low,E_mid,E_high,gap_low_mid,gap_mid_high")?;
        for (i, phi) in self.phi.iter().enumerate() {
            let e = self.energies[i];
            let (g1, g2) = self.gaps(i);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt12(*phi),
                fmt12(e[0]),
                fmt12(e[1]),
                fmt12(e[2]),
                fmt12(g1),
                fmt12(g2)
            )?;
        }
        Ok(())
    }
}

/// Uniform grid of `n` phases on [0, 2π).
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TWO_PI * k as f64 / n as f64).collect()
}

/// Energies of the three adiabatic bands continuously connected to
/// |300⟩, |030⟩, |003⟩, followed by maximal successive overlap around the
/// (cyclic) grid and reported sorted at every φ.
pub fn three_band_spectrum(modulation: f64, interaction: f64, hopping: f64, grid: &[f64]) -> Result<BandSpectrum> {
    if grid.is_empty() {
        return Ok(BandSpectrum { phi: vec![], energies: vec![] });
    }
    let (basis, mut ham, path) = trimer_setup(hopping, interaction, modulation)?;

    // Start where the bare bands are farthest apart so the labels are clean.
    let separation = |phi: f64| {
        let e: Vec<f64> = TrimerBand::ALL.iter().map(|&b| band_energy(b, phi, modulation, 0.0)).collect();
        (e[0] - e[1]).abs().min((e[1] - e[2]).abs()).min((e[0] - e[2]).abs())
    };
    let start = (0..grid.len()).max_by(|&a, &b| separation(grid[a]).total_cmp(&separation(grid[b]))).unwrap();

    let mut energies = vec![[0.0; 3]; grid.len()];
    let mut followed: Vec<Vec<f64>> = TrimerBand::ALL
        .iter()
        .map(|b| {
            let mut v = vec![0.0; basis.dim()];
            v[basis.index_of(&b.fock_state()).unwrap()] = 1.0;
            v
        })
        .collect();
    for step in 0..grid.len() {
        let i = (start + step) % grid.len();
        let eig = trimer_eigen(&mut ham, &path, grid[i])?;
        let mut taken = vec![false; eig.eigenvalues.len()];
        let mut e = [0.0; 3];
        for (band, prev) in followed.iter_mut().enumerate() {
            let k = (0..eig.eigenvalues.len())
                .filter(|&k| !taken[k])
                .max_by(|&a, &b| {
                    let oa: f64 = eig.eigenvectors.column(a).iter().zip(prev.iter()).map(|(x, y)| x * y).sum();
                    let ob: f64 = eig.eigenvectors.column(b).iter().zip(prev.iter()).map(|(x, y)| x * y).sum();
                    oa.abs().total_cmp(&ob.abs())
                })
                .unwrap();
            taken[k] = true;
            e[band] = eig.eigenvalues[k];
            *prev = eig.eigenvectors.column(k).iter().copied().collect();
        }
        e.sort_by(f64::total_cmp);
        energies[i] = e;
    }
    Ok(BandSpectrum { phi: grid.to_vec(), energies })
}

/// Full sorted spectrum of the 10-state trimer at φ.
pub fn trimer_spectrum(hopping: f64, interaction: f64, modulation: f64, phi: f64) -> Result<Vec<f64>> {
    let (_, mut ham, path) = trimer_setup(hopping, interaction, modulation)?;
    let eig = trimer_eigen(&mut ham, &path, phi)?;
    let mut e: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Bare-band crossing phases in [0, 2π): A=B at 2π/3, 5π/3; A=C at π/3,
/// 4π/3; B=C at 0, π.
pub fn bare_crossings() -> [(TrimerBand, TrimerBand, f64); 6] {
    use TrimerBand::*;
    [
        (B, C, 0.0),
        (A, C, PI / 3.0),
        (A, B, 2.0 * PI / 3.0),
        (B, C, PI),
        (A, C, 4.0 * PI / 3.0),
        (A, B, 5.0 * PI / 3.0),
    ]
}

/// Dense matrix of the subspace Hamiltonian (for diagnostics).
pub fn subspace_hamiltonian(hopping: f64, interaction: f64, modulation: f64, phi: f64) -> DMatrix<f64> {
    let sub = TrimerSubspace::default();
    let h = sub.h0(phi, modulation, interaction) + sub.hopping(hopping);
    DMatrix::from_iterator(4, 4, h.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI_STAR: f64 = 2.0 * PI / 3.0;

    #[test]
    fn band_energy_examples() {
        assert!((band_energy(TrimerBand::A, PHI_STAR, 10.0, -1.0) - (-18.0)).abs() < 1e-12);
        assert_eq!(band_energy(TrimerBand::A, 0.0, 10.0, 0.0), 30.0);
        let a = band_energy(TrimerBand::A, PHI_STAR, 10.0, -1.0);
        let b = band_energy(TrimerBand::B, PHI_STAR, 10.0, -1.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn band_energy_cyclic() {
        for k in 0..50 {
            let phi = 0.13 * k as f64;
            let a = band_energy(TrimerBand::A, phi, 10.0, -1.0);
            assert!((a - band_energy(TrimerBand::A, phi + TWO_PI, 10.0, -1.0)).abs() < 1e-10);
            assert!((band_energy(TrimerBand::B, phi, 10.0, -1.0) - band_energy(TrimerBand::A, phi + TWO_PI / 3.0, 10.0, -1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn chern_numbers_sum_to_zero() {
        assert_eq!(BandPosition::ALL.iter().map(|b| b.chern_number()).sum::<i32>(), 0);
        assert_eq!(band_position_at(TrimerBand::A, 0.0, 10.0), BandPosition::High);
        assert_eq!(band_position_at(TrimerBand::A, PI / 2.0, 10.0), BandPosition::Mid);
    }

    #[test]
    fn effective_hopping_examples() {
        assert!((effective_hopping(1.0, -1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((effective_hopping(1.0, -3.0).unwrap() - 1.0 / (9.0 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(effective_hopping(0.0, -1.0).unwrap(), 0.0);
        assert!(matches!(effective_hopping(1.0, 0.0), Err(Error::ZeroInteraction)));
    }

    #[test]
    fn subspace_projectors() {
        let (p2, p3) = (TrimerSubspace::p2(), TrimerSubspace::p3());
        assert_eq!(p2 + p3, Matrix4::identity());
        assert_eq!(p2 * p3, Matrix4::zeros());
    }

    #[test]
    fn subspace_matrix_elements() {
        let v = TrimerSubspace::default().hopping(1.0);
        let s3 = 3f64.sqrt();
        assert!((v[(2, 0)] + s3).abs() < 1e-12);
        assert!((v[(3, 2)] + 2.0).abs() < 1e-12);
        assert!((v[(1, 3)] + s3).abs() < 1e-12);
        assert_eq!(v[(1, 0)], 0.0);
    }

    #[test]
    fn first_order_generator() {
        let (s1, _) = sw_generators(1.0, -1.0).unwrap();
        assert!((s1[(0, 2)] - (-0.75f64.sqrt())).abs() < 1e-12);
        assert!((s1[(1, 3)] - (-0.75f64.sqrt())).abs() < 1e-12);
        assert!((s1 + s1.transpose()).amax() < 1e-15);
        let (p2, p3) = (TrimerSubspace::p2(), TrimerSubspace::p3());
        assert!((p3 * s1 * p3).amax() == 0.0 && (p2 * s1 * p2).amax() == 0.0);
        let (zero, _) = sw_generators(0.0, -1.0).unwrap();
        assert_eq!(zero, Matrix4::zeros());
    }

    #[test]
    fn second_order_generator_coefficient() {
        // Self-consistent series: √3J²/(2U²) on |300⟩⟨120| and |030⟩⟨210|.
        for &(j, u) in &[(1.0, -1.0), (1.0, -3.0), (0.5, -2.0)] {
            let (_, s2) = sw_generators(j, u).unwrap();
            let c = 3f64.sqrt() * j * j / (2.0 * u * u);
            assert!((s2[(0, 3)].abs() - c).abs() < 1e-12, "{} vs {c}", s2[(0, 3)]);
            assert!((s2[(1, 2)].abs() - c).abs() < 1e-12);
            assert_eq!(s2[(0, 2)], 0.0);
        }
    }

    #[test]
    fn third_order_hopping() {
        for &(j, u) in &[(1.0, -1.0), (1.0, -3.0), (0.5, -2.0)] {
            let b = effective_block_hamiltonian(j, u, 10.0, PHI_STAR).unwrap();
            let expect = -effective_hopping_series(j, u).unwrap();
            assert!((b.matrix[(0, 1)] - expect).abs() < 1e-12);
            assert!((b.matrix[(1, 0)] - expect).abs() < 1e-12);
        }
        let s = sw_series(1.0, -1.0, 10.0, PHI_STAR).unwrap();
        assert!((s.orders[2][(0, 0)] - (-1.5)).abs() < 1e-12);
    }

    #[test]
    fn block_example_values() {
        let b = effective_block_hamiltonian(0.0, -1.0, 10.0, PHI_STAR).unwrap();
        assert!((b.matrix[(0, 0)] + 18.0).abs() < 1e-12 && (b.matrix[(1, 1)] + 18.0).abs() < 1e-12);
        assert_eq!(b.matrix[(0, 1)], 0.0);
        assert!(!b.perturbative);
        let sub = TrimerSubspace::default();
        let h0 = sub.h0(PHI_STAR, 10.0, -1.0);
        assert!((h0[(2, 2)] - h0[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(effective_block_hamiltonian(1.0, -1.0, 10.0, PHI_STAR).unwrap().perturbative);
        assert!(!perturbative_condition(1.0, -0.5));
    }

    #[test]
    fn series_is_block_diagonal() {
        let s = sw_series(1.0, -3.0, 10.0, PHI_STAR).unwrap();
        let (p2, p3) = (TrimerSubspace::p2(), TrimerSubspace::p3());
        for h in &s.orders {
            assert!((p2 * h * p3).amax() < 1e-14);
        }
    }

    #[test]
    fn block_residual_is_fourth_order() {
        for &u in &[-3.0f64, -6.0, -12.0] {
            let eps = 3f64.sqrt() / (2.0 * u.abs());
            let scale = eps.powi(4) * u.abs();
            let r = block_residual(1.0, u, 10.0, PHI_STAR).unwrap();
            assert!(r < 10.0 * scale, "U={u}: residual {r}, scale {scale}");
            assert!(r > 0.5 * scale);
        }
    }

    #[test]
    fn exact_gap_values() {
        let g = trimer_gap_exact(1.0, -3.0, 10.0, PHI_STAR).unwrap();
        assert!((g.gap - 0.2871).abs() < 2e-4, "{g:?}");
        let g = trimer_gap_exact(1.0, -1.0, 10.0, PHI_STAR).unwrap();
        assert!((g.gap - 1.0871).abs() < 2e-4, "{g:?}");
        let g0 = trimer_gap_exact(0.0, -1.0, 10.0, PHI_STAR).unwrap();
        assert!(g0.gap < 1e-10);
    }

    #[test]
    fn exact_gap_approaches_series_hopping() {
        let g = trimer_gap_exact(1.0, -12.0, 10.0, PHI_STAR).unwrap().gap;
        let series = 2.0 * effective_hopping_series(1.0, -12.0).unwrap();
        assert!((g - series).abs() / series < 0.05, "{g} vs {series}");
    }

    #[test]
    fn three_bands_gapped() {
        let s = three_band_spectrum(10.0, -1.0, 1.0, &phase_grid(720)).unwrap();
        assert!(s.min_gap() > 0.3, "{}", s.min_gap());
        let bare = three_band_spectrum(10.0, -1.0, 0.0, &phase_grid(720)).unwrap();
        assert!(bare.min_gap() < 1e-8);
        let i = 100;
        let mut expect: Vec<f64> = TrimerBand::ALL.iter().map(|&b| band_energy(b, bare.phi[i], 10.0, -1.0)).collect();
        expect.sort_by(f64::total_cmp);
        for k in 0..3 {
            assert!((bare.energies[i][k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_modulation_degenerate() {
        let s = three_band_spectrum(0.0, -1.0, 0.0, &phase_grid(12)).unwrap();
        assert!(s.min_gap() == 0.0);
    }

    #[test]
    fn csv_header() {
        let s = three_band_spectrum(10.0, -1.0, 1.0, &phase_grid(6)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("phi,E_low,E_mid,E_high,gap_low_mid,gap_mid_high\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
