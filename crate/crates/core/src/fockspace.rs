//! Number-conserving bosonic Fock sectors and sparse operators over them.
//!
//! A [`FockBasis`] enumerates every occupation vector of `photons` bosons on
//! `sites` modes with at most `n_max` quanta per mode, in ascending
//! lexicographic order. Operators are stored row-compressed.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::krylov::LinearOperator;

/// Occupation numbers, one entry per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(Vec<u8>);

impl FockState {
    pub fn new(occupations: Vec<u8>) -> Self {
        FockState(occupations)
    }

    /// All `photons` quanta on one site of an otherwise empty lattice.
    pub fn localized(sites: usize, site: usize, photons: u8) -> Self {
        let mut occ = vec![0; sites];
        occ[site] = photons;
        FockState(occ)
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn sites(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }
}

impl std::fmt::Display for FockState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|")?;
        for n in &self.0 {
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    sites: usize,
    photons: usize,
    n_max: usize,
    states: Vec<FockState>,
    index: HashMap<Box<[u8]>, usize>,
}

/// Enumerate the capped sector of `photons` bosons on `sites` modes.
pub fn build_basis(sites: usize, photons: usize, n_max: usize) -> Result<FockBasis> {
    FockBasis::new(sites, photons, n_max)
}

/// Default per-site cap: the photon number, truncated at five.
pub fn default_n_max(photons: usize) -> usize {
    photons.clamp(1, 5)
}

impl FockBasis {
    pub fn new(sites: usize, photons: usize, n_max: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::invalid("sites", "need at least one site"));
        }
        if n_max == 0 || n_max > u8::MAX as usize {
            return Err(Error::invalid("n_max", format!("must be in 1..=255, got {n_max}")));
        }
        if photons > sites * n_max {
            return Err(Error::EmptySector { sites, photons, n_max });
        }

        let mut states = Vec::new();
        let mut current = vec![0u8; sites];
        enumerate(&mut current, 0, photons, n_max, &mut states);

        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.0.clone().into_boxed_slice(), i))
            .collect();
        Ok(FockBasis { sites, photons, n_max, states, index })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &FockState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &FockState) -> Option<usize> {
        self.index_of_occupations(&state.0)
    }

    pub fn index_of_occupations(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Expectation of every site occupation for the given probability weights.
    pub(crate) fn accumulate_density(&self, probabilities: impl Iterator<Item = f64>, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (state, p) in self.states.iter().zip(probabilities) {
            if p == 0.0 {
                continue;
            }
            for (m, &n) in state.0.iter().enumerate() {
                if n > 0 {
                    out[m] += p * n as f64;
                }
            }
        }
    }
}

// Lexicographic order: leading site varies slowest, smallest occupation first.
fn enumerate(current: &mut [u8], site: usize, left: usize, n_max: usize, out: &mut Vec<FockState>) {
    let sites = current.len();
    if site == sites - 1 {
        if left <= n_max {
            current[site] = left as u8;
            out.push(FockState(current.to_vec()));
            current[site] = 0;
        }
        return;
    }
    let remaining_capacity = (sites - site - 1) * n_max;
    let lo = left.saturating_sub(remaining_capacity);
    for n in lo..=left.min(n_max) {
        current[site] = n as u8;
        enumerate(current, site + 1, left - n, n_max, out);
    }
    current[site] = 0;
}

/// Action of `a†_m a_{m+1}` on a Fock state.
///
/// Returns the target state and the bosonic matrix element
/// `sqrt(n_{m+1} (n_m + 1))`, or `None` when the move is forbidden (empty
/// source site, or target above the cap).
pub fn hop_element(state: &FockState, m: usize, n_max: usize) -> Option<(FockState, f64)> {
    let occ = &state.0;
    if m + 1 >= occ.len() {
        return None;
    }
    let (to, from) = (occ[m] as usize, occ[m + 1] as usize);
    if from == 0 || to + 1 > n_max {
        return None;
    }
    let mut target = occ.clone();
    target[m] += 1;
    target[m + 1] -= 1;
    Some((FockState(target), ((from * (to + 1)) as f64).sqrt()))
}

/// Row-compressed complex sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    /// Assemble from coordinate triplets; duplicate coordinates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "entry ({r},{c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator { dim, row_ptr, col_idx, values }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let triplets = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, Complex64::new(v, 0.0)))
            .collect();
        Self::from_triplets(values.len(), triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(r, c, v)| r == c || v == Complex64::new(0.0, 0.0))
    }

    /// Largest entrywise |H - H†|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.dim, other.dim);
        let triplets = self.entries().chain(other.entries()).collect();
        SparseOperator::from_triplets(self.dim, triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }
}

/// Real symmetric row-compressed matrix used for the fixed hopping part of
/// the pump Hamiltonian (no diagonal entries).
#[derive(Debug, Clone)]
pub(crate) struct RealCsr {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<u32>,
    pub(crate) values: Vec<f64>,
}

impl RealCsr {
    #[inline]
    pub(crate) fn row_dot(&self, r: usize, x: &[Complex64]) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            let xv = x[self.col_idx[k] as usize];
            re += self.values[k] * xv.re;
            im += self.values[k] * xv.im;
        }
        Complex64::new(re, im)
    }
}

/// `-J Σ_m (a†_m a_{m+1} + h.c.)` with open boundaries, as a real CSR matrix.
pub(crate) fn hopping_csr(basis: &FockBasis, hopping: f64) -> RealCsr {
    let dim = basis.dim();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    for (i, state) in basis.states().iter().enumerate() {
        for m in 0..basis.sites().saturating_sub(1) {
            if let Some((target, amp)) = hop_element(state, m, basis.n_max()) {
                let j = basis.index_of(&target).expect("hop target outside sector");
                rows[j].push((i as u32, -hopping * amp));
                rows[i].push((j as u32, -hopping * amp));
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(dim + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for mut row in rows {
        row.sort_by_key(|&(c, _)| c);
        for (c, v) in row {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    RealCsr { row_ptr, col_idx, values }
}

/// `-J Σ_m (a†_m a_{m+1} + h.c.)` over the basis.
pub fn hopping_operator(basis: &FockBasis, hopping: f64) -> SparseOperator {
    let csr = hopping_csr(basis, hopping);
    let mut triplets = Vec::with_capacity(csr.values.len());
    for r in 0..basis.dim() {
        for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
            triplets.push((r, csr.col_idx[k] as usize, Complex64::new(csr.values[k], 0.0)));
        }
    }
    SparseOperator::from_triplets(basis.dim(), triplets)
}

/// Diagonal values `Σ_m w_m n_m` for every basis state.
pub fn number_weighted_diagonal(basis: &FockBasis, weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != basis.sites() {
        return Err(Error::LengthMismatch { expected: basis.sites(), got: weights.len() });
    }
    Ok(basis
        .states()
        .iter()
        .map(|s| s.0.iter().zip(weights).map(|(&n, w)| n as f64 * w).sum())
        .collect())
}

/// The operator `Σ_m w_m n̂_m`.
pub fn number_operator_diagonal(basis: &FockBasis, weights: &[f64]) -> Result<SparseOperator> {
    Ok(SparseOperator::diagonal(&number_weighted_diagonal(basis, weights)?))
}

/// `(U/2) Σ_m n_m (n_m - 1)` for every basis state.
pub fn interaction_diagonal(basis: &FockBasis, interaction: f64) -> Vec<f64> {
    basis
        .states()
        .iter()
        .map(|s| {
            let pairs: usize = s.0.iter().map(|&n| (n as usize) * (n as usize).saturating_sub(1)).sum();
            0.5 * interaction * pairs as f64
        })
        .collect()
}
