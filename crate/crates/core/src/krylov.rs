//! Lanczos approximation of `exp(-i H dt) ψ` for Hermitian `H`.
//!
//! The subspace grows one vector at a time until the a-posteriori error
//! estimate `β₀ β_m |[exp(-i T_m dt) e₁]_m|` drops below the tolerance. If the
//! maximal subspace is exhausted the step is split in halves.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matrix-free Hermitian operator acting on complex vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = H x`
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovSettings {
    pub tol: f64,
    pub max_dim: usize,
    /// Maximum number of times a step may be halved after non-convergence.
    pub max_halvings: u32,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        KrylovSettings { tol: 1e-11, max_dim: 40, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub matvecs: usize,
    pub substeps: usize,
    pub error_estimate: f64,
}

/// Reusable Lanczos workspace.
#[derive(Debug, Default)]
pub struct KrylovPropagator {
    settings: KrylovSettings,
    basis: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

const BREAKDOWN: f64 = 1e-14;

impl KrylovPropagator {
    pub fn new(settings: KrylovSettings) -> Self {
        KrylovPropagator { settings, basis: Vec::new(), scratch: Vec::new() }
    }

    pub fn settings(&self) -> KrylovSettings {
        self.settings
    }

    /// Replace `psi` by `exp(-i H dt) psi`.
    pub fn step<H: LinearOperator + ?Sized>(
        &mut self,
        op: &H,
        psi: &mut [Complex64],
        dt: f64,
    ) -> Result<StepStats> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        let mut stats = StepStats::default();
        self.step_split(op, psi, dt, 0, &mut stats)?;
        Ok(stats)
    }

    fn step_split<H: LinearOperator + ?Sized>(
        &mut self,
        op: &H,
        psi: &mut [Complex64],
        dt: f64,
        depth: u32,
        stats: &mut StepStats,
    ) -> Result<()> {
        match self.try_step(op, psi, dt, stats)? {
            Ok(()) => {
                stats.substeps += 1;
                Ok(())
            }
            Err((residual, dim)) => {
                if depth >= self.settings.max_halvings {
                    return Err(Error::KrylovNoConvergence { residual, dim });
                }
                self.step_split(op, psi, 0.5 * dt, depth + 1, stats)?;
                self.step_split(op, psi, 0.5 * dt, depth + 1, stats)
            }
        }
    }

    /// Outer `Err` is a hard failure; inner `Err` means "not converged".
    #[allow(clippy::type_complexity)]
    fn try_step<H: LinearOperator + ?Sized>(
        &mut self,
        op: &H,
        psi: &mut [Complex64],
        dt: f64,
        stats: &mut StepStats,
    ) -> Result<std::result::Result<(), (f64, usize)>> {
        let n = op.dim();
        if psi.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: psi.len() });
        }
        let beta0 = norm(psi);
        if beta0 == 0.0 {
            return Ok(Ok(()));
        }
        let max_dim = self.settings.max_dim.min(n).max(1);
        if self.basis.len() < max_dim + 1 {
            self.basis.resize_with(max_dim + 1, Vec::new);
        }
        for v in self.basis.iter_mut() {
            v.resize(n, Complex64::new(0.0, 0.0));
        }
        self.scratch.resize(n, Complex64::new(0.0, 0.0));

        let inv = 1.0 / beta0;
        for (v, p) in self.basis[0].iter_mut().zip(psi.iter()) {
            *v = p * inv;
        }

        let mut alpha: Vec<f64> = Vec::with_capacity(max_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
        let mut last_err = f64::INFINITY;

        for j in 0..max_dim {
            op.apply(&self.basis[j], &mut self.scratch);
            stats.matvecs += 1;
            let a = dot(&self.basis[j], &self.scratch).re;
            alpha.push(a);
            {
                let (head, _) = self.basis.split_at(j + 1);
                let vj = &head[j];
                let prev = if j > 0 { Some((&head[j - 1], beta[j - 1])) } else { None };
                for (k, w) in self.scratch.iter_mut().enumerate() {
                    *w -= vj[k] * a;
                    if let Some((vp, b)) = prev {
                        *w -= vp[k] * b;
                    }
                }
            }
            let b = norm(&self.scratch);
            let coeffs = small_exponential(&alpha, &beta, dt);
            let m = alpha.len();
            let err = beta0 * b * coeffs[m - 1].norm();
            last_err = err;
            let invariant = b < BREAKDOWN * (1.0 + a.abs());
            if invariant || err < self.settings.tol {
                stats.error_estimate = stats.error_estimate.max(if invariant { 0.0 } else { err });
                psi.iter_mut().for_each(|p| *p = Complex64::new(0.0, 0.0));
                for (c, v) in coeffs.iter().zip(&self.basis[..m]) {
                    let c = c * beta0;
                    for (p, x) in psi.iter_mut().zip(v) {
                        *p += c * x;
                    }
                }
                return Ok(Ok(()));
            }
            beta.push(b);
            let inv = 1.0 / b;
            let (head, tail) = self.basis.split_at_mut(j + 1);
            let _ = head;
            for (v, w) in tail[0].iter_mut().zip(&self.scratch) {
                *v = w * inv;
            }
        }
        Ok(Err((last_err, max_dim)))
    }
}

/// `exp(-i T dt) e₁` for the symmetric tridiagonal `T` with diagonal `alpha`
/// and off-diagonal `beta` (`beta.len() >= alpha.len() - 1`).
fn small_exponential(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<Complex64> {
    let m = alpha.len();
    if m == 1 {
        return vec![Complex64::from_polar(1.0, -alpha[0] * dt)];
    }
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for l in 0..m {
        let phase = Complex64::from_polar(eig.eigenvectors[(0, l)], -eig.eigenvalues[l] * dt);
        for (k, o) in out.iter_mut().enumerate() {
            *o += phase * eig.eigenvectors[(k, l)];
        }
    }
    out
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::SparseOperator;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Dense reference: exp(-i H dt) via eigendecomposition of a real symmetric H.
    fn dense_reference(h: &DMatrix<f64>, psi: &[Complex64], dt: f64) -> Vec<Complex64> {
        let eig = SymmetricEigen::new(h.clone());
        let n = psi.len();
        let mut out = vec![c(0.0, 0.0); n];
        for l in 0..n {
            let proj: Complex64 = (0..n).map(|k| eig.eigenvectors[(k, l)] * psi[k]).sum();
            let ph = Complex64::from_polar(1.0, -eig.eigenvalues[l] * dt) * proj;
            for k in 0..n {
                out[k] += ph * eig.eigenvectors[(k, l)];
            }
        }
        out
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = SparseOperator::from_triplets(3, vec![]);
        let mut psi = vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)];
        let before = psi.clone();
        KrylovPropagator::new(KrylovSettings::default()).step(&h, &mut psi, 0.7).unwrap();
        for (a, b) in psi.iter().zip(&before) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_phase() {
        let h = SparseOperator::diagonal(&[2.5, -1.0]);
        let mut psi = vec![c(1.0, 0.0), c(0.0, 0.0)];
        KrylovPropagator::new(KrylovSettings::default()).step(&h, &mut psi, 0.3).unwrap();
        let expected = Complex64::from_polar(1.0, -2.5 * 0.3);
        assert!((psi[0] - expected).norm() < 1e-13);
        assert!(psi[1].norm() < 1e-14);
    }

    #[test]
    fn two_site_rabi_transfer() {
        // H = -J (|10><01| + h.c.), exp(-iH π/2)|10> = i|01>.
        let h = SparseOperator::from_triplets(2, vec![(0, 1, c(-1.0, 0.0)), (1, 0, c(-1.0, 0.0))]);
        let mut psi = vec![c(1.0, 0.0), c(0.0, 0.0)];
        KrylovPropagator::new(KrylovSettings::default())
            .step(&h, &mut psi, std::f64::consts::FRAC_PI_2)
            .unwrap();
        assert!(psi[0].norm() < 1e-12);
        // full population transfer; phase is i for this sign of J
        assert!((psi[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn matches_dense_exponential() {
        let n = 30;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut trip = Vec::new();
        for i in 0..n {
            let d = ((i * 7) % 11) as f64 - 5.0;
            dense[(i, i)] = d;
            trip.push((i, i, c(d, 0.0)));
            if i + 1 < n {
                let v = -1.0 - 0.1 * (i % 3) as f64;
                dense[(i, i + 1)] = v;
                dense[(i + 1, i)] = v;
                trip.push((i, i + 1, c(v, 0.0)));
                trip.push((i + 1, i, c(v, 0.0)));
            }
        }
        let h = SparseOperator::from_triplets(n, trip);
        let psi0: Vec<Complex64> = (0..n).map(|k| c((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let nrm = norm(&psi0);
        let psi0: Vec<Complex64> = psi0.iter().map(|x| x / nrm).collect();
        for dt in [0.01, 0.2, 1.5] {
            let mut psi = psi0.clone();
            KrylovPropagator::new(KrylovSettings::default()).step(&h, &mut psi, dt).unwrap();
            let reference = dense_reference(&dense, &psi0, dt);
            let err: f64 = psi.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-9, "dt={dt} err={err}");
            assert!((norm(&psi) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn long_step_is_split() {
        let n = 40;
        let trip: Vec<_> = (0..n)
            .flat_map(|i| {
                let mut v = vec![(i, i, c(50.0 * ((i % 5) as f64 - 2.0), 0.0))];
                if i + 1 < n {
                    v.push((i, i + 1, c(-3.0, 0.0)));
                    v.push((i + 1, i, c(-3.0, 0.0)));
                }
                v
            })
            .collect();
        let h = SparseOperator::from_triplets(n, trip);
        let mut psi = vec![c(0.0, 0.0); n];
        psi[n / 2] = c(1.0, 0.0);
        let settings = KrylovSettings { tol: 1e-10, max_dim: 8, max_halvings: 12 };
        let stats = KrylovPropagator::new(settings).step(&h, &mut psi, 2.0).unwrap();
        assert!(stats.substeps > 1);
        assert!((norm(&psi) - 1.0).abs() < 1e-8);

        let strict = KrylovSettings { tol: 1e-10, max_dim: 3, max_halvings: 0 };
        assert!(matches!(
            KrylovPropagator::new(strict).step(&h, &mut psi, 2.0),
            Err(Error::KrylovNoConvergence { .. })
        ));
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let h = SparseOperator::diagonal(&[1.0]);
        let mut psi = vec![c(1.0, 0.0)];
        assert!(KrylovPropagator::new(KrylovSettings::default()).step(&h, &mut psi, 0.0).is_err());
    }
}
