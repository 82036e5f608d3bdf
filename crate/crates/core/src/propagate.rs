//! Closed-system pump dynamics and observables.

use std::io::{BufRead, Write};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{FockBasis, FockState};
use crate::krylov::{self, KrylovPropagator, KrylovSettings};
use crate::model::{self, ModelParams, NoiseSpec, PumpHamiltonian, PumpPath};

/// Largest sector handed to dense diagonalization.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn from_amplitudes(basis: &FockBasis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::LengthMismatch { expected: basis.dim(), got: amplitudes.len() });
        }
        Ok(StateVector { amplitudes })
    }

    pub fn from_fock(basis: &FockBasis, state: &FockState) -> Result<Self> {
        let i = basis.index_of(state).ok_or_else(|| {
            Error::invalid("initial_state", format!("{state} is not in the sector"))
        })?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amplitudes[i] = Complex64::new(1.0, 0.0);
        Ok(StateVector { amplitudes })
    }

    /// `photons` photons on one site.
    pub fn localized(basis: &FockBasis, site: usize, photons: u8) -> Result<Self> {
        if site >= basis.sites() {
            return Err(Error::invalid("site", format!("{site} outside lattice of {}", basis.sites())));
        }
        Self::from_fock(basis, &FockState::localized(basis.sites(), site, photons))
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        krylov::norm(&self.amplitudes)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn overlap(&self, other: &StateVector) -> Complex64 {
        krylov::dot(&self.amplitudes, &other.amplitudes)
    }
}

/// One sampled time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub norm: f64,
    pub total_n: f64,
    pub com: f64,
    pub density: Vec<f64>,
}

/// Site densities of the normalized state plus the raw norm.
pub fn observe(basis: &FockBasis, amplitudes: &[Complex64]) -> Observation {
    let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    let mut density = vec![0.0; basis.sites()];
    if norm2 > 0.0 {
        basis.accumulate_density(amplitudes.iter().map(|a| a.norm_sqr() / norm2), &mut density);
    }
    let total_n: f64 = density.iter().sum();
    Observation { norm: norm2.sqrt(), total_n, com: center_of_mass(&density), density }
}

/// Σ m n_m / Σ n_m; NaN for an empty lattice.
pub fn center_of_mass(density: &[f64]) -> f64 {
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return f64::NAN;
    }
    density.iter().enumerate().map(|(m, n)| m as f64 * n).sum::<f64>() / total
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub sites: usize,
    pub times: Vec<f64>,
    pub norm: Vec<f64>,
    pub total_n: Vec<f64>,
    pub com: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    /// Present for ensemble averages only.
    #[serde(default)]
    pub total_n_stderr: Option<Vec<f64>>,
    #[serde(default)]
    pub com_stderr: Option<Vec<f64>>,
}

impl ObservableSeries {
    pub fn new(sites: usize) -> Self {
        ObservableSeries { sites, ..Default::default() }
    }

    pub fn push(&mut self, t: f64, obs: Observation) {
        self.times.push(t);
        self.norm.push(obs.norm);
        self.total_n.push(obs.total_n);
        self.com.push(obs.com);
        self.density.push(obs.density);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn com_displacement(&self) -> f64 {
        match (self.com.first(), self.com.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t,norm,total_n,com");
        for m in 0..self.sites {
            header.push_str(&format!(",n_{m}"));
        }
        let with_err = self.total_n_stderr.is_some() && self.com_stderr.is_some();
        if with_err {
            header.push_str(",total_n_stderr,com_stderr");
        }
        writeln!(w, "{header}")?;
        for i in 0..self.len() {
            let mut row = format!(
                "{},{},{},{}",
                fmt12(self.times[i]),
                fmt12(self.norm[i]),
                fmt12(self.total_n[i]),
                fmt12(self.com[i])
            );
            for n in &self.density[i] {
                row.push(',');
                row.push_str(&fmt12(*n));
            }
            if with_err {
                row.push(',');
                row.push_str(&fmt12(self.total_n_stderr.as_ref().unwrap()[i]));
                row.push(',');
                row.push_str(&fmt12(self.com_stderr.as_ref().unwrap()[i]));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::invalid("csv", msg);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[..4] != ["t", "norm", "total_n", "com"] {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let with_err = cols.ends_with(&["total_n_stderr", "com_stderr"]);
        let sites = cols.len() - 4 - if with_err { 2 } else { 0 };
        let mut s = ObservableSeries::new(sites);
        let (mut tn_err, mut com_err) = (Vec::new(), Vec::new());
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", k + 2)))?;
            if v.len() != cols.len() {
                return Err(bad(format!("row {} has {} fields, header has {}", k + 2, v.len(), cols.len())));
            }
            s.times.push(v[0]);
            s.norm.push(v[1]);
            s.total_n.push(v[2]);
            s.com.push(v[3]);
            s.density.push(v[4..4 + sites].to_vec());
            if with_err {
                tn_err.push(v[4 + sites]);
                com_err.push(v[5 + sites]);
            }
        }
        if with_err {
            s.total_n_stderr = Some(tn_err);
            s.com_stderr = Some(com_err);
        }
        Ok(s)
    }
}

/// Twelve significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSettings {
    pub dt: f64,
    /// Record every `stride` steps (the final time is always recorded).
    pub stride: usize,
    pub krylov: KrylovSettings,
}

impl Default for PumpSettings {
    fn default() -> Self {
        PumpSettings { dt: 0.05, stride: 10, krylov: KrylovSettings::default() }
    }
}

impl PumpSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Stepper over a uniform grid covering the whole path; the step is shrunk
/// slightly so the grid ends exactly at the path duration.
pub struct Evolution<'a> {
    path: &'a PumpPath,
    ham: PumpHamiltonian,
    propagator: KrylovPropagator,
    psi: StateVector,
    noise: Option<NoiseSpec>,
    noise_cache: Option<(u64, Vec<f64>)>,
    sites: usize,
    dt: f64,
    step: usize,
    n_steps: usize,
    matvecs: usize,
}

impl<'a> Evolution<'a> {
    pub fn new(
        basis: &FockBasis,
        params: &ModelParams,
        path: &'a PumpPath,
        psi0: &StateVector,
        settings: &PumpSettings,
        noise: Option<&NoiseSpec>,
    ) -> Result<Self> {
        params.validate()?;
        settings.validate()?;
        if psi0.amplitudes.len() != basis.dim() {
            return Err(Error::LengthMismatch { expected: basis.dim(), got: psi0.amplitudes.len() });
        }
        let duration = path.duration();
        let n_steps = (duration / settings.dt - 1e-9).ceil().max(0.0) as usize;
        let dt = if n_steps > 0 { duration / n_steps as f64 } else { settings.dt };
        Ok(Evolution {
            path,
            ham: PumpHamiltonian::new(basis, params)?,
            propagator: KrylovPropagator::new(settings.krylov),
            psi: psi0.clone(),
            noise: noise.copied().filter(|n| n.amplitude > 0.0),
            noise_cache: None,
            sites: params.sites,
            dt,
            step: 0,
            n_steps,
            matvecs: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn state(&self) -> &StateVector {
        &self.psi
    }

    pub fn state_mut(&mut self) -> &mut StateVector {
        &mut self.psi
    }

    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// H at the midpoint of the next step, as used by `advance`.
    pub fn hamiltonian_at(&mut self, t: f64) -> Result<&PumpHamiltonian> {
        let noise = self.noise_at(t);
        self.ham.set_time(t, self.path, noise.as_deref())?;
        Ok(&self.ham)
    }

    fn noise_at(&mut self, t: f64) -> Option<Vec<f64>> {
        let spec = self.noise?;
        let bin = spec.bin(t);
        match &self.noise_cache {
            Some((b, v)) if *b == bin => Some(v.clone()),
            _ => {
                let v: Vec<f64> =
                    model::sample_noise(&spec, t, self.sites).iter().map(|r| spec.amplitude * r).collect();
                self.noise_cache = Some((bin, v.clone()));
                Some(v)
            }
        }
    }

    /// One step of exp(−i H(t + dt/2) dt).
    pub fn advance(&mut self) -> Result<()> {
        if self.is_done() {
            return Ok(());
        }
        let t_mid = self.time() + 0.5 * self.dt;
        let noise = self.noise_at(t_mid);
        self.ham.set_time(t_mid, self.path, noise.as_deref())?;
        let stats = self.propagator.step(&self.ham, &mut self.psi.amplitudes, self.dt)?;
        self.matvecs += stats.matvecs;
        self.step += 1;
        Ok(())
    }
}

/// Evolve ψ₀ through the whole path, sampling observables every `stride`
/// steps.
pub fn pump_run(
    basis: &FockBasis,
    params: &ModelParams,
    path: &PumpPath,
    psi0: &StateVector,
    settings: &PumpSettings,
    noise: Option<&NoiseSpec>,
) -> Result<ObservableSeries> {
    let mut evo = Evolution::new(basis, params, path, psi0, settings, noise)?;
    let mut series = ObservableSeries::new(basis.sites());
    series.push(0.0, observe(basis, evo.state().amplitudes()));
    while !evo.is_done() {
        evo.advance()?;
        if evo.step_index() % settings.stride == 0 || evo.is_done() {
            series.push(evo.time(), observe(basis, evo.state().amplitudes()));
        }
    }
    Ok(series)
}

/// Trimers crossed per cycle, positive for motion toward site 0.
pub fn chern_from_displacement(series: &ObservableSeries, cycles: f64) -> Result<f64> {
    if !(cycles > 0.0) {
        return Err(Error::invalid("cycles", format!("must be positive, got {cycles}")));
    }
    Ok(-series.com_displacement() / (3.0 * cycles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTrack {
    pub times: Vec<f64>,
    /// |⟨ψ_inst(t)|ψ(t)⟩|²
    pub overlap: Vec<f64>,
    pub energy: Vec<f64>,
    /// Sample times at which the followed level was degenerate or the
    /// successive-overlap choice was ambiguous.
    pub ambiguous: Vec<f64>,
}

fn dense_eigen(ham: &PumpHamiltonian) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let dim = crate::krylov::LinearOperator::dim(ham);
    if dim > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { dim, limit: DENSE_LIMIT });
    }
    Ok(SymmetricEigen::new(ham.to_dense_real()))
}

fn real_overlap(v: &[f64], psi: &[Complex64]) -> Complex64 {
    v.iter().zip(psi).map(|(a, b)| b * *a).sum()
}

/// Eigenstate of H(t) with the largest overlap with `reference`.
pub fn instantaneous_eigenstate(
    basis: &FockBasis,
    params: &ModelParams,
    path: &PumpPath,
    t: f64,
    reference: &StateVector,
) -> Result<(f64, StateVector)> {
    let mut ham = PumpHamiltonian::new(basis, params)?;
    ham.set_time(t, path, None)?;
    let eig = dense_eigen(&ham)?;
    let best = (0..eig.eigenvalues.len())
        .map(|k| (k, real_overlap(eig.eigenvectors.column(k).as_slice(), reference.amplitudes()).norm_sqr()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let v = eig.eigenvectors.column(best).iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok((eig.eigenvalues[best], StateVector { amplitudes: v }))
}

/// Evolve ψ₀ and follow the instantaneous eigenstate it starts in. The
/// eigenstate is chosen at each step by maximal overlap with the previous
/// one, which keeps the band label through crossings of other levels.
pub fn band_overlap_track(
    basis: &FockBasis,
    params: &ModelParams,
    path: &PumpPath,
    psi0: &StateVector,
    settings: &PumpSettings,
) -> Result<BandTrack> {
    const DEGENERATE: f64 = 1e-9;
    let mut evo = Evolution::new(basis, params, path, psi0, settings, None)?;
    let mut track = BandTrack { times: vec![], overlap: vec![], energy: vec![], ambiguous: vec![] };

    let mut followed: Vec<f64> = Vec::new();
    let record = |evo: &mut Evolution, followed: &mut Vec<f64>, track: &mut BandTrack, sample: bool| -> Result<()> {
        let t = evo.time();
        let eig = dense_eigen(evo.hamiltonian_at(t)?)?;
        let n = eig.eigenvalues.len();
        let scores: Vec<f64> = (0..n)
            .map(|k| {
                let col = eig.eigenvectors.column(k);
                if followed.is_empty() {
                    real_overlap(col.as_slice(), evo.state().amplitudes()).norm_sqr()
                } else {
                    col.iter().zip(followed.iter()).map(|(a, b)| a * b).sum::<f64>().powi(2)
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let best = order[0];
        let e = eig.eigenvalues[best];
        let degenerate = (0..n).any(|k| k != best && (eig.eigenvalues[k] - e).abs() < DEGENERATE);
        let ambiguous = n > 1 && !followed.is_empty() && scores[order[1]] > 0.5 * scores[best];
        *followed = eig.eigenvectors.column(best).iter().copied().collect();
        if sample {
            let ov = real_overlap(followed, evo.state().amplitudes()).norm_sqr();
            track.times.push(t);
            track.overlap.push(ov);
            track.energy.push(e);
            if degenerate || ambiguous {
                track.ambiguous.push(t);
            }
        }
        Ok(())
    };

    record(&mut evo, &mut followed, &mut track, true)?;
    while !evo.is_done() {
        evo.advance()?;
        let sample = evo.step_index() % settings.stride == 0 || evo.is_done();
        record(&mut evo, &mut followed, &mut track, sample)?;
    }
    Ok(track)
}

/// Result of comparing a run with several trimers against the sum of
/// single-trimer runs on the same lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub max_deviation: f64,
    pub time_of_max: f64,
    pub site_of_max: usize,
    pub combined: ObservableSeries,
    pub summed: Vec<Vec<f64>>,
}

/// Every entry of `occupied` starts with three photons; the joint run uses
/// cap `n_max_joint`, the single runs cap 3.
pub fn decoupling_check(
    params: &ModelParams,
    path: &PumpPath,
    occupied: &[usize],
    n_max_joint: usize,
    settings: &PumpSettings,
) -> Result<DecouplingReport> {
    let sites = params.sites;
    let mut occ = vec![0u8; sites];
    for &m in occupied {
        if m >= sites {
            return Err(Error::invalid("occupied", format!("site {m} outside lattice")));
        }
        occ[m] += 3;
    }
    let joint_basis = FockBasis::new(sites, 3 * occupied.len(), n_max_joint)?;
    let joint_psi = StateVector::from_fock(&joint_basis, &FockState::new(occ))?;
    let combined = pump_run(&joint_basis, params, path, &joint_psi, settings, None)?;

    let single_basis = FockBasis::new(sites, 3, 3)?;
    let singles = occupied
        .iter()
        .map(|&m| {
            let psi = StateVector::localized(&single_basis, m, 3)?;
            pump_run(&single_basis, params, path, &psi, settings, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summed = vec![vec![0.0; sites]; combined.len()];
    for s in &singles {
        for (row, d) in summed.iter_mut().zip(&s.density) {
            row.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
    }
    let mut report = DecouplingReport { max_deviation: 0.0, time_of_max: 0.0, site_of_max: 0, combined, summed };
    for (i, row) in report.summed.iter().enumerate() {
        for m in 0..sites {
            let dev = (row[m] - report.combined.density[i][m]).abs();
            if dev > report.max_deviation {
                report.max_deviation = dev;
                report.time_of_max = report.combined.times[i];
                report.site_of_max = m;
            }
        }
    }
    Ok(report)
}

/// A single three-photon Fock state pumped along a path; the presets are
/// the closed-system runs shipped with the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpExperiment {
    pub params: ModelParams,
    pub path: PumpPath,
    pub photons: usize,
    pub n_max: usize,
    pub initial_site: usize,
    pub settings: PumpSettings,
}

impl PumpExperiment {
    /// L = 30, three photons on site 15, Δ = 10, U = −1, Ω = 0.01, φ₀ = 0.
    pub fn forward() -> Self {
        PumpExperiment {
            params: ModelParams { sites: 30, hopping: 1.0, interaction: -1.0, modulation: 10.0, carrier: 0.0 },
            path: PumpPath::PhaseSweep { omega: 0.01, phi0: 0.0, cycles: 1.0 },
            photons: 3,
            n_max: 3,
            initial_site: 15,
            settings: PumpSettings::default(),
        }
    }

    /// Same state started in the middle band: φ₀ = π/2, Ω = 0.002.
    pub fn reversed() -> Self {
        PumpExperiment {
            path: PumpPath::PhaseSweep { omega: 0.002, phi0: std::f64::consts::FRAC_PI_2, cycles: 1.0 },
            ..Self::forward()
        }
    }

    /// Square loop in (ω_A−ω_B, ω_A−ω_C) not enclosing the degeneracy, run
    /// for the forward experiment's period.
    pub fn trivial_loop() -> Self {
        let base = Self::forward();
        let period = base.path.period();
        PumpExperiment {
            path: PumpPath::trivial_square(base.params.modulation, period).expect("valid square"),
            ..base
        }
    }

    pub fn basis(&self) -> Result<FockBasis> {
        FockBasis::new(self.params.sites, self.photons, self.n_max)
    }

    pub fn initial_state(&self, basis: &FockBasis) -> Result<StateVector> {
        let photons = u8::try_from(self.photons)
            .map_err(|_| Error::invalid("photons", "more than 255 photons on one site"))?;
        StateVector::localized(basis, self.initial_site, photons)
    }

    pub fn run(&self, noise: Option<&NoiseSpec>) -> Result<ObservableSeries> {
        let basis = self.basis()?;
        let psi = self.initial_state(&basis)?;
        pump_run(&basis, &self.params, &self.path, &psi, &self.settings, noise)
    }
}
