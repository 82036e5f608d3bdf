//! Photon loss via Monte-Carlo wavefunction trajectories.
//!
//! With uniform decay the non-Hermitian part −(i/2T1) N̂ is a constant
//! within a photon-number sector, so the no-jump evolution is the closed
//! evolution times e^{−N dt/2T1}. A jump happens in a step with probability
//! 1 − e^{−N dt/T1}; the site is drawn with weight ⟨n̂_m⟩ of the evolved
//! state and â_m is applied.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{FockBasis, FockState};
use crate::krylov::{KrylovPropagator, KrylovSettings};
use crate::model::{ModelParams, PumpHamiltonian, PumpPath, TWO_PI};
use crate::propagate::{observe, ObservableSeries, Observation};

/// Largest per-step jump probability accepted.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    /// Photon lifetime; `f64::INFINITY` switches loss off.
    pub t1: f64,
    pub seed: u64,
    pub dt: f64,
    pub record_stride: usize,
    #[serde(default)]
    pub krylov: KrylovSettings,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj", "need at least one trajectory"));
        }
        if !(self.t1 > 0.0) {
            return Err(Error::invalid("t1", format!("must be positive, got {}", self.t1)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sectors N₀, N₀−1, …, 0 on the same lattice.
#[derive(Debug, Clone)]
pub struct MultiSectorBasis {
    sectors: Vec<FockBasis>,
    offsets: Vec<usize>,
}

impl MultiSectorBasis {
    pub fn new(sites: usize, photons: usize, n_max: usize) -> Result<Self> {
        let sectors = (0..=photons)
            .rev()
            .map(|n| FockBasis::new(sites, n, n_max))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(sectors.len());
        let mut acc = 0;
        for s in &sectors {
            offsets.push(acc);
            acc += s.dim();
        }
        Ok(MultiSectorBasis { sectors, offsets })
    }

    pub fn top_photons(&self) -> usize {
        self.sectors.len() - 1
    }

    pub fn sites(&self) -> usize {
        self.sectors[0].sites()
    }

    /// Sector with `photons` photons.
    pub fn sector(&self, photons: usize) -> &FockBasis {
        &self.sectors[self.top_photons() - photons]
    }

    pub fn offset(&self, photons: usize) -> usize {
        self.offsets[self.top_photons() - photons]
    }

    pub fn dim(&self) -> usize {
        self.sectors.iter().map(FockBasis::dim).sum()
    }
}

/// â_m applied to a state of the `photons` sector; result lies in
/// `photons − 1` and is not normalized.
pub fn apply_annihilation(
    basis: &MultiSectorBasis,
    photons: usize,
    site: usize,
    amplitudes: &[Complex64],
) -> Vec<Complex64> {
    let from = basis.sector(photons);
    let to = basis.sector(photons - 1);
    let mut out = vec![Complex64::new(0.0, 0.0); to.dim()];
    let mut occ = vec![0u8; from.sites()];
    for (i, state) in from.states().iter().enumerate() {
        let n = state.occupations()[site];
        if n == 0 || amplitudes[i] == Complex64::new(0.0, 0.0) {
            continue;
        }
        occ.copy_from_slice(state.occupations());
        occ[site] -= 1;
        let j = to.index_of_occupations(&occ).expect("lower sector is complete");
        out[j] += amplitudes[i] * (n as f64).sqrt();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub series: ObservableSeries,
    pub jumps: Vec<Jump>,
}

struct SectorState {
    photons: usize,
    psi: Vec<Complex64>,
}

fn step_grid(duration: f64, dt: f64) -> (usize, f64) {
    let n = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    (n, if n > 0 { duration / n as f64 } else { dt })
}

/// Per-step jump probability for `photons` photons.
pub fn jump_probability(photons: usize, dt: f64, t1: f64) -> f64 {
    -(-(photons as f64) * dt / t1).exp_m1()
}

/// One trajectory with its own RNG stream `index` under the master seed.
pub fn trajectory_run(
    config: &TrajectoryConfig,
    basis: &MultiSectorBasis,
    params: &ModelParams,
    path: &PumpPath,
    initial: &FockState,
    index: u64,
) -> Result<TrajectoryOutcome> {
    config.validate()?;
    let top = basis.top_photons();
    if initial.total() != top || initial.sites() != basis.sites() {
        return Err(Error::invalid("initial_state", format!("{initial} is not in the top sector")));
    }
    let (n_steps, dt) = step_grid(path.duration(), config.dt);
    let p_top = jump_probability(top, dt, config.t1);
    if p_top > MAX_JUMP_PROBABILITY {
        return Err(Error::StepTooLarge { probability: p_top, limit: MAX_JUMP_PROBABILITY });
    }

    let mut hams: Vec<Option<PumpHamiltonian>> = (0..=top).map(|_| None).collect();
    let mut propagator = KrylovPropagator::new(config.krylov);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);

    let top_basis = basis.sector(top);
    let mut psi = vec![Complex64::new(0.0, 0.0); top_basis.dim()];
    psi[top_basis.index_of(initial).expect("checked above")] = Complex64::new(1.0, 0.0);
    let mut state = SectorState { photons: top, psi };

    let mut series = ObservableSeries::new(basis.sites());
    let mut jumps = Vec::new();
    let record = |series: &mut ObservableSeries, state: &SectorState, t: f64| {
        let obs = observe(basis.sector(state.photons), &state.psi);
        series.push(t, Observation { norm: 1.0, ..obs });
    };
    record(&mut series, &state, 0.0);

    for step in 0..n_steps {
        let t_mid = (step as f64 + 0.5) * dt;
        if state.photons > 0 {
            let ham = match &mut hams[state.photons] {
                Some(h) => h,
                slot => slot.insert(PumpHamiltonian::new(basis.sector(state.photons), params)?),
            };
            ham.set_time(t_mid, path, None)?;
            propagator.step(&*ham, &mut state.psi, dt)?;

            let p = jump_probability(state.photons, dt, config.t1);
            let r: f64 = rng.random();
            if r < p {
                let obs = observe(basis.sector(state.photons), &state.psi);
                let site = pick_site(&obs.density, rng.random::<f64>());
                let mut next = apply_annihilation(basis, state.photons, site, &state.psi);
                let norm = next.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                next.iter_mut().for_each(|a| *a /= norm);
                state = SectorState { photons: state.photons - 1, psi: next };
                jumps.push(Jump { time: (step + 1) as f64 * dt, site });
            }
        }
        if (step + 1) % config.record_stride == 0 || step + 1 == n_steps {
            record(&mut series, &state, (step + 1) as f64 * dt);
        }
    }
    Ok(TrajectoryOutcome { series, jumps })
}

fn pick_site(density: &[f64], u: f64) -> usize {
    let total: f64 = density.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (m, n) in density.iter().enumerate() {
        acc += n;
        if target < acc {
            return m;
        }
    }
    density.iter().rposition(|&n| n > 0.0).unwrap_or(0)
}

/// All trajectories, in index order regardless of scheduling.
pub fn run_ensemble(
    config: &TrajectoryConfig,
    basis: &MultiSectorBasis,
    params: &ModelParams,
    path: &PumpPath,
    initial: &FockState,
) -> Result<Vec<TrajectoryOutcome>> {
    config.validate()?;
    (0..config.n_traj as u64)
        .into_par_iter()
        .map(|i| trajectory_run(config, basis, params, path, initial, i))
        .collect()
}

fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

/// Per-time mean and standard error of the mean. COM is averaged over the
/// runs that still hold photons (a run's COM is undefined once empty).
pub fn ensemble_average(runs: &[ObservableSeries]) -> Result<ObservableSeries> {
    let first = runs.first().ok_or_else(|| Error::invalid("runs", "nothing to average"))?;
    for r in runs {
        if r.sites != first.sites || r.times != first.times {
            return Err(Error::GridMismatch);
        }
    }
    let mut out = ObservableSeries::new(first.sites);
    let (mut tn_err, mut com_err) = (Vec::new(), Vec::new());
    for i in 0..first.len() {
        let (norm, _, _) = mean_stderr(runs.iter().map(|r| r.norm[i]));
        let (total_n, tn_se, _) = mean_stderr(runs.iter().map(|r| r.total_n[i]));
        let (com, com_se, _) = mean_stderr(runs.iter().map(|r| r.com[i]).filter(|c| !c.is_nan()));
        let density = (0..first.sites)
            .map(|m| runs.iter().map(|r| r.density[i][m]).sum::<f64>() / runs.len() as f64)
            .collect();
        out.push(first.times[i], Observation { norm, total_n, com, density });
        tn_err.push(tn_se);
        com_err.push(com_se);
    }
    out.total_n_stderr = Some(tn_err);
    out.com_stderr = Some(com_err);
    Ok(out)
}

/// Unit convention for quoted MHz/GHz values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyUnits {
    /// "40 MHz" means 40·10⁶ rad/s.
    #[default]
    Angular,
    /// "40 MHz" means 2π·40·10⁶ rad/s.
    Linear,
}

impl FrequencyUnits {
    /// Dimensionless J·T1 for a hopping quoted in Hz-like units and a
    /// lifetime in seconds.
    pub fn hopping_times_lifetime(self, hopping_hz: f64, t1_s: f64) -> f64 {
        self.to_angular(hopping_hz) * t1_s
    }

    /// Angular frequency (rad/s) of a quoted value.
    pub fn to_angular(self, quoted: f64) -> f64 {
        match self {
            FrequencyUnits::Angular => quoted,
            FrequencyUnits::Linear => TWO_PI * quoted,
        }
    }
}

/// The nine-site lossy experiment expressed in units of J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossyExperiment {
    pub params: ModelParams,
    pub path: PumpPath,
    pub photons: usize,
    pub initial_site: usize,
    pub t1: f64,
    pub units: FrequencyUnits,
}

impl LossyExperiment {
    pub const HOPPING_HZ: f64 = 40e6;
    pub const MODULATION_HZ: f64 = 0.4e9;
    pub const RAMP_HZ: f64 = 2e6;
    pub const INTERACTION_HZ: f64 = -40e6;
    pub const T1_S: f64 = 20e-6;

    pub fn new(units: FrequencyUnits, cycles: f64) -> Result<Self> {
        let j = Self::HOPPING_HZ;
        let params = ModelParams::new(9, 1.0, Self::INTERACTION_HZ / j, Self::MODULATION_HZ / j)?;
        Ok(LossyExperiment {
            params,
            path: PumpPath::phase_sweep(Self::RAMP_HZ / j, 0.0, cycles)?,
            photons: 3,
            initial_site: 6,
            t1: units.hopping_times_lifetime(j, Self::T1_S),
            units,
        })
    }

    pub fn initial_state(&self) -> FockState {
        FockState::localized(self.params.sites, self.initial_site, self.photons as u8)
    }

    pub fn basis(&self, n_max: usize) -> Result<MultiSectorBasis> {
        MultiSectorBasis::new(self.params.sites, self.photons, n_max)
    }

    pub fn run(&self, config: &TrajectoryConfig, n_max: usize) -> Result<ObservableSeries> {
        let basis = self.basis(n_max)?;
        let runs = run_ensemble(config, &basis, &self.params, &self.path, &self.initial_state())?;
        ensemble_average(&runs.into_iter().map(|o| o.series).collect::<Vec<_>>())
    }
}

/// Reproduction record for an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub n_traj: usize,
    pub dt: f64,
    pub t1: f64,
    pub params: ModelParams,
    pub path: PumpPath,
    pub initial_state: String,
    pub units: FrequencyUnits,
}

impl EnsembleManifest {
    pub fn new(exp: &LossyExperiment, config: &TrajectoryConfig) -> Self {
        EnsembleManifest {
            seed: config.seed,
            n_traj: config.n_traj,
            dt: config.dt,
            t1: config.t1,
            params: exp.params,
            path: exp.path.clone(),
            initial_state: exp.initial_state().to_string(),
            units: exp.units,
        }
    }

    /// Pretty JSON with keys sorted.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("manifest serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }
}

/// A stretch of nearly constant signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    pub level: f64,
}

/// Maximal intervals on which the centred moving average (half width
/// `half_window` samples) changes slower than `max_slope`, kept if they
/// last at least `min_duration`.
pub fn find_plateaus(times: &[f64], values: &[f64], half_window: usize, max_slope: f64, min_duration: f64) -> Vec<Plateau> {
    let n = times.len();
    if n < 3 {
        return vec![];
    }
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(half_window), (i + half_window).min(n - 1));
            values[a..=b].iter().sum::<f64>() / (b - a + 1) as f64
        })
        .collect();
    let flat: Vec<bool> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            ((smooth[b] - smooth[a]) / (times[b] - times[a])).abs() < max_slope
        })
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if !flat[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && flat[i] {
            i += 1;
        }
        let end = i - 1;
        if times[end] - times[start] >= min_duration {
            let level = values[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            out.push(Plateau { start: times[start], end: times[end], level });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::{pump_run, PumpSettings, StateVector};

    fn config(n_traj: usize, t1: f64, seed: u64) -> TrajectoryConfig {
        TrajectoryConfig { n_traj, t1, seed, dt: 0.05, record_stride: 10, krylov: KrylovSettings::default() }
    }

    #[test]
    fn sectors_and_offsets() {
        let b = MultiSectorBasis::new(9, 3, 3).unwrap();
        assert_eq!(b.sector(3).dim(), 165);
        assert_eq!(b.sector(0).dim(), 1);
        assert_eq!(b.offset(3), 0);
        assert_eq!(b.offset(2), 165);
        assert_eq!(b.dim(), 165 + 45 + 9 + 1);
    }

    #[test]
    fn annihilation_matrix_elements() {
        let b = MultiSectorBasis::new(2, 3, 3).unwrap();
        let top = b.sector(3);
        let mut psi = vec![Complex64::new(0.0, 0.0); top.dim()];
        psi[top.index_of(&FockState::new(vec![2, 1])).unwrap()] = Complex64::new(1.0, 0.0);
        let out = apply_annihilation(&b, 3, 0, &psi);
        let low = b.sector(2);
        let j = low.index_of(&FockState::new(vec![1, 1])).unwrap();
        assert!((out[j].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(out.iter().filter(|a| a.norm() > 0.0).count(), 1);
    }

    #[test]
    fn lossless_limit_matches_closed_run() {
        let params = ModelParams::new(6, 1.0, -1.0, 10.0).unwrap();
        let path = PumpPath::phase_sweep(0.2, 0.0, 1.0).unwrap();
        let basis = MultiSectorBasis::new(6, 3, 3).unwrap();
        let initial = FockState::localized(6, 3, 3);
        let cfg = config(1, f64::INFINITY, 1);
        let traj = trajectory_run(&cfg, &basis, &params, &path, &initial, 0).unwrap();
        assert!(traj.jumps.is_empty());
        let psi = StateVector::from_fock(basis.sector(3), &initial).unwrap();
        let closed = pump_run(basis.sector(3), &params, &path, &psi, &PumpSettings::default(), None).unwrap();
        assert_eq!(closed.times, traj.series.times);
        for (a, b) in closed.com.iter().zip(&traj.series.com) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn single_mode() -> (ModelParams, PumpPath, MultiSectorBasis, FockState) {
        let params = ModelParams { sites: 1, hopping: 0.0, interaction: 0.0, modulation: 0.0, carrier: 0.0 };
        let path = PumpPath::phase_sweep(0.05, 0.0, 1.0).unwrap();
        (params, path, MultiSectorBasis::new(1, 1, 1).unwrap(), FockState::new(vec![1]))
    }

    #[test]
    fn single_mode_decay() {
        let (params, path, basis, initial) = single_mode();
        let cfg = TrajectoryConfig { dt: 0.5, record_stride: 20, ..config(400, 50.0, 11) };
        let runs = run_ensemble(&cfg, &basis, &params, &path, &initial).unwrap();
        let avg = ensemble_average(&runs.iter().map(|o| o.series.clone()).collect::<Vec<_>>()).unwrap();
        let se = avg.total_n_stderr.as_ref().unwrap();
        for i in 1..avg.len() {
            let expect = (-avg.times[i] / cfg.t1).exp();
            let tol = 3.0 * se[i].max(1e-3);
            assert!((avg.total_n[i] - expect).abs() < tol, "t={} {} vs {}", avg.times[i], avg.total_n[i], expect);
        }
    }

    #[test]
    fn sector_bookkeeping() {
        let exp = LossyExperiment::new(FrequencyUnits::Angular, 1.0).unwrap();
        let basis = exp.basis(3).unwrap();
        let cfg = TrajectoryConfig { t1: 30.0, ..config(8, 30.0, 5) };
        for i in 0..8 {
            let o = trajectory_run(&cfg, &basis, &exp.params, &exp.path, &exp.initial_state(), i).unwrap();
            let last = o.series.total_n.last().unwrap();
            assert!((last - (3 - o.jumps.len()) as f64).abs() < 1e-12);
            assert!(o.series.norm.iter().all(|&n| n == 1.0));
        }
    }

    #[test]
    fn step_too_large() {
        let (params, path, basis, initial) = single_mode();
        let cfg = TrajectoryConfig { dt: 1.0, ..config(1, 5.0, 0) };
        assert!(matches!(
            trajectory_run(&cfg, &basis, &params, &path, &initial, 0),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn averaging_edge_cases() {
        let mut s = ObservableSeries::new(1);
        s.push(0.0, Observation { norm: 1.0, total_n: 1.0, com: 0.0, density: vec![1.0] });
        s.push(1.0, Observation { norm: 1.0, total_n: 0.0, com: f64::NAN, density: vec![0.0] });
        let one = ensemble_average(std::slice::from_ref(&s)).unwrap();
        assert_eq!(one.total_n, s.total_n);
        assert_eq!(one.total_n_stderr.as_ref().unwrap(), &vec![0.0, 0.0]);
        let two = ensemble_average(&[s.clone(), s.clone()]).unwrap();
        assert_eq!(two.total_n, s.total_n);
        assert_eq!(two.com_stderr.as_ref().unwrap()[0], 0.0);
        assert!(two.com[1].is_nan());
        let mut other = s.clone();
        other.times[1] = 2.0;
        assert!(matches!(ensemble_average(&[s, other]), Err(Error::GridMismatch)));
        assert!(ensemble_average(&[]).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let exp = LossyExperiment::new(FrequencyUnits::Angular, 0.5).unwrap();
        let cfg = TrajectoryConfig { t1: 100.0, ..config(6, 100.0, 99) };
        let a = exp.run(&cfg, 3).unwrap().to_csv_string();
        let b = exp.run(&cfg, 3).unwrap().to_csv_string();
        assert_eq!(a, b);
        let c = exp.run(&TrajectoryConfig { seed: 100, ..cfg }, 3).unwrap().to_csv_string();
        assert_ne!(a, c);
    }

    #[test]
    fn unit_conventions() {
        let a = LossyExperiment::new(FrequencyUnits::Angular, 1.0).unwrap();
        assert!((a.t1 - 800.0).abs() < 1e-9);
        assert!((a.params.modulation - 10.0).abs() < 1e-12);
        assert!((a.params.interaction + 1.0).abs() < 1e-12);
        assert!((a.path.period() - TWO_PI / 0.05).abs() < 1e-9);
        let l = LossyExperiment::new(FrequencyUnits::Linear, 1.0).unwrap();
        assert!((l.t1 - 5026.548245743669).abs() < 1e-6);
    }

    #[test]
    fn manifest_keys_sorted() {
        let exp = LossyExperiment::new(FrequencyUnits::Angular, 3.0).unwrap();
        let json = EnsembleManifest::new(&exp, &config(200, exp.t1, 7)).to_json();
        let keys: Vec<usize> = ["\"dt\"", "\"initial_state\"", "\"n_traj\"", "\"params\"", "\"seed\"", "\"t1\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn plateau_detection() {
        let times: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let values: Vec<f64> = times.iter().map(|&t| -((t / 100.0).floor())).collect();
        let p = find_plateaus(&times, &values, 2, 0.05, 20.0);
        assert_eq!(p.len(), 3);
        assert!((p[1].level + 1.0).abs() < 1e-12);
    }

    #[test]
    fn site_choice_follows_weights() {
        assert_eq!(pick_site(&[0.0, 2.0, 1.0], 0.0), 1);
        assert_eq!(pick_site(&[0.0, 2.0, 1.0], 0.7), 2);
        assert_eq!(pick_site(&[1.0, 0.0, 0.0], 0.999999), 0);
    }
}
