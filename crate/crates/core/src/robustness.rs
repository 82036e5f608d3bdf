//! Sensitivity of the pumped displacement to random on-site noise.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derive_seed, NoiseSpec};
use crate::propagate::{fmt12, PumpExperiment, PumpSettings};

pub const DEFAULT_ETAS: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_REALIZATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepConfig {
    pub etas: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    /// Defaults to the integrator step.
    pub redraw_dt: Option<f64>,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        NoiseSweepConfig { etas: DEFAULT_ETAS.to_vec(), realizations: DEFAULT_REALIZATIONS, seed: 0, redraw_dt: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub eta: f64,
    /// Mean of |COM_noisy(T) − COM_ideal(T)|.
    pub mean_dev: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    /// Mean of COM_noisy(T) − COM_ideal(T); positive means a bias toward
    /// the last site.
    pub signed_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub reference_com: f64,
    pub reference_displacement: f64,
    pub rows: Vec<NoiseRow>,
    /// Final COM of every realization, grouped by η.
    pub final_com: Vec<Vec<f64>>,
}

impl NoiseSweep {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eta,mean_dev,stderr,n_realizations")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", fmt12(r.eta), fmt12(r.mean_dev), fmt12(r.stderr), r.n_realizations)?;
        }
        Ok(())
    }

    pub fn spearman(&self) -> f64 {
        let x: Vec<f64> = self.rows.iter().map(|r| r.eta).collect();
        let y: Vec<f64> = self.rows.iter().map(|r| r.mean_dev).collect();
        spearman(&x, &y)
    }
}

/// Seed of realization `r` at η-index `k`.
pub fn realization_seed(master: u64, k: usize, r: usize) -> u64 {
    derive_seed(master, ((k as u64) << 32) | r as u64)
}

/// Run the experiment once without noise and `realizations` times per
/// nonzero η; η = 0 contributes the reference itself (the noise term is
/// absent, so every such run is identical to it).
pub fn noise_sweep(base: &PumpExperiment, config: &NoiseSweepConfig) -> Result<NoiseSweep> {
    if config.realizations == 0 {
        return Err(Error::invalid("realizations", "need at least one realization"));
    }
    if let Some(&eta) = config.etas.iter().find(|&&e| !(e >= 0.0)) {
        return Err(Error::invalid("etas", format!("η must be ≥ 0, got {eta}")));
    }
    let mut exp = base.clone();
    // only the endpoints are needed
    exp.settings = PumpSettings { stride: usize::MAX, ..base.settings };
    let redraw_dt = config.redraw_dt.unwrap_or(exp.settings.dt);

    let reference = exp.run(None)?;
    let reference_com = *reference.com.last().expect("at least one sample");

    let jobs: Vec<(usize, usize)> = config
        .etas
        .iter()
        .enumerate()
        .filter(|(_, &eta)| eta > 0.0)
        .flat_map(|(k, _)| (0..config.realizations).map(move |r| (k, r)))
        .collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let spec = NoiseSpec::new(config.etas[k], redraw_dt, realization_seed(config.seed, k, r))?;
            let s = exp.run(Some(&spec))?;
            Ok(*s.com.last().expect("at least one sample"))
        })
        .collect::<Result<_>>()?;

    let mut final_com = vec![Vec::new(); config.etas.len()];
    for (&(k, _), com) in jobs.iter().zip(results) {
        final_com[k].push(com);
    }
    let rows = config
        .etas
        .iter()
        .enumerate()
        .map(|(k, &eta)| {
            if eta == 0.0 {
                final_com[k] = vec![reference_com; config.realizations];
            }
            let dev: Vec<f64> = final_com[k].iter().map(|c| c - reference_com).collect();
            let n = dev.len();
            let abs: Vec<f64> = dev.iter().map(|d| d.abs()).collect();
            let mean = abs.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                (abs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt()
            } else {
                0.0
            };
            NoiseRow { eta, mean_dev: mean, stderr, n_realizations: n, signed_mean: dev.iter().sum::<f64>() / n as f64 }
        })
        .collect();
    Ok(NoiseSweep { reference_com, reference_displacement: reference.com_displacement(), rows, final_com })
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
