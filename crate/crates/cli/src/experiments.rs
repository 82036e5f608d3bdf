//! One function per experiment; each writes its files into the run
//! directory and returns the names written plus a JSON summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bosepump_core::circuit::{derive_params, modulation_tuning_report};
use bosepump_core::effective::{effective_hopping, effective_hopping_series, phase_grid, three_band_spectrum, trimer_gap_exact};
use bosepump_core::meanfield::{gap_closing_scan, BdgBandTable, TrimerFrequencies};
use bosepump_core::model::{path_winding, NoiseSpec, TWO_PI};
use bosepump_core::opensys::{EnsembleManifest, LossyExperiment, TrajectoryConfig};
use bosepump_core::propagate::{chern_from_displacement, fmt12};
use bosepump_core::robustness::{noise_sweep, realization_seed, NoiseSweepConfig};
use bosepump_core::{ModelParams, PumpExperiment, PumpPath, PumpSettings};
use serde_json::{json, Value};

use crate::config::{PumpKind, RunConfig};
use crate::error::CliError;

pub struct ExperimentOutput {
    pub files: Vec<String>,
    pub results: Value,
}

pub const OBSERVABLES: &str = "observables.csv";
pub const BANDS: &str = "bands.csv";
pub const LOOP: &str = "loop.csv";
pub const NOISE: &str = "noise.csv";
pub const COM_TRACES: &str = "com_traces.csv";
pub const CLOSINGS: &str = "closings.json";
pub const TUNING: &str = "tuning.csv";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn model_params(c: &RunConfig) -> Result<ModelParams, CliError> {
    let m = c.model;
    let p = ModelParams {
        sites: m.sites,
        hopping: m.hopping,
        interaction: m.interaction,
        modulation: m.modulation,
        carrier: m.carrier,
    };
    p.validate()?;
    Ok(p)
}

pub fn pump_path(c: &RunConfig) -> Result<PumpPath, CliError> {
    let p = c.pump;
    Ok(match p.kind {
        PumpKind::PhaseSweep => PumpPath::phase_sweep(p.omega, p.phi0, p.cycles)?,
        PumpKind::TrivialSquare => PumpPath::trivial_square(c.model.modulation, p.cycles * TWO_PI / p.omega.abs())?,
    })
}

fn settings(c: &RunConfig) -> PumpSettings {
    PumpSettings { dt: c.integrator.dt, stride: c.integrator.stride, krylov: c.integrator.krylov() }
}

pub fn pump_experiment(c: &RunConfig) -> Result<PumpExperiment, CliError> {
    Ok(PumpExperiment {
        params: model_params(c)?,
        path: pump_path(c)?,
        photons: c.initial.photons,
        n_max: c.initial.n_max,
        initial_site: c.initial.site,
        settings: settings(c),
    })
}

fn write_loop(dir: &Path, path: &PumpPath, modulation: f64) -> Result<(), CliError> {
    let samples = 720;
    let mut w = create(dir, LOOP)?;
    writeln!(w, "t,x,y")?;
    let d = path.duration();
    for (k, (x, y)) in path.sample_loop(modulation, samples).into_iter().enumerate() {
        writeln!(w, "{},{},{}", fmt12(d * k as f64 / samples as f64), fmt12(x), fmt12(y))?;
    }
    w.flush()?;
    Ok(())
}

/// fig2a, fig2c and fig4a: one closed-system pump run.
pub fn pump(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let exp = pump_experiment(c)?;
    let series = exp.run(None)?;
    let mut w = create(dir, OBSERVABLES)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    write_loop(dir, &exp.path, exp.params.modulation)?;
    let cycles = exp.path.cycles();
    let chern = if cycles > 0.0 { chern_from_displacement(&series, cycles).ok() } else { None };
    Ok(ExperimentOutput {
        files: vec![OBSERVABLES.into(), LOOP.into()],
        results: json!({
            "displacement": series.com_displacement(),
            "chern_number": chern,
            "winding_number": path_winding(&exp.path, exp.params.modulation),
            "period": exp.path.period(),
            "samples": series.len(),
        }),
    })
}

/// fig4b: noise sweep around the forward run.
pub fn noise(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let exp = pump_experiment(c)?;
    let cfg = NoiseSweepConfig {
        etas: c.noise.etas.clone(),
        realizations: c.noise.realizations,
        seed: c.seed,
        redraw_dt: c.noise.redraw_dt,
    };
    let sweep = noise_sweep(&exp, &cfg)?;
    let mut w = create(dir, NOISE)?;
    sweep.write_csv(&mut w)?;
    w.flush()?;

    let reference = exp.run(None)?;
    let mut w = create(dir, OBSERVABLES)?;
    reference.write_csv(&mut w)?;
    w.flush()?;
    let mut files = vec![NOISE.to_string(), OBSERVABLES.to_string()];

    if c.noise.keep_traces {
        let redraw = c.noise.redraw_dt.unwrap_or(c.integrator.dt);
        let traces = cfg
            .etas
            .iter()
            .enumerate()
            .map(|(k, &eta)| {
                if eta == 0.0 {
                    return Ok(reference.com.clone());
                }
                let spec = NoiseSpec::new(eta, redraw, realization_seed(c.seed, k, 0))?;
                Ok(exp.run(Some(&spec))?.com)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut w = create(dir, COM_TRACES)?;
        let header: Vec<String> = cfg.etas.iter().map(|e| format!("com_eta_{e}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for (i, t) in reference.times.iter().enumerate() {
            let row: Vec<String> = traces.iter().map(|tr| fmt12(tr[i])).collect();
            writeln!(w, "{},{}", fmt12(*t), row.join(","))?;
        }
        w.flush()?;
        files.push(COM_TRACES.into());
    }
    Ok(ExperimentOutput {
        files,
        results: json!({
            "reference_displacement": sweep.reference_displacement,
            "spearman": sweep.spearman(),
            "rows": sweep.rows,
        }),
    })
}

/// Lifetime in units of 1/J for the configured unit convention.
pub fn lifetime(c: &RunConfig) -> f64 {
    c.trajectories
        .t1
        .unwrap_or_else(|| c.units.hopping_times_lifetime(LossyExperiment::HOPPING_HZ, LossyExperiment::T1_S))
}

/// fig5: trajectory ensemble with photon loss.
pub fn lossy(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let exp = LossyExperiment {
        params: model_params(c)?,
        path: pump_path(c)?,
        photons: c.initial.photons,
        initial_site: c.initial.site,
        t1: lifetime(c),
        units: c.units,
    };
    let config = TrajectoryConfig {
        n_traj: c.trajectories.n_traj,
        t1: exp.t1,
        seed: c.seed,
        dt: c.integrator.dt,
        record_stride: c.integrator.stride,
        krylov: c.integrator.krylov(),
    };
    let series = exp.run(&config, c.initial.n_max)?;
    let mut w = create(dir, OBSERVABLES)?;
    series.write_csv(&mut w)?;
    w.flush()?;
    write_loop(dir, &exp.path, exp.params.modulation)?;
    let t_end = *series.times.last().expect("at least one sample");
    Ok(ExperimentOutput {
        files: vec![OBSERVABLES.into(), LOOP.into()],
        results: json!({
            "ensemble": EnsembleManifest::new(&exp, &config),
            "final_total_n": series.total_n.last(),
            "expected_final_total_n": exp.photons as f64 * (-t_end / exp.t1).exp(),
            "displacement": series.com_displacement(),
        }),
    })
}

/// Three-band spectrum of one trimer over the phase cycle.
pub fn bands(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let m = c.model;
    let spectrum = three_band_spectrum(m.modulation, m.interaction, m.hopping, &phase_grid(c.bands.points))?;
    let mut w = create(dir, BANDS)?;
    spectrum.write_csv(&mut w)?;
    w.flush()?;
    let phi_star = TWO_PI / 3.0;
    Ok(ExperimentOutput {
        files: vec![BANDS.into()],
        results: json!({
            "min_gap": spectrum.min_gap(),
            "effective_gap_estimate": effective_hopping(m.hopping, m.interaction).ok().map(|j| 2.0 * j),
            "effective_gap_series": effective_hopping_series(m.hopping, m.interaction).ok().map(|j| 2.0 * j),
            "exact_gap_near_two_thirds_pi": trimer_gap_exact(m.hopping, m.interaction, m.modulation, phi_star).ok().map(|g| g.gap),
        }),
    })
}

/// Bogoliubov bands at the configured phase and the closing phases.
pub fn meanfield(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let m = c.model;
    let omega = TrimerFrequencies::from_phase(m.carrier, m.modulation, c.pump.phi0);
    let table = BdgBandTable::scan(c.bands.points, &omega, m.hopping, m.interaction);
    let mut w = create(dir, BANDS)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let closings = gap_closing_scan(&phase_grid(c.bands.points), m.modulation, 1e-9);
    let mut w = create(dir, CLOSINGS)?;
    writeln!(w, "{}", closings.to_json())?;
    w.flush()?;
    Ok(ExperimentOutput {
        files: vec![BANDS.into(), CLOSINGS.into()],
        results: json!({ "closings": closings, "frequencies": omega.as_array() }),
    })
}

/// Resonator design for the target parameters and its flux tuning table.
pub fn circuit(c: &RunConfig, dir: &Path) -> Result<ExperimentOutput, CliError> {
    let s = c.circuit;
    let to_rad = |x: f64| c.units.to_angular(x);
    let (design, report) = modulation_tuning_report(
        to_rad(s.carrier_hz),
        to_rad(s.modulation_hz),
        to_rad(s.hopping_hz),
        to_rad(s.interaction_hz),
        s.points,
        s.formula.into(),
    )?;
    let mut w = create(dir, TUNING)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let derived = derive_params(&design.params, s.formula.into())?;
    Ok(ExperimentOutput {
        files: vec![TUNING.into()],
        results: json!({
            "design": design,
            "derived_at_zero_flux": derived,
            "omega_spread": report.omega_spread,
            "hopping_spread": report.hopping_spread,
            "interaction_spread": report.interaction_spread,
        }),
    })
}
