//! Run configuration: per-experiment defaults, TOML overlay, diagnostics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use bosepump_core::circuit::JosephsonFormula;
use bosepump_core::effective::effective_hopping;
use bosepump_core::opensys::FrequencyUnits;
use bosepump_core::KrylovSettings;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig2a,
    Fig2c,
    Fig4a,
    Fig4b,
    Fig5,
    Bands,
    Meanfield,
    Circuit,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Fig2a,
        Experiment::Fig2c,
        Experiment::Fig4a,
        Experiment::Fig4b,
        Experiment::Fig5,
        Experiment::Bands,
        Experiment::Meanfield,
        Experiment::Circuit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2a => "fig2a",
            Experiment::Fig2c => "fig2c",
            Experiment::Fig4a => "fig4a",
            Experiment::Fig4b => "fig4b",
            Experiment::Fig5 => "fig5",
            Experiment::Bands => "bands",
            Experiment::Meanfield => "meanfield",
            Experiment::Circuit => "circuit",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (expected one of fig2a, fig2c, fig4a, fig4b, fig5, bands, meanfield, circuit)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub sites: usize,
    pub hopping: f64,
    pub interaction: f64,
    pub modulation: f64,
    pub carrier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpKind {
    PhaseSweep,
    /// Square loop that does not enclose the degeneracy, one period 2π/Ω long.
    TrivialSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub kind: PumpKind,
    pub omega: f64,
    pub phi0: f64,
    pub cycles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub site: usize,
    pub photons: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub stride: usize,
    pub krylov_tol: f64,
    pub krylov_max_dim: usize,
    pub krylov_max_halvings: u32,
}

impl IntegratorSection {
    pub fn krylov(&self) -> KrylovSettings {
        KrylovSettings { tol: self.krylov_tol, max_dim: self.krylov_max_dim, max_halvings: self.krylov_max_halvings }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    pub n_traj: usize,
    /// Lifetime in units of 1/J; derived from the unit convention when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub etas: Vec<f64>,
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redraw_dt: Option<f64>,
    /// Also write the COM trace of the first realization at every η.
    pub keep_traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSection {
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaChoice {
    TanLinear,
    TanSquared,
}

impl From<FormulaChoice> for JosephsonFormula {
    fn from(f: FormulaChoice) -> Self {
        match f {
            FormulaChoice::TanLinear => JosephsonFormula::TanLinear,
            FormulaChoice::TanSquared => JosephsonFormula::TanSquared,
        }
    }
}

/// Circuit targets in Hz-like units; converted with the unit convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub carrier_hz: f64,
    pub modulation_hz: f64,
    pub hopping_hz: f64,
    pub interaction_hz: f64,
    pub points: usize,
    pub formula: FormulaChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub units: FrequencyUnits,
    pub model: ModelSection,
    pub pump: PumpSection,
    pub initial: InitialSection,
    pub integrator: IntegratorSection,
    pub trajectories: TrajectorySection,
    pub noise: NoiseSection,
    pub bands: BandsSection,
    pub circuit: CircuitSection,
}

impl RunConfig {
    /// Parameters of each experiment before any overrides.
    pub fn defaults(experiment: Experiment) -> RunConfig {
        let krylov = KrylovSettings::default();
        let mut c = RunConfig {
            experiment,
            seed: 0,
            units: FrequencyUnits::Angular,
            model: ModelSection { sites: 30, hopping: 1.0, interaction: -1.0, modulation: 10.0, carrier: 0.0 },
            pump: PumpSection { kind: PumpKind::PhaseSweep, omega: 0.01, phi0: 0.0, cycles: 1.0 },
            initial: InitialSection { site: 15, photons: 3, n_max: 3 },
            integrator: IntegratorSection {
                dt: 0.05,
                stride: 10,
                krylov_tol: krylov.tol,
                krylov_max_dim: krylov.max_dim,
                krylov_max_halvings: krylov.max_halvings,
            },
            trajectories: TrajectorySection { n_traj: 200, t1: None },
            noise: NoiseSection {
                etas: vec![0.0, 0.25, 0.5, 1.0, 2.0, 5.0],
                realizations: 10,
                redraw_dt: None,
                keep_traces: true,
            },
            bands: BandsSection { points: 720 },
            circuit: CircuitSection {
                carrier_hz: 5e9,
                modulation_hz: 0.4e9,
                hopping_hz: -40e6,
                interaction_hz: -40e6,
                points: 41,
                formula: FormulaChoice::TanLinear,
            },
        };
        match experiment {
            Experiment::Fig2c => {
                c.pump.omega = 0.002;
                c.pump.phi0 = std::f64::consts::FRAC_PI_2;
                c.integrator.stride = 50;
            }
            Experiment::Fig4a => c.pump.kind = PumpKind::TrivialSquare,
            Experiment::Fig5 => {
                c.model.sites = 9;
                c.pump.omega = 0.05;
                c.pump.cycles = 3.0;
                c.initial.site = 6;
            }
            Experiment::Bands => {
                c.model.sites = 3;
                c.initial.site = 0;
            }
            _ => {}
        }
        c
    }

    /// Defaults for the experiment named in `text` (or `experiment`), with
    /// every key of `text` laid over them. Unknown keys are errors.
    pub fn from_toml_str(text: &str, experiment: Option<Experiment>) -> Result<RunConfig, CliError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Schema(e.to_string()))?;
        let named = match user.get("experiment") {
            Some(toml::Value::String(s)) => Some(s.parse::<Experiment>().map_err(CliError::Schema)?),
            Some(_) => return Err(CliError::Schema("`experiment` must be a string".into())),
            None => None,
        };
        let exp = match (experiment, named) {
            (Some(flag), Some(file)) if flag != file => {
                return Err(CliError::Schema(format!("--experiment {flag} contradicts experiment = \"{file}\" in the config")))
            }
            (Some(e), _) | (None, Some(e)) => e,
            (None, None) => return Err(CliError::Schema("missing required key `experiment`".into())),
        };
        let mut merged = toml::Table::try_from(RunConfig::defaults(exp)).expect("defaults serialize");
        overlay(&mut merged, user, "")?;
        merged.insert("experiment".into(), toml::Value::String(exp.name().into()));
        toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| CliError::Schema(e.to_string()))
    }

    pub fn from_path(path: &Path, experiment: Option<Experiment>) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, experiment)
    }
}

fn overlay(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<(), CliError> {
    for (key, value) in user {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => overlay(b, u, &path)?,
            (Some(toml::Value::Table(_)), _) => return Err(CliError::Schema(format!("`{path}` must be a table"))),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.key, self.reason)
    }
}

/// Every problem found in `config`. Warnings do not block a run.
pub fn validate_config(config: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |key: &str, reason: String| {
        out.push(Diagnostic { severity: Severity::Error, key: key.into(), reason })
    };
    let m = &config.model;
    if !(m.modulation > 0.0) {
        err("model.modulation", format!("Δ must be positive, got {}", m.modulation));
    }
    if m.sites == 0 {
        err("model.sites", "need at least one site".into());
    }
    if !m.hopping.is_finite() || !m.interaction.is_finite() || !m.carrier.is_finite() {
        err("model", "hopping, interaction and carrier must be finite".into());
    }
    let p = &config.pump;
    if !p.omega.is_finite() || (p.omega == 0.0 && p.cycles > 0.0) {
        err("pump.omega", format!("need a finite nonzero Ω, got {}", p.omega));
    }
    if !(p.cycles >= 0.0) {
        err("pump.cycles", format!("must be ≥ 0, got {}", p.cycles));
    }
    let i = &config.initial;
    if i.site >= m.sites {
        err("initial.site", format!("site {} outside a lattice of {} sites", i.site, m.sites));
    }
    if i.photons > i.n_max {
        err("initial.photons", format!("{} photons exceed the occupation cap n_max = {}", i.photons, i.n_max));
    }
    if i.photons > u8::MAX as usize {
        err("initial.photons", "at most 255 photons".into());
    }
    let g = &config.integrator;
    if !(g.dt > 0.0) {
        err("integrator.dt", format!("must be positive, got {}", g.dt));
    }
    if g.stride == 0 {
        err("integrator.stride", "must be at least 1".into());
    }
    if !(g.krylov_tol > 0.0) || g.krylov_max_dim < 2 {
        err("integrator", "krylov_tol must be positive and krylov_max_dim ≥ 2".into());
    }
    if config.trajectories.n_traj == 0 {
        err("trajectories.n_traj", "need at least one trajectory".into());
    }
    if let Some(t1) = config.trajectories.t1 {
        if !(t1 > 0.0) {
            err("trajectories.t1", format!("must be positive, got {t1}"));
        }
    }
    if config.noise.realizations == 0 {
        err("noise.realizations", "need at least one realization".into());
    }
    if config.noise.etas.iter().any(|e| !(*e >= 0.0)) {
        err("noise.etas", "η values must be ≥ 0".into());
    }
    if config.noise.redraw_dt.is_some_and(|d| !(d > 0.0)) {
        err("noise.redraw_dt", "must be positive".into());
    }
    if config.bands.points == 0 {
        err("bands.points", "need at least one phase point".into());
    }
    let c = &config.circuit;
    if !(c.carrier_hz > c.modulation_hz.abs()) || !(c.modulation_hz >= 0.0) {
        err("circuit", "need carrier_hz > modulation_hz ≥ 0".into());
    }
    if c.points == 0 {
        err("circuit.points", "need at least one flux point".into());
    }

    if m.sites % 3 != 0 {
        out.push(Diagnostic {
            severity: Severity::Warning,
            key: "model.sites".into(),
            reason: format!("L = {} is not a whole number of trimers", m.sites),
        });
    }
    match effective_hopping(m.hopping, m.interaction) {
        Ok(j_eff) if p.omega.abs() >= 2.0 * j_eff.abs() => out.push(Diagnostic {
            severity: Severity::Warning,
            key: "pump.omega".into(),
            reason: format!("|Ω| = {} is not below the gap estimate 2𝒥 = {:.4}; transport may be diabatic", p.omega.abs(), 2.0 * j_eff.abs()),
        }),
        Err(_) => out.push(Diagnostic {
            severity: Severity::Warning,
            key: "model.interaction".into(),
            reason: "U = 0: no interaction gap, transport is not protected".into(),
        }),
        _ => {}
    }
    out
}
