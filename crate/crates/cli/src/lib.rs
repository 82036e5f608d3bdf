//! Experiment runner behind the `bosepump` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;

use std::path::{Path, PathBuf};

use bosepump_core::opensys::FrequencyUnits;

pub use config::{validate_config, Diagnostic, Experiment, RunConfig, Severity};
pub use error::CliError;
pub use manifest::{RunManifest, RunStatus};

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub dt: Option<f64>,
    pub units: Option<FrequencyUnits>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.seed.is_none() && self.n_traj.is_none() && self.dt.is_none() && self.units.is_none()
    }

    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(n) = self.n_traj {
            config.trajectories.n_traj = n;
        }
        if let Some(dt) = self.dt {
            config.integrator.dt = dt;
        }
        if let Some(u) = self.units {
            config.units = u;
        }
    }
}

/// Where the configuration comes from.
#[derive(Debug, Clone)]
pub enum Source {
    File { path: PathBuf, experiment: Option<Experiment> },
    Defaults(Experiment),
    Replay(PathBuf),
}

pub fn resolve_config(source: &Source, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut config = match source {
        Source::File { path, experiment } => RunConfig::from_path(path, *experiment)?,
        Source::Defaults(e) => RunConfig::defaults(*e),
        Source::Replay(path) => {
            if !overrides.is_empty() {
                return Err(CliError::Usage("--replay takes the configuration from the manifest; drop the overrides".into()));
            }
            return Ok(RunManifest::read(path)?.config);
        }
    };
    overrides.apply(&mut config);
    Ok(config)
}

/// Errors block the run; warnings are returned for the caller to report.
pub fn check_config(config: &RunConfig) -> Result<Vec<Diagnostic>, CliError> {
    let (errors, warnings): (Vec<_>, Vec<_>) =
        validate_config(config).into_iter().partition(|d| d.severity == Severity::Error);
    if errors.is_empty() {
        Ok(warnings)
    } else {
        Err(CliError::Invalid(errors))
    }
}

fn dispatch(config: &RunConfig, dir: &Path) -> Result<experiments::ExperimentOutput, CliError> {
    match config.experiment {
        Experiment::Fig2a | Experiment::Fig2c | Experiment::Fig4a => experiments::pump(config, dir),
        Experiment::Fig4b => experiments::noise(config, dir),
        Experiment::Fig5 => experiments::lossy(config, dir),
        Experiment::Bands => experiments::bands(config, dir),
        Experiment::Meanfield => experiments::meanfield(config, dir),
        Experiment::Circuit => experiments::circuit(config, dir),
    }
}

/// Create the run directory, write the manifest, run, and rewrite the
/// manifest with the outcome. Returns the run directory.
pub fn run(config: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    let dir = manifest::create_run_dir(out, config)?;
    let mut m = RunManifest::new(config);
    m.write(&dir)?;
    match dispatch(config, &dir) {
        Ok(output) => {
            m.outputs.extend(output.files);
            m.results = output.results;
            m.status = RunStatus::Completed;
            m.finished = Some(manifest::now());
            m.write(&dir)?;
            Ok(dir)
        }
        Err(e) => {
            m.status = RunStatus::Failed;
            m.error = Some(e.to_string());
            m.finished = Some(manifest::now());
            // the original error matters more than a failed rewrite
            let _ = m.write(&dir);
            Err(e)
        }
    }
}

/// Cap the rayon pool from `BOSEPUMP_THREADS` when it is set.
pub fn configure_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    let Some(v) = value else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("BOSEPUMP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    Ok(Some(n))
}
