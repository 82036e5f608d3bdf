use std::path::PathBuf;
use std::process::ExitCode;

use bosepump_cli::{check_config, configure_threads, resolve_config, run, CliError, Experiment, Overrides, Source};
use bosepump_core::opensys::FrequencyUnits;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Units {
    Angular,
    Linear,
}

/// Run one pumping experiment and write its outputs under
/// <out>/<experiment>/<timestamp>-<seed>/.
#[derive(Debug, Parser)]
#[command(name = "bosepump", version)]
struct Args {
    /// TOML configuration; keys override the experiment's defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// fig2a, fig2c, fig4a, fig4b, fig5, bands, meanfield or circuit.
    #[arg(long, value_name = "NAME")]
    experiment: Option<Experiment>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
    /// Number of quantum trajectories (fig5).
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum)]
    units: Option<Units>,
    /// Rerun the configuration stored in a manifest.json.
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["config", "experiment"])]
    replay: Option<PathBuf>,
    /// Print diagnostics for the resolved configuration and exit.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bosepump: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(args: Args) -> Result<(), CliError> {
    configure_threads(std::env::var("BOSEPUMP_THREADS").ok().as_deref())?;
    let source = match (args.replay, args.config, args.experiment) {
        (Some(m), _, _) => Source::Replay(m),
        (None, Some(path), experiment) => Source::File { path, experiment },
        (None, None, Some(e)) => Source::Defaults(e),
        (None, None, None) => return Err(CliError::Usage("give --config, --experiment or --replay".into())),
    };
    let overrides = Overrides {
        seed: args.seed,
        n_traj: args.traj,
        dt: args.dt,
        units: args.units.map(|u| match u {
            Units::Angular => FrequencyUnits::Angular,
            Units::Linear => FrequencyUnits::Linear,
        }),
    };
    let config = resolve_config(&source, &overrides)?;
    let warnings = check_config(&config)?;
    for w in &warnings {
        eprintln!("bosepump: {w}");
    }
    if args.check {
        println!("{} configuration is valid ({} warning(s))", config.experiment, warnings.len());
        return Ok(());
    }
    let dir = run(&config, &args.out)?;
    println!("{}", dir.display());
    Ok(())
}
