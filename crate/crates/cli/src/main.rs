use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tdoa_core::harness::{draw_trial, emit_results, run_campaign, ExperimentConfig, Scenario};
use tdoa_core::{check_geometry, fisher_information, localize, Error, MeasurementSet, SensorArray, SourcePosition};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tdoa", version, about = "TDOA source localization: simulation, estimation and Monte-Carlo campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// uniform_cube, fixed_array or custom_csv.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Noise standard deviation in meters.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Source position as `x,y[,z]`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_coords)]
    source: Option<Coords>,
}

#[derive(Args)]
struct Instance {
    /// Sensor count (uniform_cube) or repeat count; defaults to the first configured size.
    #[arg(long)]
    size: Option<usize>,
    /// Sensor array CSV; overrides the scenario geometry.
    #[arg(long)]
    sensors: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one array and one noisy measurement set and write them as CSV.
    Simulate {
        #[command(flatten)]
        instance: Instance,
        /// Campaign trial whose draw to reproduce.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run the two-step estimator and print its report as JSON.
    Estimate {
        #[command(flatten)]
        instance: Instance,
        /// Measurement CSV (column `d`); requires --sensors. Without it a
        /// fresh draw is estimated.
        #[arg(long, requires = "sensors")]
        measurements: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run a Monte-Carlo campaign and write CSV and JSON artifacts.
    Campaign {
        /// Comma-separated sizes, overriding the config.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Fisher information and Cramér-Rao bound at the source.
    Crlb {
        #[command(flatten)]
        instance: Instance,
    },
    /// Identifiability diagnostics for an array.
    CheckGeometry {
        #[command(flatten)]
        instance: Instance,
    },
}

#[derive(Clone)]
struct Coords(Vec<f64>);

fn parse_coords(s: &str) -> Result<Coords, String> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    match coords.len() {
        2 | 3 => Ok(Coords(coords)),
        n => Err(format!("expected 2 or 3 coordinates, got {n}")),
    }
}

fn config(common: &Common) -> Result<ExperimentConfig, Error> {
    let scenario = common.scenario.as_deref().map(str::parse::<Scenario>).transpose()?;
    let mut cfg = match (&common.config, scenario) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(s)) => ExperimentConfig::preset(s),
        (None, None) => ExperimentConfig::uniform_cube(),
    };
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(sigma) = common.sigma {
        cfg.sigma = sigma;
    }
    if let Some(source) = &common.source {
        cfg.source = SourcePosition::new(&source.0).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(dir) = &common.out {
        cfg.output_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn narrow_to_size(cfg: &mut ExperimentConfig, instance: &Instance) {
    match instance.size {
        Some(size) => cfg.sizes = vec![size],
        None => cfg.sizes.truncate(1),
    }
}

fn read_array(cfg: &ExperimentConfig, path: &Path) -> Result<SensorArray, Error> {
    let array = SensorArray::read_csv(path)?;
    if array.dim() != cfg.source.dim() {
        return Err(Error::Config(format!(
            "{} holds a {}D array but the source is {}D",
            path.display(),
            array.dim(),
            cfg.source.dim()
        )));
    }
    Ok(array)
}

/// The array selected by `--sensors`, or the one trial `trial` of the
/// configured scenario would use.
fn instance_array(cfg: &mut ExperimentConfig, instance: &Instance, trial: usize) -> Result<SensorArray, Error> {
    narrow_to_size(cfg, instance);
    match &instance.sensors {
        Some(path) => read_array(cfg, path),
        None => Ok(draw_trial(cfg, 0, trial)?.array().clone()),
    }
}

fn instance_measurements(cfg: &mut ExperimentConfig, instance: &Instance, trial: usize) -> Result<MeasurementSet, Error> {
    narrow_to_size(cfg, instance);
    match &instance.sensors {
        Some(path) => {
            let array = read_array(cfg, path)?;
            let mut rng = tdoa_core::rng::trial_stream(cfg.seed, 0, trial);
            tdoa_core::model::simulate_with(&array, &cfg.source, cfg.sigma, &mut rng)
        }
        None => draw_trial(cfg, 0, trial),
    }
}

/// Write a line to stdout; a closed pipe (`tdoa ... | head`) is not an error.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))
}

/// Print `value` as JSON and, with `--out`, also save it as `name`.
fn report<T: Serialize>(value: &T, out: Option<&Path>, name: &str) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, &json).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    say(&json);
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    sensors_csv: PathBuf,
    measurements_csv: PathBuf,
    sensors: usize,
    sigma: f64,
    seed: u64,
    trial: usize,
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = config(&cli.common)?;
    let out = cli.common.out.as_deref();
    match cli.command {
        Command::Simulate { instance, trial } => {
            let meas = instance_measurements(&mut cfg, &instance, trial)?;
            let dir = out.unwrap_or(Path::new("."));
            create_dir(dir)?;
            let summary = SimulateSummary {
                sensors_csv: dir.join("sensors.csv"),
                measurements_csv: dir.join("measurements.csv"),
                sensors: meas.len(),
                sigma: cfg.sigma,
                seed: cfg.seed,
                trial,
            };
            meas.array().write_csv(&summary.sensors_csv)?;
            meas.write_csv(&summary.measurements_csv)?;
            report(&summary, None, "")
        }
        Command::Estimate {
            instance,
            measurements,
            trial,
        } => {
            let meas = match &measurements {
                Some(path) => {
                    let array = instance_array(&mut cfg, &instance, trial)?;
                    let known = cfg.gn.use_known_variance.then_some(cfg.sigma * cfg.sigma);
                    MeasurementSet::read_csv(array, path, known)?
                }
                None => instance_measurements(&mut cfg, &instance, trial)?,
            };
            report(&localize(&meas, &cfg.gn)?, out, "estimate.json")
        }
        Command::Campaign { sizes } => {
            if let Some(sizes) = sizes {
                cfg.sizes = sizes;
            }
            let res = run_campaign(&cfg)?;
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            for path in emit_results(&cfg, &res, &dir)? {
                say(&path.display().to_string());
            }
            Ok(())
        }
        Command::Crlb { instance } => {
            let array = instance_array(&mut cfg, &instance, 0)?;
            report(&fisher_information(&array, &cfg.source, cfg.sigma * cfg.sigma)?, out, "crlb.json")
        }
        Command::CheckGeometry { instance } => {
            let array = instance_array(&mut cfg, &instance, 0)?;
            report(&check_geometry(&array, Some(&cfg.source))?, out, "geometry.json")
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}
