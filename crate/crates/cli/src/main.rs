//! Experiment CLI for the Beja-Goldman market model.
//!
//! Exit codes: 0 on success, 1 on scenario validation errors, 2 on
//! runtime or I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bg_core::experiments::{
    run_scenario, ExperimentError, IntegratorSettings, OutputSettings, ScenarioConfig,
    ScenarioKind, TimeSpan,
};
use bg_core::model::ModelParams;
use bg_core::output::{emit_result, run_directory, OutputFormat};
use bg_core::scenario::{builtin, list_builtin, parse_scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "bg",
    version,
    about = "Beja-Goldman disequilibrium market model: trajectories, slow-manifold reductions and convergence experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a builtin scenario by name).
    Run {
        /// Path to a scenario TOML file, or the name of a builtin scenario.
        scenario: String,
        /// Output root directory; each run writes into <out>/<name>-<hash>/.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Comma-separated output formats: csv, summary, svg.
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<String>>,
        /// Allow non-standard parameters (e.g. negative market depth).
        #[arg(long)]
        permissive: bool,
    },
    /// Render the stability-region map for a fixed epsilon.
    Regions {
        /// Inverse market depth used for the classification.
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 161)]
        grid: usize,
        /// Output root directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// List the builtin scenarios.
    ListBuiltin,
}

enum CliError {
    /// Scenario validation problems (exit code 1).
    Validation(String),
    /// Runtime or I/O problems (exit code 2).
    Runtime(String),
}

impl From<ScenarioError> for CliError {
    fn from(err: ScenarioError) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::Config(_) | ExperimentError::Model(_) => {
                CliError::Validation(err.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn parse_formats(raw: Option<Vec<String>>) -> Result<Option<Vec<OutputFormat>>, CliError> {
    let Some(raw) = raw else { return Ok(None) };
    let mut formats = Vec::new();
    for item in raw {
        let fmt = item.parse::<OutputFormat>().map_err(CliError::Validation)?;
        if !formats.contains(&fmt) {
            formats.push(fmt);
        }
    }
    Ok(Some(formats))
}

fn load_scenario(spec: &str) -> Result<ScenarioConfig, CliError> {
    let path = PathBuf::from(spec);
    let text = if path.exists() {
        fs::read_to_string(&path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?
    } else if let Some(text) = builtin(spec) {
        text.to_string()
    } else {
        return Err(CliError::Validation(format!(
            "'{spec}' is neither a readable file nor a builtin scenario (see `bg list-builtin`)"
        )));
    };
    Ok(parse_scenario(&text)?)
}

fn cmd_run(
    spec: &str,
    out: &Path,
    formats: Option<Vec<String>>,
    permissive: bool,
) -> Result<(), CliError> {
    let mut sc = load_scenario(spec)?;
    if permissive {
        sc.permissive = true;
    }
    let formats = parse_formats(formats)?.unwrap_or_else(|| sc.output.formats.clone());

    let result = run_scenario(&sc)?;
    let manifest =
        emit_result(&sc, &result, &formats, out).map_err(|e| CliError::Runtime(e.to_string()))?;

    let dir = run_directory(&sc, out);
    println!("scenario: {}", sc.name);
    if let Some(report) = &result.classification {
        println!(
            "classification: stable = {}, oscillatory = {}, region = {}",
            report.stable, report.oscillatory, report.region
        );
    }
    for (key, value) in &result.metrics {
        println!("metric {key} = {value}");
    }
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    for file in &manifest.files {
        println!("wrote {}", dir.join(file).display());
    }
    println!("wrote {}", dir.join("manifest.toml").display());
    Ok(())
}

fn cmd_regions(epsilon: f64, grid: usize, out: &Path) -> Result<(), CliError> {
    let sc = ScenarioConfig {
        name: "stability-regions".into(),
        description: format!("Stability-region map at epsilon = {epsilon}"),
        // Only epsilon enters the region classification; the rest of the
        // parameter block is inert for this scenario kind.
        params: ModelParams::new(1.0, 1.0, 0.1, 1.0, epsilon, 1.0),
        initial: None,
        time: TimeSpan {
            start: 0.0,
            end: 1.0,
        },
        kind: ScenarioKind::RegionGrid {
            gamma_a_range: (0.0, 4.0),
            b_range: (0.0, 4.0),
            resolution: grid,
        },
        integrator: IntegratorSettings::default(),
        output: OutputSettings::default(),
        permissive: false,
    };
    let issues = bg_core::scenario::validate_config(&sc);
    if !issues.is_empty() {
        return Err(CliError::Validation(
            ScenarioError::Validation(issues).to_string(),
        ));
    }
    let result = run_scenario(&sc)?;
    let manifest = emit_result(&sc, &result, &sc.output.formats, out)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let dir = run_directory(&sc, out);
    for file in &manifest.files {
        println!("wrote {}", dir.join(file).display());
    }
    println!("wrote {}", dir.join("manifest.toml").display());
    Ok(())
}

fn cmd_list_builtin() {
    let entries = list_builtin();
    let width = entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, description) in entries {
        println!("{name:width$}  {description}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            out,
            formats,
            permissive,
        } => cmd_run(&scenario, &out, formats, permissive),
        Command::Regions { epsilon, grid, out } => cmd_regions(epsilon, grid, &out),
        Command::ListBuiltin => {
            cmd_list_builtin();
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
