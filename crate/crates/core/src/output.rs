//! Result emission: CSV series, a structured summary document, SVG plots
//! and the per-run manifest.
//!
//! Each run writes into its own directory named `<scenario>-<hash12>` under
//! the chosen output root, where the hash is the canonical config hash.
//! Floats are serialized with Rust's shortest-round-trip formatting, so
//! reading a CSV back reproduces the original doubles exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ColumnData, ExperimentResult, ScenarioConfig, ScenarioKind, Series};
use crate::plot::{self, PlotSeries, PlotSpec};
use crate::scenario::config_hash;
use crate::spectral::StabilityReport;

/// What `emit_result` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Summary,
    Svg,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "summary" => Ok(OutputFormat::Summary),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(format!(
                "unknown output format '{other}' (expected csv, summary or svg)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("I/O error writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("CSV error writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("serialization error: {0}")]
    Serialize(String),
}

/// Record of one emitted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Crate version that produced the run.
    pub version: String,
    pub scenario: String,
    /// Canonical config hash (hex).
    pub config_hash: String,
    pub warnings: Vec<String>,
    /// Files produced, relative to the run directory.
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SummaryDoc<'a> {
    artifact: &'static str,
    version: &'static str,
    scenario: &'a str,
    description: &'a str,
    config_hash: &'a str,
    metrics: &'a BTreeMap<String, f64>,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<&'a StabilityReport>,
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn fmt_cell(v: f64) -> String {
    // Shortest round-trip decimal form; parses back to the identical double.
    format!("{v}")
}

fn write_series_csv(dir: &Path, series: &Series) -> Result<String, OutputError> {
    let file_name = format!("{}.csv", sanitize(&series.name));
    let path = dir.join(&file_name);
    let mut writer = csv::Writer::from_path(&path).map_err(|source| OutputError::Csv {
        path: path.clone(),
        source,
    })?;
    let headers: Vec<&str> = series.columns.iter().map(|c| c.name.as_str()).collect();
    writer
        .write_record(&headers)
        .map_err(|source| OutputError::Csv {
            path: path.clone(),
            source,
        })?;
    for row in 0..series.rows() {
        let record: Vec<String> = series
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Float(v) => fmt_cell(v[row]),
                ColumnData::Text(v) => v[row].clone(),
            })
            .collect();
        writer
            .write_record(&record)
            .map_err(|source| OutputError::Csv {
                path: path.clone(),
                source,
            })?;
    }
    writer.flush().map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(file_name)
}

/// Reads a numeric CSV emitted by [`emit_result`]: header row plus float
/// columns (used by round-trip checks and downstream tooling).
pub fn read_series_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), OutputError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, field) in record.iter().enumerate() {
            columns[i].push(field.parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    Ok((headers, columns))
}

fn series_to_plot(series: &Series, x: &str, ys: &[&str]) -> Vec<PlotSeries> {
    let Some(xs) = series.floats(x) else {
        return Vec::new();
    };
    ys.iter()
        .filter_map(|name| {
            series.floats(name).map(|vals| PlotSeries {
                name: (*name).to_string(),
                points: xs.iter().copied().zip(vals.iter().copied()).collect(),
            })
        })
        .collect()
}

fn plots_for(sc: &ScenarioConfig, res: &ExperimentResult, footer: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    match &sc.kind {
        ScenarioKind::FullTrajectory => {
            if let Some(series) = res.series("trajectory") {
                let spec = PlotSpec {
                    title: sc.name.clone(),
                    x_label: "t".into(),
                    y_label: "state".into(),
                    log_x: false,
                    log_y: false,
                    series: series_to_plot(series, "t", &["p", "psi"]),
                    footer: footer.into(),
                };
                out.push(("trajectory.svg".into(), plot::render(&spec)));
            }
        }
        ScenarioKind::ReducedComparison { .. } => {
            if let Some(series) = res.series("comparison") {
                let spec = PlotSpec {
                    title: sc.name.clone(),
                    x_label: "t".into(),
                    y_label: "state".into(),
                    log_x: false,
                    log_y: false,
                    series: series_to_plot(
                        series,
                        "t",
                        &["p_full", "psi_full", "p_reduced", "psi_reduced"],
                    ),
                    footer: footer.into(),
                };
                out.push(("comparison.svg".into(), plot::render(&spec)));
                let dist = PlotSpec {
                    title: format!("{} (distance)", sc.name),
                    x_label: "t".into(),
                    y_label: "|full - reduced|".into(),
                    log_x: false,
                    log_y: true,
                    series: series_to_plot(series, "t", &["distance"]),
                    footer: footer.into(),
                };
                out.push(("distance.svg".into(), plot::render(&dist)));
            }
        }
        ScenarioKind::ConvergenceSweep { limit, .. } => {
            if let Some(series) = res.series("sweep") {
                let x = match limit {
                    crate::reduction::LimitKind::LiquidMarket => "epsilon",
                    crate::reduction::LimitKind::LiquidChartist => "gamma",
                };
                let spec = PlotSpec {
                    title: sc.name.clone(),
                    x_label: x.into(),
                    y_label: "L2 distance at t = 10".into(),
                    log_x: true,
                    log_y: true,
                    series: series_to_plot(series, x, &["l2_at_10"]),
                    footer: footer.into(),
                };
                out.push(("sweep.svg".into(), plot::render(&spec)));
            }
        }
        ScenarioKind::DegenerateSweep { .. } => {
            let mut plot_series = Vec::new();
            for series in &res.series {
                if let (Some(t), Some(p)) = (series.floats("t"), series.floats("p")) {
                    plot_series.push(PlotSeries {
                        name: format!("{} p", series.name.replace("trajectory_", "")),
                        points: t.iter().copied().zip(p.iter().copied()).collect(),
                    });
                }
            }
            if !plot_series.is_empty() {
                let spec = PlotSpec {
                    title: sc.name.clone(),
                    x_label: "t".into(),
                    y_label: "p".into(),
                    log_x: false,
                    log_y: false,
                    series: plot_series,
                    footer: footer.into(),
                };
                out.push(("trajectories.svg".into(), plot::render(&spec)));
            }
        }
        ScenarioKind::RepellingDemo { .. } => {
            let mut residuals = Vec::new();
            for name in ["full_on_manifold", "full_off_manifold", "reduced_formal"] {
                if let Some(series) = res.series(name) {
                    if let (Some(t), Some(r)) = (series.floats("t"), series.floats("residual")) {
                        residuals.push(PlotSeries {
                            name: name.into(),
                            points: t.iter().copied().zip(r.iter().copied()).collect(),
                        });
                    }
                }
            }
            if !residuals.is_empty() {
                let spec = PlotSpec {
                    title: format!("{} (manifold residual)", sc.name),
                    x_label: "t".into(),
                    y_label: "residual".into(),
                    log_x: false,
                    log_y: false,
                    series: residuals,
                    footer: footer.into(),
                };
                out.push(("residuals.svg".into(), plot::render(&spec)));
            }
        }
        ScenarioKind::RegionGrid { .. } => {
            if let Some(series) = res.series("region_grid") {
                let (Some(ga), Some(b)) = (series.floats("gamma_a"), series.floats("b")) else {
                    return out;
                };
                let ColumnData::Text(labels) =
                    &series.column("region").expect("region column").data
                else {
                    return out;
                };
                // Recover the axes from the row-major cell listing.
                let mut xs: Vec<f64> = Vec::new();
                for &v in ga {
                    if xs.last() == Some(&v) || xs.contains(&v) {
                        break;
                    }
                    xs.push(v);
                }
                let nx = xs.len().max(1);
                let ys: Vec<f64> = b.iter().step_by(nx).copied().collect();
                let curves: Vec<(&str, Vec<(f64, f64)>)> = [
                    "boundary_stability",
                    "boundary_oscillation_lower",
                    "boundary_oscillation_upper",
                ]
                .iter()
                .filter_map(|name| {
                    res.series(name).map(|s| {
                        let cx = s.floats("gamma_a").unwrap_or(&[]);
                        let cy = s.floats("b").unwrap_or(&[]);
                        (*name, cx.iter().copied().zip(cy.iter().copied()).collect())
                    })
                })
                .collect();
                out.push((
                    "regions.svg".into(),
                    plot::render_region_map(&xs, &ys, labels, &curves, sc.params.epsilon, footer),
                ));
            }
        }
    }
    out
}

/// Writes an experiment result into `<out_root>/<scenario>-<hash12>/`.
///
/// Emits one CSV per series, a `summary.toml`, scenario-appropriate SVG
/// plots and a `manifest.toml`; returns the manifest.
pub fn emit_result(
    sc: &ScenarioConfig,
    res: &ExperimentResult,
    formats: &[OutputFormat],
    out_root: &Path,
) -> Result<RunManifest, OutputError> {
    let hash = config_hash(sc);
    let dir = out_root.join(format!("{}-{}", sanitize(&sc.name), &hash[..12]));
    fs::create_dir_all(&dir).map_err(|source| OutputError::Io {
        path: dir.clone(),
        source,
    })?;

    let mut files = Vec::new();

    if formats.contains(&OutputFormat::Csv) {
        for series in &res.series {
            files.push(write_series_csv(&dir, series)?);
        }
    }

    if formats.contains(&OutputFormat::Summary) {
        let doc = SummaryDoc {
            artifact: "bg-core",
            version: env!("CARGO_PKG_VERSION"),
            scenario: &sc.name,
            description: &sc.description,
            config_hash: &hash,
            metrics: &res.metrics,
            warnings: &res.warnings,
            classification: res.classification.as_ref(),
        };
        let text =
            toml::to_string_pretty(&doc).map_err(|e| OutputError::Serialize(e.to_string()))?;
        let path = dir.join("summary.toml");
        fs::write(&path, text).map_err(|source| OutputError::Io {
            path: path.clone(),
            source,
        })?;
        files.push("summary.toml".into());
    }

    if formats.contains(&OutputFormat::Svg) {
        let footer = format!("scenario {} | config {}", sc.name, &hash[..12]);
        for (name, svg) in plots_for(sc, res, &footer) {
            let path = dir.join(&name);
            fs::write(&path, svg).map_err(|source| OutputError::Io {
                path: path.clone(),
                source,
            })?;
            files.push(name);
        }
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: sc.name.clone(),
        config_hash: hash,
        warnings: res.warnings.clone(),
        files,
    };
    let text =
        toml::to_string_pretty(&manifest).map_err(|e| OutputError::Serialize(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(manifest)
}

/// The directory a scenario's outputs land in, without writing anything.
pub fn run_directory(sc: &ScenarioConfig, out_root: &Path) -> PathBuf {
    let hash = config_hash(sc);
    out_root.join(format!("{}-{}", sanitize(&sc.name), &hash[..12]))
}
