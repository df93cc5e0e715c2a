//! Scenario files: parsing, validation, canonical serialization and the
//! builtin scenario library.
//!
//! Scenario files are TOML. The full grammar is documented in the README;
//! the builtin scenarios under `builtin/` double as worked examples.
//! Validation is not fail-fast: every problem in a file is reported, each
//! tagged with the path of the offending field.

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiments::{ScenarioConfig, ScenarioKind};
use crate::integrate::Method;
use crate::model::ValidationMode;
use crate::reduction::{build_reduction, LimitKind, ManifoldKind};

/// One validation problem, tagged with the field path it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario ({} issue{}):\n{}",
        .0.len(),
        if .0.len() == 1 { "" } else { "s" },
        .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Issue>),
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut column = 1;
    for (i, c) in text.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    (line, column)
}

/// Parses and fully validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|err| {
        let (line, column) = err
            .span()
            .map(|span| line_column(text, span.start))
            .unwrap_or((1, 1));
        ScenarioError::Parse {
            line,
            column,
            message: err.message().to_string(),
        }
    })?;
    let issues = validate_config(&config);
    if issues.is_empty() {
        Ok(config)
    } else {
        Err(ScenarioError::Validation(issues))
    }
}

/// Canonical text form of a scenario (TOML, fixed field order).
pub fn serialize_scenario(sc: &ScenarioConfig) -> String {
    toml::to_string_pretty(sc).expect("scenario configs always serialize")
}

/// Stable hash of the canonical serialization, hex encoded.
pub fn config_hash(sc: &ScenarioConfig) -> String {
    let canonical = serialize_scenario(sc);
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn push(issues: &mut Vec<Issue>, path: &str, message: impl Into<String>) {
    issues.push(Issue {
        path: path.to_string(),
        message: message.into(),
    });
}

fn check_finite(issues: &mut Vec<Issue>, path: &str, value: f64) {
    if !value.is_finite() {
        push(issues, path, format!("must be finite, got {value}"));
    }
}

fn strictly_monotone(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1]) || values.windows(2).all(|w| w[0] > w[1])
}

/// Collects every validation problem in a config (not fail-fast).
pub fn validate_config(sc: &ScenarioConfig) -> Vec<Issue> {
    let mut issues = Vec::new();
    let p = &sc.params;

    if sc.name.trim().is_empty() {
        push(&mut issues, "name", "must be nonempty");
    }

    for (path, value) in [
        ("params.a", p.a),
        ("params.b", p.b),
        ("params.r", p.r),
        ("params.f", p.f),
        ("params.epsilon", p.epsilon),
        ("params.gamma", p.gamma),
    ] {
        check_finite(&mut issues, path, value);
    }
    if p.epsilon == 0.0 {
        push(
            &mut issues,
            "params.epsilon",
            "must be nonzero (divides the price equation)",
        );
    }
    if p.gamma == 0.0 {
        push(
            &mut issues,
            "params.gamma",
            "must be nonzero (divides the chartist equation)",
        );
    }
    if !sc.permissive && p.validate(ValidationMode::Permissive).is_ok() && !p.standard_regime() {
        for (path, value) in [
            ("params.a", p.a),
            ("params.b", p.b),
            ("params.r", p.r),
            ("params.f", p.f),
            ("params.epsilon", p.epsilon),
            ("params.gamma", p.gamma),
        ] {
            if value <= 0.0 {
                push(
                    &mut issues,
                    path,
                    "must be > 0 in the standard regime (set permissive = true to relax)",
                );
            }
        }
    }

    check_finite(&mut issues, "time.start", sc.time.start);
    check_finite(&mut issues, "time.end", sc.time.end);
    let span_ok = sc.time.end > sc.time.start;
    if !span_ok {
        push(&mut issues, "time.end", "must be greater than time.start");
    }

    if let Some(initial) = sc.initial {
        check_finite(&mut issues, "initial.p", initial.p);
        check_finite(&mut issues, "initial.psi", initial.psi);
    }

    let integ = &sc.integrator;
    if !(integ.rel_tol > 0.0 && integ.rel_tol.is_finite()) {
        push(&mut issues, "integrator.rel_tol", "must be > 0");
    }
    if !(integ.abs_tol > 0.0 && integ.abs_tol.is_finite()) {
        push(&mut issues, "integrator.abs_tol", "must be > 0");
    }
    if let Some(h) = integ.max_step {
        if !(h > 0.0 && h.is_finite()) {
            push(&mut issues, "integrator.max_step", "must be > 0");
        }
    }
    if let Some(h) = integ.initial_step {
        if !(h > 0.0 && h.is_finite()) {
            push(&mut issues, "integrator.initial_step", "must be > 0");
        }
    }
    if integ.method == Method::FixedStepReference && integ.max_step.is_none() {
        push(
            &mut issues,
            "integrator.max_step",
            "required by the fixed-step reference method (it is the step size)",
        );
    }

    let params_usable = p.validate(ValidationMode::Permissive).is_ok();
    match &sc.kind {
        ScenarioKind::FullTrajectory => {}
        ScenarioKind::ReducedComparison { limit } => {
            if params_usable {
                if let Ok(rp) = build_reduction(p, *limit) {
                    if rp.manifold().kind == ManifoldKind::Degenerate {
                        push(
                            &mut issues,
                            "kind.limit",
                            "slow manifold is degenerate for these parameters (no reduction exists)",
                        );
                    }
                }
            }
        }
        ScenarioKind::ConvergenceSweep { limit, values } => {
            validate_sweep_values(&mut issues, values, false);
            if values.iter().any(|&v| v <= 0.0) {
                push(
                    &mut issues,
                    "kind.values",
                    "convergence sweep values must be positive (the parameter tends to zero)",
                );
            }
            if sc.time.end - sc.time.start < 10.0 {
                push(
                    &mut issues,
                    "time.end",
                    "convergence sweeps evaluate the L2 metric at t = 10; the span must reach it",
                );
            }
            if params_usable && !values.is_empty() {
                let mut probe = *p;
                match limit {
                    LimitKind::LiquidMarket => probe.epsilon = values[0].abs().max(1e-6),
                    LimitKind::LiquidChartist => probe.gamma = values[0].abs().max(1e-6),
                }
                if let Ok(rp) = build_reduction(&probe, *limit) {
                    match rp.manifold().kind {
                        ManifoldKind::Attracting => {}
                        ManifoldKind::Repelling => push(
                            &mut issues,
                            "kind.limit",
                            "convergence sweep requires an attracting slow manifold",
                        ),
                        ManifoldKind::Degenerate => push(
                            &mut issues,
                            "kind.limit",
                            "slow manifold is degenerate for these parameters",
                        ),
                    }
                }
            }
        }
        ScenarioKind::DegenerateSweep { limit, values } => {
            validate_sweep_values(&mut issues, values, true);
            if !sc.permissive && values.iter().any(|&v| v < 0.0) {
                push(
                    &mut issues,
                    "kind.values",
                    "negative small-parameter values require permissive = true",
                );
            }
            if params_usable {
                let degenerate = match limit {
                    LimitKind::LiquidMarket => {
                        (p.a * p.gamma - p.b).abs() <= 1e-12 * ((p.a * p.gamma).abs() + p.b.abs())
                    }
                    LimitKind::LiquidChartist => {
                        (p.epsilon - p.b).abs() <= 1e-12 * (p.epsilon.abs() + p.b.abs())
                    }
                };
                if !degenerate {
                    push(
                        &mut issues,
                        "params",
                        match limit {
                            LimitKind::LiquidMarket => {
                                "degenerate sweep requires a*gamma = b for the frozen parameters"
                            }
                            LimitKind::LiquidChartist => {
                                "degenerate sweep requires epsilon = b for the frozen parameters"
                            }
                        },
                    );
                }
            }
        }
        ScenarioKind::RegionGrid {
            gamma_a_range,
            b_range,
            resolution,
        } => {
            for (path, range) in [
                ("kind.gamma_a_range", gamma_a_range),
                ("kind.b_range", b_range),
            ] {
                if !(range.0.is_finite()
                    && range.1.is_finite()
                    && range.0 >= 0.0
                    && range.1 > range.0)
                {
                    push(
                        &mut issues,
                        path,
                        "must be a non-negative range with max > min",
                    );
                }
            }
            if *resolution < 2 {
                push(
                    &mut issues,
                    "kind.resolution",
                    "must be at least 2 points per axis",
                );
            }
            if p.epsilon < 0.0 {
                push(
                    &mut issues,
                    "params.epsilon",
                    "region classification needs epsilon >= 0 (oscillation test)",
                );
            }
        }
        ScenarioKind::RepellingDemo { limit, off_initial } => {
            check_finite(&mut issues, "kind.off_initial.p", off_initial.p);
            check_finite(&mut issues, "kind.off_initial.psi", off_initial.psi);
            if params_usable {
                if let Ok(rp) = build_reduction(p, *limit) {
                    match rp.manifold().kind {
                        ManifoldKind::Repelling => {}
                        ManifoldKind::Attracting => push(
                            &mut issues,
                            "kind.limit",
                            "repelling demo requires a repelling manifold; it is attracting here",
                        ),
                        ManifoldKind::Degenerate => push(
                            &mut issues,
                            "kind.limit",
                            "slow manifold is degenerate for these parameters",
                        ),
                    }
                }
            }
        }
    }

    issues
}

fn validate_sweep_values(issues: &mut Vec<Issue>, values: &[f64], allow_negative: bool) {
    if values.is_empty() {
        push(issues, "kind.values", "must be nonempty");
        return;
    }
    for &v in values {
        if !v.is_finite() {
            push(issues, "kind.values", format!("value {v} is not finite"));
        }
        if v == 0.0 {
            push(
                issues,
                "kind.values",
                "value 0 is not allowed (divides the system)",
            );
        }
        if !allow_negative && v < 0.0 {
            push(issues, "kind.values", format!("value {v} must be positive"));
        }
    }
    if values.len() >= 2 && !strictly_monotone(values) {
        push(issues, "kind.values", "must be strictly sorted");
    }
}

// ---------------------------------------------------------------------------
// Builtin scenarios
// ---------------------------------------------------------------------------

/// The builtin scenario library (name, TOML source).
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    (
        "stability-regions",
        include_str!("../builtin/stability-regions.toml"),
    ),
    (
        "trajectory-weak-fundamentalists",
        include_str!("../builtin/trajectory-weak-fundamentalists.toml"),
    ),
    (
        "trajectory-stable-node",
        include_str!("../builtin/trajectory-stable-node.toml"),
    ),
    (
        "trajectory-stable-oscillation",
        include_str!("../builtin/trajectory-stable-oscillation.toml"),
    ),
    (
        "trajectory-unstable-oscillation",
        include_str!("../builtin/trajectory-unstable-oscillation.toml"),
    ),
    (
        "trajectory-blow-up",
        include_str!("../builtin/trajectory-blow-up.toml"),
    ),
    (
        "trajectory-stability-border",
        include_str!("../builtin/trajectory-stability-border.toml"),
    ),
    (
        "degenerate-liquid-market",
        include_str!("../builtin/degenerate-liquid-market.toml"),
    ),
    (
        "degenerate-liquid-market-negative-depth",
        include_str!("../builtin/degenerate-liquid-market-negative-depth.toml"),
    ),
    (
        "repelling-liquid-market",
        include_str!("../builtin/repelling-liquid-market.toml"),
    ),
    (
        "liquid-market-comparison",
        include_str!("../builtin/liquid-market-comparison.toml"),
    ),
    (
        "repelling-liquid-chartist",
        include_str!("../builtin/repelling-liquid-chartist.toml"),
    ),
    (
        "liquid-market-sweep",
        include_str!("../builtin/liquid-market-sweep.toml"),
    ),
    (
        "liquid-chartist-comparison",
        include_str!("../builtin/liquid-chartist-comparison.toml"),
    ),
    (
        "liquid-chartist-sweep",
        include_str!("../builtin/liquid-chartist-sweep.toml"),
    ),
];

/// TOML source of a builtin scenario.
pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Parsed builtin list as (name, description).
pub fn list_builtin() -> Vec<(String, String)> {
    BUILTIN_SCENARIOS
        .iter()
        .map(|(name, text)| {
            let sc = parse_scenario(text).expect("builtin scenarios are valid");
            (name.to_string(), sc.description)
        })
        .collect()
}
