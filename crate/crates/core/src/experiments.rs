//! Declarative experiment runner.
//!
//! A [`ScenarioConfig`] describes one experiment; [`run_scenario`] executes
//! it and returns an [`ExperimentResult`] holding named data series, scalar
//! metrics, the stability classification and any warnings. Results are pure
//! functions of their configuration: re-running a scenario reproduces the
//! output byte for byte.
//!
//! Scenario kinds:
//!
//! - `FullTrajectory`: integrate the full model, classify, report
//!   asymptotic targets.
//! - `ReducedComparison`: full model vs. lifted reduced model on a shared
//!   grid with the L2 distance at `t = 10`. Both sides are evaluated
//!   through their closed forms so the metric stays meaningful down to
//!   distances of 1e-13, far below any integrator noise floor; the adaptive
//!   integrator is cross-validated against the same closed forms elsewhere.
//! - `ConvergenceSweep`: a `ReducedComparison` per small-parameter value,
//!   plus the fitted log-log order over the smallest half of the values.
//! - `DegenerateSweep`: full-model runs at `a*gamma = b` (or `epsilon = b`)
//!   where no slow manifold exists; negative values run permissively.
//! - `RepellingDemo`: on- and off-manifold starts against the formal
//!   reduced solution, with manifold residuals over time.
//! - `RegionGrid`: batch stability classification over the `(gamma a, b)`
//!   plane.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{
    integrate_full, integrate_reduced, stiffness_probe, IntegrateError, IntegratorConfig, Method,
    Trajectory,
};
use crate::linalg::{vec_norm, vec_sub};
use crate::model::{ModelError, ModelParams, State, ValidationMode};
use crate::output::OutputFormat;
use crate::reduction::{
    build_reduction, hilbert_check, FreeVariable, LimitKind, ManifoldKind, ReductionError,
    ReductionProblem,
};
use crate::spectral::{
    classify, stability_region_grid, ExactSolver, SpectralError, StabilityReport, Verdict,
};

/// Number of uniform sample points shared by all emitted series.
pub const OUTPUT_GRID_POINTS: usize = 1001;

/// Default evaluation time of the comparison metric.
pub const L2_TIME: f64 = 10.0;

#[derive(Debug, Clone, Error)]
pub enum ExperimentError {
    #[error("scenario configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
}

/// Time window of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

/// Integrator settings carried by a scenario (the time span comes from the
/// scenario itself).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
    pub method: Method,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            initial_step: None,
            method: Method::AdaptiveImplicit,
        }
    }
}

impl IntegratorSettings {
    pub fn to_config(self, t_span: (f64, f64)) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step.unwrap_or(f64::INFINITY),
            t_span,
            initial_step: self.initial_step,
            method: self.method,
        }
    }
}

/// What kind of experiment a scenario runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioKind {
    FullTrajectory,
    ReducedComparison {
        limit: LimitKind,
    },
    DegenerateSweep {
        limit: LimitKind,
        values: Vec<f64>,
    },
    ConvergenceSweep {
        limit: LimitKind,
        values: Vec<f64>,
    },
    RegionGrid {
        gamma_a_range: (f64, f64),
        b_range: (f64, f64),
        resolution: usize,
    },
    RepellingDemo {
        limit: LimitKind,
        off_initial: State,
    },
}

/// Output selection of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSettings {
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        OutputSettings {
            formats: vec![OutputFormat::Csv, OutputFormat::Summary, OutputFormat::Svg],
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub params: ModelParams,
    /// Initial state; defaults to `(F, r)`, which lies on the liquid-market
    /// slow manifold.
    #[serde(default)]
    pub initial: Option<State>,
    pub time: TimeSpan,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub output: OutputSettings,
    /// Allow non-standard parameters (e.g. negative market depth); such
    /// runs carry an explicit warning.
    #[serde(default)]
    pub permissive: bool,
}

impl ScenarioConfig {
    pub fn initial_state(&self) -> State {
        self.initial
            .unwrap_or(State::new(self.params.f, self.params.r))
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.time.start, self.time.end)
    }
}

/// One named block of same-length columns, emitted as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    pub fn float(name: impl Into<String>, data: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Float(data),
        }
    }

    pub fn text(name: impl Into<String>, data: Vec<String>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Text(data),
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Float(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Series {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Float values of a named column.
    pub fn floats(&self, name: &str) -> Option<&[f64]> {
        match &self.column(name)?.data {
            ColumnData::Float(v) => Some(v),
            ColumnData::Text(_) => None,
        }
    }
}

/// Everything an experiment emits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub series: Vec<Series>,
    pub metrics: BTreeMap<String, f64>,
    pub classification: Option<StabilityReport>,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    fn new() -> Self {
        ExperimentResult {
            series: Vec::new(),
            metrics: BTreeMap::new(),
            classification: None,
            warnings: Vec::new(),
        }
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Runs a scenario and collects its result.
pub fn run_scenario(sc: &ScenarioConfig) -> Result<ExperimentResult, ExperimentError> {
    match &sc.kind {
        ScenarioKind::FullTrajectory => run_trajectory(sc),
        ScenarioKind::ReducedComparison { limit } => run_reduced_comparison(sc, *limit),
        ScenarioKind::ConvergenceSweep { limit, values } => {
            run_convergence_sweep(sc, *limit, values)
        }
        ScenarioKind::DegenerateSweep { limit, values } => run_degenerate_sweep(sc, *limit, values),
        ScenarioKind::RepellingDemo { limit, off_initial } => {
            run_repelling_demo(sc, *limit, *off_initial)
        }
        ScenarioKind::RegionGrid {
            gamma_a_range,
            b_range,
            resolution,
        } => run_region_grid(sc, *gamma_a_range, *b_range, *resolution),
    }
}

fn validate_params(
    sc: &ScenarioConfig,
    p: &ModelParams,
    warnings: &mut Vec<String>,
) -> Result<(), ExperimentError> {
    p.validate(ValidationMode::Permissive)?;
    if !p.standard_regime() {
        if sc.permissive {
            warnings.push(format!(
                "non-physical parameters (a={}, b={}, r={}, F={}, epsilon={}, gamma={}): running in permissive mode",
                p.a, p.b, p.r, p.f, p.epsilon, p.gamma
            ));
        } else {
            return Err(ExperimentError::Config(
                "parameters outside the standard regime; set permissive = true to run anyway"
                    .into(),
            ));
        }
    }
    Ok(())
}

fn classify_or_warn(p: &ModelParams, warnings: &mut Vec<String>) -> Option<StabilityReport> {
    match classify(p) {
        Ok(report) => Some(report),
        Err(err) => {
            warnings.push(format!("classification unavailable: {err}"));
            None
        }
    }
}

fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let step = (t1 - t0) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| t0 + step * i as f64).collect();
    grid[n - 1] = t1;
    grid
}

fn trajectory_series(name: &str, traj: &Trajectory<State>) -> Series {
    let grid = uniform_grid(traj.times[0], traj.end_time(), OUTPUT_GRID_POINTS);
    let samples: Vec<State> = grid.iter().map(|&t| traj.sample(t)).collect();
    Series {
        name: name.into(),
        columns: vec![
            Column::float("t", grid),
            Column::float("p", samples.iter().map(|s| s.p).collect()),
            Column::float("psi", samples.iter().map(|s| s.psi).collect()),
        ],
    }
}

fn note_truncation(traj: &Trajectory<State>, label: &str, warnings: &mut Vec<String>) {
    if traj.truncated() {
        warnings.push(format!(
            "{label}: blow-up truncation at t = {} (state norm exceeded 1e12)",
            traj.end_time()
        ));
    }
}

// ---------------------------------------------------------------------------
// FullTrajectory
// ---------------------------------------------------------------------------

fn run_trajectory(sc: &ScenarioConfig) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    let p = sc.params;
    validate_params(sc, &p, &mut res.warnings)?;
    res.classification = classify_or_warn(&p, &mut res.warnings);

    let cfg = sc.integrator.to_config(sc.t_span());
    let traj = integrate_full(&p, sc.initial_state(), &cfg)?;
    note_truncation(&traj, "trajectory", &mut res.warnings);
    res.series.push(trajectory_series("trajectory", &traj));

    res.metrics
        .insert("steps_accepted".into(), traj.stats.accepted_steps as f64);
    res.metrics
        .insert("steps_rejected".into(), traj.stats.rejected_steps as f64);
    if let Ok(ratio) = stiffness_probe(&p) {
        res.metrics.insert("stiffness_ratio".into(), ratio);
        // What an explicit fixed-step scheme would need at its stability
        // limit (|h lambda| <~ 2.8 for classical RK4); reported, not used.
        if let Ok(spec) = crate::spectral::eigen(&p) {
            let fast = spec.lambda1.re.abs().max(spec.lambda2.re.abs());
            if fast > 0.0 {
                let span = sc.time.end - sc.time.start;
                res.metrics.insert(
                    "explicit_steps_estimate".into(),
                    (span * fast / 2.785).ceil(),
                );
            }
        }
    }
    if let Ok(eq) = p.equilibrium() {
        res.metrics.insert("p_inf".into(), eq.p);
        res.metrics.insert("psi_inf".into(), 0.0);
        if !traj.truncated() {
            let end = traj.end_state();
            res.metrics
                .insert("final_p_deviation".into(), (end.p - eq.p).abs());
            res.metrics
                .insert("final_psi_deviation".into(), end.psi.abs());
        }
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// ReducedComparison
// ---------------------------------------------------------------------------

fn run_reduced_comparison(
    sc: &ScenarioConfig,
    limit: LimitKind,
) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    let p = sc.params;
    validate_params(sc, &p, &mut res.warnings)?;
    res.classification = classify_or_warn(&p, &mut res.warnings);

    let rp = build_reduction(&p, limit)?;
    let rm = rp.reduce()?;
    if !rm.valid {
        res.warnings.push(format!(
            "slow manifold is repelling in the {limit} limit; the reduced model is formal only"
        ));
    }
    let solver = ExactSolver::new(&p)?;
    let x0 = sc.initial_state();
    let x0_free = match rm.free_variable {
        FreeVariable::Psi => x0.psi,
        FreeVariable::P => x0.p,
    };

    let (t0, t1) = sc.t_span();
    let grid = uniform_grid(t0, t1, OUTPUT_GRID_POINTS);
    let mut p_full = Vec::with_capacity(grid.len());
    let mut psi_full = Vec::with_capacity(grid.len());
    let mut p_red = Vec::with_capacity(grid.len());
    let mut psi_red = Vec::with_capacity(grid.len());
    let mut distance = Vec::with_capacity(grid.len());
    for &t in &grid {
        let full = solver.flow(x0, t - t0);
        let lifted = rm.lift(rm.closed_form(x0_free, t - t0));
        p_full.push(full.p);
        psi_full.push(full.psi);
        p_red.push(lifted.p);
        psi_red.push(lifted.psi);
        distance.push(vec_norm(vec_sub(full.into(), lifted.into())));
    }

    // Metric at t* = 10 past the start (or the final time for shorter spans).
    let t_star = if t1 - t0 >= L2_TIME { t0 + L2_TIME } else { t1 };
    let full_star = solver.flow(x0, t_star - t0);
    let lifted_star = rm.lift(rm.closed_form(x0_free, t_star - t0));
    let l2_star = vec_norm(vec_sub(full_star.into(), lifted_star.into()));
    let metric_name = if (t_star - t0 - L2_TIME).abs() < 1e-12 {
        "l2_at_10"
    } else {
        res.warnings.push(format!(
            "span shorter than t = 10; L2 metric taken at t = {t_star}"
        ));
        "l2_at_end"
    };
    res.metrics.insert(metric_name.into(), l2_star);

    // Trajectory-integrated L2 over the span (trapezoid), informational.
    let mut acc = 0.0;
    for i in 1..grid.len() {
        let dt = grid[i] - grid[i - 1];
        acc += 0.5 * dt * (distance[i] * distance[i] + distance[i - 1] * distance[i - 1]);
    }
    res.metrics.insert("l2_integrated".into(), acc.sqrt());

    // Initial-layer bookkeeping: the fast relaxation rate of the full model
    // is |Dmu K| / small_param, so five time constants make a layer.
    let small = rp.small_param();
    let layer_end = t0 + 5.0 * small / rp.dmu_k().abs();
    res.metrics.insert("layer_end_time".into(), layer_end);
    if layer_end < t1 {
        let full_layer = solver.flow(x0, layer_end - t0);
        let lifted_layer = rm.lift(rm.closed_form(x0_free, layer_end - t0));
        let d_layer = vec_norm(vec_sub(full_layer.into(), lifted_layer.into()));
        res.metrics.insert("distance_at_layer_end".into(), d_layer);
        if d_layer > 0.0 {
            let ratio = distance[grid.len() - 1] / d_layer;
            res.metrics.insert("post_layer_ratio".into(), ratio);
            if rm.valid && ratio > 1.01 {
                res.warnings.push(format!(
                    "distance at the final time exceeds the end-of-layer distance \
                     (ratio {ratio:.3}); the comparison may not have settled"
                ));
            }
        }
    }
    res.metrics.insert("small_param".into(), small);

    res.series.push(Series {
        name: "comparison".into(),
        columns: vec![
            Column::float("t", grid),
            Column::float("p_full", p_full),
            Column::float("psi_full", psi_full),
            Column::float("p_reduced", p_red),
            Column::float("psi_reduced", psi_red),
            Column::float("distance", distance),
        ],
    });
    Ok(res)
}

// ---------------------------------------------------------------------------
// ConvergenceSweep
// ---------------------------------------------------------------------------

fn with_small_param(p: ModelParams, limit: LimitKind, value: f64) -> ModelParams {
    let mut p = p;
    match limit {
        LimitKind::LiquidMarket => p.epsilon = value,
        LimitKind::LiquidChartist => p.gamma = value,
    }
    p
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn fit_log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let n = data.len() as f64;
    let mean_x = data.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = data.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &data {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn run_convergence_sweep(
    sc: &ScenarioConfig,
    limit: LimitKind,
    values: &[f64],
) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    if values.is_empty() {
        return Err(ExperimentError::Config(
            "sweep values must be nonempty".into(),
        ));
    }
    // Largest to smallest, regardless of the configured order.
    let mut sweep: Vec<f64> = values.to_vec();
    sweep.sort_by(|a, b| b.partial_cmp(a).expect("finite sweep values"));

    // Attracting/degenerate does not depend on the swept parameter here,
    // so reject once up front.
    let probe = build_reduction(&with_small_param(sc.params, limit, sweep[0]), limit)?;
    match probe.manifold().kind {
        ManifoldKind::Attracting => {}
        ManifoldKind::Degenerate => {
            return Err(ExperimentError::Reduction(
                ReductionError::DegenerateManifold {
                    limit,
                    dmu_k: probe.dmu_k(),
                },
            ))
        }
        ManifoldKind::Repelling => {
            return Err(ExperimentError::Config(format!(
                "convergence sweep requires an attracting manifold in the {limit} limit"
            )))
        }
    }

    let mut l2 = Vec::with_capacity(sweep.len());
    for &value in &sweep {
        let sub = ScenarioConfig {
            name: format!("{}@{value}", sc.name),
            params: with_small_param(sc.params, limit, value),
            kind: ScenarioKind::ReducedComparison { limit },
            ..sc.clone()
        };
        let sub_res = run_reduced_comparison(&sub, limit)?;
        let metric = sub_res
            .metric("l2_at_10")
            .or_else(|| sub_res.metric("l2_at_end"))
            .expect("comparison always records an L2 metric");
        l2.push(metric);
        for w in sub_res.warnings {
            let tagged = format!("{value}: {w}");
            if !res.warnings.contains(&tagged) {
                res.warnings.push(tagged);
            }
        }
    }

    let strictly_decreasing = l2.windows(2).all(|w| w[1] < w[0]);
    if !strictly_decreasing {
        res.warnings
            .push("L2 distances are not strictly decreasing along the sweep".into());
    }
    res.metrics.insert(
        "strictly_decreasing".into(),
        if strictly_decreasing { 1.0 } else { 0.0 },
    );

    // Asymptotic order emerges only for small parameters: fit the smallest
    // half of the values.
    let half = sweep.len().div_ceil(2).max(2).min(sweep.len());
    let tail: Vec<(f64, f64)> = sweep
        .iter()
        .copied()
        .zip(l2.iter().copied())
        .skip(sweep.len() - half)
        .collect();
    match fit_log_log_slope(&tail) {
        Some(order) => {
            res.metrics.insert("fitted_order".into(), order);
        }
        None => res
            .warnings
            .push("fitted_order not available (needs at least two sweep values)".into()),
    }

    let value_column = match limit {
        LimitKind::LiquidMarket => "epsilon",
        LimitKind::LiquidChartist => "gamma",
    };
    res.series.push(Series {
        name: "sweep".into(),
        columns: vec![
            Column::float(value_column, sweep),
            Column::float("l2_at_10", l2),
        ],
    });
    Ok(res)
}

// ---------------------------------------------------------------------------
// DegenerateSweep
// ---------------------------------------------------------------------------

fn run_degenerate_sweep(
    sc: &ScenarioConfig,
    limit: LimitKind,
    values: &[f64],
) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    if values.is_empty() {
        return Err(ExperimentError::Config(
            "sweep values must be nonempty".into(),
        ));
    }
    let p = sc.params;
    let degenerate = match limit {
        LimitKind::LiquidMarket => {
            (p.a * p.gamma - p.b).abs() <= 1e-12 * ((p.a * p.gamma).abs() + p.b.abs())
        }
        LimitKind::LiquidChartist => {
            (p.epsilon - p.b).abs() <= 1e-12 * (p.epsilon.abs() + p.b.abs())
        }
    };
    if !degenerate {
        return Err(ExperimentError::Config(match limit {
            LimitKind::LiquidMarket => format!(
                "degenerate sweep requires a*gamma = b, got a*gamma = {} and b = {}",
                p.a * p.gamma,
                p.b
            ),
            LimitKind::LiquidChartist => format!(
                "degenerate sweep requires epsilon = b, got epsilon = {} and b = {}",
                p.epsilon, p.b
            ),
        }));
    }

    // No slow manifold exists here; make sure the reduction machinery agrees.
    let sample = with_small_param(p, limit, values[0]);
    match build_reduction(&sample, limit)?.projector() {
        Err(ReductionError::DegenerateManifold { .. }) => {}
        other => {
            return Err(ExperimentError::Config(format!(
                "expected a degenerate manifold, projector returned {other:?}"
            )))
        }
    }
    res.warnings.push(format!(
        "no slow manifold exists at the degenerate parameter set ({}); integrating the full model only",
        match limit {
            LimitKind::LiquidMarket => "a*gamma = b",
            LimitKind::LiquidChartist => "epsilon = b",
        }
    ));

    let value_label = match limit {
        LimitKind::LiquidMarket => "eps",
        LimitKind::LiquidChartist => "gamma",
    };
    for &value in values {
        let pv = with_small_param(p, limit, value);
        let sub = ScenarioConfig {
            params: pv,
            ..sc.clone()
        };
        validate_params(&sub, &pv, &mut res.warnings)?;
        let cfg = sc.integrator.to_config(sc.t_span());
        let traj = integrate_full(&pv, sc.initial_state(), &cfg)?;
        let label = format!("trajectory_{value_label}_{value}");
        note_truncation(&traj, &label, &mut res.warnings);
        res.series.push(trajectory_series(&label, &traj));
    }
    res.metrics.insert("runs".into(), values.len() as f64);
    Ok(res)
}

// ---------------------------------------------------------------------------
// RepellingDemo
// ---------------------------------------------------------------------------

fn residual_column(rp: &ReductionProblem, states: &[State]) -> Vec<f64> {
    states.iter().map(|s| rp.manifold_residual(*s)).collect()
}

fn run_repelling_demo(
    sc: &ScenarioConfig,
    limit: LimitKind,
    off_initial: State,
) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    let p = sc.params;
    validate_params(sc, &p, &mut res.warnings)?;
    res.classification = classify_or_warn(&p, &mut res.warnings);

    let rp = build_reduction(&p, limit)?;
    match rp.manifold().kind {
        ManifoldKind::Repelling => {}
        ManifoldKind::Attracting => {
            return Err(ExperimentError::Config(format!(
                "repelling demo requires a repelling manifold; the {limit} manifold is attracting"
            )))
        }
        ManifoldKind::Degenerate => {
            return Err(ExperimentError::Reduction(
                ReductionError::DegenerateManifold {
                    limit,
                    dmu_k: rp.dmu_k(),
                },
            ))
        }
    }
    let rm = rp.reduce()?;

    let x0_on = sc.initial_state();
    let on_res0 = rp.manifold_residual(x0_on);
    if on_res0 > 1e-9 * (1.0 + vec_norm(x0_on.into())) {
        res.warnings.push(format!(
            "configured on-manifold start has residual {on_res0:e}"
        ));
    }

    let cfg = sc.integrator.to_config(sc.t_span());
    let full_on = integrate_full(&p, x0_on, &cfg)?;
    let full_off = integrate_full(&p, off_initial, &cfg)?;
    note_truncation(&full_on, "on-manifold run", &mut res.warnings);
    note_truncation(&full_off, "off-manifold run", &mut res.warnings);

    let x0_free = match rm.free_variable {
        FreeVariable::Psi => x0_on.psi,
        FreeVariable::P => x0_on.p,
    };
    let reduced = integrate_reduced(&rm, x0_free, &cfg)?;
    if reduced.truncated() {
        res.warnings.push(format!(
            "formal reduced run: blow-up truncation at t = {}",
            reduced.end_time()
        ));
    }

    let mut max_residuals = BTreeMap::new();
    for (label, traj) in [
        ("full_on_manifold", &full_on),
        ("full_off_manifold", &full_off),
    ] {
        let grid = uniform_grid(traj.times[0], traj.end_time(), OUTPUT_GRID_POINTS);
        let states: Vec<State> = grid.iter().map(|&t| traj.sample(t)).collect();
        let residual = residual_column(&rp, &states);
        max_residuals.insert(label, residual.iter().copied().fold(0.0_f64, f64::max));
        res.series.push(Series {
            name: label.into(),
            columns: vec![
                Column::float("t", grid),
                Column::float("p", states.iter().map(|s| s.p).collect()),
                Column::float("psi", states.iter().map(|s| s.psi).collect()),
                Column::float("residual", residual),
            ],
        });
    }

    let grid = uniform_grid(reduced.times[0], reduced.end_time(), OUTPUT_GRID_POINTS);
    let free_values: Vec<f64> = grid.iter().map(|&t| reduced.sample(t)).collect();
    let lifted: Vec<State> = free_values.iter().map(|&x| rm.lift(x)).collect();
    let residual = residual_column(&rp, &lifted);
    let max_reduced = residual.iter().copied().fold(0.0_f64, f64::max);
    res.series.push(Series {
        name: "reduced_formal".into(),
        columns: vec![
            Column::float("t", grid),
            Column::float("value", free_values),
            Column::float("p", lifted.iter().map(|s| s.p).collect()),
            Column::float("psi", lifted.iter().map(|s| s.psi).collect()),
            Column::float("residual", residual),
        ],
    });

    let max_on = max_residuals["full_on_manifold"];
    let max_off = max_residuals["full_off_manifold"];
    res.metrics.insert("max_residual_on".into(), max_on);
    res.metrics.insert("max_residual_off".into(), max_off);
    res.metrics
        .insert("max_residual_reduced".into(), max_reduced);
    res.metrics.insert("initial_residual_on".into(), on_res0);
    res.metrics.insert(
        "initial_residual_off".into(),
        rp.manifold_residual(off_initial),
    );
    res.metrics.insert(
        "off_departs_faster".into(),
        if max_off > max_on { 1.0 } else { 0.0 },
    );
    if max_off <= max_on {
        res.warnings.push(
            "off-manifold run did not reach a larger maximum residual than the on-manifold run"
                .into(),
        );
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// RegionGrid
// ---------------------------------------------------------------------------

fn run_region_grid(
    sc: &ScenarioConfig,
    gamma_a_range: (f64, f64),
    b_range: (f64, f64),
    resolution: usize,
) -> Result<ExperimentResult, ExperimentError> {
    let mut res = ExperimentResult::new();
    let grid = stability_region_grid(gamma_a_range, b_range, resolution, sc.params.epsilon)?;

    let mut gamma_a = Vec::with_capacity(resolution * resolution);
    let mut b = Vec::with_capacity(resolution * resolution);
    let mut region = Vec::with_capacity(resolution * resolution);
    for (j, &bv) in grid.b.iter().enumerate() {
        for (i, &gv) in grid.gamma_a.iter().enumerate() {
            gamma_a.push(gv);
            b.push(bv);
            region.push(grid.label_at(i, j).to_string());
        }
    }
    let border_cells = region.iter().filter(|r| *r == "Border").count();
    res.series.push(Series {
        name: "region_grid".into(),
        columns: vec![
            Column::float("gamma_a", gamma_a),
            Column::float("b", b),
            Column::text("region", region),
        ],
    });
    for (name, curve) in [
        ("boundary_stability", &grid.stability_border),
        ("boundary_oscillation_lower", &grid.oscillation_lower),
        ("boundary_oscillation_upper", &grid.oscillation_upper),
    ] {
        res.series.push(Series {
            name: name.into(),
            columns: vec![
                Column::float("gamma_a", curve.iter().map(|c| c.0).collect()),
                Column::float("b", curve.iter().map(|c| c.1).collect()),
            ],
        });
    }
    res.metrics
        .insert("cells_total".into(), (resolution * resolution) as f64);
    res.metrics
        .insert("cells_border".into(), border_cells as f64);
    res.metrics.insert("epsilon".into(), sc.params.epsilon);
    Ok(res)
}

/// Convenience wrapper running the pointwise reduction identity check.
pub fn reduction_identity_report(
    p: &ModelParams,
    limit: LimitKind,
    samples: usize,
) -> Result<crate::reduction::HilbertReport, ReductionError> {
    let rp = build_reduction(p, limit)?;
    hilbert_check(&rp, samples)
}

/// True when a classification says "stable" outright (not border).
pub fn is_stable(report: &StabilityReport) -> bool {
    report.stable == Verdict::Yes
}
