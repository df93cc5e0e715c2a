//! Adaptive implicit ODE integration for the full 2-D model and the 1-D
//! reduced models.
//!
//! The adaptive method is the classical 5-stage, L-stable SDIRK scheme of
//! order 4 with diagonal coefficient 1/4 and an embedded 3rd-order error
//! estimator (Hairer & Wanner). Each implicit stage is resolved by a
//! simplified Newton iteration; for the affine systems integrated here a
//! single 2x2 (or scalar) linear solve per stage suffices. The error
//! estimate is filtered through `(I - h*gamma*J)^{-1}` before the step-size
//! controller sees it, which keeps the estimate meaningful on stiff steps.
//!
//! Dense output between accepted steps is cubic Hermite interpolation on
//! the stored state/derivative pairs (3rd-order accurate).
//!
//! A state whose norm exceeds [`BLOW_UP_THRESHOLD`] truncates the
//! trajectory instead of raising an error, so diverging runs still emit
//! partial data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelParams, State, ValidationMode};
use crate::reduction::ReducedModel;
use crate::spectral::{eigen, SpectralError};

/// State norm beyond which a trajectory is truncated as a blow-up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Steps smaller than this fraction of the span abort the integration.
pub const MIN_STEP_FRACTION: f64 = 1e-14;

/// SDIRK diagonal coefficient.
const GAMMA: f64 = 0.25;

/// Lower-triangular stage coefficients (Hairer & Wanner's L-stable SDIRK4).
const A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
// Stage times c = (1/4, 3/4, 11/20, 1/2, 1) are implicit: the systems
// integrated here are autonomous.
/// 4th-order weights (stiffly accurate: last row of `A`).
const B: [f64; 5] = A[4];
/// Embedded 3rd-order weights.
const B_HAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;
const MAX_NEWTON_ITERATIONS: usize = 10;

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Embedded SDIRK4(3), adaptive step size. The default.
    AdaptiveImplicit,
    /// Classical RK4 at a fixed step of `max_step`; reference scheme for
    /// step-count contrasts on stiff problems.
    FixedStepReference,
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step size; also the fixed step of
    /// [`Method::FixedStepReference`].
    pub max_step: f64,
    pub t_span: (f64, f64),
    /// Starting step; `None` selects one automatically.
    pub initial_step: Option<f64>,
    pub method: Method,
}

impl IntegratorConfig {
    pub fn new(t_span: (f64, f64)) -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            t_span,
            initial_step: None,
            method: Method::AdaptiveImplicit,
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(IntegrateError::InvalidConfig("rel_tol must be > 0"));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(IntegrateError::InvalidConfig("abs_tol must be > 0"));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(IntegrateError::InvalidConfig("max_step must be > 0"));
        }
        let span_ok =
            self.t_span.0.is_finite() && self.t_span.1.is_finite() && self.t_span.1 > self.t_span.0;
        if !span_ok {
            return Err(IntegrateError::InvalidConfig("t_span must satisfy t1 > t0"));
        }
        if let Some(h0) = self.initial_step {
            if !(h0 > 0.0 && h0.is_finite()) {
                return Err(IntegrateError::InvalidConfig("initial_step must be > 0"));
            }
        }
        if self.method == Method::FixedStepReference && !self.max_step.is_finite() {
            return Err(IntegrateError::InvalidConfig(
                "fixed-step reference method needs a finite max_step",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("Newton iteration failed to converge at t = {t}")]
    NewtonStall { t: f64 },
}

/// Why a trajectory ends before the requested final time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// State norm exceeded [`BLOW_UP_THRESHOLD`].
    BlowUp,
}

/// Step accounting for a finished integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    pub newton_iterations: usize,
}

/// Time-indexed solution samples plus metadata.
///
/// `states` holds one entry per accepted step; `derivs` the matching
/// right-hand-side values used for dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub derivs: Vec<S>,
    pub method: Method,
    pub stats: IntegrationStats,
    /// Set when the run stopped early; the last sample is the truncation point.
    pub truncation: Option<Truncation>,
}

impl<S: Copy> Trajectory<S> {
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn end_state(&self) -> S {
        *self.states.last().expect("non-empty trajectory")
    }

    pub fn truncated(&self) -> bool {
        self.truncation.is_some()
    }
}

/// Right-hand side and Jacobian of a (small) autonomous system.
trait OdeSystem<const N: usize> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];
    fn jacobian(&self, y: &[f64; N]) -> [[f64; N]; N];
}

struct FullSystem {
    matrix: [[f64; 2]; 2],
    offset: [f64; 2],
}

impl OdeSystem<2> for FullSystem {
    fn rhs(&self, y: &[f64; 2]) -> [f64; 2] {
        [
            self.matrix[0][0] * y[0] + self.matrix[0][1] * y[1] + self.offset[0],
            self.matrix[1][0] * y[0] + self.matrix[1][1] * y[1] + self.offset[1],
        ]
    }

    fn jacobian(&self, _y: &[f64; 2]) -> [[f64; 2]; 2] {
        self.matrix
    }
}

struct ScalarSystem {
    slope: f64,
    intercept: f64,
}

impl OdeSystem<1> for ScalarSystem {
    fn rhs(&self, y: &[f64; 1]) -> [f64; 1] {
        [self.slope * y[0] + self.intercept]
    }

    fn jacobian(&self, _y: &[f64; 1]) -> [[f64; 1]; 1] {
        [[self.slope]]
    }
}

/// Integrates the full model. Blow-up truncates the trajectory (recorded in
/// the result); a vanishing step size is an error.
pub fn integrate_full(
    p: &ModelParams,
    x0: State,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<State>, IntegrateError> {
    cfg.validate()?;
    p.validate(ValidationMode::Permissive)?;
    let sys = p.affine_form()?;
    let raw = integrate(
        &FullSystem {
            matrix: sys.matrix,
            offset: sys.offset,
        },
        [x0.p, x0.psi],
        cfg,
    )?;
    Ok(Trajectory {
        times: raw.times,
        states: raw.states.iter().map(|y| State::new(y[0], y[1])).collect(),
        derivs: raw.derivs.iter().map(|y| State::new(y[0], y[1])).collect(),
        method: raw.method,
        stats: raw.stats,
        truncation: raw.truncation,
    })
}

/// Integrates a reduced 1-D model in the free variable.
pub fn integrate_reduced(
    rm: &ReducedModel,
    x0: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory<f64>, IntegrateError> {
    cfg.validate()?;
    let raw = integrate(
        &ScalarSystem {
            slope: rm.slope,
            intercept: rm.intercept,
        },
        [x0],
        cfg,
    )?;
    Ok(Trajectory {
        times: raw.times,
        states: raw.states.iter().map(|y| y[0]).collect(),
        derivs: raw.derivs.iter().map(|y| y[0]).collect(),
        method: raw.method,
        stats: raw.stats,
        truncation: raw.truncation,
    })
}

/// Stiffness ratio `max |Re lambda| / min |Re lambda|` of the spectrum;
/// infinite when a real part vanishes within tolerance.
pub fn stiffness_probe(p: &ModelParams) -> Result<f64, SpectralError> {
    let spec = eigen(p)?;
    let re1 = spec.lambda1.re.abs();
    let re2 = spec.lambda2.re.abs();
    let max = re1.max(re2);
    let min = re1.min(re2);
    if min <= 1e-14 * max.max(1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

// ---------------------------------------------------------------------------
// Core stepper, generic over the (tiny) system dimension.
// ---------------------------------------------------------------------------

fn integrate<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    y0: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<[f64; N]>, IntegrateError> {
    match cfg.method {
        Method::AdaptiveImplicit => integrate_sdirk(sys, y0, cfg),
        Method::FixedStepReference => integrate_rk4_fixed(sys, y0, cfg),
    }
}

fn norm_inf<const N: usize>(y: &[f64; N]) -> f64 {
    y.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Weighted RMS error norm; a value <= 1 accepts the step.
fn error_norm<const N: usize>(
    err: &[f64; N],
    y: &[f64; N],
    y_new: &[f64; N],
    cfg: &IntegratorConfig,
) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        let ratio = err[i] / scale;
        sum += ratio * ratio;
    }
    (sum / N as f64).sqrt()
}

/// Solves the N x N system `(I - h*gamma*J) x = rhs` by Gaussian elimination
/// with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_stage_matrix<const N: usize>(
    h_gamma: f64,
    jac: &[[f64; N]; N],
    rhs: &[f64; N],
) -> Option<[f64; N]> {
    let mut m = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            m[i][j] = if i == j { 1.0 } else { 0.0 } - h_gamma * jac[i][j];
        }
    }
    let mut x = *rhs;
    for col in 0..N {
        let mut pivot = col;
        for row in col + 1..N {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        x.swap(col, pivot);
        for row in col + 1..N {
            let factor = m[row][col] / m[col][col];
            for j in col..N {
                m[row][j] -= factor * m[col][j];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..N).rev() {
        for row in 0..col {
            let factor = m[row][col] / m[col][col];
            x[row] -= factor * x[col];
        }
        x[col] /= m[col][col];
    }
    Some(x)
}

struct StepOutcome<const N: usize> {
    y_new: [f64; N],
    err_norm: f64,
    rhs_evals: usize,
    newton_iters: usize,
}

/// One SDIRK step attempt from `(t, y)` with step `h`.
fn sdirk_step<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<StepOutcome<N>>, IntegrateError> {
    let jac = sys.jacobian(y);
    let mut k = [[0.0; N]; 5];
    let mut rhs_evals = 0;
    let mut newton_iters = 0;

    for stage in 0..5 {
        // Y_i = y + h * sum_{j<i} a_ij k_j + h*gamma*k_i
        let mut base = *y;
        for j in 0..stage {
            for n in 0..N {
                base[n] += h * A[stage][j] * k[j][n];
            }
        }
        // Simplified Newton on g(z) = f(base + h*gamma*z) - z = 0. For the
        // affine systems integrated here this converges in one update.
        let mut z = if stage == 0 { sys.rhs(y) } else { k[stage - 1] };
        rhs_evals += usize::from(stage == 0);
        let mut converged = false;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let mut arg = base;
            for n in 0..N {
                arg[n] += h * GAMMA * z[n];
            }
            let f = sys.rhs(&arg);
            rhs_evals += 1;
            let mut residual = [0.0; N];
            for n in 0..N {
                residual[n] = f[n] - z[n];
            }
            if !finite(&residual) {
                return Ok(None); // step too large, reject
            }
            let Some(delta) = solve_stage_matrix(h * GAMMA, &jac, &residual) else {
                return Ok(None);
            };
            for n in 0..N {
                z[n] += delta[n];
            }
            newton_iters += 1;
            // Converged when the correction's contribution to the step,
            // h*delta, is negligible against the error-test scale. An
            // absolute test on delta would stall on the rounding floor of
            // stiff stages, where the right-hand side cancels large terms.
            let mut contribution = [0.0; N];
            for n in 0..N {
                contribution[n] = h * delta[n];
            }
            if error_norm(&contribution, y, y, cfg) <= 0.03 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(IntegrateError::NewtonStall { t });
        }
        k[stage] = z;
    }

    let mut y_new = *y;
    let mut err = [0.0; N];
    for stage in 0..5 {
        for n in 0..N {
            y_new[n] += h * B[stage] * k[stage][n];
            err[n] += h * (B[stage] - B_HAT[stage]) * k[stage][n];
        }
    }
    if !finite(&y_new) {
        return Ok(None);
    }
    // Filter the raw estimate through (I - h*gamma*J)^{-1} so it stays
    // informative on strongly damped steps.
    let err = solve_stage_matrix(h * GAMMA, &jac, &err).unwrap_or(err);
    let err_norm = error_norm(&err, y, &y_new, cfg);
    Ok(Some(StepOutcome {
        y_new,
        err_norm,
        rhs_evals,
        newton_iters,
    }))
}

fn initial_step_size<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    y0: &[f64; N],
    cfg: &IntegratorConfig,
) -> f64 {
    let span = cfg.t_span.1 - cfg.t_span.0;
    if let Some(h0) = cfg.initial_step {
        return h0.min(span).min(cfg.max_step);
    }
    let f0 = sys.rhs(y0);
    let scale = cfg.abs_tol + cfg.rel_tol * norm_inf(y0);
    let rate = norm_inf(&f0) / scale;
    let h = if rate > 0.0 { 0.01 / rate } else { 1e-3 * span };
    let upper = span.min(cfg.max_step);
    h.clamp((MIN_STEP_FRACTION * span * 10.0).min(upper), upper)
}

fn integrate_sdirk<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    y0: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<[f64; N]>, IntegrateError> {
    let (t0, t1) = cfg.t_span;
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut h = initial_step_size(sys, &y0, cfg);

    let mut times = vec![t0];
    let mut states = vec![y0];
    let mut derivs = vec![sys.rhs(&y0)];
    let mut stats = IntegrationStats {
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evaluations: 1,
        newton_iterations: 0,
    };
    let mut truncation = None;

    while t < t1 {
        h = h.min(cfg.max_step).min(t1 - t);
        if h < MIN_STEP_FRACTION * span {
            return Err(IntegrateError::StepSizeUnderflow { t, h });
        }
        match sdirk_step(sys, t, &y, h, cfg)? {
            Some(outcome) => {
                stats.rhs_evaluations += outcome.rhs_evals;
                stats.newton_iterations += outcome.newton_iters;
                let err = outcome.err_norm;
                if err <= 1.0 {
                    t = if t1 - (t + h) < MIN_STEP_FRACTION * span {
                        t1
                    } else {
                        t + h
                    };
                    y = outcome.y_new;
                    times.push(t);
                    states.push(y);
                    derivs.push(sys.rhs(&y));
                    stats.rhs_evaluations += 1;
                    stats.accepted_steps += 1;
                    if norm_inf(&y) > BLOW_UP_THRESHOLD {
                        truncation = Some(Truncation::BlowUp);
                        break;
                    }
                } else {
                    stats.rejected_steps += 1;
                }
                let scale = if err > 0.0 {
                    SAFETY * err.powf(-0.25)
                } else {
                    MAX_SCALE
                };
                let scale = scale.clamp(MIN_SCALE, if err <= 1.0 { MAX_SCALE } else { 1.0 });
                h *= scale;
            }
            None => {
                // Non-finite intermediate values: either shrink, or accept
                // that the state has blown up when it is already huge.
                stats.rejected_steps += 1;
                if norm_inf(&y) > BLOW_UP_THRESHOLD * 1e-3 {
                    truncation = Some(Truncation::BlowUp);
                    break;
                }
                h *= 0.25;
            }
        }
    }

    Ok(Trajectory {
        times,
        states,
        derivs,
        method: Method::AdaptiveImplicit,
        stats,
        truncation,
    })
}

fn integrate_rk4_fixed<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    y0: [f64; N],
    cfg: &IntegratorConfig,
) -> Result<Trajectory<[f64; N]>, IntegrateError> {
    let (t0, t1) = cfg.t_span;
    let span = t1 - t0;
    let n_steps = (span / cfg.max_step).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;
    if h < MIN_STEP_FRACTION * span {
        return Err(IntegrateError::StepSizeUnderflow { t: t0, h });
    }

    let mut y = y0;
    let mut times = vec![t0];
    let mut states = vec![y0];
    let mut derivs = vec![sys.rhs(&y0)];
    let mut stats = IntegrationStats {
        accepted_steps: 0,
        rejected_steps: 0,
        rhs_evaluations: 1,
        newton_iterations: 0,
    };
    let mut truncation = None;

    for step in 1..=n_steps {
        let k1 = sys.rhs(&y);
        let mut y2 = y;
        for n in 0..N {
            y2[n] += 0.5 * h * k1[n];
        }
        let k2 = sys.rhs(&y2);
        let mut y3 = y;
        for n in 0..N {
            y3[n] += 0.5 * h * k2[n];
        }
        let k3 = sys.rhs(&y3);
        let mut y4 = y;
        for n in 0..N {
            y4[n] += h * k3[n];
        }
        let k4 = sys.rhs(&y4);
        for n in 0..N {
            y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
        stats.rhs_evaluations += 4;
        stats.accepted_steps += 1;
        if !finite(&y) {
            // Overflowed mid-step; the last stored point is the truncation.
            truncation = Some(Truncation::BlowUp);
            break;
        }
        let t = if step == n_steps {
            t1
        } else {
            t0 + h * step as f64
        };
        times.push(t);
        states.push(y);
        derivs.push(sys.rhs(&y));
        stats.rhs_evaluations += 1;
        if norm_inf(&y) > BLOW_UP_THRESHOLD {
            truncation = Some(Truncation::BlowUp);
            break;
        }
    }

    Ok(Trajectory {
        times,
        states,
        derivs,
        method: Method::FixedStepReference,
        stats,
        truncation,
    })
}

// ---------------------------------------------------------------------------
// Dense output
// ---------------------------------------------------------------------------

fn hermite(t: f64, t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

fn locate(times: &[f64], t: f64) -> usize {
    match times.binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times")) {
        Ok(i) => i.min(times.len() - 2),
        Err(i) => i.saturating_sub(1).min(times.len() - 2),
    }
}

impl Trajectory<State> {
    /// Cubic-Hermite sample at an arbitrary time inside the covered span.
    pub fn sample(&self, t: f64) -> State {
        if self.times.len() == 1 {
            return self.states[0];
        }
        let t = t.clamp(self.times[0], self.end_time());
        let i = locate(&self.times, t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        State::new(
            hermite(
                t,
                t0,
                t1,
                self.states[i].p,
                self.states[i + 1].p,
                self.derivs[i].p,
                self.derivs[i + 1].p,
            ),
            hermite(
                t,
                t0,
                t1,
                self.states[i].psi,
                self.states[i + 1].psi,
                self.derivs[i].psi,
                self.derivs[i + 1].psi,
            ),
        )
    }
}

impl Trajectory<f64> {
    pub fn sample(&self, t: f64) -> f64 {
        if self.times.len() == 1 {
            return self.states[0];
        }
        let t = t.clamp(self.times[0], self.end_time());
        let i = locate(&self.times, t);
        hermite(
            t,
            self.times[i],
            self.times[i + 1],
            self.states[i],
            self.states[i + 1],
            self.derivs[i],
            self.derivs[i + 1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{vec_norm, vec_sub};
    use crate::reduction::{build_reduction, LimitKind};
    use crate::spectral::{classify, exact_solution, ExactSolver, Verdict};
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn params(a: f64, b: f64, epsilon: f64, gamma: f64) -> ModelParams {
        ModelParams::new(a, b, 0.1, 3.0, epsilon, gamma)
    }

    fn cfg(t1: f64) -> IntegratorConfig {
        IntegratorConfig::new((0.0, t1))
    }

    #[test]
    fn endpoint_matches_closed_form() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let x0 = State::new(3.0, 0.1);
        let c = cfg(10.0);
        let traj = integrate_full(&p, x0, &c).unwrap();
        assert!(!traj.truncated());
        assert_eq!(traj.end_time(), 10.0);
        let exact = exact_solution(&p, x0, 10.0).unwrap();
        let err = vec_norm(vec_sub(traj.end_state().into(), exact.into()));
        let rel = err / (1.0 + vec_norm(exact.into()));
        assert!(rel <= 10.0 * c.rel_tol, "rel error {rel:e}");
    }

    #[test]
    fn tight_tolerance_reaches_high_accuracy() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let x0 = State::new(3.0, 0.1);
        let c = cfg(10.0).with_tolerances(1e-10, 1e-12);
        let traj = integrate_full(&p, x0, &c).unwrap();
        let exact = exact_solution(&p, x0, 10.0).unwrap();
        let err = vec_norm(vec_sub(traj.end_state().into(), exact.into()));
        assert!(err <= 1e-7, "err {err:e}");
    }

    #[test]
    fn equilibrium_start_stays_constant() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let eq = p.equilibrium().unwrap();
        let traj = integrate_full(&p, eq, &cfg(5.0)).unwrap();
        for s in &traj.states {
            assert!((s.p - eq.p).abs() <= 1e-10);
            assert!(s.psi.abs() <= 1e-10);
        }
    }

    #[test]
    fn region_v_run_records_blow_up_truncation() {
        let p = params(0.01, 1.25, 1.0, 1.0);
        let traj = integrate_full(&p, State::new(3.0, 0.1), &cfg(200.0)).unwrap();
        assert_eq!(traj.truncation, Some(Truncation::BlowUp));
        assert!(traj.end_time() < 200.0);
        assert!(traj.states.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn oracle_equivalence_on_random_stable_draws() {
        let mut rng = StdRng::seed_from_u64(1234);
        let c = cfg(10.0);
        let mut checked = 0;
        while checked < 200 {
            let p = ModelParams::new(
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
                rng.random_range(0.01..0.5),
                rng.random_range(0.5..5.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.1..3.0),
            );
            if classify(&p).unwrap().stable != Verdict::Yes {
                continue;
            }
            let x0 = State::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let traj = integrate_full(&p, x0, &c).unwrap();
            if traj.truncated() {
                continue;
            }
            let exact = exact_solution(&p, x0, 10.0).unwrap();
            let err = vec_norm(vec_sub(traj.end_state().into(), exact.into()));
            let rel = err / (1.0 + vec_norm(exact.into()));
            assert!(rel <= 100.0 * c.rel_tol, "rel {rel:e} for {p:?}");
            checked += 1;
        }
    }

    #[test]
    fn tolerance_tightening_never_hurts() {
        let mut rng = StdRng::seed_from_u64(77);
        let mut checked = 0;
        while checked < 20 {
            let p = ModelParams::new(
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
                rng.random_range(0.01..0.5),
                rng.random_range(0.5..5.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.1..3.0),
            );
            if classify(&p).unwrap().stable != Verdict::Yes {
                continue;
            }
            let x0 = State::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let exact = exact_solution(&p, x0, 10.0).unwrap();
            let mut prev_err = f64::INFINITY;
            for rel_tol in [1e-4, 5e-5, 2.5e-5, 1.25e-5] {
                let c = cfg(10.0).with_tolerances(rel_tol, rel_tol * 1e-2);
                let traj = integrate_full(&p, x0, &c).unwrap();
                let err = vec_norm(vec_sub(traj.end_state().into(), exact.into()));
                assert!(
                    err <= prev_err * 1.1 + 1e-15,
                    "error grew from {prev_err:e} to {err:e} for {p:?}"
                );
                prev_err = err;
            }
            checked += 1;
        }
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let p = params(1.7, 2.3, 0.4, 0.9);
        let x0 = State::new(1.0, -2.0);
        let a = integrate_full(&p, x0, &cfg(10.0)).unwrap();
        let b = integrate_full(&p, x0, &cfg(10.0)).unwrap();
        assert_eq!(a.times.len(), b.times.len());
        for i in 0..a.times.len() {
            assert_eq!(a.times[i].to_bits(), b.times[i].to_bits());
            assert_eq!(a.states[i].p.to_bits(), b.states[i].p.to_bits());
            assert_eq!(a.states[i].psi.to_bits(), b.states[i].psi.to_bits());
        }
    }

    #[test]
    fn stiff_runs_stay_cheap() {
        let p = params(2.0, 1.0, 1e-4, 1.0);
        let traj = integrate_full(&p, State::new(3.0, 0.1), &cfg(10.0)).unwrap();
        assert!(
            traj.stats.accepted_steps < 10_000,
            "accepted {} steps",
            traj.stats.accepted_steps
        );
        // The reference contrast: an explicit method would be stability
        // limited to h ~ 2.8/|lambda_fast|, i.e. ~1e6 steps over this span.
        let ratio = stiffness_probe(&p).unwrap();
        assert!(ratio > 100.0, "stiffness ratio {ratio}");
    }

    #[test]
    fn stiffness_probe_examples() {
        // Complex pair has equal real parts.
        assert!((stiffness_probe(&params(2.0, 1.0, 1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let ratio = stiffness_probe(&params(2.0, 1.0, 0.001, 1.0)).unwrap();
        assert!(ratio > 100.0);
        // Purely imaginary pair: zero real parts -> infinite ratio.
        assert!(stiffness_probe(&params(1.0, 2.0, 1.0, 1.0))
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn reduced_integration_matches_closed_form() {
        let rm = build_reduction(&params(2.0, 1.0, 1.0, 1.0), LimitKind::LiquidMarket)
            .unwrap()
            .reduce()
            .unwrap();
        let traj = integrate_reduced(&rm, 0.1, &cfg(1.0)).unwrap();
        assert!((traj.end_state() - 0.1 * (-2.0f64).exp()).abs() <= 1e-8);

        // Fixed-point start stays put.
        let traj = integrate_reduced(&rm, 0.0, &cfg(5.0)).unwrap();
        for v in &traj.states {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn repelling_formal_reduction_grows_at_the_exact_rate() {
        let rm = build_reduction(&params(1.0, 1.3, 0.1, 1.0), LimitKind::LiquidMarket)
            .unwrap()
            .reduce()
            .unwrap();
        assert!(!rm.valid);
        let traj = integrate_reduced(&rm, 0.1, &cfg(1.0)).unwrap();
        let factor = traj.end_state() / 0.1;
        let expected = (10.0f64 / 3.0).exp();
        assert!(
            (factor - expected).abs() / expected <= 1e-6,
            "growth factor {factor} vs {expected}"
        );
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let x0 = State::new(3.0, 0.1);
        let solver = ExactSolver::new(&p).unwrap();
        let traj = integrate_full(&p, x0, &cfg(10.0)).unwrap();
        for i in 0..=100 {
            let t = 10.0 * i as f64 / 100.0;
            let got = traj.sample(t);
            let want = solver.flow(x0, t);
            let err = vec_norm(vec_sub(got.into(), want.into()));
            assert!(err <= 1e-6, "dense output error {err:e} at t = {t}");
        }
    }

    #[test]
    fn fixed_step_reference_matches_closed_form() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let x0 = State::new(3.0, 0.1);
        let mut c = cfg(10.0);
        c.method = Method::FixedStepReference;
        c.max_step = 0.01;
        let traj = integrate_full(&p, x0, &c).unwrap();
        assert_eq!(traj.stats.accepted_steps, 1000);
        let exact = exact_solution(&p, x0, 10.0).unwrap();
        let err = vec_norm(vec_sub(traj.end_state().into(), exact.into()));
        assert!(err <= 1e-8, "err {err:e}");
    }

    #[test]
    fn vanishing_steps_abort_with_underflow_error() {
        let p = params(2.0, 1.0, 1.0, 1.0);
        let mut c = cfg(1.0);
        c.max_step = 1e-16; // below the 1e-14 * span floor
        assert!(matches!(
            integrate_full(&p, State::new(3.0, 0.1), &c),
            Err(IntegrateError::StepSizeUnderflow { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(10.0);
        c.rel_tol = 0.0;
        assert!(matches!(
            c.validate(),
            Err(IntegrateError::InvalidConfig(_))
        ));
        let mut c = cfg(10.0);
        c.t_span = (1.0, 1.0);
        assert!(c.validate().is_err());
        let mut c = cfg(10.0);
        c.method = Method::FixedStepReference;
        assert!(c.validate().is_err()); // needs finite max_step
    }
}
