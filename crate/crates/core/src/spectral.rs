//! Closed-form eigen-analysis, exact trajectories and stability regions.
//!
//! For the matrix form `X' = A X + B` the eigenvalues of `A` are
//!
//! ```text
//! lambda_{1,2} = ( -a*gamma + b - epsilon -/+ sqrt(disc) ) / (2 gamma epsilon)
//! disc         = (a*gamma - b + epsilon)^2 - 4 a gamma epsilon
//! ```
//!
//! with eigenvectors normalized to second component 1. The exact solution is
//! evaluated as `X(t) = e^{At} (X0 - X*) + X*` around the equilibrium `X*`,
//! which is identical to the fundamental-matrix form for constant forcing but
//! avoids inverting the fundamental matrix near degeneracy.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{mat_vec, solve2, vec_add, vec_scale, vec_sub, Mat2, Vec2};
use crate::model::{ModelError, ModelParams, State, ValidationMode};

/// Relative tolerance deciding when an analytically exact boundary value
/// counts as sitting on a border.
pub const BORDER_TOL: f64 = 1e-12;

/// Relative tolerance on the discriminant below which the spectrum is
/// treated as degenerate (repeated eigenvalue).
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("oscillation test undefined: {0}")]
    OscillationDomain(String),
}

/// Eigenvalues and eigenvectors of the system matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub lambda1: Complex64,
    pub lambda2: Complex64,
    /// Eigenvector for `lambda1`, second component normalized to 1.
    pub v1: [Complex64; 2],
    /// Eigenvector for `lambda2`, second component normalized to 1.
    pub v2: [Complex64; 2],
    /// `(a*gamma - b + epsilon)^2 - 4 a gamma epsilon`.
    pub discriminant: f64,
    /// True when the discriminant vanishes within tolerance and the
    /// eigenvector closed form breaks down.
    pub degenerate: bool,
}

/// Closed-form spectrum of the system matrix.
///
/// Requires `epsilon != 0`, `gamma != 0` and `a != 0` (the eigenvector
/// closed form divides by `a`).
pub fn eigen(p: &ModelParams) -> Result<SpectralData, SpectralError> {
    p.validate(ValidationMode::Permissive)?;
    if p.a == 0.0 {
        return Err(SpectralError::Model(ModelError::InvalidParameter {
            name: "a",
            value: p.a,
            reason: "eigenvector closed form divides by a",
        }));
    }
    let (a, b, ep, ga) = (p.a, p.b, p.epsilon, p.gamma);
    let disc = (a * ga - b + ep).powi(2) - 4.0 * a * ga * ep;
    let scale = (a * ga).abs() + b.abs() + ep.abs();
    let degenerate = disc.abs() <= DEGENERACY_TOL * scale * scale;
    let denom = 2.0 * ga * ep;
    let base = -a * ga + b - ep;
    let vec_base = a * ga + b - ep;
    let one = Complex64::new(1.0, 0.0);

    let (lambda1, lambda2, v1, v2) = if disc >= 0.0 {
        let root = disc.sqrt();
        // Sign convention: lambda1 takes -sqrt(disc), and its eigenvector
        // takes +sqrt(disc) (and vice versa).
        (
            Complex64::new((base - root) / denom, 0.0),
            Complex64::new((base + root) / denom, 0.0),
            [Complex64::new((vec_base + root) / (2.0 * a), 0.0), one],
            [Complex64::new((vec_base - root) / (2.0 * a), 0.0), one],
        )
    } else {
        let root = (-disc).sqrt();
        let l1 = Complex64::new(base / denom, -root / denom);
        let w1 = [Complex64::new(vec_base / (2.0 * a), root / (2.0 * a)), one];
        (l1, l1.conj(), w1, [w1[0].conj(), one])
    };

    Ok(SpectralData {
        lambda1,
        lambda2,
        v1,
        v2,
        discriminant: disc,
        degenerate,
    })
}

/// Cached branch data for evaluating the exact flow of the linear system.
#[derive(Debug, Clone)]
pub struct ExactSolver {
    equilibrium: Vec2,
    kernel: FlowKernel,
}

#[derive(Debug, Clone)]
enum FlowKernel {
    /// Two distinct real eigenvalues, solution basis `e^{l t} v`.
    RealDistinct {
        l1: f64,
        l2: f64,
        v1: Vec2,
        v2: Vec2,
    },
    /// Complex-conjugate pair, real/imaginary solution basis
    /// `Re(e^{lambda t} v)`, `Im(e^{lambda t} v)`.
    ComplexPair {
        alpha: f64,
        omega: f64,
        v_re: Vec2,
        v_im: Vec2,
    },
    /// Repeated eigenvalue, Jordan form `e^{l t} (I + t N)` with the
    /// nilpotent part `N = A - l I`.
    Repeated { l: f64, nilpotent: Mat2 },
}

impl ExactSolver {
    pub fn new(p: &ModelParams) -> Result<Self, SpectralError> {
        let equilibrium: Vec2 = p.equilibrium().map_err(SpectralError::Model)?.into();
        let spec = eigen(p)?;
        let kernel = if spec.degenerate {
            let sys = p.affine_form().map_err(SpectralError::Model)?;
            let l = 0.5 * (sys.matrix[0][0] + sys.matrix[1][1]);
            let nilpotent = [
                [sys.matrix[0][0] - l, sys.matrix[0][1]],
                [sys.matrix[1][0], sys.matrix[1][1] - l],
            ];
            FlowKernel::Repeated { l, nilpotent }
        } else if spec.discriminant > 0.0 {
            FlowKernel::RealDistinct {
                l1: spec.lambda1.re,
                l2: spec.lambda2.re,
                v1: [spec.v1[0].re, 1.0],
                v2: [spec.v2[0].re, 1.0],
            }
        } else {
            // Use the +i omega member of the pair (lambda2 by the sign
            // convention when gamma*epsilon > 0).
            let (lambda, v) = if spec.lambda2.im >= 0.0 {
                (spec.lambda2, spec.v2)
            } else {
                (spec.lambda1, spec.v1)
            };
            FlowKernel::ComplexPair {
                alpha: lambda.re,
                omega: lambda.im,
                v_re: [v[0].re, v[1].re],
                v_im: [v[0].im, v[1].im],
            }
        };
        Ok(ExactSolver {
            equilibrium,
            kernel,
        })
    }

    pub fn equilibrium(&self) -> State {
        self.equilibrium.into()
    }

    /// Exact state at time `t` starting from `x0` at time 0.
    pub fn flow(&self, x0: State, t: f64) -> State {
        let y0 = vec_sub(x0.into(), self.equilibrium);
        let y = self.propagate(y0, t);
        vec_add(y, self.equilibrium).into()
    }

    /// Applies `e^{At}` to a displacement from equilibrium.
    fn propagate(&self, y0: Vec2, t: f64) -> Vec2 {
        match &self.kernel {
            FlowKernel::RealDistinct { l1, l2, v1, v2 } => {
                let basis = [[v1[0], v2[0]], [v1[1], v2[1]]];
                // Eigenvectors of distinct eigenvalues are independent.
                let c = solve2(&basis, y0).expect("independent eigenbasis");
                vec_add(
                    vec_scale(c[0] * (l1 * t).exp(), *v1),
                    vec_scale(c[1] * (l2 * t).exp(), *v2),
                )
            }
            FlowKernel::ComplexPair {
                alpha,
                omega,
                v_re,
                v_im,
            } => {
                // Basis Phi1(t) = Re(e^{lambda t} v), Phi2(t) = Im(e^{lambda t} v).
                let basis = [[v_re[0], v_im[0]], [v_re[1], v_im[1]]];
                let c = solve2(&basis, y0).expect("independent real/imaginary basis");
                let growth = (alpha * t).exp();
                let (sin, cos) = (omega * t).sin_cos();
                let phi1 = vec_sub(vec_scale(cos, *v_re), vec_scale(sin, *v_im));
                let phi2 = vec_add(vec_scale(sin, *v_re), vec_scale(cos, *v_im));
                vec_scale(
                    growth,
                    vec_add(vec_scale(c[0], phi1), vec_scale(c[1], phi2)),
                )
            }
            FlowKernel::Repeated { l, nilpotent } => {
                let growth = (l * t).exp();
                vec_scale(growth, vec_add(y0, vec_scale(t, mat_vec(nilpotent, y0))))
            }
        }
    }
}

/// Exact solution `X(t) = e^{At}(X0 - X*) + X*` of the model.
pub fn exact_solution(p: &ModelParams, x0: State, t: f64) -> Result<State, SpectralError> {
    Ok(ExactSolver::new(p)?.flow(x0, t))
}

/// Three-valued answer for tests against an analytic boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    Border,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Yes => write!(f, "yes"),
            Verdict::No => write!(f, "no"),
            Verdict::Border => write!(f, "border"),
        }
    }
}

/// Stability-region label in the `(gamma*a, b)` plane.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Stable, non-oscillatory (regions I and II share one criterion pair,
    /// so they are reported together).
    I_II,
    /// Stable, oscillatory.
    III,
    /// Unstable, oscillatory.
    IV,
    /// Unstable, non-oscillatory (blow-up).
    V,
    /// On one of the analytic boundary curves within tolerance.
    Border,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::I_II => write!(f, "I_II"),
            Region::III => write!(f, "III"),
            Region::IV => write!(f, "IV"),
            Region::V => write!(f, "V"),
            Region::Border => write!(f, "Border"),
        }
    }
}

/// Stability and oscillation classification of a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Stable iff `a > (b - epsilon)/gamma`.
    pub stable: Verdict,
    /// Oscillatory iff `(sqrt(eps)-sqrt(a gamma))^2 < b < (sqrt(eps)+sqrt(a gamma))^2`.
    pub oscillatory: Verdict,
    pub region: Region,
    /// `(F - (b/a) r, 0)`; absent when `a = 0`.
    pub equilibrium: Option<State>,
}

/// Classifies stability and oscillation from the two analytic inequalities.
///
/// The stability test is valid for any nonzero `epsilon`; the oscillation
/// test needs `epsilon >= 0` and `a*gamma >= 0` (square roots) and errors
/// otherwise.
pub fn classify(p: &ModelParams) -> Result<StabilityReport, SpectralError> {
    p.validate(ValidationMode::Permissive)?;
    let (a, b, ep, ga) = (p.a, p.b, p.epsilon, p.gamma);

    if ep < 0.0 {
        return Err(SpectralError::OscillationDomain(format!(
            "epsilon = {ep} < 0 (sqrt undefined)"
        )));
    }
    if a * ga < 0.0 {
        return Err(SpectralError::OscillationDomain(format!(
            "a*gamma = {} < 0 (sqrt undefined)",
            a * ga
        )));
    }

    // Stability: a > (b - epsilon)/gamma, written with the scale of both sides.
    let margin = a - (b - ep) / ga;
    let stab_scale = a.abs() + ((b - ep) / ga).abs();
    let stable = if margin.abs() <= BORDER_TOL * stab_scale {
        Verdict::Border
    } else if margin > 0.0 {
        Verdict::Yes
    } else {
        Verdict::No
    };

    // Oscillation band between the two parabola branches.
    let s_ep = ep.sqrt();
    let s_ag = (a * ga).sqrt();
    let lower = (s_ep - s_ag).powi(2);
    let upper = (s_ep + s_ag).powi(2);
    let osc_scale = b.abs() + lower + upper;
    let oscillatory = if (b - lower).abs() <= BORDER_TOL * osc_scale
        || (b - upper).abs() <= BORDER_TOL * osc_scale
    {
        Verdict::Border
    } else if lower < b && b < upper {
        Verdict::Yes
    } else {
        Verdict::No
    };

    let region = match (stable, oscillatory) {
        (Verdict::Border, _) | (_, Verdict::Border) => Region::Border,
        (Verdict::Yes, Verdict::No) => Region::I_II,
        (Verdict::Yes, Verdict::Yes) => Region::III,
        (Verdict::No, Verdict::Yes) => Region::IV,
        (Verdict::No, Verdict::No) => Region::V,
    };

    Ok(StabilityReport {
        stable,
        oscillatory,
        region,
        equilibrium: p.equilibrium().ok(),
    })
}

/// Rasterized stability-region picture in the `(gamma*a, b)` plane for a
/// fixed `epsilon`, plus the analytic boundary curves.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid {
    pub epsilon: f64,
    /// Grid coordinates along the `gamma*a` axis.
    pub gamma_a: Vec<f64>,
    /// Grid coordinates along the `b` axis.
    pub b: Vec<f64>,
    /// Region label per cell, row-major: `labels[j * gamma_a.len() + i]`
    /// for `b[j]`, `gamma_a[i]`.
    pub labels: Vec<Region>,
    /// Stability border `b = epsilon + gamma*a` sampled along the axis.
    pub stability_border: Vec<(f64, f64)>,
    /// Lower oscillation boundary `b = (sqrt(eps) - sqrt(gamma a))^2`.
    pub oscillation_lower: Vec<(f64, f64)>,
    /// Upper oscillation boundary `b = (sqrt(eps) + sqrt(gamma a))^2`.
    pub oscillation_upper: Vec<(f64, f64)>,
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    let step = (range.1 - range.0) / (n - 1) as f64;
    (0..n).map(|i| range.0 + step * i as f64).collect()
}

/// Evaluates [`classify`] over a uniform grid.
///
/// Cells are classified with `gamma = 1`, `a = gamma_a` (only the product
/// enters both criteria). Requires non-negative ranges and at least two
/// points per axis.
pub fn stability_region_grid(
    gamma_a_range: (f64, f64),
    b_range: (f64, f64),
    resolution: usize,
    epsilon: f64,
) -> Result<RegionGrid, SpectralError> {
    if resolution < 2 {
        return Err(SpectralError::Model(ModelError::InvalidParameter {
            name: "resolution",
            value: resolution as f64,
            reason: "grid needs at least 2 points per axis",
        }));
    }
    for (name, (lo, hi)) in [("gamma_a_range", gamma_a_range), ("b_range", b_range)] {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(SpectralError::Model(ModelError::InvalidParameter {
                name,
                value: hi,
                reason: "range must be non-negative with max > min",
            }));
        }
    }

    let gamma_a = linspace(gamma_a_range, resolution);
    let b_axis = linspace(b_range, resolution);
    let mut labels = Vec::with_capacity(resolution * resolution);
    for &b in &b_axis {
        for &ga in &gamma_a {
            // F and r only enter the equilibrium, not the region label.
            let p = ModelParams::new(ga, b, 0.1, 1.0, epsilon, 1.0);
            labels.push(classify(&p)?.region);
        }
    }

    let curve_axis = linspace(gamma_a_range, 512.max(resolution));
    let s_ep = epsilon.max(0.0).sqrt();
    let stability_border = curve_axis.iter().map(|&x| (x, epsilon + x)).collect();
    let oscillation_lower = curve_axis
        .iter()
        .map(|&x| (x, (s_ep - x.sqrt()).powi(2)))
        .collect();
    let oscillation_upper = curve_axis
        .iter()
        .map(|&x| (x, (s_ep + x.sqrt()).powi(2)))
        .collect();

    Ok(RegionGrid {
        epsilon,
        gamma_a,
        b: b_axis,
        labels,
        stability_border,
        oscillation_lower,
        oscillation_upper,
    })
}

impl RegionGrid {
    pub fn label_at(&self, i_gamma_a: usize, j_b: usize) -> Region {
        self.labels[j_b * self.gamma_a.len() + i_gamma_a]
    }
}

/// Residual `||A v - lambda v||` of an eigenpair, for validation.
pub fn eigen_residual(p: &ModelParams, lambda: Complex64, v: [Complex64; 2]) -> f64 {
    let sys = p.affine_form().expect("validated params");
    let m = sys.matrix;
    let r0 =
        Complex64::new(m[0][0], 0.0) * v[0] + Complex64::new(m[0][1], 0.0) * v[1] - lambda * v[0];
    let r1 =
        Complex64::new(m[1][0], 0.0) * v[0] + Complex64::new(m[1][1], 0.0) * v[1] - lambda * v[1];
    (r0.norm_sqr() + r1.norm_sqr()).sqrt()
}
