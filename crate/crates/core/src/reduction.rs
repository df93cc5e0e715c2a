//! Rank-one Tikhonov-Fenichel reduction of the model in its two
//! singular-perturbation limits.
//!
//! Writing the vector field as `f = (1/s) h0 + h1` for the small parameter
//! `s` (epsilon in the liquid-market limit, gamma in the liquid-chartist
//! limit), the fast part factors as `h0 = K * mu` with a constant column `K`
//! and an affine scalar `mu` whose zero set is the slow manifold. The
//! reduced flow is `x' = Q h1` with the projector
//!
//! ```text
//! Q = I - K (Dmu K)^{-1} Dmu
//! ```
//!
//! which collapses to a one-dimensional ODE in the free variable plus an
//! algebraic lift back onto the manifold. The nonzero eigenvalue of `Dh0`
//! equals `Dmu K`, so the same scalar decides attracting/repelling and
//! degeneracy.
//!
//! The reduced system is integrated in the same time variable as the full
//! model (the 1/s prefactor is already part of the model definition).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, mat_vec, outer, vec_norm, Mat2, Vec2, IDENTITY};
use crate::model::{ModelError, ModelParams, State, ValidationMode};

/// Relative threshold on `|Dmu K|` below which the manifold is degenerate.
pub const DEGENERATE_TOL: f64 = 1e-14;

/// Which scale parameter is sent to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    /// `epsilon -> 0`: infinite market depth, instant price adjustment.
    LiquidMarket,
    /// `gamma -> 0`: infinitely fast chartist estimate adjustment.
    LiquidChartist,
}

impl std::fmt::Display for LimitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitKind::LiquidMarket => write!(f, "liquid_market"),
            LimitKind::LiquidChartist => write!(f, "liquid_chartist"),
        }
    }
}

/// Transverse behavior of the slow manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Attracting,
    Repelling,
    Degenerate,
}

/// The slow manifold and its transverse eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowManifold {
    pub kind: ManifoldKind,
    /// Nonzero eigenvalue of `Dh0` (equals `Dmu K`); negative means attracting.
    pub transverse_eigenvalue: f64,
    /// Human-readable affine relation defining the manifold.
    pub description: String,
}

/// Which state component survives as the reduced variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeVariable {
    Psi,
    P,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReductionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "degenerate slow manifold in the {limit} limit: Dmu*K = {dmu_k:e} (no reduction exists)"
    )]
    DegenerateManifold { limit: LimitKind, dmu_k: f64 },
    #[error("rank-one decomposition check failed: max |h0 - K*mu| = {residual:e}")]
    DecompositionCheck { residual: f64 },
}

/// The `(h0, h1, K, mu, Dmu)` data of one singular-perturbation limit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionProblem {
    pub limit: LimitKind,
    pub params: ModelParams,
    /// Constant column factor of `h0 = K * mu`.
    pub k: Vec2,
    /// Constant gradient of the affine defining function `mu`.
    pub dmu: Vec2,
}

/// Builds the rank-one decomposition for the requested limit and verifies
/// `h0 = K * mu` at a fixed set of pseudo-random states.
pub fn build_reduction(
    p: &ModelParams,
    limit: LimitKind,
) -> Result<ReductionProblem, ReductionError> {
    p.validate(ValidationMode::Permissive)?;
    let rp = match limit {
        LimitKind::LiquidMarket => ReductionProblem {
            limit,
            params: *p,
            k: [1.0, 1.0 / p.gamma],
            dmu: [-p.a, p.b],
        },
        LimitKind::LiquidChartist => ReductionProblem {
            limit,
            params: *p,
            k: [0.0, 1.0],
            dmu: [-p.a / p.epsilon, p.b / p.epsilon - 1.0],
        },
    };

    // Deterministic sample of states; the fast part is computed through the
    // vector-field route, so this is a genuine floating-point consistency
    // check of the decomposition, not a tautology.
    let mut x = 0.123_456_789_f64;
    let mut next = || {
        x = (x * 997.0 + 0.618_033_988) % 7.0;
        x - 3.5
    };
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let s = State::new(3.0 * next(), next());
        let h0 = rp.fast_part(s);
        let km = rp.mu(s);
        let scale = 1.0 + km.abs() * (1.0 + vec_norm(rp.k));
        let res = ((h0[0] - rp.k[0] * km).abs()).max((h0[1] - rp.k[1] * km).abs()) / scale;
        worst = worst.max(res);
    }
    if worst > 1e-12 {
        return Err(ReductionError::DecompositionCheck { residual: worst });
    }
    Ok(rp)
}

impl ReductionProblem {
    /// Current value of the parameter that tends to zero in this limit.
    pub fn small_param(&self) -> f64 {
        match self.limit {
            LimitKind::LiquidMarket => self.params.epsilon,
            LimitKind::LiquidChartist => self.params.gamma,
        }
    }

    /// Affine defining function of the slow manifold.
    pub fn mu(&self, s: State) -> f64 {
        let p = &self.params;
        let ed = p.excess_demands(s).total;
        match self.limit {
            LimitKind::LiquidMarket => ed,
            LimitKind::LiquidChartist => ed / p.epsilon - s.psi,
        }
    }

    /// Fast part `h0` of the vector field (`f = (1/s) h0 + h1`).
    pub fn fast_part(&self, s: State) -> Vec2 {
        let p = &self.params;
        let ed = p.excess_demands(s).total;
        match self.limit {
            LimitKind::LiquidMarket => [ed, ed / p.gamma],
            LimitKind::LiquidChartist => [0.0, ed / p.epsilon - s.psi],
        }
    }

    /// Slow part `h1` of the vector field.
    pub fn slow_part(&self, s: State) -> Vec2 {
        let p = &self.params;
        match self.limit {
            LimitKind::LiquidMarket => [0.0, -s.psi / p.gamma],
            LimitKind::LiquidChartist => [p.excess_demands(s).total / p.epsilon, 0.0],
        }
    }

    /// `Dmu K`, the nonzero eigenvalue of `Dh0`.
    pub fn dmu_k(&self) -> f64 {
        dot(self.dmu, self.k)
    }

    fn is_degenerate(&self) -> bool {
        self.dmu_k().abs() <= DEGENERATE_TOL * vec_norm(self.dmu) * vec_norm(self.k)
    }

    /// The slow manifold with its transverse eigenvalue and kind.
    pub fn manifold(&self) -> SlowManifold {
        let eig = self.dmu_k();
        let kind = if self.is_degenerate() {
            ManifoldKind::Degenerate
        } else if eig < 0.0 {
            ManifoldKind::Attracting
        } else {
            ManifoldKind::Repelling
        };
        let p = &self.params;
        let description = match self.limit {
            LimitKind::LiquidMarket => format!(
                "P = (b/a)(Psi - r) + F = {}*(Psi - {}) + {}",
                p.b / p.a,
                p.r,
                p.f
            ),
            LimitKind::LiquidChartist => format!(
                "Psi = (a(F - P) - r b)/(epsilon - b) = ({}*({} - P) - {})/{}",
                p.a,
                p.f,
                p.r * p.b,
                p.epsilon - p.b
            ),
        };
        SlowManifold {
            kind,
            transverse_eigenvalue: eig,
            description,
        }
    }

    /// Projector `Q = I - K (Dmu K)^{-1} Dmu` of the reduction.
    pub fn projector(&self) -> Result<Mat2, ReductionError> {
        let dmu_k = self.dmu_k();
        if self.is_degenerate() {
            return Err(ReductionError::DegenerateManifold {
                limit: self.limit,
                dmu_k,
            });
        }
        let correction = outer(self.k, self.dmu);
        let mut q = IDENTITY;
        for i in 0..2 {
            for j in 0..2 {
                q[i][j] -= correction[i][j] / dmu_k;
            }
        }
        Ok(q)
    }

    /// Reduced vector field `Q h1` as a 2-vector (tangent to the manifold).
    pub fn projected_slow_field(&self, s: State) -> Result<Vec2, ReductionError> {
        Ok(mat_vec(&self.projector()?, self.slow_part(s)))
    }

    /// Normalized affine distance `|mu(s)| / ||Dmu||` to the manifold.
    pub fn manifold_residual(&self, s: State) -> f64 {
        self.mu(s).abs() / vec_norm(self.dmu)
    }

    /// Collapses `Q h1` on the manifold to the one-dimensional reduced model.
    ///
    /// A repelling manifold still yields the formal reduction, flagged
    /// `valid = false`.
    pub fn reduce(&self) -> Result<ReducedModel, ReductionError> {
        let manifold = self.manifold();
        if manifold.kind == ManifoldKind::Degenerate {
            return Err(ReductionError::DegenerateManifold {
                limit: self.limit,
                dmu_k: self.dmu_k(),
            });
        }
        let p = &self.params;
        if p.a == 0.0 {
            return Err(ReductionError::Model(ModelError::InvalidParameter {
                name: "a",
                value: p.a,
                reason: "the algebraic manifold map requires a != 0",
            }));
        }
        let (free_variable, slope, intercept) = match self.limit {
            // Psi' = -a/(a gamma - b) * Psi
            LimitKind::LiquidMarket => (FreeVariable::Psi, -p.a / (p.a * p.gamma - p.b), 0.0),
            // P' = (a(F - P) - r b)/(epsilon - b)
            LimitKind::LiquidChartist => (
                FreeVariable::P,
                -p.a / (p.epsilon - p.b),
                (p.a * p.f - p.r * p.b) / (p.epsilon - p.b),
            ),
        };
        Ok(ReducedModel {
            limit: self.limit,
            params: *p,
            free_variable,
            slope,
            intercept,
            valid: manifold.kind == ManifoldKind::Attracting,
        })
    }
}

/// Report of the pointwise identity check between the projector route and
/// the closed-form reduced right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertReport {
    pub samples: usize,
    /// Largest absolute deviation |(Q h1)_free - rhs(free)| over the samples.
    pub max_deviation: f64,
    /// Conditioning `1/|Dmu K|` of the decomposition.
    pub condition: f64,
    /// True when every deviation stayed below `1e-12 * (1 + |rhs|)`.
    pub passed: bool,
}

/// Verifies at on-manifold samples that the projected slow field equals the
/// closed-form reduced right-hand side. This is the implementable content of
/// the statement that the rigorous reduction agrees with the asymptotic
/// (Hilbert) expansion.
pub fn hilbert_check(
    rp: &ReductionProblem,
    n_samples: usize,
) -> Result<HilbertReport, ReductionError> {
    let rm = rp.reduce()?;
    let q = rp.projector()?;
    let fixed_point = rm.fixed_point();
    let mut max_deviation = 0.0_f64;
    let mut passed = true;
    let n = n_samples.max(1);
    for i in 0..n {
        // Uniform sample of the free variable around the reduced fixed point.
        let x = fixed_point - 2.0 + 4.0 * (i as f64 + 0.5) / n as f64;
        let state = rm.lift(x);
        let projected = mat_vec(&q, rp.slow_part(state));
        let component = match rm.free_variable {
            FreeVariable::Psi => projected[1],
            FreeVariable::P => projected[0],
        };
        let rhs = rm.rhs(x);
        let dev = (component - rhs).abs();
        max_deviation = max_deviation.max(dev);
        if dev > 1e-12 * (1.0 + rhs.abs()) {
            passed = false;
        }
    }
    Ok(HilbertReport {
        samples: n,
        max_deviation,
        condition: 1.0 / rp.dmu_k().abs(),
        passed,
    })
}

/// One-dimensional reduced model with its algebraic manifold constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub limit: LimitKind,
    pub params: ModelParams,
    pub free_variable: FreeVariable,
    /// The right-hand side is affine: `x' = slope * x + intercept`.
    pub slope: f64,
    pub intercept: f64,
    /// True iff the manifold is attracting, i.e. the reduction is a valid
    /// approximation of the full dynamics; false marks a formal reduction
    /// on a repelling manifold.
    pub valid: bool,
}

impl ReducedModel {
    /// Reduced vector field at a value of the free variable.
    pub fn rhs(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Fixed point of the reduced ODE.
    pub fn fixed_point(&self) -> f64 {
        -self.intercept / self.slope
    }

    /// Algebraic map from the free variable onto the full state space.
    pub fn lift(&self, x: f64) -> State {
        let p = &self.params;
        match self.limit {
            LimitKind::LiquidMarket => State::new((p.b / p.a) * (x - p.r) + p.f, x),
            LimitKind::LiquidChartist => {
                State::new(x, (p.a * (p.f - x) - p.r * p.b) / (p.epsilon - p.b))
            }
        }
    }

    /// Exact exponential solution of the reduced ODE.
    pub fn closed_form(&self, x0: f64, t: f64) -> f64 {
        if self.slope == 0.0 {
            return x0 + self.intercept * t;
        }
        let fp = self.fixed_point();
        fp + (x0 - fp) * (self.slope * t).exp()
    }
}
