//! Core definition of the Beja-Goldman model.
//!
//! The model couples the logarithmic stock price `P` to the chartists'
//! price estimate `Psi`:
//!
//! ```text
//! P'   = (1/epsilon) * ( a*(F - P) + b*(Psi - r) )
//! Psi' = (1/gamma)   * ( P' - Psi )
//! ```
//!
//! `a` and `b` are the market powers of fundamentalists and chartists,
//! `F` is the fundamental log-price, `r` the bond return, `1/epsilon` the
//! market depth (speed of price adjustment) and `1/gamma` the reaction
//! speed of chartists.
//!
//! Terminology note: `epsilon` is used consistently as the *inverse* market
//! depth, so the liquid-market limit is `epsilon -> 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{mat_vec, vec_add, Mat2, Vec2};

/// The six scalars defining a Beja-Goldman system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Fundamentalist market power.
    pub a: f64,
    /// Chartist market power.
    pub b: f64,
    /// Bond return.
    pub r: f64,
    /// Fundamental log-price.
    pub f: f64,
    /// Inverse market depth; must be nonzero.
    pub epsilon: f64,
    /// Inverse chartist reaction speed; must be nonzero.
    pub gamma: f64,
}

/// Point in the model's state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Logarithmic stock price.
    pub p: f64,
    /// Chartist price estimate.
    pub psi: f64,
}

impl State {
    pub fn new(p: f64, psi: f64) -> Self {
        State { p, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.psi.is_finite()
    }
}

impl From<Vec2> for State {
    fn from(v: Vec2) -> Self {
        State { p: v[0], psi: v[1] }
    }
}

impl From<State> for Vec2 {
    fn from(s: State) -> Self {
        [s.p, s.psi]
    }
}

/// Excess demand split into its two agent contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessDemand {
    /// Fundamentalist demand `a*(F - P)`.
    pub fundamentalist: f64,
    /// Chartist demand `b*(Psi - r)`.
    pub chartist: f64,
    /// Aggregate excess demand, the sum of the two.
    pub total: f64,
}

/// How strictly parameters are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// All of `a, b, r, F, epsilon, gamma` strictly positive.
    Standard,
    /// Only what the vector field needs: finite values, `epsilon != 0`,
    /// `gamma != 0`. Allows e.g. negative market depth experiments.
    Permissive,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn require_finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason: "must be > 0 in standard regime",
        })
    }
}

impl ModelParams {
    pub fn new(a: f64, b: f64, r: f64, f: f64, epsilon: f64, gamma: f64) -> Self {
        ModelParams {
            a,
            b,
            r,
            f,
            epsilon,
            gamma,
        }
    }

    /// True iff all six parameters are strictly positive.
    pub fn standard_regime(&self) -> bool {
        self.a > 0.0
            && self.b > 0.0
            && self.r > 0.0
            && self.f > 0.0
            && self.epsilon > 0.0
            && self.gamma > 0.0
    }

    pub fn validate(&self, mode: ValidationMode) -> Result<(), ModelError> {
        require_finite("a", self.a)?;
        require_finite("b", self.b)?;
        require_finite("r", self.r)?;
        require_finite("f", self.f)?;
        require_finite("epsilon", self.epsilon)?;
        require_finite("gamma", self.gamma)?;
        if self.epsilon == 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "epsilon",
                value: self.epsilon,
                reason: "must be nonzero (divides the price equation)",
            });
        }
        if self.gamma == 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "gamma",
                value: self.gamma,
                reason: "must be nonzero (divides the chartist equation)",
            });
        }
        if mode == ValidationMode::Standard {
            require_positive("a", self.a)?;
            require_positive("b", self.b)?;
            require_positive("r", self.r)?;
            require_positive("f", self.f)?;
            require_positive("epsilon", self.epsilon)?;
            require_positive("gamma", self.gamma)?;
        }
        Ok(())
    }

    /// Fundamentalist, chartist and aggregate excess demand at a state.
    pub fn excess_demands(&self, s: State) -> ExcessDemand {
        let fundamentalist = self.a * (self.f - s.p);
        let chartist = self.b * (s.psi - self.r);
        ExcessDemand {
            fundamentalist,
            chartist,
            total: fundamentalist + chartist,
        }
    }

    /// Time derivative `(P', Psi')` at a state.
    pub fn vector_field(&self, s: State) -> Result<Vec2, ModelError> {
        self.validate(ValidationMode::Permissive)?;
        let ed = self.excess_demands(s).total;
        let dp = ed / self.epsilon;
        let dpsi = (dp - s.psi) / self.gamma;
        Ok([dp, dpsi])
    }

    /// Matrix form `X' = A X + B` of the system.
    pub fn affine_form(&self) -> Result<AffineSystem, ModelError> {
        self.validate(ValidationMode::Permissive)?;
        let (a, b, ep, ga) = (self.a, self.b, self.epsilon, self.gamma);
        let matrix = [[-a / ep, b / ep], [-a / (ga * ep), -(1.0 - b / ep) / ga]];
        let forcing_p = (a * self.f - b * self.r) / ep;
        let offset = [forcing_p, forcing_p / ga];
        Ok(AffineSystem { matrix, offset })
    }

    /// The unique fixed point `(F - (b/a) r, 0)`; requires `a != 0`.
    pub fn equilibrium(&self) -> Result<State, ModelError> {
        if self.a == 0.0 || !self.a.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "a",
                value: self.a,
                reason: "equilibrium price F - (b/a) r requires a != 0",
            });
        }
        Ok(State::new(self.f - (self.b / self.a) * self.r, 0.0))
    }
}

/// The constant-coefficient form `X' = A X + B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSystem {
    /// System matrix `A`.
    pub matrix: Mat2,
    /// Constant forcing `B`.
    pub offset: Vec2,
}

impl AffineSystem {
    /// Evaluates `A x + B`.
    pub fn apply(&self, x: Vec2) -> Vec2 {
        vec_add(mat_vec(&self.matrix, x), self.offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec_norm;
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn params(a: f64, b: f64, r: f64, f: f64, epsilon: f64, gamma: f64) -> ModelParams {
        ModelParams::new(a, b, r, f, epsilon, gamma)
    }

    #[test]
    fn excess_demand_vanishes_at_fundamental_price() {
        let p = params(2.0, 1.0, 0.1, 3.0, 1.0, 1.0);
        let ed = p.excess_demands(State::new(3.0, 0.1));
        assert_eq!(ed.fundamentalist, 0.0);
        assert_eq!(ed.chartist, 0.0);
        assert_eq!(ed.total, 0.0);
    }

    #[test]
    fn excess_demand_hand_evaluations() {
        let p = params(1.0, 2.2, 0.1, 3.0, 1.0, 1.0);
        let ed = p.excess_demands(State::new(2.0, 0.0));
        assert!((ed.fundamentalist - 1.0).abs() < 1e-15);
        assert!((ed.chartist + 0.22).abs() < 1e-15);
        assert!((ed.total - 0.78).abs() < 1e-15);

        let p = params(0.1, 0.5, 0.1, 3.0, 1.0, 1.0);
        let ed = p.excess_demands(State::new(0.0, 0.0));
        assert!((ed.fundamentalist - 0.3).abs() < 1e-15);
        assert!((ed.chartist + 0.05).abs() < 1e-15);
        assert!((ed.total - 0.25).abs() < 1e-15);
    }

    #[test]
    fn vector_field_at_fixed_point_is_zero() {
        let p = params(2.0, 1.0, 0.1, 3.0, 1.0, 1.0);
        let eq = p.equilibrium().unwrap();
        assert_eq!(eq, State::new(2.95, 0.0));
        let dv = p.vector_field(eq).unwrap();
        assert!(dv[0].abs() < 1e-15);
        assert!(dv[1].abs() < 1e-15);
    }

    #[test]
    fn vector_field_hand_evaluations() {
        let p = params(2.0, 1.0, 0.1, 3.0, 1.0, 1.0);
        let dv = p.vector_field(State::new(3.0, 0.1)).unwrap();
        assert!(dv[0].abs() < 1e-15);
        assert!((dv[1] + 0.1).abs() < 1e-15);

        // ED = 0 at this state, so dP = 0 for any epsilon.
        let p = params(1.0, 1.0, 0.1, 3.0, 0.1, 1.0);
        let dv = p.vector_field(State::new(3.0, 0.1)).unwrap();
        assert!(dv[0].abs() < 1e-15);
        assert!((dv[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn vector_field_rejects_zero_scale_parameters() {
        let p = params(2.0, 1.0, 0.1, 3.0, 0.0, 1.0);
        assert!(matches!(
            p.vector_field(State::new(0.0, 0.0)),
            Err(ModelError::InvalidParameter {
                name: "epsilon",
                ..
            })
        ));
        let p = params(2.0, 1.0, 0.1, 3.0, 1.0, 0.0);
        assert!(matches!(
            p.vector_field(State::new(0.0, 0.0)),
            Err(ModelError::InvalidParameter { name: "gamma", .. })
        ));
        assert!(p.affine_form().is_err());
    }

    #[test]
    fn affine_form_matches_hand_substitution() {
        let sys = params(2.0, 1.0, 0.1, 3.0, 1.0, 1.0).affine_form().unwrap();
        assert_eq!(sys.matrix, [[-2.0, 1.0], [-2.0, 0.0]]);
        assert!((sys.offset[0] - 5.9).abs() < 1e-15);
        assert!((sys.offset[1] - 5.9).abs() < 1e-15);

        let sys = params(1.0, 1.0, 0.1, 3.0, 1.0, 1.0).affine_form().unwrap();
        assert_eq!(sys.matrix, [[-1.0, 1.0], [-1.0, 0.0]]);
        assert!((sys.offset[0] - 2.9).abs() < 1e-15);
    }

    #[test]
    fn vector_field_agrees_with_affine_form_on_random_states() {
        let p = params(1.3, 2.4, 0.07, 2.5, 0.3, 0.8);
        let sys = p.affine_form().unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..100 {
            let s = State::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let fv = p.vector_field(s).unwrap();
            let av = sys.apply(s.into());
            assert!((fv[0] - av[0]).abs() <= 1e-12);
            assert!((fv[1] - av[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn equilibrium_examples() {
        let eq = params(4.0, 0.9, 0.1, 3.0, 1.0, 1.0).equilibrium().unwrap();
        assert!((eq.p - 2.9775).abs() < 1e-15);
        assert_eq!(eq.psi, 0.0);

        // Zero bond return leaves the fundamental price.
        let eq = params(2.0, 1.0, 0.0, 3.0, 1.0, 1.0).equilibrium().unwrap();
        assert_eq!(eq, State::new(3.0, 0.0));

        assert!(params(0.0, 1.0, 0.1, 3.0, 1.0, 1.0).equilibrium().is_err());
    }

    #[test]
    fn equilibrium_is_a_zero_of_the_vector_field() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let p = params(
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
                rng.random_range(0.01..0.5),
                rng.random_range(0.5..5.0),
                rng.random_range(0.1..3.0),
                rng.random_range(0.1..3.0),
            );
            let eq = p.equilibrium().unwrap();
            let dv = p.vector_field(eq).unwrap();
            let scale = 1.0 + (p.a * p.f - p.b * p.r).abs() / p.epsilon.abs();
            assert!(
                vec_norm(dv) <= 1e-14 * scale,
                "residual {:?} at {:?}",
                dv,
                p
            );
            // And A X* + B = 0 in matrix form.
            let av = p.affine_form().unwrap().apply(eq.into());
            assert!(vec_norm(av) <= 1e-13 * scale);
        }
    }

    #[test]
    fn standard_regime_predicate() {
        assert!(params(1.0, 1.0, 0.1, 3.0, 1.0, 1.0).standard_regime());
        assert!(!params(1.0, 1.0, 0.1, 3.0, -0.1, 1.0).standard_regime());
        let p = params(1.0, 1.0, 0.1, 3.0, -0.1, 1.0);
        assert!(p.validate(ValidationMode::Permissive).is_ok());
        assert!(p.validate(ValidationMode::Standard).is_err());
    }

    proptest! {
        // The vector field is affine: f(t s1 + (1-t) s2) = t f(s1) + (1-t) f(s2).
        #[test]
        fn vector_field_is_affine(
            p1 in -10.0..10.0f64, q1 in -10.0..10.0f64,
            p2 in -10.0..10.0f64, q2 in -10.0..10.0f64,
            theta in 0.0..1.0f64,
        ) {
            let p = params(1.7, 0.9, 0.1, 3.0, 0.5, 1.2);
            let s1 = State::new(p1, q1);
            let s2 = State::new(p2, q2);
            let mix = State::new(
                theta * s1.p + (1.0 - theta) * s2.p,
                theta * s1.psi + (1.0 - theta) * s2.psi,
            );
            let f_mix = p.vector_field(mix).unwrap();
            let f1 = p.vector_field(s1).unwrap();
            let f2 = p.vector_field(s2).unwrap();
            let scale = 1.0 + f1[0].abs() + f1[1].abs() + f2[0].abs() + f2[1].abs();
            prop_assert!((f_mix[0] - (theta * f1[0] + (1.0 - theta) * f2[0])).abs() <= 1e-12 * scale);
            prop_assert!((f_mix[1] - (theta * f1[1] + (1.0 - theta) * f2[1])).abs() <= 1e-12 * scale);
        }

        // Matrix form and direct form agree everywhere.
        #[test]
        fn affine_form_consistency(
            a in 0.1..4.0f64, b in 0.1..4.0f64,
            ep in 0.1..3.0f64, ga in 0.1..3.0f64,
            sp in -5.0..5.0f64, spsi in -5.0..5.0f64,
        ) {
            let p = params(a, b, 0.1, 3.0, ep, ga);
            let s = State::new(sp, spsi);
            let fv = p.vector_field(s).unwrap();
            let av = p.affine_form().unwrap().apply(s.into());
            let scale = 1.0 + fv[0].abs() + fv[1].abs();
            prop_assert!((fv[0] - av[0]).abs() <= 1e-12 * scale);
            prop_assert!((fv[1] - av[1]).abs() <= 1e-12 * scale);
        }
    }
}
