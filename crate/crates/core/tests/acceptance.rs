//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test -p bg-core --test acceptance --
//! --nocapture` to see every line.
//!
//! Tolerances are pinned here as constants; nothing is calibrated at
//! runtime.

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};

use bg_core::experiments::run_scenario;
use bg_core::integrate::{integrate_full, integrate_reduced, IntegratorConfig};
use bg_core::linalg::{mat_mul, mat_vec, vec_norm, vec_sub};
use bg_core::model::{ModelParams, State};
use bg_core::reduction::{build_reduction, hilbert_check, LimitKind, ReductionError};
use bg_core::scenario::{builtin, parse_scenario};
use bg_core::spectral::{classify, exact_solution, Verdict};

/// Criterion 2: closed form vs. integrator, relative error bound at
/// `rel_tol = 1e-8`.
const ORACLE_REL_ERR: f64 = 1e-6;
const ORACLE_REL_TOL: f64 = 1e-8;
const ORACLE_DRAWS: usize = 200;

/// Criterion 3: projector algebra, elementwise.
const PROJECTOR_TOL: f64 = 1e-12;
const PROJECTOR_DRAWS: usize = 1000;

/// Criterion 4: pointwise reduction identity at on-manifold samples.
const IDENTITY_TOL: f64 = 1e-12;
const IDENTITY_SAMPLES: usize = 100;

/// Criteria 5-6: fitted convergence order window and runtime budget.
const ORDER_WINDOW: (f64, f64) = (0.8, 1.2);
const SWEEP_BUDGET_SECS: f64 = 10.0;

/// Criterion 7: asymptotic price target at t = 50.
const ASYMPTOTIC_TOL: f64 = 1e-6;

/// Criterion 8: manifold residual of the lifted formal reduced trajectory.
const REDUCED_RESIDUAL_TOL: f64 = 1e-10;

/// Criterion 10: reduced closed forms vs. the 1-D integrator, absolute.
const REDUCED_ABS_TOL: f64 = 1e-8;

fn criterion(id: &str, name: &str, body: impl FnOnce() + UnwindSafe) {
    match catch_unwind(body) {
        Ok(()) => println!("[acceptance] {id} {name}: PASS"),
        Err(payload) => {
            println!("[acceptance] {id} {name}: FAIL");
            resume_unwind(payload);
        }
    }
}

fn params(a: f64, b: f64, epsilon: f64, gamma: f64) -> ModelParams {
    ModelParams::new(a, b, 0.1, 3.0, epsilon, gamma)
}

fn random_standard(rng: &mut StdRng) -> ModelParams {
    ModelParams::new(
        rng.random_range(0.1..4.0),
        rng.random_range(0.1..4.0),
        rng.random_range(0.01..0.5),
        rng.random_range(0.5..5.0),
        rng.random_range(0.1..3.0),
        rng.random_range(0.1..3.0),
    )
}

#[test]
fn c01_stability_classification() {
    criterion(
        "01",
        "stability classification of the six trajectory parameter sets",
        || {
            // (a, b, expected stable, expected oscillatory) at epsilon = gamma = 1.
            let cases = [
                (0.1, 0.5, Verdict::Yes, Verdict::Yes),
                (4.0, 0.9, Verdict::Yes, Verdict::No),
                (1.2, 2.0, Verdict::Yes, Verdict::Yes),
                (1.0, 2.2, Verdict::No, Verdict::Yes),
                (0.01, 1.25, Verdict::No, Verdict::No),
                (1.0, 2.0, Verdict::Border, Verdict::Yes),
            ];
            for (a, b, stable, oscillatory) in cases {
                let report = classify(&params(a, b, 1.0, 1.0)).unwrap();
                assert_eq!(report.stable, stable, "stable mismatch at a={a}, b={b}");
                assert_eq!(
                    report.oscillatory, oscillatory,
                    "oscillatory mismatch at a={a}, b={b}"
                );
            }
            // The a=0.1, b=0.5 set is often quoted as non-oscillatory (region I);
            // the inequalities put b = 0.5 above the lower oscillation boundary
            // (1 - sqrt(0.1))^2 = 0.4675, so it classifies as region III. The
            // discrepancy is reported, not silenced:
            println!(
                "[acceptance] 01 note: a=0.1, b=0.5 classifies as stable AND oscillatory \
             (region III); the lower oscillation boundary is {:.6}",
                (1.0_f64 - 0.1_f64.sqrt()).powi(2)
            );
            let sc = parse_scenario(builtin("trajectory-weak-fundamentalists").unwrap()).unwrap();
            assert!(
                sc.description.contains("oscillatory"),
                "builtin scenario must document the classification"
            );
        },
    );
}

#[test]
fn c02_closed_form_vs_integrator_oracle() {
    criterion(
        "02",
        "closed form vs adaptive implicit integrator at t = 10",
        || {
            let mut rng = StdRng::seed_from_u64(0xACCE_0002);
            let cfg = IntegratorConfig::new((0.0, 10.0)).with_tolerances(ORACLE_REL_TOL, 1e-10);
            let mut checked = 0;
            let mut worst = 0.0_f64;
            while checked < ORACLE_DRAWS {
                let p = random_standard(&mut rng);
                if classify(&p).unwrap().stable != Verdict::Yes {
                    continue;
                }
                let x0 = State::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                let traj = integrate_full(&p, x0, &cfg).unwrap();
                assert!(!traj.truncated(), "stable run must not truncate: {p:?}");
                let exact = exact_solution(&p, x0, 10.0).unwrap();
                let rel = vec_norm(vec_sub(traj.end_state().into(), exact.into()))
                    / (1.0 + vec_norm(exact.into()));
                assert!(rel <= ORACLE_REL_ERR, "relative error {rel:e} for {p:?}");
                worst = worst.max(rel);
                checked += 1;
            }
            println!("[acceptance] 02 note: worst relative endpoint error {worst:.3e} over {ORACLE_DRAWS} draws");
        },
    );
}

#[test]
fn c03_projector_algebra() {
    criterion(
        "03",
        "projector identities and degenerate-manifold errors",
        || {
            let mut rng = StdRng::seed_from_u64(0xACCE_0003);
            for limit in [LimitKind::LiquidMarket, LimitKind::LiquidChartist] {
                let mut checked = 0;
                while checked < PROJECTOR_DRAWS {
                    let p = random_standard(&mut rng);
                    let rp = build_reduction(&p, limit).unwrap();
                    // Stay away from near-degeneracy so the elementwise bound is
                    // numerically meaningful (Q blows up like 1/|Dmu K|).
                    let scale = vec_norm(rp.dmu) * vec_norm(rp.k);
                    if rp.dmu_k().abs() < 0.05 * scale {
                        continue;
                    }
                    let q = rp.projector().unwrap();
                    let qq = mat_mul(&q, &q);
                    let qk = mat_vec(&q, rp.k);
                    let dmu_q = [
                        rp.dmu[0] * q[0][0] + rp.dmu[1] * q[1][0],
                        rp.dmu[0] * q[0][1] + rp.dmu[1] * q[1][1],
                    ];
                    for i in 0..2 {
                        assert!(qk[i].abs() <= PROJECTOR_TOL, "QK at {p:?} ({limit})");
                        assert!(dmu_q[i].abs() <= PROJECTOR_TOL, "DmuQ at {p:?} ({limit})");
                        for j in 0..2 {
                            assert!(
                                (qq[i][j] - q[i][j]).abs() <= PROJECTOR_TOL,
                                "Q^2 != Q at {p:?} ({limit})"
                            );
                        }
                    }
                    checked += 1;
                }
            }
            // Degenerate cases must raise the dedicated error.
            let rp = build_reduction(&params(1.0, 1.0, 0.5, 1.0), LimitKind::LiquidMarket).unwrap();
            assert!(matches!(
                rp.projector(),
                Err(ReductionError::DegenerateManifold { .. })
            ));
            let rp =
                build_reduction(&params(2.0, 1.5, 1.5, 1.0), LimitKind::LiquidChartist).unwrap();
            assert!(matches!(
                rp.projector(),
                Err(ReductionError::DegenerateManifold { .. })
            ));
        },
    );
}

#[test]
fn c04_reduction_identities() {
    criterion(
        "04",
        "projected slow field equals the closed-form reduced system",
        || {
            let rp = build_reduction(&params(2.0, 1.0, 1.0, 1.0), LimitKind::LiquidMarket).unwrap();
            let report = hilbert_check(&rp, IDENTITY_SAMPLES).unwrap();
            assert!(
                report.max_deviation <= IDENTITY_TOL,
                "liquid market deviation {:e}",
                report.max_deviation
            );

            let rp =
                build_reduction(&params(2.0, 1.0, 2.0, 1.0), LimitKind::LiquidChartist).unwrap();
            let report = hilbert_check(&rp, IDENTITY_SAMPLES).unwrap();
            assert!(
                report.max_deviation <= IDENTITY_TOL,
                "liquid chartist deviation {:e}",
                report.max_deviation
            );
        },
    );
}

fn check_sweep(builtin_name: &str, value_column: &str) {
    let started = Instant::now();
    let sc = parse_scenario(builtin(builtin_name).unwrap()).unwrap();
    let res = run_scenario(&sc).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let series = res.series("sweep").unwrap();
    let values = series.floats(value_column).unwrap();
    let l2 = series.floats("l2_at_10").unwrap();
    assert_eq!(values.len(), 10);
    for w in l2.windows(2) {
        assert!(w[1] < w[0], "L2 distances not strictly decreasing: {l2:?}");
    }
    let order = res.metric("fitted_order").unwrap();
    assert!(
        (ORDER_WINDOW.0..=ORDER_WINDOW.1).contains(&order),
        "fitted order {order} outside {ORDER_WINDOW:?}"
    );
    assert!(
        elapsed <= SWEEP_BUDGET_SECS,
        "sweep took {elapsed:.2}s, budget {SWEEP_BUDGET_SECS}s"
    );
    println!("[acceptance] note: {builtin_name} fitted_order = {order:.4}, runtime {elapsed:.2}s");
}

#[test]
fn c05_liquid_market_convergence() {
    criterion(
        "05",
        "liquid-market convergence sweep (epsilon -> 0)",
        || {
            check_sweep("liquid-market-sweep", "epsilon");
        },
    );
}

#[test]
fn c06_liquid_chartist_convergence() {
    criterion(
        "06",
        "liquid-chartist convergence sweep (gamma -> 0)",
        || {
            check_sweep("liquid-chartist-sweep", "gamma");
        },
    );
}

#[test]
fn c07_asymptotic_targets() {
    criterion(
        "07",
        "full and reduced trajectories reach P_inf and Psi_inf = 0",
        || {
            let cfg = IntegratorConfig::new((0.0, 50.0));
            // Stable parameter sets in regions I_II and III whose decay rate
            // resolves the 1e-6 target by t = 50.
            let full_sets = [
                params(4.0, 0.9, 1.0, 1.0), // I_II
                params(0.1, 0.5, 1.0, 1.0), // III (weak fundamentalists)
                params(3.0, 2.0, 1.0, 1.0), // III
            ];
            for p in full_sets {
                let report = classify(&p).unwrap();
                assert_eq!(report.stable, Verdict::Yes);
                let eq = p.equilibrium().unwrap();
                let traj = integrate_full(&p, State::new(p.f, p.r), &cfg).unwrap();
                let end = traj.end_state();
                assert!(
                    (end.p - eq.p).abs() <= ASYMPTOTIC_TOL,
                    "|P(50) - P_inf| = {:e} for {p:?}",
                    (end.p - eq.p).abs()
                );
                assert!(
                    end.psi.abs() <= ASYMPTOTIC_TOL,
                    "|Psi(50)| = {:e} for {p:?}",
                    end.psi.abs()
                );
            }
            // A slowly decaying region III set still approaches the target.
            let p = params(1.2, 2.0, 1.0, 1.0);
            let eq = p.equilibrium().unwrap();
            let traj = integrate_full(&p, State::new(p.f, p.r), &cfg).unwrap();
            let d0 = vec_norm(vec_sub(traj.states[0].into(), eq.into()));
            let d1 = vec_norm(vec_sub(traj.end_state().into(), eq.into()));
            assert!(d1 < 0.1 * d0, "slow set did not contract: {d1:e} vs {d0:e}");

            // Attracting reduced models converge to the same targets.
            let lm = build_reduction(&params(2.0, 1.0, 0.1, 1.0), LimitKind::LiquidMarket)
                .unwrap()
                .reduce()
                .unwrap();
            let traj = integrate_reduced(&lm, 0.1, &cfg).unwrap();
            let lifted = lm.lift(traj.end_state());
            let eq = lm.params.equilibrium().unwrap();
            assert!((lifted.p - eq.p).abs() <= ASYMPTOTIC_TOL);
            assert!(lifted.psi.abs() <= ASYMPTOTIC_TOL);

            let lc = build_reduction(&params(2.0, 1.0, 3.0, 0.1), LimitKind::LiquidChartist)
                .unwrap()
                .reduce()
                .unwrap();
            let traj = integrate_reduced(&lc, 3.0, &cfg).unwrap();
            let lifted = lc.lift(traj.end_state());
            let eq = lc.params.equilibrium().unwrap();
            assert!((lifted.p - eq.p).abs() <= ASYMPTOTIC_TOL);
            assert!(lifted.psi.abs() <= ASYMPTOTIC_TOL);
        },
    );
}

#[test]
fn c08_repelling_demos() {
    criterion("08", "repelling manifold demos (both limits)", || {
        for name in ["repelling-liquid-market", "repelling-liquid-chartist"] {
            let sc = parse_scenario(builtin(name).unwrap()).unwrap();
            let res = run_scenario(&sc).unwrap();
            let reduced = res.metric("max_residual_reduced").unwrap();
            assert!(
                reduced <= REDUCED_RESIDUAL_TOL,
                "{name}: lifted reduced residual {reduced:e}"
            );
            let on = res.metric("max_residual_on").unwrap();
            let off = res.metric("max_residual_off").unwrap();
            let initial_on = res.metric("initial_residual_on").unwrap();
            assert!(
                on > initial_on + 1e-3,
                "{name}: full-model residual did not grow ({initial_on:e} -> {on:e})"
            );
            assert!(off > on, "{name}: off-run max {off:e} <= on-run max {on:e}");
        }
    });
}

#[test]
fn c09_degenerate_sweeps() {
    criterion(
        "09",
        "degenerate sweeps run; no reduction is constructible",
        || {
            let sc = parse_scenario(builtin("degenerate-liquid-market").unwrap()).unwrap();
            let res = run_scenario(&sc).unwrap();
            assert_eq!(res.metric("runs").unwrap(), 2.0);
            assert!(res.series("trajectory_eps_0.1").is_some());
            assert!(res.series("trajectory_eps_0.01").is_some());

            let sc = parse_scenario(builtin("degenerate-liquid-market-negative-depth").unwrap())
                .unwrap();
            let res = run_scenario(&sc).unwrap();
            assert!(
                res.warnings.iter().any(|w| w.contains("permissive mode")),
                "negative-epsilon runs must carry the permissive warning: {:?}",
                res.warnings
            );

            // a*gamma = b: the reduction machinery must refuse to build Q.
            for eps in [0.1, 0.01, -0.1, -0.01] {
                let p = params(1.0, 1.0, eps, 1.0);
                let rp = build_reduction(&p, LimitKind::LiquidMarket).unwrap();
                assert!(matches!(
                    rp.projector(),
                    Err(ReductionError::DegenerateManifold { .. })
                ));
                assert!(rp.reduce().is_err());
            }
        },
    );
}

#[test]
fn c10_reduced_closed_forms() {
    criterion(
        "10",
        "reduced closed forms match the 1-D integrator",
        || {
            let lm = build_reduction(&params(2.0, 1.0, 1.0, 1.0), LimitKind::LiquidMarket)
                .unwrap()
                .reduce()
                .unwrap();
            let lc = build_reduction(&params(2.0, 1.0, 2.0, 1.0), LimitKind::LiquidChartist)
                .unwrap()
                .reduce()
                .unwrap();
            for t_end in [1.0, 5.0, 10.0] {
                let cfg = IntegratorConfig::new((0.0, t_end));
                let traj = integrate_reduced(&lm, 0.1, &cfg).unwrap();
                let diff = (traj.end_state() - lm.closed_form(0.1, t_end)).abs();
                assert!(diff <= REDUCED_ABS_TOL, "liquid market t={t_end}: {diff:e}");

                let traj = integrate_reduced(&lc, 3.0, &cfg).unwrap();
                let diff = (traj.end_state() - lc.closed_form(3.0, t_end)).abs();
                assert!(
                    diff <= REDUCED_ABS_TOL,
                    "liquid chartist t={t_end}: {diff:e}"
                );
            }
        },
    );
}
