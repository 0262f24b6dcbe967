//! Shooting residuals and sensitivities against closed forms and
//! independent finite differences.

use hoc_core::integrator::IntegratorOptions;
use hoc_core::shooting::{
    cross_validate, jacobian_state_based, jacobian_time_based, residual_state_based,
    residual_time_based, CrossValidation, Infeasibility,
};
use hoc_core::zoo::{self, ball};
use hoc_core::{trace, ContinuationSettings, Layout, TimeBasedProblem, ZooModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn settings(steps: usize) -> ContinuationSettings {
    let mut s = ContinuationSettings {
        max_steps: steps,
        ..ContinuationSettings::default()
    };
    s.integrator.rtol = 1e-10;
    s.integrator.atol = 1e-10;
    s
}

fn branch(name: &str, steps: usize) -> (ZooModel, Vec<DVector<f64>>) {
    let entry: ZooModel = zoo::entry(name).unwrap();
    let s = settings(steps);
    let problem = TimeBasedProblem::new(&entry.system, s.integrator);
    let tau = entry.start_tangent(&s).unwrap();
    let b = trace(&problem, &entry.start_vector(), Some(&tau), &s).unwrap();
    let points = b.points.into_iter().map(|p| p.u).collect();
    (entry, points)
}

/// Central differences of `f` with a step scaled to each component.
fn central_differences(
    u: &DVector<f64>,
    rows: usize,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, u.len());
    for j in 0..u.len() {
        let h = 1e-6 * (1.0 + u[j].abs());
        let mut up = u.clone();
        let mut down = u.clone();
        up[j] += h;
        down[j] -= h;
        jac.set_column(j, &((f(&up) - f(&down)) / (2.0 * h)));
    }
    jac
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exact_ball_orbits_solve_the_shooting_system(height in 0.05..5.0f64) {
        let entry: ZooModel = zoo::entry("ball").unwrap();
        let layout = entry.layout();
        let u = ball::exact_orbit::<f64>(ball::BallParams::default(), height).pack(&layout);
        let r = residual_time_based(&entry.system, &settings(0).integrator, &u).unwrap().residual;
        prop_assert!(r.amax() <= 1e-8, "residual {:e}", r.amax());
        let cv = cross_validate(&entry.system, &settings(0).integrator, &u).unwrap();
        prop_assert!(
            matches!(cv, CrossValidation::Feasible { residual_norm, .. } if residual_norm <= 1e-8),
            "{cv:?}"
        );
    }
}

#[test]
fn traced_ball_branch_follows_the_closed_form_period() {
    let (entry, points) = branch("ball", 40);
    let layout = entry.layout();
    assert!(points.len() > 10);
    for u in &points {
        let level = u[layout.level_index()];
        let period: f64 = (0..layout.segments()).map(|k| u[layout.duration_index(k)]).sum();
        assert!((period - ball::period(level)).abs() <= 1e-6, "T = {period} at H = {level}");
        assert!(u[layout.xi_index()].abs() <= 1e-9);
    }
}

#[test]
fn time_based_jacobian_matches_central_differences() {
    for (name, steps) in [("ball", 5), ("rod", 15), ("slip", 10)] {
        let (entry, points) = branch(name, steps);
        let opts = IntegratorOptions {
            rtol: 1e-12,
            atol: 1e-12,
            ..IntegratorOptions::default()
        };
        let u = points.last().unwrap();
        let rows = Layout::of(&entry.system).equations();
        let analytic = jacobian_time_based(&entry.system, &opts, u).unwrap();
        let fd = central_differences(u, rows, |v| {
            residual_time_based(&entry.system, &opts, v).unwrap().residual
        });
        let gap = relative_gap(&analytic, &fd);
        assert!(gap <= 1e-5, "{name}: relative gap {gap:e}");
    }
}

#[test]
fn state_based_jacobian_matches_finite_differences_of_the_hybrid_flow() {
    let (entry, points) = branch("rod", 15);
    let layout = entry.layout();
    let opts = IntegratorOptions {
        rtol: 1e-12,
        atol: 1e-12,
        event_tol: 1e-14,
        ..IntegratorOptions::default()
    };
    let u = points.last().unwrap();
    let r = layout.start_range(0);
    let n = r.len();
    // Unknowns (x0, xi, level) for the Poincaré residual.
    let mut v = DVector::zeros(n + 2);
    v.rows_mut(0, n).copy_from(&u.rows(r.start, n));
    v[n] = u[layout.xi_index()];
    v[n + 1] = u[layout.level_index()];
    let residual = |w: &DVector<f64>| {
        let x0 = w.rows(0, n).into_owned();
        residual_state_based(&entry.system, &opts, &x0, w[n], w[n + 1]).unwrap()
    };
    let x0 = v.rows(0, n).into_owned();
    let analytic = jacobian_state_based(&entry.system, &opts, &x0, v[n], v[n + 1]).unwrap();
    let fd = central_differences(&v, n + 1, residual);
    let gap = relative_gap(&analytic, &fd);
    assert!(gap <= 1e-4, "relative gap {gap:e}");
}

#[test]
fn reversed_ball_orbit_is_time_based_only() {
    let entry: ZooModel = zoo::entry("ball").unwrap();
    let layout = entry.layout();
    let mut cv = ball::exact_orbit::<f64>(ball::BallParams::default(), 1.0);
    for t in &mut cv.durations {
        *t = -*t;
    }
    let out = cross_validate(&entry.system, &settings(0).integrator, &cv.pack(&layout)).unwrap();
    assert_eq!(
        out,
        CrossValidation::TimeBasedOnly(Infeasibility::NonPositiveDuration { segment: 1 })
    );
}

#[test]
fn slip_harmonic_start_has_no_flight_and_is_time_based_only() {
    let entry: ZooModel = zoo::entry("slip").unwrap();
    let u = entry.start_vector();
    let r = residual_time_based(&entry.system, &settings(0).integrator, &u).unwrap().residual;
    assert!(r.amax() <= 1e-8, "residual {:e}", r.amax());
    let out = cross_validate(&entry.system, &settings(0).integrator, &u).unwrap();
    assert!(
        matches!(out, CrossValidation::TimeBasedOnly(Infeasibility::NonPositiveDuration { .. })),
        "{out:?}"
    );
}
