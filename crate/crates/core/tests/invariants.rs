//! Structural invariants of the zoo models and the shooting layout.

use hoc_core::integrator::{integrate_fixed, IntegratorOptions};
use hoc_core::sensitivity::{saltation, TransitionData};
use hoc_core::zoo::{self, ball};
use hoc_core::{ContinuationVector, Layout, System, ZooModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn tight() -> IntegratorOptions {
    IntegratorOptions {
        rtol: 1e-11,
        atol: 1e-11,
        ..IntegratorOptions::default()
    }
}

fn model(name: &str) -> System {
    let entry: ZooModel = zoo::entry(name).unwrap();
    entry.system
}

/// A state inside the domain of `phase` of zoo model `name`, from unit
/// samples in `[-1, 1]`.
fn state_in_domain(name: &str, phase: usize, unit: &[f64]) -> DVector<f64> {
    let mut x = DVector::from_column_slice(unit);
    if name == "slip" && phase == 0 {
        // Leg length stays compressed but positive.
        x[1] = 0.8 + 0.15 * unit[1];
    }
    x
}

fn zoo_phases() -> impl Strategy<Value = (&'static str, usize, Vec<f64>)> {
    prop_oneof![
        Just(("ball", 0usize)),
        Just(("block", 0)),
        Just(("rod", 0)),
        Just(("rod", 1)),
        Just(("slip", 0)),
        Just(("slip", 1)),
    ]
    .prop_flat_map(|(name, phase)| {
        let dim = model(name).dims()[phase];
        (Just(name), Just(phase), proptest::collection::vec(-1.0..1.0f64, dim))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pack_then_unpack_is_identity(
        (layout, values) in proptest::collection::vec(1usize..6, 1..4).prop_flat_map(|dims| {
            let layout = Layout::new(dims).unwrap();
            let n = layout.unknowns();
            (Just(layout), proptest::collection::vec(-1e3..1e3f64, n))
        })
    ) {
        let segment_dims: usize = (0..layout.segments()).map(|k| layout.segment_dim(k)).sum();
        prop_assert_eq!(layout.unknowns(), segment_dims + layout.phase_count() + 3);
        let u = DVector::from_vec(values);
        let cv = ContinuationVector::unpack(&layout, &u).unwrap();
        prop_assert_eq!(cv.pack(&layout), u.clone());
        prop_assert_eq!(cv.durations.len(), layout.segments());
        prop_assert_eq!(u[layout.level_index()], cv.level);
        prop_assert_eq!(u[layout.xi_index()], cv.xi);
    }

    #[test]
    fn energy_changes_only_through_dissipation(
        (name, phase, unit) in zoo_phases(),
        xi in -1.0..1.0f64,
    ) {
        let sys = model(name);
        let x = state_in_domain(name, phase, &unit);
        let dh = sys.phase(phase).unwrap().first_integral_gradient(&x);
        let f = sys.eval_modified_field(phase, &x, xi).unwrap();
        let rate = dh.dot(&f.transpose());
        let expected = xi * dh.norm_squared();
        prop_assert!((rate - expected).abs() <= 1e-9 * (1.0 + expected.abs()), "{rate} vs {expected}");
    }

    #[test]
    fn conservative_flow_transports_field_and_energy_gradient(
        (name, phase, unit) in zoo_phases(),
        duration in 0.05..0.5f64,
    ) {
        let sys = model(name);
        let p = sys.phase(phase).unwrap();
        let x0 = state_in_domain(name, phase, &unit);
        let out = integrate_fixed(&sys, phase, &x0, 0.0, duration, true, &tight()).unwrap();
        let phi = out.phi.unwrap();
        let field_err = (&phi * p.field(&x0) - p.field(&out.state)).amax();
        let grad_err = (p.first_integral_gradient(&out.state) * &phi - p.first_integral_gradient(&x0)).amax();
        let energy_err = (p.first_integral(&out.state) - p.first_integral(&x0)).abs();
        prop_assert!(field_err <= 1e-6, "Phi f - f = {field_err:e}");
        prop_assert!(grad_err <= 1e-6, "dH Phi - dH = {grad_err:e}");
        prop_assert!(energy_err <= 1e-8, "energy drift {energy_err:e}");
    }

    #[test]
    fn ball_impact_saltation_has_closed_form(gravity in 0.1..10.0f64, speed in 0.1..10.0f64) {
        let sys: System = ball::system(ball::BallParams { gravity }).unwrap();
        let p = sys.phase(0).unwrap();
        let pre = DVector::from_vec(vec![0.0, -speed]);
        let post = p.reset(&pre);
        let td = TransitionData {
            field_pre: p.field(&pre),
            field_post: p.field(&post),
            reset_jacobian: p.reset_jacobian(&pre),
            event_gradient: p.event_gradient(&pre),
        };
        let s = saltation(&td).unwrap();
        // Hand-derived: D = diag(1, -1), f- = (v, -g), f+ = (-v, -g), de = (1, 0).
        let v = -speed;
        let exact = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -2.0 * gravity / v, -1.0]);
        prop_assert!((&s - &exact).amax() <= 1e-10 * exact.amax(), "{s} vs {exact}");
        prop_assert!((&s * &td.field_pre - &td.field_post).amax() <= 1e-9);
        let transported = p.first_integral_gradient(&post) * &s - p.first_integral_gradient(&pre);
        prop_assert!(transported.amax() <= 1e-9);
    }
}
