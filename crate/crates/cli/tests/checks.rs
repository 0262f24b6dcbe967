use std::sync::Arc;

use hoc_cli::checks::run_checks;
use hoc_core::zoo::{self, LinearAnchor};
use hoc_core::{trace, ContinuationSettings, HybridSystem, Normalization, Phase, System, TimeBasedProblem, ZooModel};
use nalgebra::{DMatrix, DVector, RowDVector};

fn settings(steps: usize) -> ContinuationSettings {
    let mut s = ContinuationSettings {
        max_steps: steps,
        ..ContinuationSettings::default()
    };
    s.integrator.rtol = 1e-10;
    s.integrator.atol = 1e-10;
    s
}

fn branch_point(entry: &ZooModel, steps: usize) -> DVector<f64> {
    let s = settings(steps);
    let problem = TimeBasedProblem::new(&entry.system, s.integrator);
    let tau = entry.start_tangent(&s).unwrap();
    let b = trace(&problem, &entry.start_vector(), Some(&tau), &s).unwrap();
    b.points.last().unwrap().u.clone()
}

/// Ball flight whose reset Jacobian drops the velocity flip.
struct WrongResetJacobian(System);

impl Phase<f64> for WrongResetJacobian {
    fn dim(&self) -> usize {
        2
    }
    fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.phase(0).unwrap().field(x)
    }
    fn event(&self, x: &DVector<f64>) -> f64 {
        self.0.phase(0).unwrap().event(x)
    }
    fn event_gradient(&self, x: &DVector<f64>) -> RowDVector<f64> {
        self.0.phase(0).unwrap().event_gradient(x)
    }
    fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.phase(0).unwrap().reset(x)
    }
    fn reset_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn first_integral(&self, x: &DVector<f64>) -> f64 {
        self.0.phase(0).unwrap().first_integral(x)
    }
}

#[test]
fn corrupted_reset_jacobian_is_caught() {
    let ball: ZooModel = zoo::entry("ball").unwrap();
    let u = branch_point(&ball, 5);
    let good = run_checks(&ball.system, &settings(0).integrator, &u).unwrap();
    assert!(good.iter().all(|c| c.passed()), "{good:?}");

    let bad_system = HybridSystem::new(
        "ball-corrupted",
        vec![Arc::new(WrongResetJacobian(ball.system.clone()))],
        Arc::new(LinearAnchor::new(vec![0.0, 1.0])),
        Normalization::default(),
    )
    .unwrap();
    let bad = run_checks(&bad_system, &settings(0).integrator, &u).unwrap();
    let failed: Vec<&str> = bad.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    assert!(failed.contains(&"reset_jacobian_fd[1]"), "{failed:?}");
    assert!(failed.contains(&"jacobian_fd"), "{failed:?}");
}

#[test]
fn rod_transport_holds_across_both_resets() {
    let rod: ZooModel = zoo::entry("rod").unwrap();
    let u = branch_point(&rod, 20);
    let out = run_checks(&rod.system, &settings(0).integrator, &u).unwrap();
    for k in 1..=2 {
        for name in ["saltation_energy", "saltation_field", "reset_energy"] {
            let c = out.iter().find(|c| c.name == format!("{name}[{k}]")).unwrap();
            assert!(c.error <= 1e-9, "{c}");
        }
    }
    assert!(out.iter().all(|c| c.passed()), "{out:?}");
}
