//! Validation suite run at one continuation point: finite-difference check
//! of the shooting Jacobian, reset checks and the energy transport
//! identities across every transition.

use std::cell::RefCell;

use hoc_core::sensitivity::{saltation, TransitionData};
use hoc_core::shooting::{evaluate_time_based, jacobian_time_based, residual_time_based};
use hoc_core::{fd, IntegratorOptions, Point, System};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            error,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<28} error {:.3e} (tol {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.error,
            self.tolerance
        )
    }
}

pub const JACOBIAN_TOL: f64 = 1e-4;
pub const RESET_JACOBIAN_TOL: f64 = 1e-6;
pub const TRANSPORT_TOL: f64 = 1e-9;

/// `max |a - b| / max(1, max |a|)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1.0)
}

/// Runs every check at the packed point `u`. Transition checks use the event
/// states reached by the time-based segments, so `u` should lie on a branch
/// with positive durations.
pub fn run_checks(sys: &System, opts: &IntegratorOptions, u: &DVector<f64>) -> hoc_core::Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let analytic = jacobian_time_based(sys, opts, u)?;
    let failure = RefCell::new(None);
    let numeric = fd::jacobian(
        |v| match residual_time_based(sys, opts, v) {
            Ok(e) => e.residual,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                DVector::from_element(analytic.nrows(), f64::NAN)
            }
        },
        u,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    out.push(CheckOutcome::new("jacobian_fd", relative_error(&analytic, &numeric), JACOBIAN_TOL));

    let layout = hoc_core::Layout::of(sys);
    let cv = Point::unpack(&layout, u)?;
    let eval = evaluate_time_based(sys, opts, u, false)?;
    for (k, seg) in eval.segments.iter().enumerate().take(sys.phase_count()) {
        let label = |what: &str| format!("{what}[{}]", k + 1);
        let phase = sys.phase(seg.phase)?;
        let next = sys.next_phase(seg.phase);
        let x = &seg.state;
        let post = phase.reset(x);

        let d = phase.reset_jacobian(x);
        let d_fd = fd::jacobian(|y| phase.reset(y), x);
        out.push(CheckOutcome::new(label("reset_jacobian_fd"), relative_error(&d, &d_fd), RESET_JACOBIAN_TOL));

        let h_pre = phase.first_integral(x);
        let h_post = sys.energy(next, &post)?;
        out.push(CheckOutcome::new(
            label("reset_energy"),
            (h_post - h_pre).abs() / h_pre.abs().max(1.0),
            TRANSPORT_TOL,
        ));

        let field_post = sys.eval_modified_field(next, &post, cv.xi)?;
        let td = TransitionData {
            field_pre: seg.field.clone(),
            field_post: field_post.clone(),
            reset_jacobian: d,
            event_gradient: phase.event_gradient(x),
        };
        let s = saltation(&td)?;
        let field_err = (&s * &seg.field - &field_post).amax() / field_post.amax().max(1.0);
        out.push(CheckOutcome::new(label("saltation_field"), field_err, TRANSPORT_TOL));

        let dh_pre = phase.first_integral_gradient(x);
        let dh_post = sys.phase(next)?.first_integral_gradient(&post);
        let energy_err = (dh_post * &s - &dh_pre).amax() / dh_pre.amax().max(1.0);
        out.push(CheckOutcome::new(label("saltation_energy"), energy_err, TRANSPORT_TOL));
    }

    // dH . (f + xi grad H) = xi |grad H|^2 at every segment start.
    let mut flow_err: f64 = 0.0;
    for (k, x) in cv.starts.iter().enumerate() {
        let phase_index = layout.segment_phase(k);
        let grad = sys.phase(phase_index)?.first_integral_gradient(x);
        let f = sys.eval_modified_field(phase_index, x, cv.xi)?;
        let lhs = grad.transpose().dot(&f);
        let rhs = cv.xi * grad.norm_squared();
        flow_err = flow_err.max((lhs - rhs).abs() / (grad.norm() * f.norm()).max(1.0));
    }
    out.push(CheckOutcome::new("energy_rate", flow_err, TRANSPORT_TOL));
    Ok(out)
}
