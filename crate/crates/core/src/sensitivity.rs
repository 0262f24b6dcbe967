//! Saltation matrices, hybrid fundamental matrices and monodromy.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};

use crate::error::{check_len, Error, Result};
use crate::integrator::IntegratorOptions;
use crate::model::HybridSystem;
use crate::scalar::{abs, Scalar};
use crate::shooting::{evaluate_time_based, ContinuationVector, Layout};

/// Data describing one phase transition at its crossing point.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionData<S: Scalar> {
    /// Modified field just before the event.
    pub field_pre: DVector<S>,
    /// Modified field of the next phase at the reset state.
    pub field_post: DVector<S>,
    pub reset_jacobian: DMatrix<S>,
    pub event_gradient: RowDVector<S>,
}

/// `de . f_pre`, rejecting near-tangential crossings.
fn event_rate<S: Scalar>(grad: &RowDVector<S>, field: &DVector<S>) -> Result<S> {
    check_len("event gradient", field.len(), grad.len())?;
    let rate = grad.dot(&field.transpose());
    if abs(rate) < S::lit(1e-12) * grad.norm() * field.norm() || rate == S::zero() {
        return Err(Error::Grazing {
            phase: 0,
            rate: rate.as_f64(),
        });
    }
    Ok(rate)
}

/// `S = D + (f_post - D f_pre) de / (de f_pre)`.
pub fn saltation<S: Scalar>(td: &TransitionData<S>) -> Result<DMatrix<S>> {
    let rate = event_rate(&td.event_gradient, &td.field_pre)?;
    check_len("post-event field", td.reset_jacobian.nrows(), td.field_post.len())?;
    let jump = &td.field_post - &td.reset_jacobian * &td.field_pre;
    Ok(&td.reset_jacobian + (jump / rate) * &td.event_gradient)
}

/// Saltation matrix for a transition that coincides with the anchor:
/// `D (I - f_pre de / (de f_pre))`.
pub fn saltation_anchor<S: Scalar>(td: &TransitionData<S>) -> Result<DMatrix<S>> {
    Ok(&td.reset_jacobian * anchor_projector(&td.field_pre, &td.event_gradient)?)
}

/// Derivative of the time-to-event with respect to the initial state.
pub fn time_to_event_gradient<S: Scalar>(
    td: &TransitionData<S>,
    phi_pre: &DMatrix<S>,
) -> Result<RowDVector<S>> {
    let rate = event_rate(&td.event_gradient, &td.field_pre)?;
    Ok(-(&td.event_gradient * phi_pre) / rate)
}

/// Projector `I - f da / (da f)` that removes the time shift along a section.
pub fn anchor_projector<S: Scalar>(field: &DVector<S>, grad: &RowDVector<S>) -> Result<DMatrix<S>> {
    let rate = event_rate(grad, field)?;
    let n = field.len();
    Ok(DMatrix::identity(n, n) - (field / rate) * grad)
}

/// `(I - f_end da / (da f_end)) Phi`.
pub fn poincare_jacobian<S: Scalar>(
    phi: &DMatrix<S>,
    field_end: &DVector<S>,
    anchor_gradient: &RowDVector<S>,
) -> Result<DMatrix<S>> {
    Ok(anchor_projector(field_end, anchor_gradient)? * phi)
}

/// Fundamental matrix of a hybrid trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridFundamental<S: Scalar> {
    /// Cumulative products `S_k Phi_k ... S_1 Phi_1`, one per transition.
    pub factors: Vec<DMatrix<S>>,
    pub product: DMatrix<S>,
}

/// Composes `Phi_{m+1} S_m Phi_m ... S_1 Phi_1` from per-phase flows
/// (`flows.len() == transitions.len() + 1`).
pub fn hybrid_fundamental<S: Scalar>(
    flows: &[DMatrix<S>],
    transitions: &[TransitionData<S>],
) -> Result<HybridFundamental<S>> {
    check_len("phase flows", transitions.len() + 1, flows.len())?;
    let n0 = flows[0].ncols();
    let mut acc = DMatrix::identity(n0, n0);
    let mut factors = Vec::with_capacity(transitions.len());
    for (phi, td) in flows.iter().zip(transitions) {
        check_len("flow matrix", acc.nrows(), phi.ncols())?;
        acc = saltation(td)? * phi * acc;
        factors.push(acc.clone());
    }
    let last = flows.last().expect("at least one flow");
    check_len("flow matrix", acc.nrows(), last.ncols())?;
    Ok(HybridFundamental {
        factors,
        product: last * acc,
    })
}

/// Eigenvalues of a monodromy matrix.
pub fn floquet_multipliers<S: Scalar>(monodromy: &DMatrix<S>) -> Vec<Complex<S>> {
    monodromy.clone().complex_eigenvalues().iter().copied().collect()
}

/// Monodromy data of a periodic orbit given in time-based form.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy<S: Scalar> {
    pub fundamental: HybridFundamental<S>,
    /// Modified field at the cycle start.
    pub field_start: DVector<S>,
    /// Modified field at the cycle end.
    pub field_end: DVector<S>,
    pub anchor_gradient: RowDVector<S>,
    pub poincare_jacobian: DMatrix<S>,
    pub multipliers: Vec<Complex<S>>,
}

impl<S: Scalar> Monodromy<S> {
    pub fn matrix(&self) -> &DMatrix<S> {
        &self.fundamental.product
    }
}

/// Monodromy of the orbit encoded by a time-based continuation vector.
///
/// Saltation matrices are evaluated at the segment ends, so the point must
/// have transversal crossings.
pub fn monodromy_time_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    u: &DVector<S>,
) -> Result<Monodromy<S>> {
    let layout = Layout::of(sys);
    let cv = ContinuationVector::unpack(&layout, u)?;
    let eval = evaluate_time_based(sys, opts, u, true)?;
    let m = layout.phase_count();
    let mut flows = Vec::with_capacity(m + 1);
    let mut transitions = Vec::with_capacity(m);
    for (k, seg) in eval.segments.iter().enumerate() {
        flows.push(seg.phi.clone().expect("sensitivities requested"));
        if k < m {
            let phase = sys.phase(seg.phase)?;
            let post = phase.reset(&seg.state);
            transitions.push(TransitionData {
                field_pre: seg.field.clone(),
                field_post: sys.eval_modified_field(sys.next_phase(seg.phase), &post, cv.xi)?,
                reset_jacobian: phase.reset_jacobian(&seg.state),
                event_gradient: phase.event_gradient(&seg.state),
            });
        }
    }
    let fundamental = hybrid_fundamental(&flows, &transitions)?;
    let end = &eval.segments[m];
    let anchor_gradient = sys.anchor().gradient(&end.state);
    let poincare = poincare_jacobian(&fundamental.product, &end.field, &anchor_gradient)?;
    let multipliers = floquet_multipliers(&fundamental.product);
    Ok(Monodromy {
        fundamental,
        field_start: sys.eval_modified_field(0, &cv.starts[0], cv.xi)?,
        field_end: end.field.clone(),
        anchor_gradient,
        poincare_jacobian: poincare,
        multipliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_impact(vy: f64) -> TransitionData<f64> {
        TransitionData {
            field_pre: DVector::from_vec(vec![vy, -1.0]),
            field_post: DVector::from_vec(vec![-vy, -1.0]),
            reset_jacobian: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            event_gradient: RowDVector::from_vec(vec![1.0, 0.0]),
        }
    }

    #[test]
    fn ball_impact_saltation_closed_form() {
        let s = saltation(&ball_impact(-2.0)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -2.0 / -2.0, -1.0]);
        assert!((s - expected).amax() < 1e-15);
    }

    #[test]
    fn anchor_saltation_kills_the_flow_direction() {
        let td = ball_impact(-1.5);
        let s = saltation_anchor(&td).unwrap();
        assert!((s * &td.field_pre).amax() < 1e-15);
    }

    #[test]
    fn zero_event_rate_is_grazing() {
        let mut td = ball_impact(-1.0);
        td.field_pre = DVector::from_vec(vec![0.0, -1.0]);
        assert!(matches!(saltation(&td), Err(Error::Grazing { .. })));
    }

    #[test]
    fn time_to_event_gradient_of_free_fall() {
        // From height y with vy = 0 the impact time is sqrt(2y); d/dy = 1/sqrt(2y).
        let y = 0.5f64;
        let t = (2.0 * y).sqrt();
        let td = ball_impact(-t);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
        let dt = time_to_event_gradient(&td, &phi).unwrap();
        assert!((dt[0] - 1.0 / (2.0 * y).sqrt()).abs() < 1e-14);
        assert!((dt[1] - t / t).abs() < 1e-14);
    }

    #[test]
    fn composition_checks_dimensions() {
        let flows = vec![DMatrix::<f64>::identity(2, 2)];
        let err = hybrid_fundamental(&flows, &[ball_impact(-1.0)]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
