//! Hybrid system description and the energy-dissipating field modification.
//!
//! Phases are indexed from zero internally; phase `k` resets into phase
//! `(k + 1) % m`. User-facing output (CSV columns, CLI) counts from one.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fd;
use crate::scalar::Scalar;

/// One smooth phase of a conservative hybrid system.
///
/// Only the values are mandatory; every derivative falls back to central
/// finite differences of the corresponding value.
pub trait Phase<S: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn field(&self, x: &DVector<S>) -> DVector<S>;

    fn field_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        fd::jacobian(|y| self.field(y), x)
    }

    /// Guard of the transition out of this phase; the crossing happens where
    /// it decreases through zero.
    fn event(&self, x: &DVector<S>) -> S;

    fn event_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        fd::gradient(|y| self.event(y), x)
    }

    /// Reset into the coordinates of the next phase.
    fn reset(&self, x: &DVector<S>) -> DVector<S>;

    fn reset_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        fd::jacobian(|y| self.reset(y), x)
    }

    fn first_integral(&self, x: &DVector<S>) -> S;

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        fd::gradient(|y| self.first_integral(y), x)
    }

    /// Hessian of the first integral, if known in closed form.
    fn first_integral_hessian(&self, _x: &DVector<S>) -> Option<DMatrix<S>> {
        None
    }
}

/// Scalar section in phase 1 that fixes the phase of a periodic orbit.
pub trait Anchor<S: Scalar>: Send + Sync {
    fn value(&self, x: &DVector<S>) -> S;

    fn gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        fd::gradient(|y| self.value(y), x)
    }
}

/// Reference units the model equations were normalized with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 1.0,
        }
    }
}

/// A conservative hybrid dynamical system with a cyclic phase sequence.
#[derive(Clone)]
pub struct HybridSystem<S: Scalar> {
    name: String,
    phases: Vec<Arc<dyn Phase<S>>>,
    anchor: Arc<dyn Anchor<S>>,
    normalization: Normalization,
}

impl<S: Scalar> std::fmt::Debug for HybridSystem<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridSystem")
            .field("name", &self.name)
            .field("dims", &self.dims())
            .field("normalization", &self.normalization)
            .finish()
    }
}

impl<S: Scalar> HybridSystem<S> {
    /// Builds a system and checks that every reset lands in the dimension of
    /// the following phase.
    pub fn new(
        name: impl Into<String>,
        phases: Vec<Arc<dyn Phase<S>>>,
        anchor: Arc<dyn Anchor<S>>,
        normalization: Normalization,
    ) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::InvalidModel("a system needs at least one phase".into()));
        }
        let m = phases.len();
        for (k, phase) in phases.iter().enumerate() {
            if phase.dim() == 0 {
                return Err(Error::InvalidModel(format!("phase {} has dimension 0", k + 1)));
            }
            let probe = DVector::from_element(phase.dim(), S::lit(0.5));
            let next = phases[(k + 1) % m].dim();
            check_len(&format!("reset of phase {}", k + 1), next, phase.reset(&probe).len())?;
            check_len(&format!("field of phase {}", k + 1), phase.dim(), phase.field(&probe).len())?;
        }
        Ok(Self {
            name: name.into(),
            phases,
            anchor,
            normalization,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of phases `m`.
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.phases.iter().map(|p| p.dim()).collect()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn phase(&self, k: usize) -> Result<&dyn Phase<S>> {
        self.phases
            .get(k)
            .map(|p| p.as_ref())
            .ok_or(Error::PhaseIndex {
                index: k,
                phases: self.phases.len(),
            })
    }

    pub fn anchor(&self) -> &dyn Anchor<S> {
        self.anchor.as_ref()
    }

    pub fn next_phase(&self, k: usize) -> usize {
        (k + 1) % self.phases.len()
    }

    fn checked(&self, k: usize, x: &DVector<S>) -> Result<&dyn Phase<S>> {
        let phase = self.phase(k)?;
        check_len(&format!("state of phase {}", k + 1), phase.dim(), x.len())?;
        Ok(phase)
    }

    /// Modified field `f + xi * grad(H)`.
    pub fn eval_modified_field(&self, k: usize, x: &DVector<S>, xi: S) -> Result<DVector<S>> {
        let phase = self.checked(k, x)?;
        let mut f = phase.field(x);
        if xi != S::zero() {
            f += phase.first_integral_gradient(x).transpose() * xi;
        }
        Ok(f)
    }

    /// Partial derivatives of the modified field with respect to the state
    /// and to `xi`.
    ///
    /// Without a closed-form Hessian the state derivative of the gradient term
    /// is finite-differenced; at `xi = 0` it drops out entirely.
    pub fn eval_modified_field_jacobian(
        &self,
        k: usize,
        x: &DVector<S>,
        xi: S,
    ) -> Result<(DMatrix<S>, DVector<S>)> {
        let phase = self.checked(k, x)?;
        let mut dfdx = phase.field_jacobian(x);
        let dfdxi = phase.first_integral_gradient(x).transpose();
        if xi != S::zero() {
            let hessian = phase.first_integral_hessian(x).unwrap_or_else(|| {
                fd::jacobian(|y| phase.first_integral_gradient(y).transpose(), x)
            });
            dfdx += hessian * xi;
        }
        Ok((dfdx, dfdxi))
    }

    /// Value of the first integral of phase `k`.
    pub fn energy(&self, k: usize, x: &DVector<S>) -> Result<S> {
        Ok(self.checked(k, x)?.first_integral(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Harmonic oscillator with a reset that flips velocity at x = 0.
    struct Oscillator;

    impl Phase<f64> for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn field(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[1], -x[0]])
        }
        fn event(&self, x: &DVector<f64>) -> f64 {
            x[0]
        }
        fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0], -x[1]])
        }
        fn first_integral(&self, x: &DVector<f64>) -> f64 {
            0.5 * (x[0] * x[0] + x[1] * x[1])
        }
        fn first_integral_gradient(&self, x: &DVector<f64>) -> RowDVector<f64> {
            x.transpose()
        }
    }

    struct Velocity;
    impl Anchor<f64> for Velocity {
        fn value(&self, x: &DVector<f64>) -> f64 {
            x[1]
        }
    }

    fn system() -> HybridSystem<f64> {
        HybridSystem::new("osc", vec![Arc::new(Oscillator)], Arc::new(Velocity), Normalization::default())
            .unwrap()
    }

    #[test]
    fn modified_field_adds_gradient() {
        let sys = system();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let f = sys.eval_modified_field(0, &x, 0.5).unwrap();
        assert!((f[0] - 2.5).abs() < 1e-9);
        assert!((f[1] - 0.0).abs() < 1e-9);
    }

    #[test]
    fn fallback_hessian_matches_identity() {
        let sys = system();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let (dfdx, dfdxi) = sys.eval_modified_field_jacobian(0, &x, 2.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 2.0]);
        assert!((dfdx - expected).amax() < 1e-7);
        assert!((dfdxi - x).amax() < 1e-8);
    }

    #[test]
    fn wrong_state_length_is_rejected() {
        let sys = system();
        let err = sys.eval_modified_field(0, &DVector::zeros(3), 0.0).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, got: 3, .. }));
        assert!(matches!(sys.phase(1), Err(Error::PhaseIndex { .. })));
    }
}
