//! Rigid rod of unit length bouncing alternately on its two ends.
//!
//! State `[height, angle, vertical velocity, angular velocity]` in both
//! phases. Phase 1 ends when the first end touches down, phase 2 when the
//! second one does.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{LinearAnchor, StartRule, ZooEntry};
use crate::error::Result;
use crate::model::{HybridSystem, Normalization, Phase};
use crate::scalar::Scalar;
use crate::shooting::{ContinuationVector, Layout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodParams {
    /// Radius of gyration.
    pub gyration: f64,
    pub gravity: f64,
}

impl Default for RodParams {
    fn default() -> Self {
        Self {
            gyration: 0.01,
            gravity: 1.0,
        }
    }
}

/// Free flight ending with an impact of the end on side `side` (`-1` or `+1`).
#[derive(Debug, Clone, Copy)]
pub struct Flight {
    params: RodParams,
    side: f64,
}

impl Flight {
    fn r2<S: Scalar>(&self) -> S {
        S::lit(self.params.gyration * self.params.gyration)
    }
}

impl<S: Scalar> Phase<S> for Flight {
    fn dim(&self) -> usize {
        4
    }

    fn field(&self, x: &DVector<S>) -> DVector<S> {
        DVector::from_vec(vec![x[2], x[3], -S::lit(self.params.gravity), S::zero()])
    }

    fn field_jacobian(&self, _x: &DVector<S>) -> DMatrix<S> {
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = S::one();
        j[(1, 3)] = S::one();
        j
    }

    fn event(&self, x: &DVector<S>) -> S {
        x[0] + S::lit(0.5 * self.side) * x[1].sin()
    }

    fn event_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![
            S::one(),
            S::lit(0.5 * self.side) * x[1].cos(),
            S::zero(),
            S::zero(),
        ])
    }

    /// Elastic impact of the contacting end, conserving energy.
    fn reset(&self, x: &DVector<S>) -> DVector<S> {
        let sd = S::lit(self.side);
        let r2 = self.r2::<S>();
        let c = x[1].cos();
        let q = S::lit(4.0) / (c * c + S::lit(4.0) * r2);
        let dvy = S::lit(2.0) * r2 * x[2] + sd * r2 * c * x[3];
        let dw = S::lit(0.5) * c * c * x[3] + sd * c * x[2];
        DVector::from_vec(vec![x[0], x[1], x[2] - q * dvy, x[3] - q * dw])
    }

    fn reset_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        let sd = S::lit(self.side);
        let r2 = self.r2::<S>();
        let (s, c) = (x[1].sin(), x[1].cos());
        let denom = c * c + S::lit(4.0) * r2;
        let q = S::lit(4.0) / denom;
        let dq = S::lit(8.0) * c * s / (denom * denom);
        let dvy = S::lit(2.0) * r2 * x[2] + sd * r2 * c * x[3];
        let dw = S::lit(0.5) * c * c * x[3] + sd * c * x[2];
        let mut j = DMatrix::identity(4, 4);
        // Row of the vertical velocity.
        j[(2, 1)] = -(dq * dvy + q * (-sd * r2 * s * x[3]));
        j[(2, 2)] -= q * S::lit(2.0) * r2;
        j[(2, 3)] = -q * sd * r2 * c;
        // Row of the angular velocity.
        j[(3, 1)] = -(dq * dw + q * (-c * s * x[3] - sd * s * x[2]));
        j[(3, 2)] = -q * sd * c;
        j[(3, 3)] -= q * S::lit(0.5) * c * c;
        j
    }

    fn first_integral(&self, x: &DVector<S>) -> S {
        S::lit(0.5) * (x[2] * x[2] + self.r2::<S>() * x[3] * x[3]) + S::lit(self.params.gravity) * x[0]
    }

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![
            S::lit(self.params.gravity),
            S::zero(),
            x[2],
            self.r2::<S>() * x[3],
        ])
    }

    fn first_integral_hessian(&self, _x: &DVector<S>) -> Option<DMatrix<S>> {
        let mut h = DMatrix::zeros(4, 4);
        h[(2, 2)] = S::one();
        h[(3, 3)] = self.r2::<S>();
        Some(h)
    }
}

pub fn system<S: Scalar>(params: RodParams) -> Result<HybridSystem<S>> {
    HybridSystem::new(
        "rod",
        vec![
            Arc::new(Flight { params, side: -1.0 }),
            Arc::new(Flight { params, side: 1.0 }),
        ],
        Arc::new(LinearAnchor::new(vec![0.0, 0.0, 1.0, 0.0])),
        Normalization {
            gravity: params.gravity,
            ..Normalization::default()
        },
    )
}

/// Packed-layout constraints selecting the symmetric in-phase family at the
/// resting start point: no dissipation and `t_1 + t_3 = t_2`.
pub fn symmetric_constraints(layout: &Layout) -> Vec<Vec<f64>> {
    let mut no_xi = vec![0.0; layout.unknowns()];
    no_xi[layout.xi_index()] = 1.0;
    let mut timing = vec![0.0; layout.unknowns()];
    timing[layout.duration_index(0)] = 1.0;
    timing[layout.duration_index(1)] = -1.0;
    timing[layout.duration_index(2)] = 1.0;
    vec![no_xi, timing]
}

pub fn entry<S: Scalar>(params: RodParams) -> Result<ZooEntry<S>> {
    let system = system(params)?;
    let layout = Layout::of(&system);
    Ok(ZooEntry {
        initial_point: ContinuationVector::zeros(&layout),
        start_rule: StartRule::ConstrainedKernel {
            constraints: symmetric_constraints(&layout),
        },
        system,
        oracles: Vec::new(),
        summary: "rod (m=2): rigid rod bouncing on alternate ends".into(),
    })
}
