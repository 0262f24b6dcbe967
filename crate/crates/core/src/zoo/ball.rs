//! Bouncing ball: one phase, state `[height, vertical velocity]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{LinearAnchor, Oracle, StartRule, ZooEntry};
use crate::error::Result;
use crate::model::{HybridSystem, Normalization, Phase};
use crate::scalar::Scalar;
use crate::shooting::{ContinuationVector, Layout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallParams {
    pub gravity: f64,
}

impl Default for BallParams {
    fn default() -> Self {
        Self { gravity: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Flight {
    gravity: f64,
}

impl<S: Scalar> Phase<S> for Flight {
    fn dim(&self) -> usize {
        2
    }

    fn field(&self, x: &DVector<S>) -> DVector<S> {
        DVector::from_vec(vec![x[1], -S::lit(self.gravity)])
    }

    fn field_jacobian(&self, _x: &DVector<S>) -> DMatrix<S> {
        DMatrix::from_row_slice(2, 2, &[S::zero(), S::one(), S::zero(), S::zero()])
    }

    fn event(&self, x: &DVector<S>) -> S {
        x[0]
    }

    fn event_gradient(&self, _x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![S::one(), S::zero()])
    }

    fn reset(&self, x: &DVector<S>) -> DVector<S> {
        DVector::from_vec(vec![x[0], -x[1]])
    }

    fn reset_jacobian(&self, _x: &DVector<S>) -> DMatrix<S> {
        DMatrix::from_row_slice(2, 2, &[S::one(), S::zero(), S::zero(), -S::one()])
    }

    fn first_integral(&self, x: &DVector<S>) -> S {
        S::lit(0.5) * x[1] * x[1] + S::lit(self.gravity) * x[0]
    }

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![S::lit(self.gravity), x[1]])
    }

    fn first_integral_hessian(&self, _x: &DVector<S>) -> Option<DMatrix<S>> {
        Some(DMatrix::from_row_slice(2, 2, &[S::zero(), S::zero(), S::zero(), S::one()]))
    }
}

pub fn system<S: Scalar>(params: BallParams) -> Result<HybridSystem<S>> {
    HybridSystem::new(
        "ball",
        vec![Arc::new(Flight {
            gravity: params.gravity,
        })],
        // Apex: vertical velocity decreasing through zero.
        Arc::new(LinearAnchor::new(vec![0.0, 1.0])),
        Normalization {
            gravity: params.gravity,
            ..Normalization::default()
        },
    )
}

/// Period of the bouncing orbit at energy `level` (unit gravity).
pub fn period(level: f64) -> f64 {
    (8.0 * level).sqrt()
}

/// Exact continuation vector of the orbit released from rest at `height`.
pub fn exact_orbit<S: Scalar>(params: BallParams, height: f64) -> ContinuationVector<S> {
    let g = params.gravity;
    let fall = (2.0 * height / g).sqrt();
    let speed = g * fall;
    ContinuationVector {
        durations: vec![S::lit(fall), S::lit(fall)],
        starts: vec![
            DVector::from_vec(vec![S::lit(height), S::zero()]),
            DVector::from_vec(vec![S::zero(), S::lit(speed)]),
        ],
        xi: S::zero(),
        level: S::lit(g * height),
    }
}

pub fn entry<S: Scalar>(params: BallParams) -> Result<ZooEntry<S>> {
    let system = system(params)?;
    let layout = Layout::of(&system);
    Ok(ZooEntry {
        initial_point: ContinuationVector::zeros(&layout),
        system,
        start_rule: StartRule::Bifurcation { index: 1 },
        oracles: vec![Oracle {
            name: "period",
            eval: period,
        }],
        summary: "ball (m=1, n1=2): bouncing ball with elastic impacts".into(),
    })
}
