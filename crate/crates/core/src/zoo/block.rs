//! Rocking block folded onto one side: state `[tilt, tilt rate]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{LinearAnchor, Oracle, StartRule, ZooEntry};
use crate::error::Result;
use crate::model::{HybridSystem, Normalization, Phase};
use crate::scalar::Scalar;
use crate::shooting::{ContinuationVector, Layout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockParams {
    /// Slenderness angle; the block tips over beyond it.
    pub slenderness: f64,
    pub gravity: f64,
    pub half_diagonal: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            slenderness: 0.3,
            gravity: 1.0,
            half_diagonal: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Rocking {
    params: BlockParams,
}

impl Rocking {
    fn stiffness(&self) -> f64 {
        self.params.gravity / self.params.half_diagonal
    }
}

impl<S: Scalar> Phase<S> for Rocking {
    fn dim(&self) -> usize {
        2
    }

    fn field(&self, x: &DVector<S>) -> DVector<S> {
        let beta = S::lit(self.params.slenderness);
        let k = S::lit(0.75 * self.stiffness());
        DVector::from_vec(vec![x[1], -k * (beta - x[0]).sin()])
    }

    fn field_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        let beta = S::lit(self.params.slenderness);
        let k = S::lit(0.75 * self.stiffness());
        DMatrix::from_row_slice(2, 2, &[S::zero(), S::one(), k * (beta - x[0]).cos(), S::zero()])
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
        let beta = S::lit(self.params.slenderness);
        let k = S::lit(self.stiffness());
        S::lit(2.0 / 3.0) * x[1] * x[1] + k * ((x[0] - beta).cos() - beta.cos())
    }

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        let beta = S::lit(self.params.slenderness);
        let k = S::lit(self.stiffness());
        RowDVector::from_vec(vec![-k * (x[0] - beta).sin(), S::lit(4.0 / 3.0) * x[1]])
    }

    fn first_integral_hessian(&self, x: &DVector<S>) -> Option<DMatrix<S>> {
        let beta = S::lit(self.params.slenderness);
        let k = S::lit(self.stiffness());
        Some(DMatrix::from_row_slice(
            2,
            2,
            &[-k * (x[0] - beta).cos(), S::zero(), S::zero(), S::lit(4.0 / 3.0)],
        ))
    }
}

pub fn system<S: Scalar>(params: BlockParams) -> Result<HybridSystem<S>> {
    HybridSystem::new(
        "block",
        vec![Arc::new(Rocking { params })],
        Arc::new(LinearAnchor::new(vec![0.0, 1.0])),
        Normalization {
            gravity: params.gravity,
            length: params.half_diagonal,
            ..Normalization::default()
        },
    )
}

/// Energy of the upright-balanced configuration, the limit of the family.
pub fn max_level(params: BlockParams) -> f64 {
    params.gravity / params.half_diagonal * (1.0 - params.slenderness.cos())
}

pub fn entry<S: Scalar>(params: BlockParams) -> Result<ZooEntry<S>> {
    let system = system(params)?;
    let layout = Layout::of(&system);
    Ok(ZooEntry {
        initial_point: ContinuationVector::zeros(&layout),
        system,
        start_rule: StartRule::Bifurcation { index: 1 },
        oracles: vec![Oracle {
            name: "max_level",
            eval: |_| max_level(BlockParams::default()),
        }],
        summary: "block (m=1, n1=2): rocking block on a rigid floor".into(),
    })
}
