//! Spring-loaded inverted pendulum with a swinging leg in flight.
//!
//! Stance state `[leg angle, leg length, leg angle rate, leg length rate]`,
//! flight state `[height, leg angle, forward velocity, vertical velocity,
//! leg angle rate]`. The cycle is anchored at mid-stance (maximal compression).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::{LinearAnchor, Oracle, StartRule, ZooEntry};
use crate::error::Result;
use crate::model::{HybridSystem, Normalization, Phase};
use crate::scalar::Scalar;
use crate::shooting::{ContinuationVector, Layout};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipParams {
    pub stiffness: f64,
    /// Squared natural frequency of the leg swing in flight.
    pub swing_frequency_sq: f64,
    pub gravity: f64,
}

impl Default for SlipParams {
    fn default() -> Self {
        Self {
            stiffness: 40.0,
            swing_frequency_sq: 5.0,
            gravity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stance {
    params: SlipParams,
}

impl<S: Scalar> Phase<S> for Stance {
    fn dim(&self) -> usize {
        4
    }

    fn field(&self, x: &DVector<S>) -> DVector<S> {
        let g = S::lit(self.params.gravity);
        let k = S::lit(self.params.stiffness);
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        DVector::from_vec(vec![
            da,
            dl,
            -S::lit(2.0) * da * dl / l + g / l * a.sin(),
            l * da * da - g * a.cos() - k * (l - S::one()),
        ])
    }

    fn field_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        let g = S::lit(self.params.gravity);
        let k = S::lit(self.params.stiffness);
        let two = S::lit(2.0);
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = S::one();
        j[(1, 3)] = S::one();
        j[(2, 0)] = g / l * a.cos();
        j[(2, 1)] = two * da * dl / (l * l) - g * a.sin() / (l * l);
        j[(2, 2)] = -two * dl / l;
        j[(2, 3)] = -two * da / l;
        j[(3, 0)] = g * a.sin();
        j[(3, 1)] = da * da - k;
        j[(3, 2)] = two * l * da;
        j
    }

    /// Lift-off when the leg extends back to rest length.
    fn event(&self, x: &DVector<S>) -> S {
        S::one() - x[1]
    }

    fn event_gradient(&self, _x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![S::zero(), -S::one(), S::zero(), S::zero()])
    }

    fn reset(&self, x: &DVector<S>) -> DVector<S> {
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        let (s, c) = (a.sin(), a.cos());
        DVector::from_vec(vec![l * c, a, -dl * s - da * l * c, dl * c - da * l * s, da])
    }

    fn reset_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        let (s, c) = (a.sin(), a.cos());
        let z = S::zero();
        let o = S::one();
        DMatrix::from_row_slice(
            5,
            4,
            &[
                -l * s, c, z, z, //
                o, z, z, z, //
                -dl * c + da * l * s, -da * c, -l * c, -s, //
                -dl * s - da * l * c, -da * s, -l * s, c, //
                z, z, o, z,
            ],
        )
    }

    fn first_integral(&self, x: &DVector<S>) -> S {
        let g = S::lit(self.params.gravity);
        let k = S::lit(self.params.stiffness);
        let half = S::lit(0.5);
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        half * (da * da * l * l + dl * dl) + g * a.cos() * l + half * k * (l - S::one()).powi(2)
    }

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        let g = S::lit(self.params.gravity);
        let k = S::lit(self.params.stiffness);
        let (a, l, da, dl) = (x[0], x[1], x[2], x[3]);
        RowDVector::from_vec(vec![
            -g * a.sin() * l,
            da * da * l + g * a.cos() + k * (l - S::one()),
            da * l * l,
            dl,
        ])
    }

    fn first_integral_hessian(&self, x: &DVector<S>) -> Option<DMatrix<S>> {
        let g = S::lit(self.params.gravity);
        let k = S::lit(self.params.stiffness);
        let two = S::lit(2.0);
        let (a, l, da, _) = (x[0], x[1], x[2], x[3]);
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = -g * a.cos() * l;
        h[(0, 1)] = -g * a.sin();
        h[(1, 0)] = h[(0, 1)];
        h[(1, 1)] = da * da + k;
        h[(1, 2)] = two * da * l;
        h[(2, 1)] = h[(1, 2)];
        h[(2, 2)] = l * l;
        h[(3, 3)] = S::one();
        Some(h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Flight {
    params: SlipParams,
}

impl<S: Scalar> Phase<S> for Flight {
    fn dim(&self) -> usize {
        5
    }

    fn field(&self, x: &DVector<S>) -> DVector<S> {
        let w2 = S::lit(self.params.swing_frequency_sq);
        DVector::from_vec(vec![x[3], x[4], S::zero(), -S::lit(self.params.gravity), -w2 * x[1]])
    }

    fn field_jacobian(&self, _x: &DVector<S>) -> DMatrix<S> {
        let mut j = DMatrix::zeros(5, 5);
        j[(0, 3)] = S::one();
        j[(1, 4)] = S::one();
        j[(4, 1)] = -S::lit(self.params.swing_frequency_sq);
        j
    }

    /// Touch-down when the foot of the rest-length leg reaches the ground.
    fn event(&self, x: &DVector<S>) -> S {
        x[0] - x[1].cos()
    }

    fn event_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![S::one(), x[1].sin(), S::zero(), S::zero(), S::zero()])
    }

    fn reset(&self, x: &DVector<S>) -> DVector<S> {
        let (a, vx, vy) = (x[1], x[2], x[3]);
        let (s, c) = (a.sin(), a.cos());
        DVector::from_vec(vec![a, S::one(), -(c * vx + s * vy), c * vy - s * vx])
    }

    fn reset_jacobian(&self, x: &DVector<S>) -> DMatrix<S> {
        let (a, vx, vy) = (x[1], x[2], x[3]);
        let (s, c) = (a.sin(), a.cos());
        let z = S::zero();
        DMatrix::from_row_slice(
            4,
            5,
            &[
                z, S::one(), z, z, z, //
                z, z, z, z, z, //
                z, s * vx - c * vy, -c, -s, z, //
                z, -s * vy - c * vx, -s, c, z,
            ],
        )
    }

    fn first_integral(&self, x: &DVector<S>) -> S {
        S::lit(0.5) * (x[2] * x[2] + x[3] * x[3]) + S::lit(self.params.gravity) * x[0]
    }

    fn first_integral_gradient(&self, x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_vec(vec![S::lit(self.params.gravity), S::zero(), x[2], x[3], S::zero()])
    }

    fn first_integral_hessian(&self, _x: &DVector<S>) -> Option<DMatrix<S>> {
        let mut h = DMatrix::zeros(5, 5);
        h[(2, 2)] = S::one();
        h[(3, 3)] = S::one();
        Some(h)
    }
}

pub fn system<S: Scalar>(params: SlipParams) -> Result<HybridSystem<S>> {
    HybridSystem::new(
        "slip",
        vec![Arc::new(Stance { params }), Arc::new(Flight { params })],
        // Maximal compression: leg length rate increasing through zero.
        Arc::new(LinearAnchor::new(vec![0.0, 0.0, 0.0, -1.0])),
        Normalization {
            gravity: params.gravity,
            ..Normalization::default()
        },
    )
}

/// Period of the vertical stance oscillation.
pub fn stance_period(params: SlipParams) -> f64 {
    2.0 * std::f64::consts::PI / params.stiffness.sqrt()
}

/// Hopping in place that just reaches lift-off with zero velocity: the
/// bifurcation between hopping and the pure stance oscillation.
pub fn start_point<S: Scalar>(params: SlipParams, layout: &Layout) -> ContinuationVector<S> {
    let g = params.gravity;
    let k = params.stiffness;
    let half = S::lit(0.5 * stance_period(params));
    // Maximal compression of the oscillation about l = 1 - g/k touching l = 1.
    let nadir = 1.0 - 2.0 * g / k;
    let touchdown = DVector::from_vec(vec![S::zero(), S::one(), S::zero(), S::zero()]);
    let liftoff = DVector::from_vec(vec![S::one(), S::zero(), S::zero(), S::zero(), S::zero()]);
    let bottom = DVector::from_vec(vec![S::zero(), S::lit(nadir), S::zero(), S::zero()]);
    let level = g * nadir + 0.5 * k * (nadir - 1.0).powi(2);
    ContinuationVector::new(
        layout,
        vec![half, S::zero(), half],
        vec![bottom, liftoff, touchdown],
        S::zero(),
        S::lit(level),
    )
    .expect("layout of the slip model")
}

pub fn entry<S: Scalar>(params: SlipParams) -> Result<ZooEntry<S>> {
    let system = system(params)?;
    let layout = Layout::of(&system);
    Ok(ZooEntry {
        initial_point: start_point(params, &layout),
        system,
        start_rule: StartRule::Bifurcation { index: 1 },
        oracles: vec![Oracle {
            name: "stance_period",
            eval: |_| stance_period(SlipParams::default()),
        }],
        summary: "slip (m=2, nS=4, nF=5): spring-loaded inverted pendulum".into(),
    })
}
