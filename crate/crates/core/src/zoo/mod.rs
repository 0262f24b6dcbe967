//! Reference models in normalized units (mass, length, gravity all 1).

pub mod ball;
pub mod block;
pub mod rod;
pub mod slip;

use nalgebra::{DVector, RowDVector};

use crate::continuation::{
    branch_switch, constrained_kernel_direction, ContinuationProblem, ContinuationSettings,
    TimeBasedProblem,
};
use crate::error::{Error, Result};
use crate::model::{Anchor, HybridSystem};
use crate::scalar::Scalar;
use crate::shooting::{ContinuationVector, Layout};

/// Anchor `c . x` with constant coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAnchor {
    coefficients: Vec<f64>,
}

impl LinearAnchor {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }
}

impl<S: Scalar> Anchor<S> for LinearAnchor {
    fn value(&self, x: &DVector<S>) -> S {
        self.coefficients
            .iter()
            .zip(x.iter())
            .fold(S::zero(), |acc, (c, v)| acc + S::lit(*c) * *v)
    }

    fn gradient(&self, _x: &DVector<S>) -> RowDVector<S> {
        RowDVector::from_iterator(self.coefficients.len(), self.coefficients.iter().map(|c| S::lit(*c)))
    }
}

/// How to leave the (singular) start point of a zoo model.
#[derive(Debug, Clone, PartialEq)]
pub enum StartRule {
    /// Emanating branch `index` of the simple bifurcation at the start point,
    /// oriented so that the summed durations increase.
    Bifurcation { index: usize },
    /// The start point has a kernel of dimension above two; the direction is
    /// the unique kernel vector orthogonal to every listed constraint row
    /// (given in packed layout), oriented so that the summed durations increase.
    ConstrainedKernel { constraints: Vec<Vec<f64>> },
}

/// Closed-form relation usable as a test oracle.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub name: &'static str,
    pub eval: fn(f64) -> f64,
}

/// A model together with its canonical start point and start rule.
#[derive(Debug, Clone)]
pub struct ZooEntry<S: Scalar> {
    pub system: HybridSystem<S>,
    pub initial_point: ContinuationVector<S>,
    pub start_rule: StartRule,
    pub oracles: Vec<Oracle>,
    /// One-line description for listings.
    pub summary: String,
}

impl<S: Scalar> ZooEntry<S> {
    pub fn layout(&self) -> Layout {
        Layout::of(&self.system)
    }

    /// Packed start point.
    pub fn start_vector(&self) -> DVector<S> {
        self.initial_point.pack(&self.layout())
    }

    /// All branch directions through the start point, in the fixed order of
    /// [`branch_switch`], each oriented forward (see [`orient_forward`]).
    pub fn start_directions(&self, settings: &ContinuationSettings) -> Result<Vec<DVector<S>>> {
        let layout = self.layout();
        let problem = TimeBasedProblem::new(&self.system, settings.integrator);
        let u0 = self.start_vector();
        let dirs = match &self.start_rule {
            StartRule::Bifurcation { .. } => branch_switch(&problem, &u0, layout.xi_index(), settings)?,
            StartRule::ConstrainedKernel { constraints } => {
                let dr = problem.jacobian(&u0)?;
                let rows: Vec<DVector<S>> = constraints
                    .iter()
                    .map(|c| DVector::from_iterator(c.len(), c.iter().map(|v| S::lit(*v))))
                    .collect();
                vec![constrained_kernel_direction(&dr, &rows)?]
            }
        };
        Ok(dirs.into_iter().map(|t| orient_forward(&layout, &u0, t)).collect())
    }

    /// Direction of the canonical start branch.
    pub fn start_tangent(&self, settings: &ContinuationSettings) -> Result<DVector<S>> {
        let index = match self.start_rule {
            StartRule::Bifurcation { index } => index,
            StartRule::ConstrainedKernel { .. } => 0,
        };
        self.start_directions(settings)?
            .into_iter()
            .nth(index)
            .ok_or_else(|| Error::Singular(format!("start point has no branch with index {index}")))
    }
}

/// Flips `t` so that durations vanishing at `u` become positive. Ties are
/// broken by the summed durations, the level, `xi` and finally the first
/// nonzero component.
pub fn orient_forward<S: Scalar>(layout: &Layout, u: &DVector<S>, mut t: DVector<S>) -> DVector<S> {
    let tiny = S::lit(1e-9);
    let durations: Vec<usize> = (0..layout.segments()).map(|k| layout.duration_index(k)).collect();
    let sum = |pick: &dyn Fn(usize) -> bool| {
        durations
            .iter()
            .filter(|&&i| pick(i))
            .fold(S::zero(), |acc, &i| acc + t[i])
    };
    let opening = sum(&|i| crate::scalar::abs(u[i]) <= tiny);
    let total = sum(&|_| true);
    let key = [opening, total, t[layout.level_index()], t[layout.xi_index()]]
        .into_iter()
        .chain(t.iter().copied())
        .find(|v| crate::scalar::abs(*v) > tiny)
        .unwrap_or(S::one());
    if key < S::zero() {
        t.neg_mut();
    }
    t
}

pub const MODEL_NAMES: [&str; 4] = ["ball", "block", "rod", "slip"];

/// Builds a zoo model with default parameters.
pub fn entry<S: Scalar>(name: &str) -> Result<ZooEntry<S>> {
    match name {
        "ball" => ball::entry(ball::BallParams::default()),
        "block" => block::entry(block::BlockParams::default()),
        "rod" => rod::entry(rod::RodParams::default()),
        "slip" => slip::entry(slip::SlipParams::default()),
        other => Err(Error::InvalidInput(format!(
            "unknown model '{other}' (available: {})",
            MODEL_NAMES.join(", ")
        ))),
    }
}
