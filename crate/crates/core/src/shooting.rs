//! Multiple-shooting residuals for periodic orbits.
//!
//! The time-based formulation treats every phase duration and phase start as
//! an unknown and never locates events; the state-based formulation composes
//! the event-driven Poincaré map and serves as a cross-check.
//!
//! Packed layout of the unknowns (segments in descending order):
//! `[t_{m+1}, x_{m+1}, t_m, x_m, ..., t_1, x_1, xi, level]`, where segment
//! `m + 1` is the return leg in phase-1 coordinates. Residual rows follow the
//! same descending order: periodicity and anchor first, then the shooting and
//! event rows of phases `m, ..., 1`, then the first-integral row.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::integrator::{integrate_fixed, integrate_to_anchor, integrate_to_event, EventHit, IntegratorOptions};
use crate::model::HybridSystem;
use crate::scalar::{abs, Scalar};
use crate::sensitivity::{saltation, TransitionData};

/// Index arithmetic for the packed continuation vector and residual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    dims: Vec<usize>,
}

impl Layout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidModel(format!("invalid phase dimensions {dims:?}")));
        }
        Ok(Self { dims })
    }

    pub fn of<S: Scalar>(sys: &HybridSystem<S>) -> Self {
        Self { dims: sys.dims() }
    }

    pub fn phase_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of shooting segments, `m + 1`.
    pub fn segments(&self) -> usize {
        self.dims.len() + 1
    }

    /// Phase integrated on segment `k` (zero-based, natural order).
    pub fn segment_phase(&self, k: usize) -> usize {
        k % self.dims.len()
    }

    pub fn segment_dim(&self, k: usize) -> usize {
        self.dims[self.segment_phase(k)]
    }

    /// Length of the packed continuation vector (`N + 1`).
    pub fn unknowns(&self) -> usize {
        (0..self.segments()).map(|k| 1 + self.segment_dim(k)).sum::<usize>() + 2
    }

    /// Length of the residual (`N`).
    pub fn equations(&self) -> usize {
        self.unknowns() - 1
    }

    fn segment_offset(&self, k: usize) -> usize {
        (k + 1..self.segments()).map(|j| 1 + self.segment_dim(j)).sum()
    }

    pub fn duration_index(&self, k: usize) -> usize {
        self.segment_offset(k)
    }

    pub fn start_range(&self, k: usize) -> Range<usize> {
        let o = self.segment_offset(k) + 1;
        o..o + self.segment_dim(k)
    }

    pub fn xi_index(&self) -> usize {
        self.unknowns() - 2
    }

    pub fn level_index(&self) -> usize {
        self.unknowns() - 1
    }

    /// Rows of the residual block closing segment `k`: periodicity and anchor
    /// for the return leg, shooting and event rows otherwise.
    pub fn row_block(&self, k: usize) -> Range<usize> {
        let len = |j: usize| self.segment_dim((j + 1) % self.segments()) + 1;
        let start: usize = (k + 1..self.segments()).map(len).sum();
        start..start + len(k)
    }

    pub fn energy_row(&self) -> usize {
        self.equations() - 1
    }

    /// Column names in packed order, one-based as printed.
    pub fn unknown_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.unknowns());
        for k in (0..self.segments()).rev() {
            names.push(format!("t_{}", k + 1));
            for j in 0..self.segment_dim(k) {
                names.push(format!("xbar_{}_{}", k + 1, j + 1));
            }
        }
        names.push("xi".into());
        names.push("H".into());
        names
    }
}

/// Unknowns of the time-based formulation in natural segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationVector<S: Scalar> {
    /// `durations[k]` is the time spent on segment `k`; the last entry is the
    /// return leg.
    pub durations: Vec<S>,
    /// `starts[k]` is the initial state of segment `k`.
    pub starts: Vec<DVector<S>>,
    pub xi: S,
    /// Target value of the phase-1 first integral.
    pub level: S,
}

impl<S: Scalar> ContinuationVector<S> {
    pub fn new(
        layout: &Layout,
        durations: Vec<S>,
        starts: Vec<DVector<S>>,
        xi: S,
        level: S,
    ) -> Result<Self> {
        check_len("durations", layout.segments(), durations.len())?;
        check_len("phase starts", layout.segments(), starts.len())?;
        for (k, x) in starts.iter().enumerate() {
            check_len(&format!("start of segment {}", k + 1), layout.segment_dim(k), x.len())?;
        }
        Ok(Self {
            durations,
            starts,
            xi,
            level,
        })
    }

    pub fn zeros(layout: &Layout) -> Self {
        Self {
            durations: vec![S::zero(); layout.segments()],
            starts: (0..layout.segments())
                .map(|k| DVector::zeros(layout.segment_dim(k)))
                .collect(),
            xi: S::zero(),
            level: S::zero(),
        }
    }

    pub fn period(&self) -> S {
        self.durations.iter().fold(S::zero(), |acc, t| acc + *t)
    }

    pub fn pack(&self, layout: &Layout) -> DVector<S> {
        let mut u = DVector::zeros(layout.unknowns());
        for k in 0..layout.segments() {
            u[layout.duration_index(k)] = self.durations[k];
            u.rows_mut(layout.start_range(k).start, layout.segment_dim(k))
                .copy_from(&self.starts[k]);
        }
        u[layout.xi_index()] = self.xi;
        u[layout.level_index()] = self.level;
        u
    }

    pub fn unpack(layout: &Layout, u: &DVector<S>) -> Result<Self> {
        check_len("continuation vector", layout.unknowns(), u.len())?;
        let durations = (0..layout.segments()).map(|k| u[layout.duration_index(k)]).collect();
        let starts = (0..layout.segments())
            .map(|k| {
                let r = layout.start_range(k);
                u.rows(r.start, r.len()).into_owned()
            })
            .collect();
        Ok(Self {
            durations,
            starts,
            xi: u[layout.xi_index()],
            level: u[layout.level_index()],
        })
    }
}

/// Infinity norm of one named residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNorm<S: Scalar> {
    pub name: String,
    pub norm: S,
}

/// End of one integrated segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEnd<S: Scalar> {
    pub phase: usize,
    pub state: DVector<S>,
    /// Modified field at the end state.
    pub field: DVector<S>,
    pub phi: Option<DMatrix<S>>,
    pub psi: Option<DVector<S>>,
}

/// Residual, optional Jacobian and the segment data they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBasedEval<S: Scalar> {
    pub residual: DVector<S>,
    pub jacobian: Option<DMatrix<S>>,
    pub blocks: Vec<BlockNorm<S>>,
    pub segments: Vec<SegmentEnd<S>>,
}

fn inf_norm<S: Scalar>(v: &DVector<S>) -> S {
    v.iter().fold(S::zero(), |acc, x| acc.max(abs(*x)))
}

/// Integrates every segment (in parallel) and assembles the residual and,
/// if requested, the Jacobian from the same integrations.
pub fn evaluate_time_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    u: &DVector<S>,
    with_jacobian: bool,
) -> Result<TimeBasedEval<S>> {
    let layout = Layout::of(sys);
    let cv = ContinuationVector::unpack(&layout, u)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite continuation vector".into()));
    }
    let segments: Vec<SegmentEnd<S>> = (0..layout.segments())
        .into_par_iter()
        .map(|k| {
            let phase = layout.segment_phase(k);
            let traj = integrate_fixed(
                sys,
                phase,
                &cv.starts[k],
                cv.xi,
                cv.durations[k],
                with_jacobian,
                opts,
            )?;
            let field = sys.eval_modified_field(phase, &traj.state, cv.xi)?;
            Ok(SegmentEnd {
                phase,
                state: traj.state,
                field,
                phi: traj.phi,
                psi: traj.psi,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let m = layout.phase_count();
    let n_rows = layout.equations();
    let n_cols = layout.unknowns();
    let mut r = DVector::zeros(n_rows);
    let mut jac = with_jacobian.then(|| DMatrix::zeros(n_rows, n_cols));
    let mut blocks = Vec::with_capacity(2 * m + 3);
    let xi_col = layout.xi_index();

    for k in (0..layout.segments()).rev() {
        let seg = &segments[k];
        let rows = layout.row_block(k);
        let next = (k + 1) % layout.segments();
        // For the return leg the "next" start is the beginning of segment 1.
        let target = if k == m { 0 } else { next };
        let n_out = layout.segment_dim(target);
        let (mapped, guard, map_jac, guard_grad) = if k == m {
            let anchor = sys.anchor();
            (
                seg.state.clone(),
                anchor.value(&seg.state),
                DMatrix::identity(n_out, n_out),
                anchor.gradient(&seg.state),
            )
        } else {
            let phase = sys.phase(seg.phase)?;
            (
                phase.reset(&seg.state),
                phase.event(&seg.state),
                phase.reset_jacobian(&seg.state),
                phase.event_gradient(&seg.state),
            )
        };
        let gap = &mapped - &cv.starts[target];
        r.rows_mut(rows.start, n_out).copy_from(&gap);
        r[rows.start + n_out] = guard;
        let (gap_name, guard_name) = if k == m {
            ("periodicity".to_string(), "anchor".to_string())
        } else {
            (format!("shooting_{}", k + 1), format!("event_{}", k + 1))
        };
        blocks.push(BlockNorm {
            name: gap_name,
            norm: inf_norm(&gap),
        });
        blocks.push(BlockNorm {
            name: guard_name,
            norm: abs(guard),
        });

        if let Some(jac) = jac.as_mut() {
            let phi = seg.phi.as_ref().expect("sensitivities requested");
            let psi = seg.psi.as_ref().expect("sensitivities requested");
            let t_col = layout.duration_index(k);
            let x_cols = layout.start_range(k);
            // Shooting rows.
            let df = &map_jac * &seg.field;
            let dphi = &map_jac * phi;
            let dpsi = &map_jac * psi;
            jac.view_mut((rows.start, t_col), (n_out, 1)).copy_from(&df);
            jac.view_mut((rows.start, x_cols.start), (n_out, x_cols.len()))
                .copy_from(&dphi);
            jac.view_mut((rows.start, xi_col), (n_out, 1)).copy_from(&dpsi);
            let target_cols = layout.start_range(target);
            for i in 0..n_out {
                jac[(rows.start + i, target_cols.start + i)] -= S::one();
            }
            // Guard row.
            let g_row = rows.start + n_out;
            jac[(g_row, t_col)] = guard_grad.dot(&seg.field.transpose());
            let gphi = &guard_grad * phi;
            jac.view_mut((g_row, x_cols.start), (1, x_cols.len())).copy_from(&gphi);
            jac[(g_row, xi_col)] = guard_grad.dot(&psi.transpose());
        }
    }

    let h_row = layout.energy_row();
    let phase0 = sys.phase(0)?;
    let h_gap = phase0.first_integral(&cv.starts[0]) - cv.level;
    r[h_row] = h_gap;
    blocks.push(BlockNorm {
        name: "first_integral".into(),
        norm: abs(h_gap),
    });
    if let Some(jac) = jac.as_mut() {
        let cols = layout.start_range(0);
        let grad = phase0.first_integral_gradient(&cv.starts[0]);
        jac.view_mut((h_row, cols.start), (1, cols.len())).copy_from(&grad);
        jac[(h_row, layout.level_index())] = -S::one();
    }

    Ok(TimeBasedEval {
        residual: r,
        jacobian: jac,
        blocks,
        segments,
    })
}

pub fn residual_time_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    u: &DVector<S>,
) -> Result<TimeBasedEval<S>> {
    evaluate_time_based(sys, opts, u, false)
}

pub fn jacobian_time_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    u: &DVector<S>,
) -> Result<DMatrix<S>> {
    Ok(evaluate_time_based(sys, opts, u, true)?
        .jacobian
        .expect("jacobian requested"))
}

/// One event-driven trip around the cycle, from `x0` to the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCycle<S: Scalar> {
    /// Event crossings of phases `1..=m`.
    pub events: Vec<EventHit<S>>,
    /// Phase starts `x_1, ..., x_{m+1}` (the last one after the final reset).
    pub starts: Vec<DVector<S>>,
    pub transitions: Vec<TransitionData<S>>,
    pub anchor: EventHit<S>,
}

impl<S: Scalar> StateCycle<S> {
    pub fn durations(&self) -> Vec<S> {
        self.events
            .iter()
            .map(|e| e.time)
            .chain(std::iter::once(self.anchor.time))
            .collect()
    }
}

/// Integrates phase by phase, resetting at each event and stopping at the
/// anchor crossing in phase 1.
pub fn propagate_state_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    x0: &DVector<S>,
    xi: S,
    with_sensitivities: bool,
) -> Result<StateCycle<S>> {
    let m = sys.phase_count();
    let t_max = S::lit(opts.max_event_time);
    let mut starts = vec![x0.clone()];
    let mut events = Vec::with_capacity(m);
    let mut transitions = Vec::with_capacity(m);
    for k in 0..m {
        let phase = sys.phase(k)?;
        let hit = integrate_to_event(sys, k, &starts[k], xi, t_max, with_sensitivities, opts)?;
        let next = phase.reset(&hit.state_pre);
        let field_post = sys.eval_modified_field(sys.next_phase(k), &next, xi)?;
        transitions.push(TransitionData {
            field_pre: hit.field_pre.clone(),
            field_post,
            reset_jacobian: phase.reset_jacobian(&hit.state_pre),
            event_gradient: hit.guard_gradient.clone(),
        });
        starts.push(next);
        events.push(hit);
    }
    let anchor = integrate_to_anchor(sys, &starts[m], xi, t_max, with_sensitivities, opts)?;
    Ok(StateCycle {
        events,
        starts,
        transitions,
        anchor,
    })
}

/// Event-driven Poincaré map of the modified system.
pub fn poincare_map<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    x0: &DVector<S>,
    xi: S,
) -> Result<DVector<S>> {
    Ok(propagate_state_based(sys, opts, x0, xi, false)?.anchor.state_pre)
}

/// `[P(x0, xi) - x0; H_1(x0) - level]`.
pub fn residual_state_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    x0: &DVector<S>,
    xi: S,
    level: S,
) -> Result<DVector<S>> {
    let p = poincare_map(sys, opts, x0, xi)?;
    let n = x0.len();
    let mut r = DVector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(&(p - x0));
    r[n] = sys.energy(0, x0)? - level;
    Ok(r)
}

/// Jacobian of [`residual_state_based`] with respect to `(x0, xi, level)`.
pub fn jacobian_state_based<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    x0: &DVector<S>,
    xi: S,
    _level: S,
) -> Result<DMatrix<S>> {
    let cycle = propagate_state_based(sys, opts, x0, xi, true)?;
    let n = x0.len();
    let mut phi_total = DMatrix::identity(n, n);
    let mut dxi = DVector::zeros(n);
    for (hit, td) in cycle.events.iter().zip(&cycle.transitions) {
        let phi = hit.phi.as_ref().expect("sensitivities requested");
        let psi = hit.psi.as_ref().expect("sensitivities requested");
        let jump = saltation(td)?;
        dxi = &jump * (phi * dxi + psi);
        phi_total = &jump * phi * phi_total;
    }
    let end = &cycle.anchor;
    let phi = end.phi.as_ref().expect("sensitivities requested");
    let psi = end.psi.as_ref().expect("sensitivities requested");
    dxi = phi * dxi + psi;
    phi_total = phi * phi_total;
    let proj = crate::sensitivity::anchor_projector(&end.field_pre, &end.guard_gradient)?;
    let dp = &proj * phi_total;
    let dp_dxi = &proj * dxi;

    let mut jac = DMatrix::zeros(n + 1, n + 2);
    jac.view_mut((0, 0), (n, n))
        .copy_from(&(dp - DMatrix::identity(n, n)));
    jac.view_mut((0, n), (n, 1)).copy_from(&dp_dxi);
    let grad = sys.phase(0)?.first_integral_gradient(x0);
    jac.view_mut((n, 0), (1, n)).copy_from(&grad);
    jac[(n, n + 1)] = -S::one();
    Ok(jac)
}

/// Why a time-based point has no state-based counterpart.
#[derive(Debug, Clone, PartialEq)]
pub enum Infeasibility {
    /// Segment duration is zero or negative (one-based segment index).
    NonPositiveDuration { segment: usize },
    /// The guard is not decreasing at the end of the segment.
    WrongActivation { segment: usize },
    /// Event-driven integration crosses a guard at a different time.
    EventTimeMismatch { segment: usize },
    StateBasedFailure(String),
}

/// Outcome of comparing a time-based point with event-driven integration.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossValidation<S: Scalar> {
    Feasible {
        /// Infinity norm of the state-based residual at `x_1`.
        residual_norm: S,
        max_time_mismatch: S,
    },
    TimeBasedOnly(Infeasibility),
}

/// Checks whether a time-based solution is also a state-based one.
pub fn cross_validate<S: Scalar>(
    sys: &HybridSystem<S>,
    opts: &IntegratorOptions,
    u: &DVector<S>,
) -> Result<CrossValidation<S>> {
    let layout = Layout::of(sys);
    let cv = ContinuationVector::unpack(&layout, u)?;
    if let Some(k) = cv.durations.iter().position(|t| *t <= S::zero()) {
        return Ok(CrossValidation::TimeBasedOnly(Infeasibility::NonPositiveDuration {
            segment: k + 1,
        }));
    }
    let eval = evaluate_time_based(sys, opts, u, false)?;
    for (k, seg) in eval.segments.iter().enumerate().take(layout.phase_count()) {
        let rate = sys
            .phase(seg.phase)?
            .event_gradient(&seg.state)
            .dot(&seg.field.transpose());
        if !(rate < S::zero()) {
            return Ok(CrossValidation::TimeBasedOnly(Infeasibility::WrongActivation {
                segment: k + 1,
            }));
        }
    }
    let cycle = match propagate_state_based(sys, opts, &cv.starts[0], cv.xi, false) {
        Ok(c) => c,
        Err(e) => {
            return Ok(CrossValidation::TimeBasedOnly(Infeasibility::StateBasedFailure(
                e.to_string(),
            )))
        }
    };
    let mut max_time_mismatch = S::zero();
    for (k, t) in cycle.durations().into_iter().enumerate() {
        let mismatch = abs(t - cv.durations[k]);
        if mismatch > S::lit(1e-6) * (S::one() + abs(t)) {
            return Ok(CrossValidation::TimeBasedOnly(Infeasibility::EventTimeMismatch {
                segment: k + 1,
            }));
        }
        max_time_mismatch = max_time_mismatch.max(mismatch);
    }
    let n = cv.starts[0].len();
    let mut r = DVector::zeros(n + 1);
    r.rows_mut(0, n).copy_from(&(&cycle.anchor.state_pre - &cv.starts[0]));
    r[n] = sys.energy(0, &cv.starts[0])? - cv.level;
    Ok(CrossValidation::Feasible {
        residual_norm: inf_norm(&r),
        max_time_mismatch,
    })
}
