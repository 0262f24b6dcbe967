//! Pseudo-arclength continuation with bifurcation detection, localization
//! and branch switching.
//!
//! The engine works on any underdetermined system `r(u) = 0` with one more
//! unknown than equations; [`TimeBasedProblem`] adapts the time-based
//! shooting residual.

use std::cmp::Ordering;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::integrator::IntegratorOptions;
use crate::linalg::{bordered_determinant, inf_norm, kernel_pairs, left_null_vector, right_singular_pairs, solve};
use crate::model::HybridSystem;
use crate::scalar::{abs, Scalar};
use crate::shooting::{evaluate_time_based, Layout};

/// Relative singular-value threshold for counting kernel dimensions.
const KERNEL_RTOL: f64 = 1e-6;

/// An underdetermined nonlinear system to continue.
pub trait ContinuationProblem<S: Scalar>: Sync {
    /// Number of unknowns; the residual has one entry less.
    fn unknowns(&self) -> usize;

    /// Index of the parameter whose extrema mark turning points.
    fn level_index(&self) -> usize;

    fn evaluate(&self, u: &DVector<S>, with_jacobian: bool) -> Result<(DVector<S>, Option<DMatrix<S>>)>;

    /// Unknowns that are phase durations; only used to order the branches
    /// through a bifurcation point.
    fn duration_indices(&self) -> Vec<usize> {
        Vec::new()
    }

    fn jacobian(&self, u: &DVector<S>) -> Result<DMatrix<S>> {
        Ok(self.evaluate(u, true)?.1.expect("jacobian requested"))
    }
}

/// Time-based periodic-orbit residual of a hybrid system.
#[derive(Debug, Clone)]
pub struct TimeBasedProblem<'a, S: Scalar> {
    pub system: &'a HybridSystem<S>,
    pub integrator: IntegratorOptions,
    layout: Layout,
}

impl<'a, S: Scalar> TimeBasedProblem<'a, S> {
    pub fn new(system: &'a HybridSystem<S>, integrator: IntegratorOptions) -> Self {
        Self {
            system,
            integrator,
            layout: Layout::of(system),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

impl<S: Scalar> ContinuationProblem<S> for TimeBasedProblem<'_, S> {
    fn unknowns(&self) -> usize {
        self.layout.unknowns()
    }

    fn level_index(&self) -> usize {
        self.layout.level_index()
    }

    fn evaluate(&self, u: &DVector<S>, with_jacobian: bool) -> Result<(DVector<S>, Option<DMatrix<S>>)> {
        let eval = evaluate_time_based(self.system, &self.integrator, u, with_jacobian)?;
        Ok((eval.residual, eval.jacobian))
    }

    fn duration_indices(&self) -> Vec<usize> {
        (0..self.layout.segments()).map(|k| self.layout.duration_index(k)).collect()
    }
}

/// Step control and stopping criteria. Plain `f64` for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Accepted continuation steps before stopping.
    pub max_steps: usize,
    pub residual_tol: f64,
    pub newton_step_tol: f64,
    pub max_newton_iter: usize,
    /// Steps accepted with at most this many Newton iterations double `h`.
    pub fast_iterations: usize,
    /// Stop once the level leaves `[min, max]`.
    pub level_bounds: Option<(f64, f64)>,
    pub max_arclength: Option<f64>,
    /// Localize simple bifurcations flagged by a tangent flip.
    pub locate_bifurcations: bool,
    /// `+1` or `-1`: initial orientation relative to the start tangent.
    pub direction: i8,
    pub integrator: IntegratorOptions,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            min_step: 1e-6,
            max_step: 0.5,
            max_steps: 100,
            residual_tol: 1e-9,
            newton_step_tol: 1e-10,
            max_newton_iter: 20,
            fast_iterations: 3,
            level_bounds: None,
            max_arclength: None,
            locate_bifurcations: true,
            direction: 1,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointClass {
    Regular,
    Turning,
    SimpleBifurcation,
    SingularOther,
}

impl PointClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::Regular => "regular",
            PointClass::Turning => "turning",
            PointClass::SimpleBifurcation => "simple_bifurcation",
            PointClass::SingularOther => "singular_other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            PointClass::Regular,
            PointClass::Turning,
            PointClass::SimpleBifurcation,
            PointClass::SingularOther,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<S: Scalar> {
    pub residual_norm: S,
    pub iterations: usize,
    /// Sign of `det([dr; tangent])`; zero where the tangent is not defined.
    pub det_sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint<S: Scalar> {
    /// Packed continuation vector.
    pub u: DVector<S>,
    /// Unit tangent oriented by the determinant rule.
    pub tangent: DVector<S>,
    /// Direction multiplier: the branch is followed along `direction * tangent`.
    pub direction: i8,
    pub arclength: S,
    pub class: PointClass,
    pub diagnostics: Diagnostics<S>,
}

impl<S: Scalar> BranchPoint<S> {
    /// Geometric direction of travel.
    pub fn heading(&self) -> DVector<S> {
        &self.tangent * S::lit(self.direction as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxSteps,
    LevelBound,
    ArclengthBound,
    StepUnderflow { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<S: Scalar> {
    pub points: Vec<BranchPoint<S>>,
    pub termination: Termination,
}

impl<S: Scalar> Branch<S> {
    pub fn count(&self, class: PointClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }
}

/// Unit kernel vector of a full-rank `dr`, oriented so that
/// `det([dr; tangent]) > 0`.
///
/// Rank and kernel are taken from the equilibrated matrix: long phases near
/// saddles make the raw columns differ by many orders of magnitude.
pub fn tangent<S: Scalar>(dr: &DMatrix<S>) -> Result<DVector<S>> {
    let (values, mut vectors) = kernel_pairs(dr)?;
    let n = values.len();
    // values[n - 1] is the padding zero (or the kernel); values[n - 2] is the
    // smallest singular value of dr itself.
    if n < 2 || !(values[n - 2] > S::lit(1e-13) * values[0]) {
        return Err(Error::Singular("continuation Jacobian is rank deficient".into()));
    }
    let mut t = vectors.pop().expect("nonempty");
    t /= t.norm();
    if bordered_determinant(dr, &t) < S::zero() {
        t.neg_mut();
    }
    Ok(t)
}

/// `u + h * direction * tangent`.
pub fn predict<S: Scalar>(u: &DVector<S>, tangent: &DVector<S>, direction: i8, h: S) -> DVector<S> {
    u + tangent * (h * S::lit(direction as f64))
}

/// Corrected point with the Jacobian evaluated there.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected<S: Scalar> {
    pub u: DVector<S>,
    pub jacobian: DMatrix<S>,
    pub residual_norm: S,
    pub iterations: usize,
}

/// Damped Newton iteration on `[r(u); heading . (u - u_pred)] = 0`.
///
/// Converged once `|r|_inf <= residual_tol` and the next Newton update is
/// below `newton_step_tol`. A trial step that fails to integrate or more than
/// doubles the residual is halved, at most four times.
pub fn correct<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    u_pred: &DVector<S>,
    heading: &DVector<S>,
    settings: &ContinuationSettings,
) -> Result<Corrected<S>> {
    check_len("predicted point", problem.unknowns(), u_pred.len())?;
    let tol = S::lit(settings.residual_tol);
    let step_tol = S::lit(settings.newton_step_tol);
    let n = u_pred.len();
    let mut u = u_pred.clone();
    let (mut r, jac) = problem.evaluate(&u, true)?;
    let mut jac = jac.expect("jacobian requested");
    let mut iterations = 0;
    loop {
        let rn = inf_norm(&r);
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, n - 1).copy_from(&(-&r));
        rhs[n - 1] = -heading.dot(&(&u - u_pred));
        let mut bordered = DMatrix::zeros(n, n);
        bordered.view_mut((0, 0), (n - 1, n)).copy_from(&jac);
        bordered.row_mut(n - 1).copy_from(&heading.transpose());
        let delta = solve(bordered, &rhs)?;
        if rn <= tol && inf_norm(&delta) <= step_tol {
            return Ok(Corrected {
                u,
                jacobian: jac,
                residual_norm: rn,
                iterations,
            });
        }
        if iterations >= settings.max_newton_iter {
            return Err(Error::CorrectorFailure(format!(
                "{} iterations, residual {:e}, last update {:e}",
                iterations,
                rn.as_f64(),
                inf_norm(&delta).as_f64()
            )));
        }
        iterations += 1;
        let mut lambda = S::one();
        let mut halvings = 0;
        loop {
            let trial = &u + &delta * lambda;
            match problem.evaluate(&trial, true) {
                Ok((r_new, j_new)) if halvings >= 4 || inf_norm(&r_new) <= (rn + rn).max(tol) => {
                    u = trial;
                    r = r_new;
                    jac = j_new.expect("jacobian requested");
                    break;
                }
                Err(e) if halvings >= 4 => return Err(e),
                _ => {
                    lambda *= S::lit(0.5);
                    halvings += 1;
                }
            }
        }
    }
}

/// Tangent flip and level-extremum flags between consecutive points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepFlags {
    pub bifurcation: bool,
    pub turning: bool,
}

/// Compares two consecutive points: an orientation flip of the
/// determinant-ruled tangent flags a simple bifurcation, a sign change of the
/// level component of the heading flags a turning point.
pub fn detect_events<S: Scalar>(prev: &BranchPoint<S>, next: &BranchPoint<S>, level_index: usize) -> StepFlags {
    let bifurcation = prev.tangent.dot(&next.tangent) < S::zero();
    let a = prev.heading()[level_index];
    let b = next.heading()[level_index];
    StepFlags {
        bifurcation,
        turning: a * b < S::zero(),
    }
}

/// Number of (numerically) zero singular values of `dr`, plus one for the
/// expected kernel direction.
pub fn kernel_dimension<S: Scalar>(dr: &DMatrix<S>) -> Result<usize> {
    let (values, _) = right_singular_pairs(dr)?;
    let cutoff = kernel_cutoff(&values);
    Ok(values.iter().filter(|s| **s <= cutoff).count())
}

// Relative to the largest singular value, floored at one so that a Jacobian
// vanishing as a whole (toy problems at the origin) still shows its kernel.
fn kernel_cutoff<S: Scalar>(values: &[S]) -> S {
    S::lit(KERNEL_RTOL) * values[0].max(S::one())
}

fn kernel_basis<S: Scalar>(dr: &DMatrix<S>) -> Result<Vec<DVector<S>>> {
    let (values, vectors) = right_singular_pairs(dr)?;
    let cutoff = kernel_cutoff(&values);
    Ok(values
        .iter()
        .zip(vectors)
        .filter(|(s, _)| **s <= cutoff)
        .map(|(_, v)| v)
        .collect())
}

/// Classifies a point from the kernel of its Jacobian.
pub fn classify_point<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    u: &DVector<S>,
    dr: &DMatrix<S>,
) -> Result<PointClass> {
    Ok(match kernel_dimension(dr)? {
        0 | 1 => PointClass::Regular,
        2 => match bifurcation_quadratic(problem, u, dr) {
            Ok(q) if q.is_indefinite() => PointClass::SimpleBifurcation,
            _ => PointClass::SingularOther,
        },
        _ => PointClass::SingularOther,
    })
}

/// Lyapunov–Schmidt reduction at a point with a two-dimensional kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationQuadratic<S: Scalar> {
    pub kernel: [DVector<S>; 2],
    /// Symmetric coefficient matrix `w . D^2 r [v_j, v_k]`.
    pub coefficients: [[S; 2]; 2],
}

impl<S: Scalar> BifurcationQuadratic<S> {
    /// Eigenvalues (ascending) and eigenvectors of the coefficient matrix.
    fn eigen(&self) -> ([S; 2], [[S; 2]; 2]) {
        let [[a, b], [_, d]] = self.coefficients;
        let half = S::lit(0.5);
        let mean = (a + d) * half;
        let rad = ((a - d) * (a - d) * S::lit(0.25) + b * b).sqrt();
        let (l1, l2) = (mean - rad, mean + rad);
        let vec_for = |l: S| -> [S; 2] {
            // Rows of (B - l I) are orthogonal to the eigenvector.
            let (p, q) = if abs(a - l) + abs(b) >= abs(d - l) + abs(b) {
                (-b, a - l)
            } else {
                (d - l, -b)
            };
            let norm = (p * p + q * q).sqrt();
            if norm > S::zero() {
                [p / norm, q / norm]
            } else {
                [S::one(), S::zero()]
            }
        };
        let v1 = vec_for(l1);
        // The second eigenvector is orthogonal to the first.
        let v2 = [-v1[1], v1[0]];
        ([l1, l2], [v1, v2])
    }

    pub fn is_indefinite(&self) -> bool {
        let ([l1, l2], _) = self.eigen();
        let scale = abs(l1).max(abs(l2));
        scale > S::zero() && l1 < -S::lit(1e-8) * scale && l2 > S::lit(1e-8) * scale
    }

    /// Unit directions of the real roots, as kernel combinations.
    pub fn root_directions(&self) -> Vec<DVector<S>> {
        let ([l1, l2], [q1, q2]) = self.eigen();
        let scale = abs(l1).max(abs(l2));
        let combine = |c: [S; 2]| -> DVector<S> {
            let t = &self.kernel[0] * c[0] + &self.kernel[1] * c[1];
            let n = t.norm();
            t / n
        };
        if scale == S::zero() {
            return Vec::new();
        }
        if self.is_indefinite() {
            // l1 z1^2 + l2 z2^2 = 0 in eigen-coordinates.
            let (s1, s2) = (abs(l2).sqrt(), abs(l1).sqrt());
            let plus = [q1[0] * s1 + q2[0] * s2, q1[1] * s1 + q2[1] * s2];
            let minus = [q1[0] * s1 - q2[0] * s2, q1[1] * s1 - q2[1] * s2];
            return vec![combine(plus), combine(minus)];
        }
        let tiny = S::lit(1e-8) * scale;
        if abs(l1) <= tiny {
            vec![combine(q1)]
        } else if abs(l2) <= tiny {
            vec![combine(q2)]
        } else {
            Vec::new()
        }
    }
}

/// Builds the reduced quadratic at a singular point with a two-dimensional
/// kernel. Second derivatives come from central differences of the Jacobian.
pub fn bifurcation_quadratic<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    u: &DVector<S>,
    dr: &DMatrix<S>,
) -> Result<BifurcationQuadratic<S>> {
    let basis = kernel_basis(dr)?;
    if basis.len() != 2 {
        return Err(Error::Unsupported(format!(
            "kernel dimension {} (only two-dimensional kernels are supported)",
            basis.len()
        )));
    }
    let w = left_null_vector(dr)?;
    let h = S::lit(1e-4) * (S::one() + u.norm());
    let two_h = h + h;
    let mut directional = Vec::with_capacity(2);
    for v in &basis {
        let jp = problem.jacobian(&(u + v * h))?;
        let jm = problem.jacobian(&(u - v * h))?;
        directional.push((jp - jm) / two_h);
    }
    let mut b = [[S::zero(); 2]; 2];
    for (k, dk) in directional.iter().enumerate() {
        for (j, vj) in basis.iter().enumerate() {
            b[j][k] = w.dot(&(dk * vj));
        }
    }
    let off = (b[0][1] + b[1][0]) * S::lit(0.5);
    b[0][1] = off;
    b[1][0] = off;
    let [v1, v2]: [DVector<S>; 2] = basis.try_into().expect("two kernel vectors");
    Ok(BifurcationQuadratic {
        kernel: [v1, v2],
        coefficients: b,
    })
}

/// Tangents of the branches through a simple bifurcation point.
///
/// Each direction is oriented by the determinant rule evaluated on its own
/// branch a short distance away. Ordering: level component close to zero
/// first, then smaller change of the durations, then larger `xi` component,
/// then lexicographically.
pub fn branch_switch<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    u_sb: &DVector<S>,
    xi_index: usize,
    settings: &ContinuationSettings,
) -> Result<Vec<DVector<S>>> {
    let dr = problem.jacobian(u_sb)?;
    let quad = bifurcation_quadratic(problem, u_sb, &dr)?;
    let mut dirs = quad.root_directions();
    let probe = S::lit(settings.initial_step);
    for t in dirs.iter_mut() {
        let pred = u_sb + &*t * probe;
        match correct(problem, &pred, t, settings).and_then(|c| tangent(&c.jacobian)) {
            Ok(tau) => {
                if tau.dot(t) < S::zero() {
                    t.neg_mut();
                }
            }
            Err(e) => debug!("orientation probe failed: {e}"),
        }
    }
    let level = problem.level_index();
    let durations = problem.duration_indices();
    let quant = |x: S| (abs(x).as_f64() * 1e6).round() as i64;
    let duration_change = |t: &DVector<S>| {
        let sq = durations.iter().fold(S::zero(), |acc, &i| acc + t[i] * t[i]);
        quant(sq.sqrt())
    };
    dirs.sort_by(|a, b| {
        quant(a[level])
            .cmp(&quant(b[level]))
            .then(duration_change(a).cmp(&duration_change(b)))
            .then(quant(b[xi_index]).cmp(&quant(a[xi_index])))
            .then_with(|| {
                a.iter()
                    .zip(b.iter())
                    .find(|(x, y)| abs(**x - **y) > S::lit(1e-9))
                    .map(|(x, y)| y.partial_cmp(x).unwrap_or(Ordering::Equal))
                    .unwrap_or(Ordering::Equal)
            })
    });
    Ok(dirs)
}

/// Kernel vector satisfying extra linear constraints, for start points whose
/// kernel is larger than two.
pub fn constrained_kernel_direction<S: Scalar>(dr: &DMatrix<S>, constraints: &[DVector<S>]) -> Result<DVector<S>> {
    let basis = kernel_basis(dr)?;
    let k = basis.len();
    if constraints.len() + 1 != k {
        return Err(Error::Unsupported(format!(
            "kernel dimension {k} does not match {} constraints",
            constraints.len()
        )));
    }
    let mut a = DMatrix::zeros(constraints.len(), k);
    for (i, c) in constraints.iter().enumerate() {
        for (j, v) in basis.iter().enumerate() {
            a[(i, j)] = c.dot(v);
        }
    }
    let (_, mut coeffs) = right_singular_pairs(&a)?;
    let c = coeffs.pop().expect("nonempty");
    let mut t = DVector::zeros(dr.ncols());
    for (cj, v) in c.iter().zip(&basis) {
        t += v * *cj;
    }
    Ok(&t / t.norm())
}

fn point<S: Scalar>(c: &Corrected<S>, tangent: DVector<S>, direction: i8, arclength: S, class: PointClass) -> BranchPoint<S> {
    let det_sign = if class == PointClass::Regular || class == PointClass::Turning {
        1
    } else {
        0
    };
    BranchPoint {
        u: c.u.clone(),
        tangent,
        direction,
        arclength,
        class,
        diagnostics: Diagnostics {
            residual_norm: c.residual_norm,
            iterations: c.iterations,
            det_sign,
        },
    }
}

/// Bisects (Illinois-accelerated) between two points whose tangents have
/// opposite orientation until the smallest singular value of `dr` drops below
/// `1e-8 |dr|`.
pub fn locate_singular<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    a: &BranchPoint<S>,
    b: &BranchPoint<S>,
    settings: &ContinuationSettings,
) -> Result<BranchPoint<S>> {
    let g = a.heading();
    let test = |dr: &DMatrix<S>| bordered_determinant(dr, &g);
    let (mut lo, mut hi) = (S::zero(), g.dot(&(&b.u - &a.u)));
    let mut f_lo = test(&problem.jacobian(&a.u)?);
    let mut f_hi = test(&problem.jacobian(&b.u)?);
    if f_lo * f_hi > S::zero() {
        return Err(Error::Singular("no determinant sign change between the points".into()));
    }
    let ratio_tol = S::lit(1e-8);
    let mut best: Option<(S, Corrected<S>)> = None;
    let mut side = 0i8;
    for _ in 0..60 {
        let mut s = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(s > lo.min(hi) && s < lo.max(hi)) {
            s = (lo + hi) * S::lit(0.5);
        }
        let c = correct(problem, &(&a.u + &g * s), &g, settings)?;
        let f = test(&c.jacobian);
        let (values, _) = right_singular_pairs(&c.jacobian)?;
        let n = values.len();
        let ratio = values[n - 2] / values[0].max(S::one());
        let done = ratio <= ratio_tol || abs(hi - lo) <= S::lit(1e-12) * (S::one() + abs(s));
        best = Some((s, c));
        if done {
            break;
        }
        if f * f_lo > S::zero() {
            lo = s;
            f_lo = f;
            if side == 1 {
                f_hi *= S::lit(0.5);
            }
            side = 1;
        } else {
            hi = s;
            f_hi = f;
            if side == -1 {
                f_lo *= S::lit(0.5);
            }
            side = -1;
        }
    }
    let (s, c) = best.expect("at least one iteration");
    let class = classify_point(problem, &c.u, &c.jacobian)?;
    let class = if class == PointClass::Regular {
        PointClass::SingularOther
    } else {
        class
    };
    let arclength = a.arclength + abs(s);
    Ok(point(&c, g, 1, arclength, class))
}

/// Follows a solution branch from `start`.
///
/// If `start` is singular, `start_tangent` must give the branch direction; at
/// regular starts it only fixes the initial orientation. The direction
/// setting multiplies either.
pub fn trace<S: Scalar, P: ContinuationProblem<S> + ?Sized>(
    problem: &P,
    start: &DVector<S>,
    start_tangent: Option<&DVector<S>>,
    settings: &ContinuationSettings,
) -> Result<Branch<S>> {
    check_len("start point", problem.unknowns(), start.len())?;
    let level = problem.level_index();
    let sign = S::lit(if settings.direction < 0 { -1.0 } else { 1.0 });

    let (r0, j0) = problem.evaluate(start, true)?;
    let mut first = Corrected {
        u: start.clone(),
        jacobian: j0.expect("jacobian requested"),
        residual_norm: inf_norm(&r0),
        iterations: 0,
    };
    // A bifurcation start cannot be corrected with a single border; the
    // first step corrects onto the branch instead.
    let singular_start = kernel_dimension(&first.jacobian)? >= 2 && start_tangent.is_some();
    if first.residual_norm > S::lit(settings.residual_tol) && !singular_start {
        let heading = match start_tangent {
            Some(t) => t / t.norm(),
            None => tangent(&first.jacobian)?,
        };
        first = correct(problem, start, &heading, settings)?;
    }

    let regular_tangent = match kernel_dimension(&first.jacobian)? {
        0 | 1 => tangent(&first.jacobian).ok(),
        _ => None,
    };
    let (start_point, mut from_singular) = match (regular_tangent, start_tangent) {
        (Some(tau), hint) => {
            let hint_dir = hint.map(|t| t.dot(&tau)).unwrap_or(S::one());
            let d = if hint_dir * sign < S::zero() { -1 } else { 1 };
            (point(&first, tau, d, S::zero(), PointClass::Regular), false)
        }
        (None, Some(t)) => {
            let class = classify_point(problem, &first.u, &first.jacobian)?;
            let heading = t * (sign / t.norm());
            (point(&first, heading, 1, S::zero(), class), true)
        }
        (None, None) => {
            return Err(Error::Singular(
                "start point is singular and no start tangent was given".into(),
            ))
        }
    };
    info!(
        "start: class {}, residual {:e}",
        start_point.class.as_str(),
        start_point.diagnostics.residual_norm.as_f64()
    );

    let mut points = vec![start_point];
    let mut h = S::lit(settings.initial_step);
    let h_min = S::lit(settings.min_step);
    let h_max = S::lit(settings.max_step);
    let mut accepted = 0;
    let termination = loop {
        if accepted >= settings.max_steps {
            break Termination::MaxSteps;
        }
        let prev = points.last().expect("start point").clone();
        let heading = prev.heading();
        let (corrected, tau) = loop {
            if h < h_min {
                break (None, None);
            }
            let pred = predict(&prev.u, &prev.tangent, prev.direction, h);
            let attempt = correct(problem, &pred, &heading, settings).and_then(|c| {
                let drift = (&c.u - &pred).norm();
                if drift > h {
                    return Err(Error::CorrectorFailure(format!("drifted {:e} from the predictor", drift.as_f64())));
                }
                let tau = tangent(&c.jacobian)?;
                if abs(tau.dot(&prev.tangent)) < S::lit(0.5) {
                    return Err(Error::CorrectorFailure("tangent turned by more than 60 degrees".into()));
                }
                Ok((c, tau))
            });
            match attempt {
                Ok((c, tau)) => break (Some(c), Some(tau)),
                Err(e) => {
                    debug!("step h = {:e} rejected: {e}", h.as_f64());
                    h *= S::lit(0.5);
                }
            }
        };
        let (Some(c), Some(tau)) = (corrected, tau) else {
            break Termination::StepUnderflow {
                reason: format!("step size fell below {:e}", settings.min_step),
            };
        };
        let alignment = tau.dot(&heading);
        let direction = if from_singular {
            if alignment < S::zero() {
                -1
            } else {
                1
            }
        } else {
            let flip = tau.dot(&prev.tangent) < S::zero();
            if flip {
                -prev.direction
            } else {
                prev.direction
            }
        };
        let arclength = prev.arclength + (&c.u - &prev.u).norm();
        let mut next = point(&c, tau, direction, arclength, PointClass::Regular);
        let flags = detect_events(&prev, &next, level);
        // The heading at a singular start carries no level information.
        if flags.turning && !from_singular {
            next.class = PointClass::Turning;
        }
        if flags.bifurcation && !from_singular && settings.locate_bifurcations {
            match locate_singular(problem, &prev, &next, settings) {
                Ok(sb) => {
                    info!(
                        "bifurcation candidate at level {:e}: {}",
                        sb.u[level].as_f64(),
                        sb.class.as_str()
                    );
                    points.push(sb);
                }
                Err(e) => warn!("tangent flip not localized: {e}"),
            }
        }
        from_singular = false;
        if c.iterations <= settings.fast_iterations {
            h = (h + h).min(h_max);
        }
        let level_value = next.u[level].as_f64();
        points.push(next);
        accepted += 1;
        if let Some((lo, hi)) = settings.level_bounds {
            if level_value < lo || level_value > hi {
                break Termination::LevelBound;
            }
        }
        if let Some(max) = settings.max_arclength {
            if arclength.as_f64() > max {
                break Termination::ArclengthBound;
            }
        }
    };
    Ok(Branch { points, termination })
}
