//! Adaptive Dormand–Prince 5(4) integration of the modified phase fields,
//! optionally with the variational equations, plus event location.
//!
//! Sensitivities are integrated as one augmented system on the same steps
//! and take part in the error control.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::HybridSystem;
use crate::scalar::{abs, Scalar};

/// Integration tolerances. Plain `f64` so they serialize into run metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Events are accepted once `|e(x)| <= event_tol * (1 + |x|)`.
    pub event_tol: f64,
    pub max_steps: usize,
    /// Longest time searched for a single event before giving up.
    pub max_event_time: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-7,
            atol: 1e-7,
            event_tol: 1e-10,
            max_steps: 500_000,
            max_event_time: 1e4,
        }
    }
}

/// End state of a fixed-duration integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S: Scalar> {
    pub state: DVector<S>,
    /// State transition matrix, when sensitivities were requested.
    pub phi: Option<DMatrix<S>>,
    /// Derivative of the end state with respect to `xi` at fixed time.
    pub psi: Option<DVector<S>>,
    pub steps: usize,
}

/// First crossing of a guard function.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit<S: Scalar> {
    pub time: S,
    pub state_pre: DVector<S>,
    /// Modified field at the crossing.
    pub field_pre: DVector<S>,
    /// Gradient of the guard at the crossing.
    pub guard_gradient: RowDVector<S>,
    pub phi: Option<DMatrix<S>>,
    pub psi: Option<DVector<S>>,
    pub steps: usize,
}

// Dormand–Prince coefficients.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side of the (possibly augmented, possibly time-reversed) flow.
struct Flow<'a, S: Scalar> {
    sys: &'a HybridSystem<S>,
    phase: usize,
    xi: S,
    n: usize,
    sensitivities: bool,
    reversed: bool,
}

impl<'a, S: Scalar> Flow<'a, S> {
    fn augmented_len(&self) -> usize {
        if self.sensitivities {
            self.n + self.n * (self.n + 1)
        } else {
            self.n
        }
    }

    fn initial(&self, x0: &DVector<S>) -> DVector<S> {
        let mut y = DVector::zeros(self.augmented_len());
        y.rows_mut(0, self.n).copy_from(x0);
        if self.sensitivities {
            for i in 0..self.n {
                y[self.n + i * self.n + i] = S::one();
            }
        }
        y
    }

    fn rhs(&self, y: &DVector<S>) -> Result<DVector<S>> {
        let n = self.n;
        let x = y.rows(0, n).into_owned();
        let f = self.sys.eval_modified_field(self.phase, &x, self.xi)?;
        let mut dy = DVector::zeros(y.len());
        dy.rows_mut(0, n).copy_from(&f);
        if self.sensitivities {
            let (a, b) = self.sys.eval_modified_field_jacobian(self.phase, &x, self.xi)?;
            let v = DMatrix::from_column_slice(n, n + 1, &y.as_slice()[n..]);
            let mut dv = a * v;
            let mut last = dv.column_mut(n);
            last += b;
            dy.rows_mut(n, n * (n + 1)).copy_from_slice(dv.as_slice());
        }
        if self.reversed {
            dy.neg_mut();
        }
        Ok(dy)
    }

    fn base(&self, y: &DVector<S>) -> DVector<S> {
        y.rows(0, self.n).into_owned()
    }

    fn split(&self, y: &DVector<S>) -> (DVector<S>, Option<DMatrix<S>>, Option<DVector<S>>) {
        let n = self.n;
        let x = self.base(y);
        if !self.sensitivities {
            return (x, None, None);
        }
        let v = DMatrix::from_column_slice(n, n + 1, &y.as_slice()[n..]);
        let phi = v.columns(0, n).into_owned();
        let psi = v.column(n).into_owned();
        (x, Some(phi), Some(psi))
    }
}

struct StepResult<S: Scalar> {
    h: S,
    y: DVector<S>,
    k: DVector<S>,
    err: S,
}

struct Stepper<'a, S: Scalar> {
    flow: Flow<'a, S>,
    rtol: S,
    atol: S,
    max_steps: usize,
    t: S,
    y: DVector<S>,
    k: DVector<S>,
    h: S,
    steps: usize,
}

impl<'a, S: Scalar> Stepper<'a, S> {
    fn new(flow: Flow<'a, S>, x0: &DVector<S>, opts: &IntegratorOptions) -> Result<Self> {
        let y = flow.initial(x0);
        let k = flow.rhs(&y)?;
        let rtol = S::lit(opts.rtol);
        let atol = S::lit(opts.atol);
        let n = y.len();
        let mut d0 = S::zero();
        let mut d1 = S::zero();
        for i in 0..n {
            let sc = atol + rtol * abs(y[i]);
            d0 += (y[i] / sc).powi(2);
            d1 += (k[i] / sc).powi(2);
        }
        let d0 = (d0 / S::lit(n as f64)).sqrt();
        let d1 = (d1 / S::lit(n as f64)).sqrt();
        let tiny = S::lit(1e-5);
        let h = if d0 < tiny || d1 < tiny {
            S::lit(1e-6)
        } else {
            S::lit(0.01) * d0 / d1
        };
        Ok(Self {
            flow,
            rtol,
            atol,
            max_steps: opts.max_steps,
            t: S::zero(),
            y,
            k,
            h,
            steps: 0,
        })
    }

    /// Single Dormand–Prince step of size `h` from `(y, k)`.
    fn raw_step(&self, y: &DVector<S>, k1: &DVector<S>, h: S) -> Result<StepResult<S>> {
        let mut ks: Vec<DVector<S>> = Vec::with_capacity(7);
        ks.push(k1.clone());
        for stage in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    ys.axpy(h * S::lit(a), kj, S::one());
                }
            }
            if stage == 6 {
                // Stage 7 is evaluated at the propagated solution (FSAL).
                let k7 = self.flow.rhs(&ys)?;
                ks.push(k7);
                let err = self.error_norm(y, &ys, &ks, h);
                let k = ks.pop().expect("seven stages");
                return Ok(StepResult { h, y: ys, k, err });
            }
            ks.push(self.flow.rhs(&ys)?);
        }
        unreachable!("loop returns at the last stage")
    }

    /// Weighted RMS of the embedded error estimate over the augmented state:
    /// the sensitivities may need smaller steps than a resting base state.
    fn error_norm(&self, y0: &DVector<S>, y1: &DVector<S>, ks: &[DVector<S>], h: S) -> S {
        let n = y0.len();
        let mut acc = S::zero();
        for i in 0..n {
            let mut e = S::zero();
            for (j, kj) in ks.iter().enumerate() {
                if E[j] != 0.0 {
                    e += S::lit(E[j]) * kj[i];
                }
            }
            let sc = self.atol + self.rtol * abs(y0[i]).max(abs(y1[i]));
            acc += (h * e / sc).powi(2);
        }
        (acc / S::lit(n as f64)).sqrt()
    }

    /// Proposes an accepted step of size at most `h_cap` without committing it.
    fn propose(&mut self, h_cap: S) -> Result<StepResult<S>> {
        loop {
            if self.steps >= self.max_steps {
                return Err(Error::ToleranceFailure {
                    t: self.t.as_f64(),
                    reason: format!("step budget of {} exhausted", self.max_steps),
                });
            }
            let h = self.h.min(h_cap);
            let h_floor = S::lit(10.0) * S::eps() * abs(self.t).max(S::one());
            // Short final steps requested by the caller are always allowed.
            if self.h < h_floor {
                return Err(Error::ToleranceFailure {
                    t: self.t.as_f64(),
                    reason: format!("step size {:e} underflow", h.as_f64()),
                });
            }
            self.steps += 1;
            let step = self.raw_step(&self.y, &self.k, h)?;
            let finite = step.y.iter().all(|v| v.is_finite());
            if finite && step.err <= S::one() {
                let factor = if step.err == S::zero() {
                    S::lit(5.0)
                } else {
                    (S::lit(0.9) * step.err.powf(S::lit(-0.2))).clamp(S::lit(0.2), S::lit(5.0))
                };
                let proposal = h * factor;
                // A step truncated by the caller does not shrink the controller's size.
                self.h = if h < self.h { proposal.max(self.h) } else { proposal };
                return Ok(step);
            }
            let factor = if finite {
                (S::lit(0.9) * step.err.powf(S::lit(-0.2))).max(S::lit(0.2))
            } else {
                S::lit(0.25)
            };
            self.h = h * factor.min(S::lit(0.9));
        }
    }

    fn commit(&mut self, step: StepResult<S>) {
        self.t += step.h;
        self.y = step.y;
        self.k = step.k;
    }
}

fn validate_start<S: Scalar>(sys: &HybridSystem<S>, phase: usize, x0: &DVector<S>) -> Result<usize> {
    let n = sys.phase(phase)?.dim();
    check_len(&format!("state of phase {}", phase + 1), n, x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial state".into()));
    }
    Ok(n)
}

/// Integrates phase `phase` from `x0` for `duration`; negative durations run
/// the reversed field forward for `|duration|`.
pub fn integrate_fixed<S: Scalar>(
    sys: &HybridSystem<S>,
    phase: usize,
    x0: &DVector<S>,
    xi: S,
    duration: S,
    with_sensitivities: bool,
    opts: &IntegratorOptions,
) -> Result<Trajectory<S>> {
    let n = validate_start(sys, phase, x0)?;
    if !duration.is_finite() {
        return Err(Error::InvalidInput("non-finite duration".into()));
    }
    let flow = Flow {
        sys,
        phase,
        xi,
        n,
        sensitivities: with_sensitivities,
        reversed: duration < S::zero(),
    };
    let span = abs(duration);
    if span == S::zero() {
        let (state, phi, psi) = flow.split(&flow.initial(x0));
        return Ok(Trajectory {
            state,
            phi,
            psi,
            steps: 0,
        });
    }
    let mut stepper = Stepper::new(flow, x0, opts)?;
    while stepper.t < span {
        let remaining = span - stepper.t;
        let step = stepper.propose(remaining)?;
        let last = step.h >= remaining;
        stepper.commit(step);
        if last {
            stepper.t = span;
        }
    }
    let (state, phi, psi) = stepper.flow.split(&stepper.y);
    Ok(Trajectory {
        state,
        phi,
        psi,
        steps: stepper.steps,
    })
}

/// Integrates phase `phase` until its guard decreases through zero.
pub fn integrate_to_event<S: Scalar>(
    sys: &HybridSystem<S>,
    phase: usize,
    x0: &DVector<S>,
    xi: S,
    t_max: S,
    with_sensitivities: bool,
    opts: &IntegratorOptions,
) -> Result<EventHit<S>> {
    let p = sys.phase(phase)?;
    integrate_until(
        sys,
        phase,
        x0,
        xi,
        t_max,
        with_sensitivities,
        opts,
        &|x| p.event(x),
        &|x| p.event_gradient(x),
    )
}

/// Integrates phase 1 until the anchor decreases through zero.
pub fn integrate_to_anchor<S: Scalar>(
    sys: &HybridSystem<S>,
    x0: &DVector<S>,
    xi: S,
    t_max: S,
    with_sensitivities: bool,
    opts: &IntegratorOptions,
) -> Result<EventHit<S>> {
    let anchor = sys.anchor();
    integrate_until(
        sys,
        0,
        x0,
        xi,
        t_max,
        with_sensitivities,
        opts,
        &|x| anchor.value(x),
        &|x| anchor.gradient(x),
    )
}

type GuardFn<'a, S> = &'a dyn Fn(&DVector<S>) -> S;
type GuardGradFn<'a, S> = &'a dyn Fn(&DVector<S>) -> RowDVector<S>;

/// Cubic Hermite interpolant of the base state over a step.
fn hermite<S: Scalar>(
    x0: &DVector<S>,
    f0: &DVector<S>,
    x1: &DVector<S>,
    f1: &DVector<S>,
    h: S,
    theta: S,
) -> DVector<S> {
    let one = S::one();
    let two = S::lit(2.0);
    let three = S::lit(3.0);
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = two * t3 - three * t2 + one;
    let h10 = t3 - two * t2 + theta;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    x0 * h00 + f0 * (h10 * h) + x1 * h01 + f1 * (h11 * h)
}

const SAMPLES: usize = 8;

#[allow(clippy::too_many_arguments)]
fn integrate_until<S: Scalar>(
    sys: &HybridSystem<S>,
    phase: usize,
    x0: &DVector<S>,
    xi: S,
    t_max: S,
    with_sensitivities: bool,
    opts: &IntegratorOptions,
    guard: GuardFn<'_, S>,
    guard_gradient: GuardGradFn<'_, S>,
) -> Result<EventHit<S>> {
    let n = validate_start(sys, phase, x0)?;
    if !(t_max > S::zero()) {
        return Err(Error::InvalidInput("t_max must be positive".into()));
    }
    let tol = S::lit(opts.event_tol);
    let g0 = guard(x0);
    let start_tol = tol * (S::one() + x0.norm());
    if g0 <= start_tol {
        // Starting on the guard is allowed only when moving away from it.
        let f0 = sys.eval_modified_field(phase, x0, xi)?;
        let rate = guard_gradient(x0).dot(&f0.transpose());
        if g0 < -start_tol || rate <= S::zero() {
            return Err(Error::InvalidInput(format!(
                "phase {} starts at guard value {:e} with rate {:e}",
                phase + 1,
                g0.as_f64(),
                rate.as_f64()
            )));
        }
    }
    let flow = Flow {
        sys,
        phase,
        xi,
        n,
        sensitivities: with_sensitivities,
        reversed: false,
    };
    let mut stepper = Stepper::new(flow, x0, opts)?;
    let mut g_prev = g0;
    let mut first = true;
    loop {
        let remaining = t_max - stepper.t;
        if remaining <= S::zero() {
            return Err(Error::NoEvent {
                phase: phase + 1,
                t_max: t_max.as_f64(),
            });
        }
        let step = stepper.propose(remaining)?;
        let xa = stepper.flow.base(&stepper.y);
        let fa = stepper.flow.base(&stepper.k);
        let xb = stepper.flow.base(&step.y);
        let fb = stepper.flow.base(&step.k);
        let mut values = Vec::with_capacity(SAMPLES + 1);
        values.push(if first { g0.max(start_tol) } else { g_prev });
        for j in 1..SAMPLES {
            let theta = S::lit(j as f64 / SAMPLES as f64);
            values.push(guard(&hermite(&xa, &fa, &xb, &fb, step.h, theta)));
        }
        let g_end = guard(&xb);
        values.push(g_end);
        let changes = values
            .windows(2)
            .filter(|w| (w[0] <= S::zero()) != (w[1] <= S::zero()))
            .count();
        let step_floor = S::lit(1e3) * S::eps() * (S::one() + stepper.t);
        if step.h > step_floor {
            let slope = |x: &DVector<S>, f: &DVector<S>| guard_gradient(x).dot(&f.transpose());
            let slopes = (slope(&xa, &fa), slope(&xb, &fb));
            if hidden_crossing(&values, slopes, &|theta| {
                guard(&hermite(&xa, &fa, &xb, &fb, step.h, theta))
            }) {
                // The guard dips below zero between samples ahead of any
                // sampled crossing: resolve it with a shorter step.
                stepper.h = step.h * S::lit(0.5);
                continue;
            }
        }
        if changes == 0 {
            let last = step.h >= remaining;
            stepper.commit(step);
            if last {
                stepper.t = t_max;
            }
            g_prev = g_end;
            first = false;
            continue;
        }
        if changes > 1 && step.h > step_floor {
            // Several roots inside one step: retry with half the step.
            stepper.h = step.h * S::lit(0.5);
            continue;
        }
        let j = values
            .iter()
            .position(|v| *v <= S::zero())
            .expect("a sign change implies a non-positive sample");
        let lo = S::lit((j - 1) as f64 / SAMPLES as f64) * step.h;
        let hi = S::lit(j as f64 / SAMPLES as f64) * step.h;
        let (tau, y_hit) = refine(&stepper, guard, values[0], g_end, &step, lo, hi, tol)?;
        let (state_pre, phi, psi) = stepper.flow.split(&y_hit);
        let field_pre = sys.eval_modified_field(phase, &state_pre, xi)?;
        let grad = guard_gradient(&state_pre);
        let rate = grad.dot(&field_pre.transpose());
        let scale = grad.norm() * field_pre.norm();
        if !(rate < -S::lit(1e-12) * scale) {
            return Err(Error::Grazing {
                phase: phase + 1,
                rate: rate.as_f64(),
            });
        }
        return Ok(EventHit {
            time: stepper.t + tau,
            state_pre,
            field_pre,
            guard_gradient: grad,
            phi,
            psi,
            steps: stepper.steps,
        });
    }
}

const FINE_SAMPLES: usize = 16;

/// Whether the guard reaches zero between two positive samples before the
/// first non-positive one, or crosses more than once inside the interval that
/// brackets it. `values` are the samples at `theta = j / SAMPLES`, `slopes`
/// the guard rates at both ends of the step and `at` the guard along the
/// step's interpolant.
fn hidden_crossing<S: Scalar>(values: &[S], slopes: (S, S), at: &dyn Fn(S) -> S) -> bool {
    let last = values.len() - 1;
    let grid = |j: usize| S::lit(j as f64 / last as f64);
    let Some(first) = values.iter().position(|v| *v <= S::zero()) else {
        return dip_before(values, slopes, &grid, at);
    };
    if dip_before(&values[..first], (slopes.0, -S::one()), &grid, at) {
        return true;
    }
    if first == 0 {
        return false;
    }
    // Resample the bracketing interval along the interpolant.
    let (a, b) = (grid(first - 1), grid(first));
    let fine_grid = |k: usize| a + (b - a) * S::lit(k as f64 / FINE_SAMPLES as f64);
    let fine: Vec<S> = (0..=FINE_SAMPLES)
        .map(|k| match k {
            0 => values[first - 1],
            FINE_SAMPLES => values[first],
            _ => at(fine_grid(k)),
        })
        .collect();
    let changes = fine.windows(2).filter(|w| (w[0] <= S::zero()) != (w[1] <= S::zero())).count();
    let fine_first = fine.iter().position(|v| *v <= S::zero()).unwrap_or(FINE_SAMPLES);
    changes > 1 || dip_before(&fine[..fine_first], (-S::one(), -S::one()), &fine_grid, at)
}

/// Searches every local minimum of positive samples taken at `grid(i)`. The
/// slopes decide whether the end samples count as minima.
fn dip_before<S: Scalar>(values: &[S], slopes: (S, S), grid: &dyn Fn(usize) -> S, at: &dyn Fn(S) -> S) -> bool {
    let Some(last) = values.len().checked_sub(1) else {
        return false;
    };
    (0..=last)
        .filter(|&i| {
            let left = if i == 0 { slopes.0 < S::zero() } else { values[i] <= values[i - 1] };
            let right = if i == last { slopes.1 > S::zero() } else { values[i] <= values[i + 1] };
            left && right
        })
        .any(|i| dips_below_zero(grid(i.saturating_sub(1)), grid((i + 1).min(last)), at))
}

/// Golden-section search for a non-positive value of `at` on `[a, b]`.
fn dips_below_zero<S: Scalar>(mut a: S, mut b: S, at: &dyn Fn(S) -> S) -> bool {
    let ratio = S::lit(0.618_033_988_749_894_9);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (at(c), at(d));
    for _ in 0..40 {
        if gc.min(gd) <= S::zero() {
            return true;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = at(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = at(d);
        }
    }
    gc.min(gd) <= S::zero()
}

/// Illinois iteration on `tau -> guard(step(tau))`, where each evaluation is a
/// fresh Dormand–Prince step of size `tau` from the start of the bracketing step.
#[allow(clippy::too_many_arguments)]
fn refine<S: Scalar>(
    stepper: &Stepper<'_, S>,
    guard: GuardFn<'_, S>,
    g_start: S,
    g_end: S,
    step: &StepResult<S>,
    lo: S,
    hi: S,
    tol: S,
) -> Result<(S, DVector<S>)> {
    let eval = |tau: S| -> Result<(S, DVector<S>)> {
        let y = stepper.raw_step(&stepper.y, &stepper.k, tau)?.y;
        Ok((guard(&stepper.flow.base(&y)), y))
    };
    let (mut a, mut ga) = (S::zero(), g_start);
    if lo > S::zero() {
        let (g, _) = eval(lo)?;
        if g > S::zero() {
            a = lo;
            ga = g;
        }
    }
    let (mut b, mut gb, mut yb) = (step.h, g_end, step.y.clone());
    if hi < step.h {
        let (g, y) = eval(hi)?;
        if g <= S::zero() {
            b = hi;
            gb = g;
            yb = y;
        }
    }
    let half = S::lit(0.5);
    let mut side = 0i8;
    for _ in 0..200 {
        let scale = tol * (S::one() + stepper.flow.base(&yb).norm());
        if abs(gb) <= scale {
            return Ok((b, yb));
        }
        let width = b - a;
        if width <= S::lit(4.0) * S::eps() * (S::one() + stepper.t + step.h) {
            break;
        }
        let mut c = b - gb * width / (gb - ga);
        if !(c > a && c < b) {
            c = a + half * width;
        }
        let (gc, yc) = eval(c)?;
        if abs(gc) <= scale {
            return Ok((c, yc));
        }
        if gc <= S::zero() {
            b = c;
            gb = gc;
            yb = yc;
            if side == -1 {
                ga *= half;
            }
            side = -1;
        } else {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= half;
            }
            side = 1;
        }
    }
    Ok((b, yb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::ball;

    fn opts() -> IntegratorOptions {
        IntegratorOptions::default()
    }

    #[test]
    fn ball_free_flight_is_exact() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let out = integrate_fixed(&sys, 0, &x0, 0.0, 1.0, true, &opts()).unwrap();
        assert!((out.state[0] - 0.5).abs() < 1e-12);
        assert!((out.state[1] + 1.0).abs() < 1e-12);
        let phi = out.phi.unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((phi - expected).amax() < 1e-12);
        // psi' = A psi + grad H with grad H = [1, -t]: psi(1) = [5/6, -1/2].
        let psi = out.psi.unwrap();
        assert!((psi[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((psi[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_duration_runs_backwards() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.5, -1.0]);
        let out = integrate_fixed(&sys, 0, &x0, 0.0, -1.0, false, &opts()).unwrap();
        assert!((out.state[0] - 1.0).abs() < 1e-12);
        assert!(out.state[1].abs() < 1e-12);
    }

    #[test]
    fn zero_duration_returns_identity() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.3, 0.2]);
        let out = integrate_fixed(&sys, 0, &x0, 0.1, 0.0, true, &opts()).unwrap();
        assert_eq!(out.state, x0);
        assert_eq!(out.phi.unwrap(), DMatrix::identity(2, 2));
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn ball_event_time_and_state() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let hit = integrate_to_event(&sys, 0, &x0, 0.0, 10.0, true, &opts()).unwrap();
        assert!((hit.time - 2f64.sqrt()).abs() < 1e-10);
        assert!(hit.state_pre[0].abs() < 1e-10);
        assert!((hit.state_pre[1] + 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn missing_event_is_reported() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.5, -10.0]);
        let err = integrate_to_event(&sys, 0, &x0, 0.0, 0.01, false, &opts()).unwrap_err();
        assert!(matches!(err, Error::NoEvent { phase: 1, .. }));
    }

    /// Unit drift to the right; the guard touches zero tangentially at x = 1.
    struct Tangent;
    impl crate::model::Phase<f64> for Tangent {
        fn dim(&self) -> usize {
            2
        }
        fn field(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![1.0, 0.0])
        }
        fn event(&self, x: &DVector<f64>) -> f64 {
            x[1] + (1.0 - x[0]).powi(3)
        }
        fn event_gradient(&self, x: &DVector<f64>) -> nalgebra::RowDVector<f64> {
            nalgebra::RowDVector::from_vec(vec![-3.0 * (1.0 - x[0]).powi(2), 1.0])
        }
        fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn first_integral(&self, x: &DVector<f64>) -> f64 {
            x[1]
        }
    }

    #[test]
    fn grazing_contact_is_rejected() {
        use std::sync::Arc;
        let sys = HybridSystem::new(
            "tangent",
            vec![Arc::new(Tangent) as Arc<dyn crate::model::Phase<f64>>],
            Arc::new(crate::zoo::LinearAnchor::new(vec![0.0, 1.0])),
            Default::default(),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        // Locate the triple root to round-off so the tangency is visible.
        let exact = IntegratorOptions {
            event_tol: 1e-300,
            ..opts()
        };
        let err = integrate_to_event(&sys, 0, &x0, 0.0, 5.0, false, &exact).unwrap_err();
        assert!(matches!(err, Error::Grazing { phase: 1, .. }), "{err:?}");
    }

    /// Unit drift to the right; the guard is negative for |x - 5| < 0.01 and
    /// again beyond x = 6.
    struct NarrowDip;
    impl crate::model::Phase<f64> for NarrowDip {
        fn dim(&self) -> usize {
            2
        }
        fn field(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![1.0, 0.0])
        }
        fn event(&self, x: &DVector<f64>) -> f64 {
            ((x[0] - 5.0).powi(2) - 1e-4) * (6.0 - x[0])
        }
        fn event_gradient(&self, x: &DVector<f64>) -> nalgebra::RowDVector<f64> {
            let d = 2.0 * (x[0] - 5.0) * (6.0 - x[0]) - ((x[0] - 5.0).powi(2) - 1e-4);
            nalgebra::RowDVector::from_vec(vec![d, 0.0])
        }
        fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn first_integral(&self, x: &DVector<f64>) -> f64 {
            x[1]
        }
    }

    #[test]
    fn short_excursion_below_the_guard_is_found() {
        use std::sync::Arc;
        let sys = HybridSystem::new(
            "dip",
            vec![Arc::new(NarrowDip) as Arc<dyn crate::model::Phase<f64>>],
            Arc::new(crate::zoo::LinearAnchor::new(vec![0.0, 1.0])),
            Default::default(),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![0.0, 0.0]);
        let hit = integrate_to_event(&sys, 0, &x0, 0.0, 50.0, false, &opts()).unwrap();
        assert!((hit.time - 4.99).abs() < 1e-9, "{}", hit.time);
    }

    #[test]
    fn start_on_guard_moving_inward_is_rejected() {
        let sys = ball::system::<f64>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![0.0, -1.0]);
        let err = integrate_to_event(&sys, 0, &x0, 0.0, 1.0, false, &opts()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        // Leaving the ground after an impact is a valid start.
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let hit = integrate_to_event(&sys, 0, &x0, 0.0, 5.0, false, &opts()).unwrap();
        assert!((hit.time - 2.0).abs() < 1e-10);
    }

    #[test]
    fn f32_integration_runs() {
        let sys = ball::system::<f32>(ball::BallParams::default()).unwrap();
        let x0 = DVector::from_vec(vec![1.0f32, 0.0]);
        let loose = IntegratorOptions {
            rtol: 1e-5,
            atol: 1e-5,
            event_tol: 1e-5,
            ..IntegratorOptions::default()
        };
        let hit = integrate_to_event(&sys, 0, &x0, 0.0, 10.0, true, &loose).unwrap();
        assert!((hit.time - 2f32.sqrt()).abs() < 1e-4);
    }
}
