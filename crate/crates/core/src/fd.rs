//! Central finite differences used as default derivatives and as test oracles.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::scalar::Scalar;

/// Relative step: `1e-6 (1 + |x|)` in double precision, widened for `f32`.
pub fn step<S: Scalar>(x: &DVector<S>) -> S {
    let base = S::lit(1e-6).max(S::eps().powf(S::lit(1.0 / 3.0)) * S::lit(0.1));
    base * (S::one() + x.norm())
}

pub fn jacobian<S, F>(f: F, x: &DVector<S>) -> DMatrix<S>
where
    S: Scalar,
    F: Fn(&DVector<S>) -> DVector<S>,
{
    let h = step(x);
    let two_h = h + h;
    let mut columns = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        columns.push((f(&xp) - f(&xm)) / two_h);
    }
    if columns.is_empty() {
        return DMatrix::zeros(f(x).len(), 0);
    }
    DMatrix::from_columns(&columns)
}

pub fn gradient<S, F>(f: F, x: &DVector<S>) -> RowDVector<S>
where
    S: Scalar,
    F: Fn(&DVector<S>) -> S,
{
    let h = step(x);
    let two_h = h + h;
    RowDVector::from_iterator(
        x.len(),
        (0..x.len()).map(|j| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / two_h
        }),
    )
}
