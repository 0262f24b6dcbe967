//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{abs, Scalar};

/// Singular values (descending) and matching right singular vectors of a
/// `k x (k + 1)` matrix padded with a zero row, so the kernel vector is
/// always among the returned vectors.
pub fn right_singular_pairs<S: Scalar>(a: &DMatrix<S>) -> Result<(Vec<S>, Vec<DVector<S>>)> {
    let n = a.ncols();
    if a.nrows() + 1 != n {
        return Err(Error::Dimension {
            what: "rows of an underdetermined Jacobian".into(),
            expected: n.saturating_sub(1),
            got: a.nrows(),
        });
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (n - 1, n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Singular("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = order.iter().map(|&i| v_t.row(i).transpose()).collect();
    Ok((values, vectors))
}

/// Positive diagonal row and column scalings of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling<S: Scalar> {
    pub rows: DVector<S>,
    pub cols: DVector<S>,
}

impl<S: Scalar> Scaling<S> {
    /// `diag(rows) * a * diag(cols)`.
    pub fn apply(&self, a: &DMatrix<S>) -> DMatrix<S> {
        let mut m = a.clone();
        for (i, r) in self.rows.iter().enumerate() {
            m.row_mut(i).scale_mut(*r);
        }
        for (j, c) in self.cols.iter().enumerate() {
            m.column_mut(j).scale_mut(*c);
        }
        m
    }
}

fn power_of_two<S: Scalar>(x: S) -> S {
    S::lit(2f64.powi(x.as_f64().log2().round() as i32))
}

/// Ruiz equilibration: repeatedly divides every row and column by the square
/// root of its largest entry. Scales are powers of two, so applying them is
/// exact.
pub fn equilibrate<S: Scalar>(a: &DMatrix<S>) -> Scaling<S> {
    let mut scaling = Scaling {
        rows: DVector::from_element(a.nrows(), S::one()),
        cols: DVector::from_element(a.ncols(), S::one()),
    };
    let mut m = a.clone();
    for _ in 0..12 {
        for i in 0..m.nrows() {
            let top = m.row(i).amax();
            if top > S::zero() {
                let f = power_of_two(S::one() / top.sqrt());
                m.row_mut(i).scale_mut(f);
                scaling.rows[i] *= f;
            }
        }
        for j in 0..m.ncols() {
            let top = m.column(j).amax();
            if top > S::zero() {
                let f = power_of_two(S::one() / top.sqrt());
                m.column_mut(j).scale_mut(f);
                scaling.cols[j] *= f;
            }
        }
    }
    scaling
}

/// Like [`right_singular_pairs`], but on the equilibrated matrix. Singular
/// values are those of the scaled matrix; vectors are mapped back and
/// normalized, so the kernel vectors are kernel vectors of `a`.
pub fn kernel_pairs<S: Scalar>(a: &DMatrix<S>) -> Result<(Vec<S>, Vec<DVector<S>>)> {
    let scaling = equilibrate(a);
    let (values, vectors) = right_singular_pairs(&scaling.apply(a))?;
    let vectors = vectors
        .into_iter()
        .map(|v| {
            let w = v.component_mul(&scaling.cols);
            let n = w.norm();
            w / n
        })
        .collect();
    Ok((values, vectors))
}

/// Left singular vector of the smallest singular value of a wide matrix.
pub fn left_null_vector<S: Scalar>(a: &DMatrix<S>) -> Result<DVector<S>> {
    let svd = a.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Singular("SVD did not converge".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, S::max_value().expect("bounded scalar")), |best, (i, s)| {
            if *s < best.1 {
                (i, *s)
            } else {
                best
            }
        });
    Ok(u.column(imin).into_owned())
}

/// Determinant of `[a; row]` after equilibrating `a` and scaling each row to
/// unit length. All scalings are positive, so the sign is preserved while
/// the value stays bounded and the LU factorization well conditioned.
pub fn bordered_determinant<S: Scalar>(a: &DMatrix<S>, row: &DVector<S>) -> S {
    let n = a.ncols();
    let scaling = equilibrate(a);
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (a.nrows(), n)).copy_from(&scaling.apply(a));
    m.row_mut(n - 1).copy_from(&row.component_mul(&scaling.cols).transpose());
    for i in 0..n {
        let norm = m.row(i).norm();
        if norm > S::zero() {
            let mut r = m.row_mut(i);
            r /= norm;
        }
    }
    m.lu().determinant()
}

/// Solves the square system `a x = b` by LU on the equilibrated matrix.
pub fn solve<S: Scalar>(a: DMatrix<S>, b: &DVector<S>) -> Result<DVector<S>> {
    let scaling = equilibrate(&a);
    scaling
        .apply(&a)
        .lu()
        .solve(&b.component_mul(&scaling.rows))
        .map(|y| y.component_mul(&scaling.cols))
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("bordered Newton matrix".into()))
}

pub fn inf_norm<S: Scalar>(v: &DVector<S>) -> S {
    v.iter().fold(S::zero(), |acc, x| acc.max(abs(*x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_svd_exposes_kernel() {
        let a = DMatrix::<f64>::from_row_slice(1, 2, &[3.0, 4.0]);
        let (values, vectors) = right_singular_pairs(&a).unwrap();
        assert!((values[0] - 5.0).abs() < 1e-12);
        assert!(values[1].abs() < 1e-12);
        let k = &vectors[1];
        assert!((3.0 * k[0] + 4.0 * k[1]).abs() < 1e-12);
    }

    #[test]
    fn bordered_determinant_sign_follows_row_orientation() {
        let a = DMatrix::<f64>::from_row_slice(1, 2, &[1.0, 0.0]);
        let up = DVector::<f64>::from_vec(vec![0.0, 2.0]);
        assert!(bordered_determinant(&a, &up) > 0.0);
        assert!(bordered_determinant(&a, &(-up)) < 0.0);
    }

    #[test]
    fn equilibration_preserves_the_kernel() {
        let a = DMatrix::<f64>::from_row_slice(2, 3, &[1e8, 2.0, 0.0, 0.0, 1e-6, 3e-7]);
        let (values, vectors) = kernel_pairs(&a).unwrap();
        assert!(values[1] / values[0] > 0.1);
        assert!((&a * &vectors[2]).amax() < 1e-12 * a.amax());
        let s = equilibrate(&a);
        for x in s.rows.iter().chain(s.cols.iter()) {
            assert_eq!(x.log2().fract(), 0.0);
        }
    }

    #[test]
    fn left_null_vector_of_rank_deficient_matrix() {
        let a = DMatrix::<f64>::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
        let w = left_null_vector(&a).unwrap();
        assert!((w.transpose() * &a).amax() < 1e-12);
    }
}
