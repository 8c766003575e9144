//! Small dense complex linear algebra for the generic-scalar code paths.

use num_complex::Complex;

use crate::scalar::Scalar;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is row-major `n x n`. Returns `None` when a pivot falls below
/// `T::tiny()` relative to the largest entry of `a`.
pub(crate) fn solve_dense<T: Scalar>(
    mut a: Vec<Complex<T>>,
    mut b: Vec<Complex<T>>,
) -> Option<Vec<Complex<T>>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().map(|v| v.norm()).fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return None;
    }
    let floor = T::tiny() * scale;
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[r * n + col].norm()))
            .fold((col, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(best > floor) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / p;
            if factor.norm() == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] = a[r * n + k] - factor * v;
            }
            let v = b[col];
            b[r] = b[r] - factor * v;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    if b.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Some(b)
    } else {
        None
    }
}
