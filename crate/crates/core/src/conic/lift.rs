//! Complex-to-real lifting.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::{CMatrix, CVector};

/// `v -> [Re v; Im v]`.
pub fn lift_complex(v: &CVector) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`lift_complex`]; `x` must have even length.
pub fn unlift_complex(x: &DVector<f64>) -> CVector {
    let n = x.len() / 2;
    CVector::from_fn(n, |i, _| Complex64::new(x[i], x[i + n]))
}

/// `M -> [[Re M, -Im M], [Im M, Re M]]`.
pub fn lift_hermitian(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let (bi, bj) = (i / r, j / c);
        let z = m[(i % r, j % c)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// Reads the complex matrix back from the top-left and bottom-left blocks.
pub fn unlift_hermitian(x: &DMatrix<f64>) -> CMatrix {
    let n = x.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| Complex64::new(x[(i, j)], x[(i + n, j)]))
}
