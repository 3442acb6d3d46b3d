use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Pivots of the Cholesky factor smaller than this (relative to the largest
/// diagonal entry of the system) mark the system as numerically singular.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-12;

/// Solve `a x = b` for symmetric positive definite `a` given row-major.
pub(crate) fn solve_spd(a: Vec<f64>, b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    let a = DMatrix::from_row_slice(d, d, &a);
    let scale = (0..d).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    if scale.is_nan() || scale <= 0.0 || scale.is_infinite() {
        return None;
    }
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    for i in 0..d {
        if l[(i, i)] * l[(i, i)] < RELATIVE_PIVOT_FLOOR * scale {
            return None;
        }
    }
    let x = chol.solve(&DVector::from_vec(b));
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}
