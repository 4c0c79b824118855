//! Small dense helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Lower-triangular `L` with `L Lᵀ = A` for a symmetric positive
/// semi-definite `A`. Zero pivots (rank deficiency) give zero columns.
/// Returns `None` when `A` is not square, not symmetric, or has a pivot that
/// is negative beyond round-off.
pub fn psd_factor(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale.max(1e-300) {
                return None;
            }
        }
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            continue;
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Writes `L z` into `out` where `z` is a fresh vector of standard normal
/// draws taken in component order.
pub fn correlated_normal<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R, out: &mut [f64]) {
    let n = factor.nrows();
    let mut z = [0.0f64; 16];
    let mut z_heap;
    let z: &mut [f64] = if n <= z.len() {
        &mut z[..n]
    } else {
        z_heap = alloc::vec![0.0; n];
        &mut z_heap
    };
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += factor[(i, k)] * z[k];
        }
        out[i] = acc;
    }
}

pub fn is_finite_matrix(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn is_finite_vector(a: &DVector<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}
