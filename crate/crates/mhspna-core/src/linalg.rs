//! Dense symmetric positive-definite solves, sized for regression systems
//! with at most a dozen or so predictors. Row-major square matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Cholesky factorization A = L L^T of a symmetric positive definite matrix,
/// returning the lower triangle. Fails on non-positive pivots.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = math::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves A x = b for symmetric positive definite A via Cholesky.
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, n)?;
    // forward: L y = b
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // back: L^T x = y
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let x = solve_spd(&a, &[3.0, -2.0], 2).unwrap();
        assert_eq!(x, vec![3.0, -2.0]);
    }

    #[test]
    fn known_system() {
        // [[4,2],[2,3]] x = [10, 9] -> x = [1.5, 2]
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = solve_spd(&a, &[10.0, 9.0], 2).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn three_by_three_roundtrip() {
        // build SPD as M^T M + I and check A x* recovers b
        let m = [1.0, 2.0, 0.5, 0.0, 1.0, -1.0, 2.0, 0.0, 1.0];
        let n = 3;
        let mut a = vec![0.0; 9];
        for i in 0..n {
            for j in 0..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in 0..n {
                    s += m[k * n + i] * m[k * n + j];
                }
                a[i * n + j] = s;
            }
        }
        let b = [1.0, -2.0, 3.0];
        let x = solve_spd(&a, &b, n).unwrap();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i * n + j] * x[j];
            }
            assert!((s - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_rejected() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(solve_spd(&a, &[1.0, 1.0], 2).is_none());
        let neg = [-1.0, 0.0, 0.0, 1.0];
        assert!(cholesky(&neg, 2).is_none());
    }
}
