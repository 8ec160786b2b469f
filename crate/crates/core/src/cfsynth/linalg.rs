//! Small dense complex solver for the MINACE Gram system.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Column-major is not worth the bother at these sizes; matrices are stored
/// row-major as `Vec<Complex64>` with side `n`.
pub struct SolveOutcome {
    pub solution: Vec<Complex64>,
    /// ||A||_1 · ||A^{-1}||_1, a standard condition estimate.
    pub condition: f64,
}

fn one_norm(a: &[Complex64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting on the augmented system
/// [A | b I], producing both the solution of A x = b and A^{-1} for the
/// condition estimate.
pub fn solve_with_condition(a: &[Complex64], b: &[Complex64]) -> Result<SolveOutcome> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let norm_a = one_norm(a, n);
    // augmented columns: x (1) + inverse (n)
    let cols = n + 1;
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n * cols];
    m.copy_from_slice(a);
    for i in 0..n {
        rhs[i * cols] = b[i];
        rhs[i * cols + 1 + i] = Complex64::new(1.0, 0.0);
    }
    for k in 0..n {
        let (mut pivot, mut pivot_row) = (m[k * n + k].norm(), k);
        for i in k + 1..n {
            let v = m[i * n + k].norm();
            if v > pivot {
                pivot = v;
                pivot_row = i;
            }
        }
        if pivot == 0.0 {
            return Err(Error::DegenerateTraining("singular Gram matrix".into()));
        }
        if pivot_row != k {
            for j in 0..n {
                m.swap(k * n + j, pivot_row * n + j);
            }
            for j in 0..cols {
                rhs.swap(k * cols + j, pivot_row * cols + j);
            }
        }
        let inv_p = Complex64::new(1.0, 0.0) / m[k * n + k];
        for i in 0..n {
            if i == k {
                continue;
            }
            let factor = m[i * n + k] * inv_p;
            if factor.norm() == 0.0 {
                continue;
            }
            for j in k..n {
                let v = m[k * n + j];
                m[i * n + j] -= factor * v;
            }
            for j in 0..cols {
                let v = rhs[k * cols + j];
                rhs[i * cols + j] -= factor * v;
            }
        }
    }
    let mut solution = vec![Complex64::new(0.0, 0.0); n];
    let mut inverse = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let d = m[i * n + i];
        solution[i] = rhs[i * cols] / d;
        for j in 0..n {
            inverse[i * n + j] = rhs[i * cols + 1 + j] / d;
        }
    }
    let condition = norm_a * one_norm(&inverse, n);
    Ok(SolveOutcome { solution, condition })
}
