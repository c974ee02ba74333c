//! Small dense linear solver for normal equations.

use crate::error::{Error, Result};

/// Gaussian elimination with partial pivoting. Returns `None` when the
/// system is numerically singular.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();

    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;

    for col in 0..n {
        let pivot_row = (col..n).max_by(|i, j| {
            m[*i][col].abs().partial_cmp(&m[*j][col].abs()).unwrap()
        })?;
        if m[pivot_row][col].abs() <= tol {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);

        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Solves the normal equations, falling back to a ridge term on the diagonal
/// when the plain system is rank deficient.
pub(crate) fn solve_with_ridge_fallback(a: &[Vec<f64>], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if let Some(x) = solve(a, b) {
        return Ok(x);
    }
    let mut ridged: Vec<Vec<f64>> = a.to_vec();
    for (i, row) in ridged.iter_mut().enumerate() {
        row[i] += lambda;
    }
    solve(&ridged, b).ok_or(Error::SingularFit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_well_posed_system() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let b = vec![1.0, 2.0];
        let x = solve(&a, &b).unwrap();
        // Hand-solved: x = (1/11, 7/11).
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_falls_back_to_ridge() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let b = vec![2.0, 2.0];
        assert!(solve(&a, &b).is_none());
        let x = solve_with_ridge_fallback(&a, &b, 1e-6).unwrap();
        // Symmetric ridge solution splits the weight.
        assert!((x[0] - x[1]).abs() < 1e-6);
        assert!((x[0] + x[1] - 2.0).abs() < 1e-3);
    }
}
