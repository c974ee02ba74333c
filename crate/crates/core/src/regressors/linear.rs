//! Linear and degree-2 polynomial regression over standardized features,
//! solved through accumulated sufficient statistics so that incremental
//! updates are exact.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::solver;

const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    /// Weights over the expanded basis, intercept first.
    pub weights: Vec<f64>,
    /// Accumulated Gram matrix over the basis.
    pub xtx: Vec<Vec<f64>>,
    /// Accumulated basis-times-label vector.
    pub xty: Vec<f64>,
    pub n_seen: u64,
}

/// Basis expansion of one standardized row: intercept, linear terms, and for
/// degree 2 all products x_i * x_j with i <= j.
pub(super) fn basis(row: &[f64], degree2: bool) -> Vec<f64> {
    let d = row.len();
    let mut out = Vec::with_capacity(basis_len(d, degree2));
    out.push(1.0);
    out.extend_from_slice(row);
    if degree2 {
        for i in 0..d {
            for j in i..d {
                out.push(row[i] * row[j]);
            }
        }
    }
    out
}

pub(super) fn basis_len(d: usize, degree2: bool) -> usize {
    if degree2 {
        1 + d + d * (d + 1) / 2
    } else {
        1 + d
    }
}

fn accumulate(xtx: &mut [Vec<f64>], xty: &mut [f64], std_rows: &[Vec<f64>], labels: &[f64], degree2: bool) {
    for (row, y) in std_rows.iter().zip(labels) {
        let b = basis(row, degree2);
        for (i, bi) in b.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                xtx[i][j] += bi * bj;
            }
            xty[i] += bi * y;
        }
    }
}

pub(super) fn fit(std_rows: &[Vec<f64>], labels: &[f64], degree2: bool) -> Result<LinearParams> {
    let m = basis_len(std_rows[0].len(), degree2);
    let mut xtx = vec![vec![0.0; m]; m];
    let mut xty = vec![0.0; m];
    accumulate(&mut xtx, &mut xty, std_rows, labels, degree2);
    let weights = solver::solve_with_ridge_fallback(&xtx, &xty, RIDGE_LAMBDA)?;
    Ok(LinearParams { weights, xtx, xty, n_seen: std_rows.len() as u64 })
}

pub(super) fn update(params: &LinearParams, std_rows: &[Vec<f64>], labels: &[f64]) -> Result<LinearParams> {
    let degree2 = params.xtx.len() > std_rows[0].len() + 1;
    let mut xtx = params.xtx.clone();
    let mut xty = params.xty.clone();
    accumulate(&mut xtx, &mut xty, std_rows, labels, degree2);
    let weights = solver::solve_with_ridge_fallback(&xtx, &xty, RIDGE_LAMBDA)?;
    Ok(LinearParams { weights, xtx, xty, n_seen: params.n_seen + std_rows.len() as u64 })
}

pub(super) fn predict(params: &LinearParams, std_rows: &[Vec<f64>], degree2: bool) -> Vec<f64> {
    std_rows
        .iter()
        .map(|row| {
            basis(row, degree2)
                .iter()
                .zip(&params.weights)
                .map(|(b, w)| b * w)
                .sum()
        })
        .collect()
}
