//! Gradient boosting with depth-1 regression trees (stumps) on squared loss.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::HyperParams;

/// One axis-aligned split: rows with `x[feature] <= threshold` get `left`,
/// the rest get `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn apply(&self, row: &[f64]) -> f64 {
        if row[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrParams {
    pub learning_rate: f64,
    /// Initial prediction: mean of the first training labels.
    pub base: f64,
    pub stumps: Vec<Stump>,
}

pub(super) fn fit(std_rows: &[Vec<f64>], labels: &[f64], hyper: &HyperParams) -> Result<GbrParams> {
    let rounds = hyper.gbr_rounds()?;
    let learning_rate = hyper.gbr_learning_rate()?;
    let base = labels.iter().sum::<f64>() / labels.len() as f64;
    let mut params = GbrParams { learning_rate, base, stumps: Vec::new() };
    boost(&mut params, std_rows, labels, rounds);
    Ok(params)
}

/// Appends rounds fitted to the new batch's residuals under the current
/// ensemble; earlier stumps and the base are kept.
pub(super) fn update(
    params: &GbrParams,
    std_rows: &[Vec<f64>],
    labels: &[f64],
    hyper: &HyperParams,
) -> Result<GbrParams> {
    let rounds = hyper.gbr_rounds()?;
    let mut out = params.clone();
    boost(&mut out, std_rows, labels, rounds);
    Ok(out)
}

fn boost(params: &mut GbrParams, rows: &[Vec<f64>], labels: &[f64], rounds: usize) {
    let mut current = raw_predict(params, rows);
    // Column sort orders do not change across rounds.
    let d = rows[0].len();
    let orders: Vec<Vec<usize>> = (0..d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            idx.sort_by(|a, b| rows[*a][j].partial_cmp(&rows[*b][j]).unwrap().then(a.cmp(b)));
            idx
        })
        .collect();

    for _ in 0..rounds {
        let residuals: Vec<f64> = labels.iter().zip(&current).map(|(y, f)| y - f).collect();
        let Some(stump) = best_stump(rows, &residuals, &orders) else {
            break; // no feature admits a split; residual mean is already 0
        };
        for (f, row) in current.iter_mut().zip(rows) {
            *f += params.learning_rate * stump.apply(row);
        }
        params.stumps.push(stump);
    }
}

/// Least-squares stump over all (feature, threshold) candidates. Thresholds
/// are midpoints between consecutive distinct sorted values. Ties break
/// toward the lower feature index and lower threshold.
fn best_stump(rows: &[Vec<f64>], residuals: &[f64], orders: &[Vec<usize>]) -> Option<Stump> {
    let n = rows.len();
    let total: f64 = residuals.iter().sum();
    let mut best: Option<(f64, Stump)> = None;

    for (feature, order) in orders.iter().enumerate() {
        let mut left_sum = 0.0;
        for (pos, &i) in order.iter().enumerate() {
            left_sum += residuals[i];
            if pos + 1 == n {
                break;
            }
            let here = rows[i][feature];
            let next = rows[order[pos + 1]][feature];
            if here == next {
                continue;
            }
            let n_left = (pos + 1) as f64;
            let n_right = (n - pos - 1) as f64;
            let right_sum = total - left_sum;
            // Maximizing this score minimizes the split SSE.
            let score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
            let improves = match &best {
                None => true,
                Some((best_score, _)) => score > *best_score,
            };
            if improves {
                best = Some((
                    score,
                    Stump {
                        feature,
                        threshold: (here + next) / 2.0,
                        left: left_sum / n_left,
                        right: right_sum / n_right,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
}

fn raw_predict(params: &GbrParams, rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|row| {
            params.base
                + params.learning_rate
                    * params.stumps.iter().map(|s| s.apply(row)).sum::<f64>()
        })
        .collect()
}

pub(super) fn predict(params: &GbrParams, std_rows: &[Vec<f64>]) -> Vec<f64> {
    raw_predict(params, std_rows)
}
