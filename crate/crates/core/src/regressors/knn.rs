//! Distance-weighted k-nearest-neighbor regression on standardized features.

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    /// Standardized training rows.
    pub exemplars: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

pub(super) fn fit(std_rows: &[Vec<f64>], labels: &[f64], hyper: &HyperParams) -> Result<KnnParams> {
    Ok(KnnParams {
        k: hyper.knn_k()?,
        exemplars: std_rows.to_vec(),
        labels: labels.to_vec(),
    })
}

pub(super) fn update(params: &KnnParams, std_rows: &[Vec<f64>], labels: &[f64]) -> KnnParams {
    let mut out = params.clone();
    out.exemplars.extend(std_rows.iter().cloned());
    out.labels.extend_from_slice(labels);
    out
}

pub(super) fn predict(params: &KnnParams, std_rows: &[Vec<f64>]) -> Vec<f64> {
    std_rows.iter().map(|row| predict_one(params, row)).collect()
}

fn predict_one(params: &KnnParams, row: &[f64]) -> f64 {
    let mut dists: Vec<(f64, usize)> = params
        .exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let d2: f64 = e.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2.sqrt(), i)
        })
        .collect();
    // Ties break toward the lower exemplar index so predictions are stable.
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = params.k.min(dists.len());
    let nearest = &dists[..k];

    // Exact matches dominate: average their labels instead of dividing by a
    // zero distance.
    let exact: Vec<usize> = nearest.iter().filter(|(d, _)| *d == 0.0).map(|(_, i)| *i).collect();
    if !exact.is_empty() {
        return exact.iter().map(|i| params.labels[*i]).sum::<f64>() / exact.len() as f64;
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for (d, i) in nearest {
        let w = 1.0 / d;
        num += w * params.labels[*i];
        den += w;
    }
    num / den
}
