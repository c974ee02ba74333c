//! Linear regression trained by per-sample stochastic gradient descent with
//! seeded shuffling; supports warm-started incremental updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    /// Weights over [1, x_std...], intercept first.
    pub weights: Vec<f64>,
    pub learning_rate: f64,
    pub epochs: usize,
}

pub(super) fn fit(std_rows: &[Vec<f64>], labels: &[f64], hyper: &HyperParams) -> Result<SgdParams> {
    let mut params = SgdParams {
        weights: vec![0.0; std_rows[0].len() + 1],
        learning_rate: hyper.sgd_learning_rate()?,
        epochs: hyper.sgd_epochs()?,
    };
    train(&mut params, std_rows, labels, hyper.seed)?;
    Ok(params)
}

pub(super) fn update(
    params: &SgdParams,
    std_rows: &[Vec<f64>],
    labels: &[f64],
    hyper: &HyperParams,
) -> Result<SgdParams> {
    let mut out = SgdParams {
        weights: params.weights.clone(),
        learning_rate: hyper.sgd_learning_rate()?,
        epochs: hyper.sgd_epochs()?,
    };
    train(&mut out, std_rows, labels, hyper.seed)?;
    Ok(out)
}

fn train(params: &mut SgdParams, rows: &[Vec<f64>], labels: &[f64], seed: u64) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = &rows[i];
            let pred = params.weights[0]
                + params.weights[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            let err = labels[i] - pred;
            let step = params.learning_rate * err;
            params.weights[0] += step;
            for (w, x) in params.weights[1..].iter_mut().zip(row) {
                *w += step * x;
            }
        }
    }
    if params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::HyperParam(
            "sgd diverged to non-finite weights; lower the learning rate".into(),
        ));
    }
    Ok(())
}

pub(super) fn predict(params: &SgdParams, std_rows: &[Vec<f64>]) -> Vec<f64> {
    std_rows
        .iter()
        .map(|row| {
            params.weights[0]
                + params.weights[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_on_standardized_linear_data() {
        let rows: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 / 10.0]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
        let hyper = HyperParams::new(5).with("learning_rate", 0.05).with("epochs", 400.0);
        let params = fit(&rows, &labels, &hyper).unwrap();
        let preds = predict(&params, &rows);
        for (p, y) in preds.iter().zip(&labels) {
            assert!((p - y).abs() < 0.05, "{p} vs {y}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 100.0]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let hyper = HyperParams::new(5).with("learning_rate", 10.0);
        assert!(matches!(fit(&rows, &labels, &hyper), Err(Error::HyperParam(_))));
    }
}
