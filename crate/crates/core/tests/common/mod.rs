//! Independent brute-force oracles used by the integration suites. These
//! deliberately avoid the library's computation paths so they can catch
//! implementation bugs in them.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Two-pass Pearson correlation; 0 when either side is constant.
pub fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - mean_a) * (y - mean_b)).sum();
    let var_a: f64 = a.iter().map(|x| (x - mean_a) * (x - mean_a)).sum();
    let var_b: f64 = b.iter().map(|y| (y - mean_b) * (y - mean_b)).sum();
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    cov / (var_a * var_b).sqrt()
}

pub fn mae_oracle(truth: &[f64], pred: &[f64]) -> f64 {
    assert_eq!(truth.len(), pred.len());
    assert!(!truth.is_empty());
    truth.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64
}

pub fn pct_err_oracle(eps: f64, power: &[f64], p_profile: f64) -> f64 {
    let max = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    eps / (max - p_profile) * 100.0
}

pub fn avg_ce_oracle(entries: &[Vec<f64>]) -> f64 {
    let k = entries.len();
    entries.iter().flatten().sum::<f64>() / (k * k) as f64
}

pub fn mean_oracle(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Replay of the candidate-selection fold over (goodness, error) pairs in
/// arrival order. A candidate replaces the incumbent when (i) there is
/// none, (ii) its goodness clears the threshold and its error is lower, or
/// (iii) the incumbent is below the threshold and the candidate has
/// greater-or-equal goodness with a lower error. Returns the winning index.
pub fn selection_oracle(pairs: &[(f64, f64)], rho_threshold: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (rho, eps)) in pairs.iter().enumerate() {
        let accept = match best {
            None => true,
            Some(b) => {
                let (rho_best, eps_best) = pairs[b];
                (*rho >= rho_threshold && *eps < eps_best)
                    || (rho_best < rho_threshold && *rho >= rho_best && *eps < eps_best)
            }
        };
        if accept {
            best = Some(i);
        }
    }
    best
}

/// Reference depth-1 boosting on squared loss. Same contract as the library
/// (midpoint thresholds between consecutive distinct sorted values, running
/// left sums in sorted order, ties toward the lower feature index and lower
/// threshold) built independently with a naive scan.
#[allow(clippy::needless_range_loop)]
pub fn stump_boost_oracle(
    rows: &[Vec<f64>],
    labels: &[f64],
    rounds: usize,
    learning_rate: f64,
) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let base = labels.iter().sum::<f64>() / n as f64;
    let mut predictions = vec![base; n];

    for _ in 0..rounds {
        let residuals: Vec<f64> = labels.iter().zip(&predictions).map(|(y, f)| y - f).collect();
        let total: f64 = residuals.iter().sum();

        let mut best: Option<(f64, usize, f64, f64, f64)> = None; // score, feature, thr, left, right
        for feature in 0..d {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|a, b| {
                rows[*a][feature].partial_cmp(&rows[*b][feature]).unwrap().then(a.cmp(b))
            });
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += residuals[order[pos]];
                let here = rows[order[pos]][feature];
                let next = rows[order[pos + 1]][feature];
                if here == next {
                    continue;
                }
                let n_left = (pos + 1) as f64;
                let n_right = (n - pos - 1) as f64;
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
                if best.is_none() || score > best.unwrap().0 {
                    best = Some((
                        score,
                        feature,
                        (here + next) / 2.0,
                        left_sum / n_left,
                        right_sum / n_right,
                    ));
                }
            }
        }
        let Some((_, feature, threshold, left, right)) = best else {
            break;
        };
        for (p, row) in predictions.iter_mut().zip(rows) {
            *p += learning_rate * if row[feature] <= threshold { left } else { right };
        }
    }
    predictions.into_iter().map(|p| p.max(0.0)).collect()
}

/// From-scratch SGD mirror: standardize columns (population stddev, unit
/// divisor for constants), then per-sample gradient steps over seeded
/// shuffles. Returns clamped predictions on the training rows.
pub fn sgd_oracle(
    rows: &[Vec<f64>],
    labels: &[f64],
    learning_rate: f64,
    epochs: usize,
    seed: u64,
) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut means = vec![0.0; d];
    let mut divisors = vec![1.0; d];
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n as f64;
        means[j] = mean;
        let stddev = var.sqrt();
        divisors[j] = if stddev > 1e-12 { stddev } else { 1.0 };
    }
    let std_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - means[j]) / divisors[j]).collect())
        .collect();

    let mut weights = vec![0.0; d + 1];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = &std_rows[i];
            let pred =
                weights[0] + weights[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            let err = labels[i] - pred;
            let step = learning_rate * err;
            weights[0] += step;
            for (w, x) in weights[1..].iter_mut().zip(row) {
                *w += step * x;
            }
        }
    }
    std_rows
        .iter()
        .map(|row| {
            (weights[0] + weights[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>()).max(0.0)
        })
        .collect()
}
