//! Learning approaches behind one contract: fit, predict, incremental fit,
//! persist, restore.
//!
//! Every approach standardizes features internally with a scaler frozen at
//! the first fit and stored in the archive; labels are never scaled, so a
//! restored model reproduces predictions bit-for-bit on platforms that never
//! see the training data. Negative predictions are clamped to 0 watts.

mod gbr;
mod knn;
mod linear;
mod sgd;
mod solver;
mod store;

pub use gbr::Stump;
pub use store::{ModelId, ModelStore, StoredMeta, ARCHIVE_FORMAT_VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::mae;
use crate::extractor::FeatureMatrix;
use crate::telemetry::Producer;

/// Learning approach identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Linear,
    Polynomial2,
    Knn,
    GbrStumps,
    SgdLinear,
}

impl Approach {
    pub const ALL: [Approach; 5] = [
        Approach::Linear,
        Approach::Polynomial2,
        Approach::Knn,
        Approach::GbrStumps,
        Approach::SgdLinear,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Approach::Linear => "linear",
            Approach::Polynomial2 => "polynomial2",
            Approach::Knn => "knn",
            Approach::GbrStumps => "gbr_stumps",
            Approach::SgdLinear => "sgd_linear",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Approach::Linear),
            "polynomial2" => Ok(Approach::Polynomial2),
            "knn" => Ok(Approach::Knn),
            "gbr_stumps" => Ok(Approach::GbrStumps),
            "sgd_linear" => Ok(Approach::SgdLinear),
            other => Err(format!("unknown approach: {other:?}")),
        }
    }
}

/// Whether a model maps total usage to node power or target usage to
/// isolated workload power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    System,
    Container,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::System => "system",
            ModelKind::Container => "container",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "system" => Ok(ModelKind::System),
            "container" => Ok(ModelKind::Container),
            other => Err(format!("unknown model kind: {other:?}")),
        }
    }
}

/// Hyperparameters plus the single 64-bit seed all randomness flows from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub seed: u64,
    values: BTreeMap<String, f64>,
}

impl HyperParams {
    pub fn new(seed: u64) -> Self {
        Self { seed, values: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                    Err(Error::HyperParam(format!("{key} must be a positive integer, got {v}")))
                } else {
                    Ok(v as usize)
                }
            }
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.is_finite() && v > 0.0 => Ok(v),
            Some(v) => Err(Error::HyperParam(format!("{key} must be positive, got {v}"))),
        }
    }

    pub fn knn_k(&self) -> Result<usize> {
        self.count("k", 5)
    }

    pub fn gbr_rounds(&self) -> Result<usize> {
        self.count("rounds", 200)
    }

    pub fn gbr_learning_rate(&self) -> Result<f64> {
        self.positive("learning_rate", 0.1)
    }

    pub fn sgd_learning_rate(&self) -> Result<f64> {
        self.positive("learning_rate", 1e-3)
    }

    pub fn sgd_epochs(&self) -> Result<usize> {
        self.count("epochs", 100)
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::new(0)
    }
}

/// Per-feature standardization parameters, frozen at the first fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub stddev: f64,
}

impl FeatureScale {
    /// Constant columns keep stddev 0 in the archive but standardize with a
    /// divisor of 1 so the transform stays defined.
    fn divisor(&self) -> f64 {
        if self.stddev > 1e-12 {
            self.stddev
        } else {
            1.0
        }
    }
}

/// Approach-specific parameter payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "approach", rename_all = "snake_case")]
pub enum ModelParams {
    Linear(linear::LinearParams),
    Polynomial2(linear::LinearParams),
    Knn(knn::KnnParams),
    GbrStumps(gbr::GbrParams),
    SgdLinear(sgd::SgdParams),
}

/// A trained power model with everything needed to reproduce predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerModel {
    pub approach: Approach,
    pub producer: Producer,
    pub kind: ModelKind,
    pub dataset_tag: String,
    pub feature_names: Vec<String>,
    pub scaler: Vec<FeatureScale>,
    pub train_error_mae: f64,
    pub params: ModelParams,
}

fn compute_scaler(m: &FeatureMatrix) -> Vec<FeatureScale> {
    let n = m.n() as f64;
    (0..m.width())
        .map(|j| {
            let mean = m.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = m.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            FeatureScale { mean, stddev: var.sqrt() }
        })
        .collect()
}

fn standardize(rows: &[Vec<f64>], scaler: &[FeatureScale]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            row.iter()
                .zip(scaler)
                .map(|(v, s)| (v - s.mean) / s.divisor())
                .collect()
        })
        .collect()
}

fn check_training_input(m: &FeatureMatrix) -> Result<&[f64]> {
    let labels = m.labels_or_err()?;
    if m.n() < 2 {
        return Err(Error::DegenerateMatrix(format!("{} training row(s)", m.n())));
    }
    if labels.len() != m.n() {
        return Err(Error::LengthMismatch(labels.len(), m.n()));
    }
    if m.width() == 0 {
        return Err(Error::DegenerateMatrix("no feature columns".into()));
    }
    let finite = m.rows.iter().flatten().all(|v| v.is_finite())
        && labels.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::DegenerateMatrix("non-finite training values".into()));
    }
    Ok(labels)
}

/// Trains one model. The returned model is a system model with no dataset
/// tag; use [`PowerModel::with_kind`] / [`PowerModel::with_tag`] to relabel.
pub fn fit(approach: Approach, m: &FeatureMatrix, hyper: &HyperParams) -> Result<PowerModel> {
    let labels = check_training_input(m)?;
    let scaler = compute_scaler(m);
    let std_rows = standardize(&m.rows, &scaler);

    let params = match approach {
        Approach::Linear => ModelParams::Linear(linear::fit(&std_rows, labels, false)?),
        Approach::Polynomial2 => ModelParams::Polynomial2(linear::fit(&std_rows, labels, true)?),
        Approach::Knn => ModelParams::Knn(knn::fit(&std_rows, labels, hyper)?),
        Approach::GbrStumps => ModelParams::GbrStumps(gbr::fit(&std_rows, labels, hyper)?),
        Approach::SgdLinear => ModelParams::SgdLinear(sgd::fit(&std_rows, labels, hyper)?),
    };

    let mut model = PowerModel {
        approach,
        producer: m.producer,
        kind: ModelKind::System,
        dataset_tag: String::new(),
        feature_names: m.feature_names.clone(),
        scaler,
        train_error_mae: 0.0,
        params,
    };
    model.train_error_mae = mae(labels, &model.predict(&m.rows)?)?;
    Ok(model)
}

/// Updates a trained model with a new batch.
///
/// Linear and polynomial models accumulate exact sufficient statistics, kNN
/// appends exemplars, stump boosting appends rounds fitted to new-batch
/// residuals, and SGD warm-starts from the stored weights. The recorded
/// `train_error_mae` afterwards is the updated model's error on the new
/// batch (earlier batches are not retained by the summary-based approaches).
pub fn fit_incremental(
    model: &PowerModel,
    m: &FeatureMatrix,
    hyper: &HyperParams,
) -> Result<PowerModel> {
    if model.feature_names != m.feature_names {
        return Err(Error::FeatureMismatch(format!(
            "model features {:?} vs batch features {:?}",
            model.feature_names, m.feature_names
        )));
    }
    if model.producer != m.producer {
        return Err(Error::FeatureMismatch(format!(
            "model producer {} vs batch producer {}",
            model.producer, m.producer
        )));
    }
    let labels = check_training_input(m)?;
    let std_rows = standardize(&m.rows, &model.scaler);

    let params = match &model.params {
        ModelParams::Linear(p) => ModelParams::Linear(linear::update(p, &std_rows, labels)?),
        ModelParams::Polynomial2(p) => {
            ModelParams::Polynomial2(linear::update(p, &std_rows, labels)?)
        }
        ModelParams::Knn(p) => ModelParams::Knn(knn::update(p, &std_rows, labels)),
        ModelParams::GbrStumps(p) => ModelParams::GbrStumps(gbr::update(p, &std_rows, labels, hyper)?),
        ModelParams::SgdLinear(p) => ModelParams::SgdLinear(sgd::update(p, &std_rows, labels, hyper)?),
    };

    let mut updated = PowerModel { params, ..model.clone() };
    updated.train_error_mae = mae(labels, &updated.predict(&m.rows)?)?;
    Ok(updated)
}

impl PowerModel {
    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.dataset_tag = tag.into();
        self
    }

    /// Predicts watts for rows whose columns match `feature_names`.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != self.feature_names.len()) {
            return Err(Error::FeatureMismatch(format!(
                "expected {} columns, got {}",
                self.feature_names.len(),
                bad.len()
            )));
        }
        let std_rows = standardize(rows, &self.scaler);
        self.predict_std(&std_rows)
    }

    /// Predicts from rows with the given column names. Model features absent
    /// from the input are imputed at their training mean; extra input
    /// columns are ignored. Errors when no feature is shared.
    pub fn predict_named(&self, names: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let positions: Vec<Option<usize>> = self
            .feature_names
            .iter()
            .map(|f| names.iter().position(|n| n == f))
            .collect();
        if positions.iter().all(Option::is_none) {
            return Err(Error::FeatureMismatch(format!(
                "no shared features between model {:?} and input {:?}",
                self.feature_names, names
            )));
        }
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let std_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| {
                positions
                    .iter()
                    .zip(&self.scaler)
                    .map(|(pos, s)| match pos {
                        Some(j) => (row[*j] - s.mean) / s.divisor(),
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();
        self.predict_std(&std_rows)
    }

    /// Convenience wrapper matching columns by name from a feature matrix.
    pub fn predict_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.predict_named(&m.feature_names, &m.rows)
    }

    fn predict_std(&self, std_rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let raw = match &self.params {
            ModelParams::Linear(p) => linear::predict(p, std_rows, false),
            ModelParams::Polynomial2(p) => linear::predict(p, std_rows, true),
            ModelParams::Knn(p) => knn::predict(p, std_rows),
            ModelParams::GbrStumps(p) => gbr::predict(p, std_rows),
            ModelParams::SgdLinear(p) => sgd::predict(p, std_rows),
        };
        Ok(raw.into_iter().map(|v| v.max(0.0)).collect())
    }

    /// De-standardized coefficients (per-feature weights, intercept) for
    /// degree-1 linear models; `None` for other approaches.
    pub fn linear_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        let p = match &self.params {
            ModelParams::Linear(p) => p,
            _ => return None,
        };
        let mut intercept = p.weights[0];
        let mut coeffs = Vec::with_capacity(self.scaler.len());
        for (w, s) in p.weights[1..].iter().zip(&self.scaler) {
            let raw = w / s.divisor();
            coeffs.push(raw);
            intercept -= raw * s.mean;
        }
        Some((coeffs, intercept))
    }

    /// Number of stored exemplars for kNN models.
    pub fn exemplar_count(&self) -> Option<usize> {
        match &self.params {
            ModelParams::Knn(p) => Some(p.exemplars.len()),
            _ => None,
        }
    }

    /// Number of boosting rounds for stump models.
    pub fn round_count(&self) -> Option<usize> {
        match &self.params {
            ModelParams::GbrStumps(p) => Some(p.stumps.len()),
            _ => None,
        }
    }
}
