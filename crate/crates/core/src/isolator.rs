//! Splits measured node power into workload and background portions.
//!
//! The main method predicts the background share with system-model
//! candidates, scores each candidate by how well the remaining power tracks
//! the target containers' usage (isolation goodness), and labels the series
//! with the winner. Three simpler baselines (static profile, min-power
//! heuristic, no isolation) are provided for comparison.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::FeatureMatrix;
use crate::regressors::{ModelId, PowerModel};

/// Isolation method identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Profiling,
    HeuristicMin,
    None,
}

impl Method {
    pub const ALL: [Method; 4] =
        [Method::Proposed, Method::Profiling, Method::HeuristicMin, Method::None];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Profiling => "profiling",
            Method::HeuristicMin => "heuristic_min",
            Method::None => "none",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "profiling" => Ok(Method::Profiling),
            "heuristic_min" => Ok(Method::HeuristicMin),
            "none" => Ok(Method::None),
            other => Err(format!("unknown isolation method: {other:?}")),
        }
    }
}

/// Isolation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationConfig {
    /// Acceptability threshold for the isolation goodness.
    pub rho_threshold: f64,
    /// Idling background power in watts, when profiled.
    pub profile_background_watts: Option<f64>,
    /// Clamp negative workload labels to 0 (watts are physical).
    pub clamp_negative_labels: bool,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        Self { rho_threshold: 0.7, profile_background_watts: None, clamp_negative_labels: true }
    }
}

impl IsolationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho_threshold) {
            return Err(Error::HyperParam(format!(
                "rho_threshold must be in [0, 1], got {}",
                self.rho_threshold
            )));
        }
        Ok(())
    }
}

/// A system-model candidate with its store identity.
#[derive(Debug, Clone)]
pub struct SystemCandidate {
    pub id: ModelId,
    pub model: PowerModel,
}

/// Workload power labels plus how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationResult {
    pub method: Method,
    /// Final labels (clamped at 0 when configured).
    pub labels: Vec<f64>,
    /// Labels before clamping, kept for diagnostics.
    pub labels_raw: Vec<f64>,
    /// Isolation goodness in [-1, 1]; `None` when undefined (no usage
    /// features to correlate against).
    pub rho: Option<f64>,
    /// Feature that achieved the goodness maximum.
    pub best_feature: Option<String>,
    /// Winning system-model candidate, for the model-backed method.
    pub chosen_candidate: Option<ModelId>,
    /// Training error of the winning candidate, in watts.
    pub candidate_mae: Option<f64>,
}

impl IsolationResult {
    /// Plot-ready CSV: one row per second with the final and raw labels.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("t,label,label_raw\n");
        for (t, (label, raw)) in self.labels.iter().zip(&self.labels_raw).enumerate() {
            out.push_str(&format!(
                "{t},{},{}\n",
                crate::telemetry::fmt_float(*label),
                crate::telemetry::fmt_float(*raw)
            ));
        }
        out
    }

    fn from_raw(method: Method, raw: Vec<f64>, clamp: bool) -> Self {
        let labels = if clamp {
            raw.iter().map(|v| v.max(0.0)).collect()
        } else {
            raw.clone()
        };
        Self {
            method,
            labels,
            labels_raw: raw,
            rho: None,
            best_feature: None,
            chosen_candidate: None,
            candidate_mae: None,
        }
    }
}

/// Pearson correlation; 0 when either vector is constant, so candidate
/// scoring stays total.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::LengthMismatch(a.len(), 2));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Maximum signed correlation between any usage feature and the labels,
/// with the feature that attains it.
///
/// The maximum is over signed values, not magnitudes: a strongly
/// anti-correlated feature does not raise the goodness.
pub fn isolation_goodness(x: &FeatureMatrix, labels: &[f64]) -> Result<(f64, String)> {
    if x.n() != labels.len() {
        return Err(Error::LengthMismatch(x.n(), labels.len()));
    }
    let mut best: Option<(f64, usize)> = None;
    for j in 0..x.width() {
        let col = x.column(j);
        let corr = pearson(&col, labels)?;
        let better = match best {
            None => true,
            Some((b, _)) => corr > b,
        };
        if better {
            best = Some((corr, j));
        }
    }
    let (rho, j) = best.ok_or(Error::EmptyInput)?;
    Ok((rho, x.feature_names[j].clone()))
}

/// Labels the series with the best system-model candidate.
///
/// Per candidate: predict the background power from the total-minus-target
/// usage, subtract it from the measured power, and score the residual
/// against target usage. A candidate replaces the incumbent when (i) there
/// is none, (ii) its goodness clears the threshold and its error is lower,
/// or (iii) the incumbent is below the threshold and the candidate has
/// greater-or-equal goodness with a lower error.
pub fn label_proposed(
    total: &FeatureMatrix,
    targets: &FeatureMatrix,
    power: &[f64],
    candidates: &[SystemCandidate],
    cfg: &IsolationConfig,
) -> Result<IsolationResult> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::NoCandidate);
    }
    if total.n() != power.len() {
        return Err(Error::LengthMismatch(total.n(), power.len()));
    }
    if targets.n() != power.len() {
        return Err(Error::LengthMismatch(targets.n(), power.len()));
    }

    let complement_rows: Vec<Vec<f64>> = total
        .rows
        .iter()
        .zip(&targets.rows)
        .map(|(u, x)| u.iter().zip(x).map(|(a, b)| a - b).collect())
        .collect();

    struct Scored<'a> {
        candidate: &'a SystemCandidate,
        raw: Vec<f64>,
        rho: f64,
        best_feature: String,
        error: f64,
    }

    let mut best: Option<Scored> = None;
    for candidate in candidates {
        let background = candidate.model.predict_named(&total.feature_names, &complement_rows)?;
        let raw: Vec<f64> = power.iter().zip(&background).map(|(p, b)| p - b).collect();
        let (rho, best_feature) = isolation_goodness(targets, &raw)?;
        let error = candidate.model.train_error_mae;

        let accept = match &best {
            None => true,
            Some(incumbent) => {
                (rho >= cfg.rho_threshold && error < incumbent.error)
                    || (incumbent.rho < cfg.rho_threshold
                        && rho >= incumbent.rho
                        && error < incumbent.error)
            }
        };
        if accept {
            best = Some(Scored { candidate, raw, rho, best_feature, error });
        }
    }

    let winner = best.expect("candidates is non-empty");
    let mut result =
        IsolationResult::from_raw(Method::Proposed, winner.raw, cfg.clamp_negative_labels);
    result.rho = Some(winner.rho);
    result.best_feature = Some(winner.best_feature);
    result.chosen_candidate = Some(winner.candidate.id.clone());
    result.candidate_mae = Some(winner.error);
    Ok(result)
}

/// Baseline: subtract a static profiled background power.
pub fn label_profiling(
    targets: &FeatureMatrix,
    power: &[f64],
    cfg: &IsolationConfig,
) -> Result<IsolationResult> {
    cfg.validate()?;
    let profile = cfg.profile_background_watts.ok_or(Error::MissingProfile)?;
    let raw: Vec<f64> = power.iter().map(|p| p - profile).collect();
    let (rho, feature) = if targets.n() == power.len() && power.len() >= 2 {
        let (rho, f) = isolation_goodness(targets, &raw)?;
        (Some(rho), Some(f))
    } else {
        (None, None)
    };
    let mut result = IsolationResult::from_raw(Method::Profiling, raw, true);
    result.rho = rho;
    result.best_feature = feature;
    Ok(result)
}

/// Baseline: treat the observed minimum power as idle power. Downstream
/// training uses the all-container usage, so goodness is scored against it.
pub fn label_heuristic_min(total: &FeatureMatrix, power: &[f64]) -> IsolationResult {
    let min = power.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if power.is_empty() {
        Vec::new()
    } else {
        power.iter().map(|p| p - min).collect()
    };
    let (rho, feature) = if total.n() == raw.len() && raw.len() >= 2 {
        match isolation_goodness(total, &raw) {
            Ok((rho, f)) => (Some(rho), Some(f)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    let mut result = IsolationResult::from_raw(Method::HeuristicMin, raw, true);
    result.rho = rho;
    result.best_feature = feature;
    result
}

/// Baseline: no isolation at all; the measured power is the label.
pub fn label_none(power: &[f64]) -> IsolationResult {
    IsolationResult::from_raw(Method::None, power.to_vec(), false)
}

/// Background power increase induced by running workloads:
/// measured power minus the profile minus the container model's prediction.
pub fn dynamic_background(
    power: &[f64],
    profile_watts: f64,
    container_model: &PowerModel,
    targets: &FeatureMatrix,
) -> Result<Vec<f64>> {
    if targets.n() != power.len() {
        return Err(Error::LengthMismatch(targets.n(), power.len()));
    }
    let predicted = container_model.predict_matrix(targets)?;
    Ok(power
        .iter()
        .zip(&predicted)
        .map(|(p, m)| p - profile_watts - m)
        .collect())
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
