//! End-to-end training runs: fit system candidates, isolate workload power,
//! train container models per approach, and persist everything to the model
//! store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::mae;
use crate::extractor::{apply_mask, cleaning_mask, extract, to_rates, FeatureMatrix, Origin};
use crate::isolator::{
    label_heuristic_min, label_none, label_profiling, label_proposed, IsolationConfig,
    IsolationResult, Method, SystemCandidate,
};
use crate::regressors::{
    fit, fit_incremental, Approach, HyperParams, ModelId, ModelKind, ModelStore, PowerModel,
};
use crate::telemetry::{Producer, SeriesUnit, TelemetryFrame};

/// Settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub producer: Producer,
    pub method: Method,
    pub approaches: Vec<Approach>,
    pub isolation: IsolationConfig,
    pub seed: u64,
    pub dataset_tag: String,
    /// When set (e.g. 0.2), container models train on the leading portion
    /// and the recorded error comes from the trailing, time-ordered split.
    pub holdout_fraction: Option<f64>,
}

impl RunConfig {
    pub fn new(producer: Producer, dataset_tag: impl Into<String>) -> Self {
        Self {
            producer,
            method: Method::Proposed,
            approaches: vec![Approach::Linear],
            isolation: IsolationConfig::default(),
            seed: 42,
            dataset_tag: dataset_tag.into(),
            holdout_fraction: None,
        }
    }

    fn validate(&self) -> Result<()> {
        self.isolation.validate()?;
        if self.approaches.is_empty() {
            return Err(Error::HyperParam("at least one approach is required".into()));
        }
        if let Some(f) = self.holdout_fraction {
            if !(0.0 < f && f < 1.0) {
                return Err(Error::HyperParam(format!("holdout_fraction must be in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub dataset_tag: String,
    pub producer: Producer,
    pub candidates: Vec<ModelId>,
    pub isolation: IsolationResult,
    pub container_models: BTreeMap<Approach, ModelId>,
    pub container_errors: BTreeMap<Approach, f64>,
}

impl PipelineRun {
    pub fn method(&self) -> Method {
        self.isolation.method
    }
}

/// Cleaned, aligned matrices shared by training and evaluation.
#[derive(Debug, Clone)]
pub struct PreparedMatrices {
    /// Usage summed over every container, labeled with node watts.
    pub total: FeatureMatrix,
    /// Usage summed over target containers (missing when every container is
    /// background), labeled with node watts.
    pub targets: Option<FeatureMatrix>,
    /// Node watts over the cleaned window.
    pub power: Vec<f64>,
}

/// Rate-converts if needed, extracts the producer group, and applies one
/// cleaning mask to every view so they stay aligned row-for-row.
pub fn prepare_matrices(frame: &TelemetryFrame, producer: Producer) -> Result<PreparedMatrices> {
    let rates;
    let frame = if frame.unit() == SeriesUnit::Cumulative {
        rates = to_rates(frame)?.0;
        &rates
    } else {
        frame
    };
    let total_raw = extract(frame, producer, &Origin::AggregateAll)?;
    let mask = cleaning_mask(&total_raw);
    let total = apply_mask(&total_raw, &mask)?;
    let targets = match extract(frame, producer, &Origin::AggregateTargets) {
        Ok(raw) => Some(apply_mask(&raw, &mask)?),
        Err(Error::EmptyTargetSet) => None,
        Err(e) => return Err(e),
    };
    let power = total.labels.clone().expect("extract always labels with node watts");
    Ok(PreparedMatrices { total, targets, power })
}

fn isolate(
    prepared: &PreparedMatrices,
    cfg: &RunConfig,
    candidates: &[SystemCandidate],
) -> Result<IsolationResult> {
    match cfg.method {
        Method::Proposed => {
            let targets = prepared.targets.as_ref().ok_or(Error::EmptyTargetSet)?;
            label_proposed(&prepared.total, targets, &prepared.power, candidates, &cfg.isolation)
        }
        Method::Profiling => {
            let targets = prepared.targets.as_ref().ok_or(Error::EmptyTargetSet)?;
            label_profiling(targets, &prepared.power, &cfg.isolation)
        }
        Method::HeuristicMin => Ok(label_heuristic_min(&prepared.total, &prepared.power)),
        Method::None => Ok(label_none(&prepared.power)),
    }
}

/// Feature view that container models train on: target usage for the
/// model-backed and profiling methods, all-container usage for the
/// heuristic and no-isolation baselines.
fn container_features(prepared: &PreparedMatrices, method: Method) -> Result<FeatureMatrix> {
    match method {
        Method::Proposed | Method::Profiling => {
            prepared.targets.clone().ok_or(Error::EmptyTargetSet)
        }
        Method::HeuristicMin | Method::None => Ok(prepared.total.clone()),
    }
}

fn split_index(n: usize, holdout: Option<f64>) -> Result<Option<usize>> {
    match holdout {
        None => Ok(None),
        Some(f) => {
            let train = ((n as f64) * (1.0 - f)).ceil() as usize;
            if train < 2 || train >= n {
                return Err(Error::HyperParam(format!(
                    "holdout split leaves {train} training rows of {n}"
                )));
            }
            Ok(Some(train))
        }
    }
}

fn fit_container(
    approach: Approach,
    features: &FeatureMatrix,
    labels: &[f64],
    cfg: &RunConfig,
) -> Result<(PowerModel, f64)> {
    let matrix = features.clone().with_labels(labels.to_vec());
    let hyper = HyperParams::new(cfg.seed);
    match split_index(matrix.n(), cfg.holdout_fraction)? {
        None => {
            let model = fit(approach, &matrix, &hyper)?
                .with_kind(ModelKind::Container)
                .with_tag(&cfg.dataset_tag);
            let error = model.train_error_mae;
            Ok((model, error))
        }
        Some(split) => {
            let train = FeatureMatrix {
                rows: matrix.rows[..split].to_vec(),
                labels: Some(labels[..split].to_vec()),
                ..matrix.clone()
            };
            let model = fit(approach, &train, &hyper)?
                .with_kind(ModelKind::Container)
                .with_tag(&cfg.dataset_tag);
            let held_pred = model.predict(&matrix.rows[split..])?;
            let error = mae(&labels[split..], &held_pred)?;
            Ok((model, error))
        }
    }
}

/// One full training run over a frame.
pub fn run(frame: &TelemetryFrame, cfg: &RunConfig, store: &ModelStore) -> Result<PipelineRun> {
    cfg.validate()?;
    let prepared = prepare_matrices(frame, cfg.producer)?;

    // System candidates back the model-based isolation; the other methods
    // skip them.
    let mut candidates = Vec::new();
    if cfg.method == Method::Proposed {
        if prepared.targets.is_none() {
            return Err(Error::EmptyTargetSet);
        }
        for approach in &cfg.approaches {
            let model = fit(*approach, &prepared.total, &HyperParams::new(cfg.seed))?
                .with_kind(ModelKind::System)
                .with_tag(&cfg.dataset_tag);
            let id = store.save(&model)?;
            candidates.push(SystemCandidate { id, model });
        }
    }

    let isolation = isolate(&prepared, cfg, &candidates)?;
    let features = container_features(&prepared, cfg.method)?;

    let mut container_models = BTreeMap::new();
    let mut container_errors = BTreeMap::new();
    for approach in &cfg.approaches {
        let (model, error) = fit_container(*approach, &features, &isolation.labels, cfg)?;
        let id = store.save(&model)?;
        container_models.insert(*approach, id);
        container_errors.insert(*approach, error);
    }

    Ok(PipelineRun {
        dataset_tag: cfg.dataset_tag.clone(),
        producer: cfg.producer,
        candidates: candidates.into_iter().map(|c| c.id).collect(),
        isolation,
        container_models,
        container_errors,
    })
}

/// Online continuation: isolation is rerun from scratch on the new batch,
/// then container models resume from the stored checkpoints.
pub fn run_online(
    prev: &PipelineRun,
    frame: &TelemetryFrame,
    cfg: &RunConfig,
    store: &ModelStore,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if cfg.producer != prev.producer {
        return Err(Error::FeatureMismatch(format!(
            "previous run used producer {}, this one {}",
            prev.producer, cfg.producer
        )));
    }
    let method = prev.method();
    let cfg = RunConfig { method, ..cfg.clone() };
    let prepared = prepare_matrices(frame, cfg.producer)?;

    let mut candidates = Vec::new();
    if method == Method::Proposed {
        for approach in prev.container_models.keys() {
            let model = fit(*approach, &prepared.total, &HyperParams::new(cfg.seed))?
                .with_kind(ModelKind::System)
                .with_tag(&cfg.dataset_tag);
            let id = store.save(&model)?;
            candidates.push(SystemCandidate { id, model });
        }
    }
    let isolation = isolate(&prepared, &cfg, &candidates)?;
    let features = container_features(&prepared, method)?;

    let mut container_models = BTreeMap::new();
    let mut container_errors = BTreeMap::new();
    let hyper = HyperParams::new(cfg.seed);
    for (approach, id) in &prev.container_models {
        let checkpoint = store.load(id)?;
        let matrix = features.clone().with_labels(isolation.labels.clone());
        let updated = fit_incremental(&checkpoint, &matrix, &hyper)?.with_tag(&cfg.dataset_tag);
        let error = updated.train_error_mae;
        let new_id = store.save(&updated)?;
        container_models.insert(*approach, new_id);
        container_errors.insert(*approach, error);
    }

    Ok(PipelineRun {
        dataset_tag: cfg.dataset_tag.clone(),
        producer: cfg.producer,
        candidates: candidates.into_iter().map(|c| c.id).collect(),
        isolation,
        container_models,
        container_errors,
    })
}

/// Best stored model for a producer and kind: lowest recorded error, ties
/// broken toward the most recently saved.
pub fn select_best(store: &ModelStore, producer: Producer, kind: ModelKind) -> Result<ModelId> {
    let mut best: Option<(f64, u64, ModelId)> = None;
    for (id, meta) in store.list()? {
        if meta.producer != producer || meta.kind != kind {
            continue;
        }
        let better = match &best {
            None => true,
            Some((err, seq, _)) => {
                meta.train_error_mae < *err || (meta.train_error_mae == *err && meta.sequence > *seq)
            }
        };
        if better {
            best = Some((meta.train_error_mae, meta.sequence, id));
        }
    }
    best.map(|(_, _, id)| id).ok_or(Error::NoModel)
}
