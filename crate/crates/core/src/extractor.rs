//! Turns raw cumulative telemetry into per-second feature matrices grouped
//! by metric producer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{Producer, SeriesUnit, TelemetryFrame, NODE_ENTITY};

/// Which containers a matrix aggregates over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Origin {
    /// Sum over every container (the system-level view).
    AggregateAll,
    /// Sum over non-background containers.
    AggregateTargets,
    /// Sum over background containers, i.e. the total minus the targets.
    BackgroundComplement,
    /// A single container.
    PerContainer(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::AggregateAll => f.write_str("aggregate_all"),
            Origin::AggregateTargets => f.write_str("aggregate_targets"),
            Origin::BackgroundComplement => f.write_str("background_complement"),
            Origin::PerContainer(id) => write!(f, "per_container({id})"),
        }
    }
}

/// What `clean` removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningSummary {
    pub dropped_rows: usize,
    pub dropped_features: Vec<String>,
}

/// Usage features for one producer group, one row per second, optionally
/// labeled with watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub producer: Producer,
    pub origin: Origin,
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<f64>>,
    #[serde(default)]
    pub cleaning: Option<CleaningSummary>,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn labels_or_err(&self) -> Result<&[f64]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Debug CSV: features plus an optional `watts` label column. Not a
    /// stability-guaranteed format.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.feature_names {
            out.push_str(name);
            out.push(',');
        }
        if self.labels.is_some() {
            out.push_str("watts");
        } else {
            out.pop();
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let mut fields: Vec<String> =
                row.iter().map(|v| crate::telemetry::fmt_float(*v)).collect();
            if let Some(labels) = &self.labels {
                fields.push(crate::telemetry::fmt_float(labels[i]));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Per-series counter reset counts from rate conversion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub resets: BTreeMap<String, u64>,
    pub total_resets: u64,
}

/// Converts cumulative counters (and joules) to per-second rates (watts).
///
/// Output length is n-1. A negative difference is a counter reset: the rate
/// is clamped to 0 and counted in the report, keeping rows aligned across
/// entities.
pub fn to_rates(frame: &TelemetryFrame) -> Result<(TelemetryFrame, RateReport)> {
    let interval = frame.interval() as f64;
    let mut report = RateReport::default();
    let mut series = BTreeMap::new();
    for (key, values) in frame.series() {
        let mut rates = Vec::with_capacity(values.len() - 1);
        let mut resets = 0u64;
        for pair in values.windows(2) {
            let diff = (pair[1] - pair[0]) / interval;
            if diff < 0.0 {
                resets += 1;
                rates.push(0.0);
            } else {
                rates.push(diff);
            }
        }
        if resets > 0 {
            report.resets.insert(key.to_string(), resets);
            report.total_resets += resets;
        }
        series.insert(key.clone(), rates);
    }
    let frame = frame.replace_series(SeriesUnit::Rates, series)?;
    Ok((frame, report))
}

/// Extracts the feature matrix for one producer group and origin, labeled
/// with node watts.
///
/// The total is computed as target-sum plus background-sum, so
/// `aggregate_all == aggregate_targets + background_complement` holds exactly
/// per entry, not just up to rounding.
pub fn extract(frame: &TelemetryFrame, producer: Producer, origin: &Origin) -> Result<FeatureMatrix> {
    if frame.unit() != SeriesUnit::Rates {
        return Err(Error::NotRates);
    }
    let n = frame.n();

    let feature_names: Vec<String> = {
        let mut names: Vec<String> = frame
            .series()
            .keys()
            .filter(|k| k.entity != NODE_ENTITY && k.producer == producer)
            .map(|k| k.metric.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    };
    if feature_names.is_empty() {
        return Err(Error::ProducerAbsent(producer));
    }

    if let Origin::PerContainer(id) = origin {
        if !frame.containers().contains(id) {
            return Err(Error::UnknownContainer(id.clone()));
        }
    }
    let targets = frame.target_ids();
    if matches!(origin, Origin::AggregateTargets) && targets.is_empty() {
        return Err(Error::EmptyTargetSet);
    }

    // Missing (container, metric) series contribute zero.
    let sum_over = |ids: &dyn Fn(&str) -> bool, j: &str| -> Vec<f64> {
        let mut acc = vec![0.0; n];
        for (key, values) in frame.series() {
            if key.producer == producer && key.metric == j && key.entity != NODE_ENTITY && ids(&key.entity) {
                for (a, v) in acc.iter_mut().zip(values) {
                    *a += v;
                }
            }
        }
        acc
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(feature_names.len());
    for name in &feature_names {
        let col = match origin {
            Origin::PerContainer(id) => sum_over(&|e: &str| e == id, name),
            Origin::AggregateTargets => sum_over(&|e: &str| targets.contains(e), name),
            Origin::BackgroundComplement => {
                sum_over(&|e: &str| frame.background_ids().contains(e), name)
            }
            Origin::AggregateAll => {
                let target_col = sum_over(&|e: &str| targets.contains(e), name);
                let background_col = sum_over(&|e: &str| frame.background_ids().contains(e), name);
                target_col.iter().zip(&background_col).map(|(a, b)| a + b).collect()
            }
        };
        columns.push(col);
    }

    let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let labels = node_watts(frame);

    Ok(FeatureMatrix {
        producer,
        origin: origin.clone(),
        feature_names,
        rows,
        labels: Some(labels),
        cleaning: None,
    })
}

/// Node power in watts (sum over node power series, e.g. RAPL domains).
pub fn node_watts(frame: &TelemetryFrame) -> Vec<f64> {
    let mut watts = vec![0.0; frame.n()];
    for (key, values) in frame.series() {
        if key.entity == NODE_ENTITY && key.producer == Producer::Power {
            for (w, v) in watts.iter_mut().zip(values) {
                *w += v;
            }
        }
    }
    watts
}

/// Row/column retention mask computed by `clean`, reusable so that aligned
/// matrices (total, targets, complement) stay aligned after cleaning.
#[derive(Debug, Clone)]
pub struct CleanMask {
    pub keep_rows: Vec<bool>,
    pub keep_cols: Vec<bool>,
}

pub fn cleaning_mask(m: &FeatureMatrix) -> CleanMask {
    let keep_rows: Vec<bool> = (0..m.n())
        .map(|i| {
            let row_ok = m.rows[i].iter().all(|v| v.is_finite() && *v >= 0.0);
            let label_ok = m.labels.as_ref().is_none_or(|l| l[i].is_finite());
            row_ok && label_ok
        })
        .collect();
    let keep_cols: Vec<bool> = (0..m.width())
        .map(|j| {
            m.rows
                .iter()
                .zip(&keep_rows)
                .filter(|(_, keep)| **keep)
                .any(|(row, _)| row[j] != 0.0)
        })
        .collect();
    CleanMask { keep_rows, keep_cols }
}

pub fn apply_mask(m: &FeatureMatrix, mask: &CleanMask) -> Result<FeatureMatrix> {
    let rows: Vec<Vec<f64>> = m
        .rows
        .iter()
        .zip(&mask.keep_rows)
        .filter(|(_, keep)| **keep)
        .map(|(row, _)| {
            row.iter()
                .zip(&mask.keep_cols)
                .filter(|(_, keep)| **keep)
                .map(|(v, _)| *v)
                .collect()
        })
        .collect();
    let feature_names: Vec<String> = m
        .feature_names
        .iter()
        .zip(&mask.keep_cols)
        .filter(|(_, keep)| **keep)
        .map(|(n, _)| n.clone())
        .collect();
    let dropped_features: Vec<String> = m
        .feature_names
        .iter()
        .zip(&mask.keep_cols)
        .filter(|(_, keep)| !**keep)
        .map(|(n, _)| n.clone())
        .collect();
    let labels = m.labels.as_ref().map(|l| {
        l.iter()
            .zip(&mask.keep_rows)
            .filter(|(_, keep)| **keep)
            .map(|(v, _)| *v)
            .collect::<Vec<f64>>()
    });

    if feature_names.is_empty() {
        return Err(Error::DegenerateMatrix("no feature columns remain".into()));
    }
    if rows.len() < 2 {
        return Err(Error::DegenerateMatrix(format!("{} row(s) remain", rows.len())));
    }

    let dropped_rows = m.n() - rows.len();
    Ok(FeatureMatrix {
        producer: m.producer,
        origin: m.origin.clone(),
        feature_names,
        rows,
        labels,
        cleaning: Some(CleaningSummary { dropped_rows, dropped_features }),
    })
}

/// Drops rows containing invalid entries and all-zero feature columns;
/// constant non-zero columns are retained.
pub fn clean(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    apply_mask(m, &cleaning_mask(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{MetricSample, SeriesKey, TelemetryFrame};

    fn frame_from(samples: Vec<(i64, &str, Producer, &str, f64)>) -> TelemetryFrame {
        let samples: Vec<MetricSample> = samples
            .into_iter()
            .map(|(t, e, p, m, v)| MetricSample {
                timestamp: t,
                entity: e.into(),
                producer: p,
                metric: m.into(),
                value: v,
            })
            .collect();
        TelemetryFrame::from_samples(&samples).unwrap()
    }

    fn two_container_rate_frame() -> TelemetryFrame {
        // c1 cpu rates [1,2]; c2 cpu rates [3,4]; watts [10,20]
        let frame = frame_from(vec![
            (0, "c1", Producer::Cgroups, "cpu_time", 0.0),
            (1, "c1", Producer::Cgroups, "cpu_time", 1.0),
            (2, "c1", Producer::Cgroups, "cpu_time", 3.0),
            (0, "c2", Producer::Cgroups, "cpu_time", 0.0),
            (1, "c2", Producer::Cgroups, "cpu_time", 3.0),
            (2, "c2", Producer::Cgroups, "cpu_time", 7.0),
            (0, "node", Producer::Power, "energy_joules", 0.0),
            (1, "node", Producer::Power, "energy_joules", 10.0),
            (2, "node", Producer::Power, "energy_joules", 30.0),
        ]);
        to_rates(&frame).unwrap().0
    }

    #[test]
    fn rates_are_successive_differences() {
        let frame = frame_from(vec![
            (0, "c1", Producer::Cgroups, "cpu_time", 10.0),
            (1, "c1", Producer::Cgroups, "cpu_time", 25.0),
            (2, "c1", Producer::Cgroups, "cpu_time", 45.0),
            (0, "node", Producer::Power, "energy_joules", 0.0),
            (1, "node", Producer::Power, "energy_joules", 30.0),
            (2, "node", Producer::Power, "energy_joules", 90.0),
        ]);
        let (rates, report) = to_rates(&frame).unwrap();
        let cpu = rates.get(&SeriesKey::new("c1", Producer::Cgroups, "cpu_time")).unwrap();
        assert_eq!(cpu, [15.0, 20.0]);
        let watts = rates.get(&SeriesKey::new("node", Producer::Power, "energy_joules")).unwrap();
        assert_eq!(watts, [30.0, 60.0]);
        assert_eq!(report.total_resets, 0);
        assert_eq!(rates.n(), frame.n() - 1);
    }

    #[test]
    fn counter_reset_clamps_to_zero() {
        let frame = frame_from(vec![
            (0, "c1", Producer::Cgroups, "cpu_time", 10.0),
            (1, "c1", Producer::Cgroups, "cpu_time", 5.0),
            (2, "c1", Producer::Cgroups, "cpu_time", 8.0),
            (0, "node", Producer::Power, "energy_joules", 0.0),
            (1, "node", Producer::Power, "energy_joules", 1.0),
            (2, "node", Producer::Power, "energy_joules", 2.0),
        ]);
        let (rates, report) = to_rates(&frame).unwrap();
        let cpu = rates.get(&SeriesKey::new("c1", Producer::Cgroups, "cpu_time")).unwrap();
        assert_eq!(cpu, [0.0, 3.0]);
        assert_eq!(report.total_resets, 1);
        assert_eq!(report.resets["c1/cgroups/cpu_time"], 1);
    }

    #[test]
    fn aggregate_all_sums_containers() {
        let frame = two_container_rate_frame();
        let m = extract(&frame, Producer::Cgroups, &Origin::AggregateAll).unwrap();
        assert_eq!(m.rows, vec![vec![4.0], vec![6.0]]);
        assert_eq!(m.labels.as_deref(), Some(&[10.0, 20.0][..]));
    }

    #[test]
    fn targets_and_complement_partition_the_total() {
        let frame = two_container_rate_frame().mark_background(&["c2"]).unwrap();
        let targets = extract(&frame, Producer::Cgroups, &Origin::AggregateTargets).unwrap();
        let complement = extract(&frame, Producer::Cgroups, &Origin::BackgroundComplement).unwrap();
        assert_eq!(targets.rows, vec![vec![1.0], vec![2.0]]);
        assert_eq!(complement.rows, vec![vec![3.0], vec![4.0]]);
    }

    #[test]
    fn absent_producer_is_an_error() {
        let frame = two_container_rate_frame();
        assert!(matches!(
            extract(&frame, Producer::Hwcounter, &Origin::AggregateAll),
            Err(Error::ProducerAbsent(Producer::Hwcounter))
        ));
    }

    #[test]
    fn all_background_targets_error() {
        let frame = two_container_rate_frame().mark_background(&["c1", "c2"]).unwrap();
        assert!(matches!(
            extract(&frame, Producer::Cgroups, &Origin::AggregateTargets),
            Err(Error::EmptyTargetSet)
        ));
    }

    #[test]
    fn per_container_selects_one() {
        let frame = two_container_rate_frame();
        let m = extract(&frame, Producer::Cgroups, &Origin::PerContainer("c2".into())).unwrap();
        assert_eq!(m.rows, vec![vec![3.0], vec![4.0]]);
        assert!(matches!(
            extract(&frame, Producer::Cgroups, &Origin::PerContainer("c9".into())),
            Err(Error::UnknownContainer(_))
        ));
    }

    #[test]
    fn raw_frame_is_rejected() {
        let frame = frame_from(vec![
            (0, "c1", Producer::Cgroups, "cpu_time", 0.0),
            (1, "c1", Producer::Cgroups, "cpu_time", 1.0),
            (0, "node", Producer::Power, "energy_joules", 0.0),
            (1, "node", Producer::Power, "energy_joules", 1.0),
        ]);
        assert!(matches!(
            extract(&frame, Producer::Cgroups, &Origin::AggregateAll),
            Err(Error::NotRates)
        ));
    }

    fn matrix(rows: Vec<Vec<f64>>, names: &[&str]) -> FeatureMatrix {
        let n = rows.len();
        FeatureMatrix {
            producer: Producer::Cgroups,
            origin: Origin::AggregateAll,
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            rows,
            labels: Some(vec![1.0; n]),
            cleaning: None,
        }
    }

    #[test]
    fn clean_drops_nan_rows() {
        let mut rows = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]];
        rows[2][0] = f64::NAN;
        let cleaned = clean(&matrix(rows, &["f1"])).unwrap();
        assert_eq!(cleaned.n(), 4);
        assert_eq!(cleaned.cleaning.as_ref().unwrap().dropped_rows, 1);
    }

    #[test]
    fn clean_drops_all_zero_columns_keeps_constant() {
        let rows = vec![vec![0.0, 5.0, 1.0], vec![0.0, 5.0, 2.0], vec![0.0, 5.0, 3.0]];
        let cleaned = clean(&matrix(rows, &["z", "c", "f"])).unwrap();
        assert_eq!(cleaned.feature_names, ["c", "f"]);
        assert_eq!(cleaned.cleaning.as_ref().unwrap().dropped_features, ["z"]);
    }

    #[test]
    fn clean_degenerate_results_error() {
        let mut rows = vec![vec![1.0], vec![2.0]];
        rows[0][0] = f64::NAN;
        assert!(matches!(clean(&matrix(rows, &["f1"])), Err(Error::DegenerateMatrix(_))));

        let zero = vec![vec![0.0], vec![0.0], vec![0.0]];
        assert!(matches!(clean(&matrix(zero, &["f1"])), Err(Error::DegenerateMatrix(_))));
    }

    #[test]
    fn rates_sum_telescopes_without_resets() {
        let frame = frame_from(vec![
            (0, "c1", Producer::Cgroups, "cpu_time", 2.0),
            (1, "c1", Producer::Cgroups, "cpu_time", 9.5),
            (2, "c1", Producer::Cgroups, "cpu_time", 11.25),
            (3, "c1", Producer::Cgroups, "cpu_time", 40.0),
            (0, "node", Producer::Power, "energy_joules", 0.0),
            (1, "node", Producer::Power, "energy_joules", 1.0),
            (2, "node", Producer::Power, "energy_joules", 2.0),
            (3, "node", Producer::Power, "energy_joules", 3.0),
        ]);
        let (rates, _) = to_rates(&frame).unwrap();
        let cpu = rates.get(&SeriesKey::new("c1", Producer::Cgroups, "cpu_time")).unwrap();
        let sum: f64 = cpu.iter().sum();
        assert!((sum - (40.0 - 2.0)).abs() < 1e-9);
    }
}
