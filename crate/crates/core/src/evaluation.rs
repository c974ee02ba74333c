//! Error metrics, cross-validation matrices, and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::FeatureMatrix;
use crate::isolator::{dynamic_background, mean, IsolationResult, Method};
use crate::regressors::{Approach, PowerModel};
use crate::telemetry::fmt_float;

/// Mean absolute error between two equal-length vectors.
pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = truth.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / truth.len() as f64)
}

/// Error normalized to a percentage of the workload power range.
pub fn pct_err(eps: f64, power: &[f64], p_profile: f64) -> Result<f64> {
    let max = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= p_profile {
        return Err(Error::DegenerateRange);
    }
    Ok(eps / (max - p_profile) * 100.0)
}

/// Everything needed to evaluate one dataset against foreign models.
#[derive(Debug, Clone)]
pub struct DatasetEval {
    pub tag: String,
    /// Workload power labels this dataset's isolation produced.
    pub labels: Vec<f64>,
    /// Target-container usage over the same window.
    pub targets: FeatureMatrix,
    /// Container model trained on this dataset.
    pub model: PowerModel,
    /// Measured node watts over the same window.
    pub power: Vec<f64>,
    pub p_profile: Option<f64>,
}

/// Cross-validation matrix for one (method, approach) pair. Row i is the
/// test dataset, column j the dataset whose model predicts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub method: Method,
    pub approach: Approach,
    pub datasets: Vec<String>,
    pub entries: Vec<Vec<f64>>,
    /// Mean over all k^2 entries.
    pub avg_ce: f64,
    /// Entries normalized per test dataset's power range, when profiles are
    /// known.
    pub pct_entries: Option<Vec<Vec<f64>>>,
}

/// Computes the k x k cross-validation error matrix.
pub fn cross_validate(
    method: Method,
    approach: Approach,
    evals: &[DatasetEval],
) -> Result<CrossMatrix> {
    if evals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = evals.len();
    let mut entries = vec![vec![0.0; k]; k];
    for (i, test) in evals.iter().enumerate() {
        for (j, source) in evals.iter().enumerate() {
            let pred = source
                .model
                .predict_named(&test.targets.feature_names, &test.targets.rows)?;
            entries[i][j] = mae(&test.labels, &pred)?;
        }
    }
    let avg_ce = entries.iter().flatten().sum::<f64>() / (k * k) as f64;

    let pct_entries = if evals.iter().all(|e| e.p_profile.is_some()) {
        let mut pct = vec![vec![0.0; k]; k];
        for (i, test) in evals.iter().enumerate() {
            for j in 0..k {
                pct[i][j] = pct_err(entries[i][j], &test.power, test.p_profile.unwrap())?;
            }
        }
        Some(pct)
    } else {
        None
    };

    Ok(CrossMatrix {
        method,
        approach,
        datasets: evals.iter().map(|e| e.tag.clone()).collect(),
        entries,
        avg_ce,
        pct_entries,
    })
}

/// Share of isolation results whose goodness clears the threshold.
/// Undefined goodness counts as below any threshold.
pub fn goodness_fraction(results: &[IsolationResult], threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = results
        .iter()
        .filter(|r| r.rho.is_some_and(|rho| rho >= threshold))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// One row of the per-dataset power-decomposition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub dataset: String,
    pub p0: f64,
    pub p_profile: f64,
    /// Minimum measured power under load minus the idle power.
    pub delta_p_min: f64,
    /// Mean background power increase induced by the workloads.
    pub delta_p_bg_mean: f64,
}

/// Inputs for one table row.
pub struct Table2Input<'a> {
    pub tag: &'a str,
    pub power: &'a [f64],
    pub p0: Option<f64>,
    pub p_profile: Option<f64>,
    pub model: &'a PowerModel,
    pub targets: &'a FeatureMatrix,
}

pub fn table2_report(inputs: &[Table2Input<'_>]) -> Result<Vec<Table2Row>> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        let p0 = input.p0.ok_or(Error::MissingProfile)?;
        let p_profile = input.p_profile.ok_or(Error::MissingProfile)?;
        let min = input.power.iter().copied().fold(f64::INFINITY, f64::min);
        let bg = dynamic_background(input.power, p_profile, input.model, input.targets)?;
        rows.push(Table2Row {
            dataset: input.tag.to_string(),
            p0,
            p_profile,
            delta_p_min: min - p0,
            delta_p_bg_mean: mean(&bg),
        });
    }
    Ok(rows)
}

/// Full evaluation output: cross matrices per (method, approach), per-method
/// summary errors, the power-decomposition table, and goodness fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub datasets: Vec<String>,
    pub matrices: Vec<CrossMatrix>,
    /// Per method: the lowest avg_ce across its approaches.
    pub avg_ce: BTreeMap<String, f64>,
    pub table2: Vec<Table2Row>,
    pub high_goodness_fraction: BTreeMap<String, f64>,
}

pub fn build_report(
    datasets: Vec<String>,
    matrices: Vec<CrossMatrix>,
    table2: Vec<Table2Row>,
    high_goodness_fraction: BTreeMap<String, f64>,
) -> Result<EvaluationReport> {
    let mut avg_ce: BTreeMap<String, f64> = BTreeMap::new();
    for m in &matrices {
        if m.datasets != datasets {
            return Err(Error::FeatureMismatch(
                "matrix dataset list differs from report datasets".into(),
            ));
        }
        avg_ce
            .entry(m.method.to_string())
            .and_modify(|v| *v = v.min(m.avg_ce))
            .or_insert(m.avg_ce);
    }
    Ok(EvaluationReport { datasets, matrices, avg_ce, table2, high_goodness_fraction })
}

/// CSV for one matrix: header row of dataset tags, one row per test dataset.
pub fn matrix_to_csv(matrix: &CrossMatrix) -> String {
    let mut out = String::from("dataset");
    for tag in &matrix.datasets {
        out.push(',');
        out.push_str(tag);
    }
    out.push('\n');
    for (tag, row) in matrix.datasets.iter().zip(&matrix.entries) {
        out.push_str(tag);
        for v in row {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn table2_to_csv(rows: &[Table2Row]) -> String {
    let mut out = String::from("dataset,p0,p_profile,delta_p_min,delta_p_bg_mean\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.dataset,
            fmt_float(r.p0),
            fmt_float(r.p_profile),
            fmt_float(r.delta_p_min),
            fmt_float(r.delta_p_bg_mean)
        );
    }
    out
}

/// Parses a matrix CSV produced by [`matrix_to_csv`] (labels plus values).
pub fn matrix_from_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let columns: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    if columns.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no dataset columns".into() });
    }
    let mut values = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let _tag = fields.next();
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number {f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != columns.len() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} values, got {}", columns.len(), row.len()),
            });
        }
        values.push(row);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((columns, values))
}

/// Renders a matrix as a self-contained SVG heat map. Output is
/// deterministic for identical inputs.
pub fn heatmap_svg(title: &str, labels: &[String], entries: &[Vec<f64>]) -> String {
    const CELL_W: usize = 74;
    const CELL_H: usize = 30;
    const LEFT: usize = 110;
    const TOP: usize = 58;

    let k = labels.len();
    let width = LEFT + k * CELL_W + 20;
    let height = TOP + k * CELL_H + 20;

    let flat: Vec<f64> = entries.iter().flatten().copied().collect();
    let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"18\" font-size=\"13\">{}</text>",
        xml_escape(title)
    );
    for (j, label) in labels.iter().enumerate() {
        let x = LEFT + j * CELL_W + CELL_W / 2;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            TOP - 8,
            xml_escape(label)
        );
    }
    for (i, row) in entries.iter().enumerate() {
        let y = TOP + i * CELL_H;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            LEFT - 6,
            y + CELL_H / 2 + 4,
            xml_escape(&labels[i])
        );
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + j * CELL_W;
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            // White (low) to deep red (high).
            let g = (235.0 - 175.0 * t) as u8;
            let b = (235.0 - 205.0 * t) as u8;
            let _ = writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                 fill=\"rgb(245,{g},{b})\" stroke=\"#888\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.2}</text>",
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                v
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Atomic write: stage next to the target, then rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let staged = path.with_extension("tmp");
    fs::write(&staged, bytes)?;
    fs::rename(&staged, path)?;
    Ok(())
}

/// Emits every report artifact into a directory: one CSV and SVG per matrix
/// (`cross_<method>_<approach>.{csv,svg}`), `table2.csv`, and `report.json`.
pub fn write_report_files(dir: &Path, report: &EvaluationReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    for matrix in &report.matrices {
        let stem = format!("cross_{}_{}", matrix.method, matrix.approach);
        write_atomic(&dir.join(format!("{stem}.csv")), matrix_to_csv(matrix).as_bytes())?;
        let title = format!("{stem} (avg {:.3} W)", matrix.avg_ce);
        let svg = heatmap_svg(&title, &matrix.datasets, &matrix.entries);
        write_atomic(&dir.join(format!("{stem}.svg")), svg.as_bytes())?;
    }
    write_atomic(&dir.join("table2.csv"), table2_to_csv(&report.table2).as_bytes())?;
    write_atomic(&dir.join("report.json"), &serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::Origin;
    use crate::regressors::{fit, HyperParams};
    use crate::telemetry::Producer;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(mae(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn pct_err_examples() {
        let power = vec![100.0, 150.0, 120.0];
        assert_eq!(pct_err(5.0, &power, 50.0).unwrap(), 5.0);
        assert_eq!(pct_err(0.0, &power, 50.0).unwrap(), 0.0);
        assert!(matches!(pct_err(1.0, &[50.0, 40.0], 50.0), Err(Error::DegenerateRange)));
    }

    fn eval_from(tag: &str, slope: f64) -> DatasetEval {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| slope * r[0] + 1.0).collect();
        let targets = FeatureMatrix {
            producer: Producer::Cgroups,
            origin: Origin::AggregateTargets,
            feature_names: vec!["cpu_usage".into()],
            rows,
            labels: Some(labels.clone()),
            cleaning: None,
        };
        let model = fit(Approach::Linear, &targets, &HyperParams::new(1)).unwrap();
        let power: Vec<f64> = labels.iter().map(|l| l + 40.0).collect();
        DatasetEval { tag: tag.into(), labels, targets, model, power, p_profile: Some(40.0) }
    }

    #[test]
    fn single_dataset_matrix_is_own_error() {
        let e = eval_from("d1", 2.0);
        let m = cross_validate(Method::Proposed, Approach::Linear, &[e]).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert!(m.entries[0][0] < 1e-9);
        assert_eq!(m.avg_ce, m.entries[0][0]);
    }

    #[test]
    fn identical_datasets_give_symmetric_matrix() {
        let evals = vec![eval_from("d1", 2.0), eval_from("d2", 2.0)];
        let m = cross_validate(Method::Proposed, Approach::Linear, &evals).unwrap();
        let flat: Vec<f64> = m.entries.iter().flatten().copied().collect();
        for pair in flat.windows(2) {
            assert!((pair[0] - pair[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn avg_matches_entries() {
        let evals = vec![eval_from("d1", 2.0), eval_from("d2", 3.0)];
        let m = cross_validate(Method::Proposed, Approach::Linear, &evals).unwrap();
        let recomputed = m.entries.iter().flatten().sum::<f64>() / 4.0;
        assert!((m.avg_ce - recomputed).abs() < 1e-12);
    }

    #[test]
    fn goodness_fraction_examples() {
        use crate::isolator::label_none;
        let mut high = label_none(&[1.0, 2.0]);
        high.rho = Some(0.9);
        let mut low = label_none(&[1.0, 2.0]);
        low.rho = Some(0.5);
        assert_eq!(goodness_fraction(&[high.clone(), low], 0.7).unwrap(), 0.5);
        assert_eq!(goodness_fraction(&[high.clone(), high.clone()], 0.7).unwrap(), 1.0);
        let undefined = label_none(&[1.0, 2.0]);
        assert_eq!(goodness_fraction(&[undefined], 0.7).unwrap(), 0.0);
        assert!(matches!(goodness_fraction(&[], 0.7), Err(Error::EmptyInput)));
    }

    #[test]
    fn table2_row_format_fixture() {
        let row = Table2Row {
            dataset: "3.6GHz-BM".into(),
            p0: 40.6,
            p_profile: 42.4,
            delta_p_min: 23.9,
            delta_p_bg_mean: 107.2,
        };
        let csv = table2_to_csv(&[row]);
        assert_eq!(
            csv,
            "dataset,p0,p_profile,delta_p_min,delta_p_bg_mean\n3.6GHz-BM,40.6,42.4,23.9,107.2\n"
        );
    }

    #[test]
    fn idle_power_run_has_zero_delta_p_min() {
        let e = eval_from("d", 2.0);
        let inputs = [Table2Input {
            tag: "d",
            power: &[40.0, 40.0, 40.0],
            p0: Some(40.0),
            p_profile: Some(40.0),
            model: &e.model,
            targets: &FeatureMatrix {
                rows: vec![vec![0.0], vec![0.0], vec![0.0]],
                labels: None,
                ..e.targets.clone()
            },
        }];
        let rows = table2_report(&inputs).unwrap();
        assert_eq!(rows[0].delta_p_min, 0.0);
    }

    #[test]
    fn missing_profile_in_table2_errors() {
        let e = eval_from("d", 2.0);
        let inputs = [Table2Input {
            tag: "d",
            power: &[50.0, 60.0],
            p0: Some(40.0),
            p_profile: None,
            model: &e.model,
            targets: &e.targets,
        }];
        assert!(matches!(table2_report(&inputs), Err(Error::MissingProfile)));
    }

    #[test]
    fn matrix_csv_round_trips() {
        let evals = vec![eval_from("d1", 2.0), eval_from("d2", 3.0)];
        let m = cross_validate(Method::Proposed, Approach::Linear, &evals).unwrap();
        let csv = matrix_to_csv(&m);
        let (cols, values) = matrix_from_csv(&csv).unwrap();
        assert_eq!(cols, m.datasets);
        assert_eq!(values, m.entries);
    }

    #[test]
    fn report_avg_is_min_over_approaches() {
        let evals = vec![eval_from("d1", 2.0)];
        let a = cross_validate(Method::Proposed, Approach::Linear, &evals).unwrap();
        let mut b = cross_validate(Method::Proposed, Approach::Knn, &evals).unwrap();
        b.avg_ce = a.avg_ce + 5.0;
        let report = build_report(
            vec!["d1".into()],
            vec![a.clone(), b],
            vec![],
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(report.avg_ce["proposed"], a.avg_ce);
    }

    #[test]
    fn svg_is_deterministic() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let entries = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let one = heatmap_svg("t", &labels, &entries);
        let two = heatmap_svg("t", &labels, &entries);
        assert_eq!(one, two);
        assert!(one.starts_with("<svg"));
    }
}
