//! Acceptance gate: one test per criterion, each printing a PASS line.
//! Run with `cargo test -p isowatt --test acceptance -- --nocapture`.

mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use isowatt::evaluation::{cross_validate, mae, pct_err, DatasetEval};
use isowatt::extractor::{extract, to_rates, FeatureMatrix, Origin};
use isowatt::isolator::{
    dynamic_background, isolation_goodness, label_heuristic_min, label_profiling, label_proposed,
    pearson, IsolationConfig, Method, SystemCandidate,
};
use isowatt::pipeline::{self, prepare_matrices, RunConfig};
use isowatt::regressors::{fit, fit_incremental, Approach, HyperParams, ModelId, ModelStore};
use isowatt::synthgen::{
    generate, grid_specs, noiseless_power_range, write_dataset, BackgroundSpec, PlatformSpec,
    Surge, SynthSpec, WorkloadPattern, WorkloadSpec,
};
use isowatt::telemetry::{ingest, FileFormat, Producer};

use common::{mae_oracle, mean_oracle, pct_err_oracle, pearson_oracle, selection_oracle};

fn simple_matrix(rows: Vec<Vec<f64>>, labels: Option<Vec<f64>>) -> FeatureMatrix {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    FeatureMatrix {
        producer: Producer::Cgroups,
        origin: Origin::AggregateTargets,
        feature_names: (0..width).map(|i| format!("f{}", i + 1)).collect(),
        rows,
        labels,
        cleaning: None,
    }
}

fn linear_model_through(slope: f64, intercept: f64) -> isowatt::regressors::PowerModel {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 5.0]).collect();
    let labels: Vec<f64> = rows.iter().map(|r| slope * r[0] + intercept).collect();
    fit(Approach::Linear, &simple_matrix(rows, Some(labels)), &HyperParams::new(1)).unwrap()
}

#[test]
fn criterion_1_equation_oracles() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC1);

    for _ in 0..100 {
        let n = rng.random_range(5..60);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..150.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..150.0)).collect();
        let got = pearson(&a, &b).unwrap();
        assert!((got - pearson_oracle(&a, &b)).abs() <= 1e-12, "pearson mismatch");

        let got = mae(&a, &b).unwrap();
        assert!((got - mae_oracle(&a, &b)).abs() <= 1e-12, "mae mismatch");

        let power: Vec<f64> = (0..n).map(|_| rng.random_range(60.0..200.0)).collect();
        let eps = rng.random_range(0.0..30.0);
        let got = pct_err(eps, &power, 40.0).unwrap();
        assert!((got - pct_err_oracle(eps, &power, 40.0)).abs() <= 1e-12, "pct_err mismatch");
    }

    // Cross-validation error over randomized dataset/model collections.
    for round in 0..100 {
        let k = 2 + (round % 3);
        let mut evals = Vec::new();
        for i in 0..k {
            let n = rng.random_range(10..30);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..100.0)]).collect();
            let labels: Vec<f64> =
                rows.iter().map(|r| rng.random_range(0.9..1.1) * r[0] + 20.0).collect();
            let power: Vec<f64> = labels.iter().map(|l| l + 50.0).collect();
            let model = linear_model_through(rng.random_range(0.5..2.0), rng.random_range(0.0..30.0));
            evals.push(DatasetEval {
                tag: format!("d{i}"),
                labels,
                targets: simple_matrix(rows, None),
                model,
                power,
                p_profile: Some(40.0),
            });
        }
        let matrix = cross_validate(Method::Proposed, Approach::Linear, &evals).unwrap();
        for (i, test) in evals.iter().enumerate() {
            for (j, source) in evals.iter().enumerate() {
                let pred = source
                    .model
                    .predict_named(&test.targets.feature_names, &test.targets.rows)
                    .unwrap();
                let expected = mae_oracle(&test.labels, &pred);
                assert!(
                    (matrix.entries[i][j] - expected).abs() <= 1e-12,
                    "cross entry ({i},{j}) mismatch"
                );
            }
        }
        let expected_avg = common::avg_ce_oracle(&matrix.entries);
        assert!((matrix.avg_ce - expected_avg).abs() <= 1e-12, "avg ce mismatch");
    }

    println!("acceptance 1 (equation oracles match brute force to 1e-12): PASS");
}

#[test]
fn criterion_2_selection_replay() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xC2);
    let cfg = IsolationConfig::default();
    let mut replayed = 0;

    while replayed < 50 {
        let n = 40;
        // Target usage v and background usage w; power mixes both.
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let alpha = rng.random_range(0.5..2.0);
        let beta = rng.random_range(0.5..2.0);
        let power: Vec<f64> =
            v.iter().zip(&w).map(|(a, b)| 300.0 + alpha * a + beta * b).collect();

        let targets = simple_matrix(v.iter().map(|x| vec![*x]).collect(), None);
        let total = simple_matrix(v.iter().zip(&w).map(|(a, b)| vec![a + b]).collect(), None);

        let n_candidates = rng.random_range(2..6);
        let mut candidates = Vec::new();
        for i in 0..n_candidates {
            // Background predictors of varying fidelity: slopes near beta
            // isolate well, slopes far off produce low goodness.
            let slope = beta + rng.random_range(-2.0..2.0);
            let mut model = linear_model_through(slope, rng.random_range(250.0..350.0));
            model.train_error_mae = rng.random_range(0.1..20.0);
            candidates.push(SystemCandidate { id: ModelId(format!("c{i}")), model });
        }

        // Oracle view: per candidate, labels and their goodness computed
        // without the library's scoring path.
        let complement: Vec<Vec<f64>> = w.iter().map(|x| vec![*x]).collect();
        let mut pairs = Vec::new();
        for c in &candidates {
            let bg = c.model.predict(&complement).unwrap();
            let raw: Vec<f64> = power.iter().zip(&bg).map(|(p, b)| p - b).collect();
            pairs.push((pearson_oracle(&v, &raw), c.model.train_error_mae));
        }
        let distinct = pairs.iter().enumerate().all(|(i, (r1, e1))| {
            pairs
                .iter()
                .enumerate()
                .all(|(j, (r2, e2))| i == j || ((r1 - r2).abs() > 1e-6 && (e1 - e2).abs() > 1e-6))
        });
        if !distinct {
            continue;
        }

        let result = label_proposed(&total, &targets, &power, &candidates, &cfg).unwrap();
        let expected = selection_oracle(&pairs, cfg.rho_threshold).unwrap();
        assert_eq!(
            result.chosen_candidate.as_ref().unwrap(),
            &candidates[expected].id,
            "selection deviates from replay for pairs {pairs:?}"
        );
        replayed += 1;
    }

    println!("acceptance 2 (candidate selection matches replay on 50 randomized sets): PASS");
}

#[test]
fn criterion_3_isolation_recovery_on_grid() {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();

    let mut proposed = Vec::new();
    let mut heuristic = Vec::new();
    for (tag, spec) in grid_specs(42) {
        let (frame, truth) = generate(&spec).unwrap();
        let cfg = RunConfig::new(Producer::Cgroups, tag.clone());
        let run = pipeline::run(&frame, &cfg, &store).unwrap();
        assert_eq!(run.isolation.labels.len(), truth.workload_watts.len());
        let corr = pearson_oracle(&run.isolation.labels, &truth.workload_watts);
        assert!(corr >= 0.9, "dataset {tag}: proposed correlation {corr} < 0.9");
        proposed.push(corr);

        let prepared = prepare_matrices(&frame, Producer::Cgroups).unwrap();
        let h = label_heuristic_min(&prepared.total, &prepared.power);
        heuristic.push(pearson_oracle(&h.labels, &truth.workload_watts));
    }
    let mean_proposed = mean_oracle(&proposed);
    let mean_heuristic = mean_oracle(&heuristic);
    assert!(
        mean_heuristic < mean_proposed,
        "heuristic mean correlation {mean_heuristic} not below proposed {mean_proposed}"
    );

    println!(
        "acceptance 3 (grid isolation recovery: proposed >= 0.9 everywhere, \
         mean {mean_proposed:.4} vs heuristic {mean_heuristic:.4}): PASS"
    );
}

#[test]
fn criterion_4_cross_validation_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let datasets: Vec<_> = grid_specs(42)
        .into_iter()
        .map(|(tag, spec)| {
            let (frame, truth) = generate(&spec).unwrap();
            (tag, frame, truth)
        })
        .collect();

    let mut avg = BTreeMap::new();
    for method in [Method::Proposed, Method::Profiling, Method::None] {
        let mut evals = Vec::new();
        for (tag, frame, truth) in &datasets {
            let mut cfg = RunConfig::new(Producer::Cgroups, tag.clone());
            cfg.method = method;
            cfg.isolation.profile_background_watts = Some(truth.p_profile);
            let run = pipeline::run(frame, &cfg, &store).unwrap();
            let prepared = prepare_matrices(frame, Producer::Cgroups).unwrap();
            let model = store.load(&run.container_models[&Approach::Linear]).unwrap();
            evals.push(DatasetEval {
                tag: tag.clone(),
                labels: run.isolation.labels.clone(),
                targets: prepared.targets.unwrap(),
                model,
                power: prepared.power,
                p_profile: Some(truth.p_profile),
            });
        }
        let matrix = cross_validate(method, Approach::Linear, &evals).unwrap();
        avg.insert(method, matrix.avg_ce);
    }

    let (p, pf, none) = (avg[&Method::Proposed], avg[&Method::Profiling], avg[&Method::None]);
    assert!(p < pf, "proposed avg {p} not below profiling avg {pf}");
    assert!(pf < none, "profiling avg {pf} not below no-isolation avg {none}");
    assert!(p <= 0.8 * pf, "proposed avg {p} exceeds 0.8 * profiling avg {pf}");

    println!(
        "acceptance 4 (cross-validation ordering {p:.3} < {pf:.3} < {none:.3}, \
         ratio {:.3} <= 0.8): PASS",
        p / pf
    );
}

fn surge_scenario(seed: u64) -> SynthSpec {
    let duration = 600;
    let idle = 40.0;
    let base_usage = 20.0;
    let watts_per_usage = 0.6;
    let mut spec = SynthSpec {
        seed,
        duration,
        idle_watts: idle,
        profile_background_watts: idle + base_usage * watts_per_usage,
        platform: PlatformSpec { governor_gain: 1.0, noise_stddev: 0.0, saturation: None },
        workloads: vec![WorkloadSpec {
            container: "wl-1".into(),
            pattern: WorkloadPattern::Square,
            peak_usage: 100.0,
            watts_per_usage,
        }],
        background: BackgroundSpec {
            container: "bg-0".into(),
            base_usage,
            surges: vec![Surge { start: 200, end: 400, extra_usage: 35.0 }],
        },
    };
    spec.platform.noise_stddev = 0.02 * noiseless_power_range(&spec);
    spec
}

#[test]
fn criterion_5_background_surge_recovery() {
    let spec = surge_scenario(42);
    let (frame, truth) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let cfg = RunConfig::new(Producer::Cgroups, "surge");
    let run = pipeline::run(&frame, &cfg, &store).unwrap();
    let prepared = prepare_matrices(&frame, Producer::Cgroups).unwrap();
    let targets = prepared.targets.unwrap();

    // Mean background increase recovered through the container model.
    let model = store.load(&run.container_models[&Approach::Linear]).unwrap();
    let bg = dynamic_background(&prepared.power, truth.p_profile, &model, &targets).unwrap();
    let base_bg = truth.p_profile - truth.p0;
    let injected: Vec<f64> = truth.background_watts.iter().map(|b| b - base_bg).collect();
    let injected_mean = mean_oracle(&injected);
    let recovered_mean = mean_oracle(&bg);
    assert!(
        (recovered_mean - injected_mean).abs() <= 0.15 * injected_mean,
        "recovered surge mean {recovered_mean} vs injected {injected_mean}"
    );

    // Labels inside the surge window stay level for the isolator and
    // inflate for the static-profile baseline.
    let surge_range = 200..400;
    let split = |labels: &[f64]| {
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (t, v) in labels.iter().enumerate() {
            if surge_range.contains(&t) {
                inside.push(*v);
            } else {
                outside.push(*v);
            }
        }
        (mean_oracle(&inside), mean_oracle(&outside))
    };

    let (inside, outside) = split(&run.isolation.labels);
    assert!(
        (inside / outside - 1.0).abs() <= 0.10,
        "proposed labels drift during surge: {inside} vs {outside}"
    );

    let profiling_cfg = IsolationConfig {
        profile_background_watts: Some(truth.p_profile),
        ..IsolationConfig::default()
    };
    let profiling = label_profiling(&targets, &prepared.power, &profiling_cfg).unwrap();
    let (p_inside, p_outside) = split(&profiling.labels);
    assert!(
        p_inside / p_outside >= 1.5,
        "profiling labels insufficiently inflated: {p_inside} vs {p_outside}"
    );

    println!(
        "acceptance 5 (surge recovery {recovered_mean:.2} W vs injected {injected_mean:.2} W, \
         label drift {:.1}% vs profiling inflation {:.0}%): PASS",
        (inside / outside - 1.0).abs() * 100.0,
        (p_inside / p_outside - 1.0) * 100.0
    );
}

#[test]
fn criterion_6_regressor_correctness() {
    // Noiseless linear recovery.
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.25]).collect();
    let labels: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 7.0).collect();
    let m = simple_matrix(rows.clone(), Some(labels.clone()));
    let model = fit(Approach::Linear, &m, &HyperParams::new(1)).unwrap();
    let (coeffs, intercept) = model.linear_coefficients().unwrap();
    assert!((coeffs[0] - 3.0).abs() <= 1e-9 && (intercept - 7.0).abs() <= 1e-9);
    assert!(model.train_error_mae <= 1e-9);

    // kNN training identity at k = 1.
    let knn = fit(Approach::Knn, &m, &HyperParams::new(1).with("k", 1.0)).unwrap();
    assert_eq!(knn.predict(&rows).unwrap(), labels);

    // Incremental linear equals the batch fit.
    let rows_b: Vec<Vec<f64>> = (30..50).map(|i| vec![i as f64 * 0.25]).collect();
    let labels_b: Vec<f64> = rows_b.iter().map(|r| 3.0 * r[0] + 7.0).collect();
    let updated = fit_incremental(
        &model,
        &simple_matrix(rows_b.clone(), Some(labels_b.clone())),
        &HyperParams::new(1),
    )
    .unwrap();
    let mut union_rows = rows.clone();
    union_rows.extend(rows_b);
    let mut union_labels = labels.clone();
    union_labels.extend(labels_b);
    let batch = fit(
        Approach::Linear,
        &simple_matrix(union_rows, Some(union_labels)),
        &HyperParams::new(1),
    )
    .unwrap();
    let (ci, ii) = updated.linear_coefficients().unwrap();
    let (cb, ib) = batch.linear_coefficients().unwrap();
    assert!((ci[0] - cb[0]).abs() <= 1e-9 && (ii - ib).abs() <= 1e-9);

    // Archive round trip reproduces predictions bit for bit.
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::open(dir.path()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0xC6);
    for approach in Approach::ALL {
        let trained = fit(approach, &m, &HyperParams::new(9)).unwrap();
        let id = store.save(&trained).unwrap();
        let restored = store.load(&id).unwrap();
        let queries: Vec<Vec<f64>> =
            (0..100).map(|_| vec![rng.random_range(-5.0..20.0)]).collect();
        let a = trained.predict(&queries).unwrap();
        let b = restored.predict(&queries).unwrap();
        let max_diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(max_diff, 0.0, "{approach}: round trip changed predictions");
    }

    // Fixed seed gives bit-identical archives across two runs.
    let (tag, spec) = grid_specs(42).remove(0);
    let (frame, _) = generate(&spec).unwrap();
    let mut checksum_sets = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let store = ModelStore::open(dir.path()).unwrap();
        let mut cfg = RunConfig::new(Producer::Cgroups, tag.clone());
        cfg.approaches = vec![Approach::Linear, Approach::Knn, Approach::GbrStumps, Approach::SgdLinear];
        pipeline::run(&frame, &cfg, &store).unwrap();
        let checksums: Vec<(ModelId, String)> = store
            .list()
            .unwrap()
            .into_iter()
            .map(|(id, meta)| (id, meta.checksum))
            .collect();
        checksum_sets.push(checksums);
    }
    assert_eq!(checksum_sets[0], checksum_sets[1], "archives differ across identical runs");

    println!("acceptance 6 (regressor correctness and archive determinism): PASS");
}

#[test]
fn criterion_7_partition_identity() {
    let producers = [Producer::Cgroups, Producer::Bpf];
    let check = |frame: &isowatt::telemetry::TelemetryFrame, label: &str| {
        let (rates, _) = to_rates(frame).unwrap();
        for producer in producers {
            let all = extract(&rates, producer, &Origin::AggregateAll).unwrap();
            let targets = extract(&rates, producer, &Origin::AggregateTargets).unwrap();
            let complement = extract(&rates, producer, &Origin::BackgroundComplement).unwrap();
            for i in 0..all.n() {
                for j in 0..all.width() {
                    let sum = targets.rows[i][j] + complement.rows[i][j];
                    assert_eq!(
                        all.rows[i][j].to_bits(),
                        sum.to_bits(),
                        "{label}/{producer}: partition broken at ({i},{j})"
                    );
                }
            }
        }
    };

    // Synthetic frames straight from the generator.
    for (tag, spec) in grid_specs(42).into_iter().take(3) {
        let (frame, _) = generate(&spec).unwrap();
        check(&frame, &tag);
    }

    // The same data after a disk round trip through ingest.
    let (tag, spec) = grid_specs(42).remove(4);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&spec, dir.path()).unwrap();
    let frame = ingest(&dir.path().join("telemetry.csv"), FileFormat::Csv).unwrap();
    let truth = isowatt::synthgen::read_ground_truth(dir.path()).unwrap().unwrap();
    let frame = frame.mark_background(&truth.background_ids).unwrap();
    check(&frame, &format!("{tag} (ingested)"));

    println!("acceptance 7 (aggregate equals targets plus complement, bit-exact): PASS");
}

#[test]
fn goodness_example_matches_hand_computation() {
    // Signed maximum: anti-correlated feature must not win.
    let x = simple_matrix(
        vec![vec![1.0, 1.0], vec![2.0, 3.0], vec![3.0, 2.0], vec![4.0, 4.0]],
        None,
    );
    let labels = [8.0, 6.0, 4.0, 2.0];
    assert_eq!(pearson_oracle(&x.column(0), &labels), -1.0);
    let f2_corr = pearson_oracle(&x.column(1), &labels);
    let (rho, feature) = isolation_goodness(&x, &labels).unwrap();
    assert!((rho - f2_corr).abs() <= 1e-12);
    assert_eq!(feature, "f2");
}
