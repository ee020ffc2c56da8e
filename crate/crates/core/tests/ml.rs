//! Classifier, reducer and evaluation checks against independent oracles.

use std::collections::BTreeMap;

use gaitway_core::ml::*;
use gaitway_core::model::RecordingSession;
use gaitway_core::protocol::SessionState;
use gaitway_core::sim::{preset, synthesize, PresetKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>, subjects: Vec<String>) -> Dataset {
    Dataset {
        group_ids: subjects.clone(),
        x,
        y,
        subject_ids: subjects,
        representation: Representation::ClinicalFeatures,
        class_names: vec!["a".into(), "b".into()],
    }
}

/// Two 2-D Gaussian blobs, `n` points each, one subject per point.
fn blobs(n: usize, sep: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * n {
        let c = i % 2;
        let off = if c == 0 { -sep / 2.0 } else { sep / 2.0 };
        x.push(vec![off + g.sample(&mut rng), off + g.sample(&mut rng)]);
        y.push(c);
    }
    let subjects = (0..2 * n).map(|i| format!("s{i:03}")).collect();
    dataset(x, y, subjects)
}

fn acc(model: &TrainedModel, ds: &Dataset) -> f64 {
    let ok = ds.x.iter().zip(&ds.y).filter(|(r, &t)| predict(model, r).unwrap().class == t).count();
    ok as f64 / ds.n_rows() as f64
}

fn finalized(id: &str, participant: &str, kind: PresetKind, seed: u64, dur: f64) -> RecordingSession {
    let (track, _) = synthesize(&preset(kind, seed), dur, 50.0).unwrap();
    let mut s = RecordingSession::new(id, "proj", participant, 50.0);
    s.track = track;
    s.state = SessionState::Finalized;
    s
}

fn cohort(n_per_class: usize, dur: f64) -> (Vec<RecordingSession>, BTreeMap<String, String>, Vec<String>) {
    let mut sessions = Vec::new();
    let mut labels = BTreeMap::new();
    for i in 0..n_per_class {
        for (kind, label) in [(PresetKind::TypicalChild, "typical"), (PresetKind::ImpairedGait, "impaired")] {
            let p = format!("{label}-{i:02}");
            sessions.push(finalized(&format!("sess-{p}"), &p, kind, 1000 + i as u64, dur));
            labels.insert(p, label.to_string());
        }
    }
    (sessions, labels, vec!["typical".into(), "impaired".into()])
}

#[test]
fn clinical_dataset_one_row_per_session() {
    let (sessions, labels, classes) = cohort(10, 60.0);
    let ds = build_dataset(&sessions, &labels, &classes, Representation::ClinicalFeatures, &DatasetOptions::default()).unwrap();
    assert_eq!((ds.n_rows(), ds.n_features()), (20, 8));
    // Recount from the label map.
    let mut want = vec![0; 2];
    for s in &sessions {
        want[classes.iter().position(|c| *c == labels[&s.participant_id]).unwrap()] += 1;
    }
    assert_eq!(ds.class_counts(), want);
}

#[test]
fn raw_windows_count_and_mean_removed() {
    let s = finalized("s1", "p1", PresetKind::TypicalChild, 1, 360.0);
    let labels = BTreeMap::from([("p1".to_string(), "typical".to_string())]);
    let opts = DatasetOptions {
        window_s: Some(5.0),
        stride_s: Some(5.0),
        ..Default::default()
    };
    let classes = vec!["typical".to_string(), "impaired".to_string()];
    // Listed classes without examples are dropped.
    let one = build_dataset(&[s.clone()], &labels, &classes, Representation::RawWindows, &opts).unwrap();
    assert_eq!(one.class_names, vec!["typical".to_string()]);
    assert_eq!(one.n_rows(), 72);

    let s2 = finalized("s2", "p2", PresetKind::ImpairedGait, 2, 360.0);
    let labels = BTreeMap::from([("p1".to_string(), "typical".to_string()), ("p2".to_string(), "impaired".to_string())]);
    let ds = build_dataset(&[s, s2], &labels, &classes, Representation::RawWindows, &opts).unwrap();
    assert_eq!(ds.n_rows(), 144);
    assert_eq!(ds.n_features(), 250);
    assert_eq!(ds.subject_ids.iter().filter(|s| *s == "p1").count(), 72);
    for row in &ds.x {
        assert!(row.iter().sum::<f64>().abs() < 1e-9);
    }
}

#[test]
fn raw_window_edge_cases() {
    let mut s = finalized("s1", "p1", PresetKind::TypicalChild, 1, 10.0);
    let labels = BTreeMap::from([("p1".to_string(), "typical".to_string())]);
    let classes = vec!["typical".to_string()];
    let long = DatasetOptions {
        window_s: Some(11.0),
        stride_s: Some(1.0),
        ..Default::default()
    };
    assert!(matches!(
        build_dataset(&[s.clone()], &labels, &classes, Representation::RawWindows, &long),
        Err(MlError::WindowTooLong { .. })
    ));
    assert!(matches!(
        build_dataset(&[s.clone()], &labels, &classes, Representation::RawWindows, &DatasetOptions::default()),
        Err(MlError::InvalidOptions(_))
    ));
    s.participant_id = "nobody".into();
    assert!(matches!(
        build_dataset(&[s], &labels, &classes, Representation::ClinicalFeatures, &DatasetOptions::default()),
        Err(MlError::Unlabeled(_))
    ));
}

#[test]
fn raw_windows_follow_six_minute_segment() {
    let mut s = finalized("s1", "p1", PresetKind::TypicalChild, 1, 60.0);
    s.add_segment(10.0, 30.0, "6MWT").unwrap();
    let mut s2 = finalized("s2", "p2", PresetKind::ImpairedGait, 1, 60.0);
    s2.participant_id = "p2".into();
    let labels = BTreeMap::from([("p1".to_string(), "a".to_string()), ("p2".to_string(), "b".to_string())]);
    let opts = DatasetOptions {
        window_s: Some(5.0),
        stride_s: Some(5.0),
        ..Default::default()
    };
    let ds = build_dataset(&[s, s2], &labels, &["a".into(), "b".into()], Representation::RawWindows, &opts).unwrap();
    assert_eq!(ds.subject_ids.iter().filter(|s| *s == "p1").count(), 4);
    assert_eq!(ds.subject_ids.iter().filter(|s| *s == "p2").count(), 12);
}

#[test]
fn pca_recovers_plane_in_five_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let basis = [[1.0, 2.0, 0.0, -1.0, 0.5], [0.0, 1.0, 3.0, 1.0, -2.0]];
    let centre = [4.0, -1.0, 2.0, 0.0, 7.0];
    let x: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            (0..5).map(|j| centre[j] + a * basis[0][j] + b * basis[1][j]).collect()
        })
        .collect();
    let p = pca_fit(&x, 2).unwrap();
    let mut worst: f64 = 0.0;
    for row in &x {
        let back = p.inverse_transform_row(&p.transform_row(row));
        for (a, b) in row.iter().zip(&back) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-9, "reconstruction error {worst}");
    // Orthonormal rows.
    for (i, a) in p.components.iter().enumerate() {
        for (j, b) in p.components.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-9);
        }
    }
    let mean: Vec<f64> = (0..5).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / 50.0).collect();
    assert!(p.transform_row(&mean).iter().all(|v| v.abs() < 1e-9));
    assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_sign_convention() {
    let x = vec![vec![0.0, -1.0], vec![0.0, 1.0], vec![0.1, 3.0], vec![-0.1, -3.0]];
    let p = pca_fit(&x, 1).unwrap();
    let c = &p.components[0];
    let big = if c[0].abs() > c[1].abs() { c[0] } else { c[1] };
    assert!(big > 0.0);
}

#[test]
fn lda_separates_blobs() {
    let ds = blobs(50, 6.0, 11);
    let l = lda_fit(&ds.x, &ds.y, 2, 1).unwrap();
    let z: Vec<f64> = ds.x.iter().map(|r| l.transform_row(r)[0]).collect();
    let stats = |c: usize| {
        let v: Vec<f64> = z.iter().zip(&ds.y).filter(|(_, &t)| t == c).map(|(v, _)| *v).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64;
        (m, var, v.len() as f64)
    };
    let (m0, v0, n0) = stats(0);
    let (m1, v1, n1) = stats(1);
    let pooled = ((n0 * v0 + n1 * v1) / (n0 + n1)).sqrt();
    assert!((m1 - m0).abs() > 5.0 * pooled, "{m0} {m1} {pooled}");
    assert!(lda_fit(&ds.x, &ds.y, 2, 2).is_err());
}

#[test]
fn adaboost_separable_training_error() {
    // Diagonal boundary so several stumps are needed.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = Vec::new();
    let mut y = Vec::new();
    while x.len() < 40 {
        let p: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let m = p[0] + p[1];
        if m.abs() < 0.2 {
            continue;
        }
        y.push(usize::from(m > 0.0));
        x.push(p.to_vec());
    }
    let subjects = (0..40).map(|i| format!("{i}")).collect();
    let ds = dataset(x, y, subjects);
    let spec = ClassifierSpec::new(
        ClassifierKind::AdaBoost,
        Hyperparams {
            n_estimators: Some(300),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let m = train(&spec, &ds).unwrap();
    let ModelParams::AdaBoost(ab) = &m.params else { panic!() };
    assert_eq!(acc(&m, &ds), 1.0);
    // The 0-1 error may rise for a round on this set; the exponential
    // bound may not.
    assert!(ab.staged_exp_loss.windows(2).all(|w| w[1] < w[0]));
    assert!(ab.staged_train_error.iter().zip(&ab.staged_exp_loss).all(|(e, b)| e <= b));
}

#[test]
fn adaboost_on_blobs() {
    let ds = blobs(20, 8.0, 1);
    let m = train(&ClassifierSpec::default_for(ClassifierKind::AdaBoost, 0), &ds).unwrap();
    assert_eq!(acc(&m, &ds), 1.0);
    let ModelParams::AdaBoost(ab) = &m.params else { panic!() };
    assert!(ab.staged_train_error.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn knn_one_memorizes() {
    let ds = blobs(30, 0.5, 2);
    let spec = ClassifierSpec::new(
        ClassifierKind::Knn,
        Hyperparams {
            k: Some(1),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let m = train(&spec, &ds).unwrap();
    assert_eq!(acc(&m, &ds), 1.0);
}

#[test]
fn naive_bayes_boundary_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<Vec<f64>> = (0..2000).map(|i| vec![if i % 2 == 0 { -3.0 } else { 3.0 } + g.sample(&mut rng)]).collect();
    let y: Vec<usize> = (0..2000).map(|i| i % 2).collect();
    let subjects = (0..2000).map(|i| format!("{i}")).collect();
    let m = train(&ClassifierSpec::default_for(ClassifierKind::GaussianNb, 0), &dataset(x, y, subjects)).unwrap();
    // Analytic posterior crosses 1/2 where the two densities meet; bisect.
    let (mut lo, mut hi) = (-2.0, 2.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if predict(&m, &[mid]).unwrap().scores[1] > 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!(lo.abs() < 0.2, "boundary at {lo}");
}

#[test]
fn probabilistic_scores_sum_to_one() {
    let ds = blobs(15, 2.0, 4);
    for kind in ClassifierKind::ALL.into_iter().filter(|k| k.is_probabilistic()) {
        let spec = ClassifierSpec::default_for(kind, 1);
        let m = train(&spec, &ds).unwrap();
        for r in &ds.x {
            let s: f64 = predict(&m, r).unwrap().scores.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{kind}: {s}");
        }
    }
}

#[test]
fn models_reload_identically() {
    let ds = blobs(15, 2.0, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let probes: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
    for kind in ClassifierKind::ALL {
        let m = train(&ClassifierSpec::default_for(kind, 3), &ds).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: TrainedModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m, "{kind}");
        for p in &probes {
            assert_eq!(predict(&m, p).unwrap(), predict(&back, p).unwrap());
        }
    }
}

#[test]
fn predict_checks_dimension() {
    let ds = blobs(5, 2.0, 6);
    let m = train(&ClassifierSpec::default_for(ClassifierKind::Knn, 0), &ds).unwrap();
    assert_eq!(
        predict(&m, &[1.0, 2.0, 3.0]).unwrap_err(),
        MlError::DimensionMismatch { expected: 2, got: 3 }
    );
}

#[test]
fn single_class_is_rejected() {
    let ds = Dataset {
        class_names: vec!["a".into()],
        y: vec![0; 4],
        ..blobs(2, 1.0, 0)
    };
    assert!(matches!(
        train(&ClassifierSpec::default_for(ClassifierKind::DecisionTree, 0), &ds),
        Err(MlError::MissingClass { .. })
    ));
}

#[test]
fn training_is_deterministic() {
    let ds = blobs(20, 1.5, 12);
    for kind in ClassifierKind::ALL {
        let spec = ClassifierSpec::default_for(kind, 77);
        let a = serde_json::to_string(&train(&spec, &ds).unwrap()).unwrap();
        let b = serde_json::to_string(&train(&spec, &ds).unwrap()).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

/// Ten subjects with three rows each; feature 0 alone separates classes.
fn separable_subjects() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut subjects = Vec::new();
    for s in 0..10 {
        let c = s % 2;
        for _ in 0..3 {
            let f0 = if c == 0 { rng.random_range(0.0..1.0) } else { rng.random_range(2.0..3.0) };
            x.push(vec![f0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
            subjects.push(format!("subj{s}"));
        }
    }
    dataset(x, y, subjects)
}

#[test]
fn loso_one_fold_per_subject() {
    let ds = separable_subjects();
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::DecisionTree, 0), &ds, None, &EvalOptions::default()).unwrap();
    assert_eq!(r.n_folds, 10);
    assert_eq!(r.folds.len(), 10);
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.confusion.iter().flatten().sum::<usize>(), r.n);
    assert_eq!(r.n, 30);
    for f in &r.folds {
        assert!(f.predictions.iter().all(|p| p.subject_id == f.held_out));
    }
}

#[test]
fn loso_shuffled_labels_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let n = 60;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    // Fisher-Yates with the same seeded generator.
    for i in (1..n).rev() {
        y.swap(i, rng.random_range(0..=i));
    }
    let ds = dataset(x, y, (0..n).map(|i| format!("s{i:02}")).collect());
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::LogisticRegression, 0), &ds, None, &EvalOptions::default()).unwrap();
    let sigma = (0.25 / n as f64).sqrt();
    assert!((r.accuracy - 0.5).abs() <= 3.0 * sigma, "accuracy {}", r.accuracy);
}

#[test]
fn loso_no_leakage_of_held_out_outlier() {
    let ds = separable_subjects();
    let mut poisoned = ds.clone();
    for i in 0..poisoned.n_rows() {
        if poisoned.subject_ids[i] == "subj3" {
            poisoned.x[i][1] = 1e6;
        }
    }
    let spec = ClassifierSpec::default_for(ClassifierKind::GaussianNb, 0);
    let reducer = ReducerSpec {
        kind: ReducerKind::Pca,
        n_components: 2,
    };
    let opts = EvalOptions::default();
    let clean = loso_evaluate(&spec, &ds, Some(&reducer), &opts).unwrap();
    let dirty = loso_evaluate(&spec, &poisoned, Some(&reducer), &opts).unwrap();
    let fold = |r: &EvalReport| r.folds.iter().find(|f| f.held_out == "subj3").unwrap().scaler.clone();
    assert_eq!(fold(&clean), fold(&dirty));
    // Other folds train on the outlier, so their statistics must move.
    let other = |r: &EvalReport| r.folds.iter().find(|f| f.held_out == "subj4").unwrap().scaler.clone();
    assert_ne!(other(&clean), other(&dirty));
}

#[test]
fn loso_skips_fold_that_loses_a_class() {
    let mut ds = separable_subjects();
    // Only subj1 carries class 1 now.
    for i in 0..ds.n_rows() {
        if ds.subject_ids[i] != "subj1" {
            ds.y[i] = 0;
        }
    }
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::DecisionTree, 0), &ds, None, &EvalOptions::default()).unwrap();
    assert_eq!(r.skipped.len(), 1);
    assert_eq!(r.skipped[0].held_out, "subj1");
    assert_eq!(r.folds.len(), 9);
    assert_eq!(r.n, 27);
}

#[test]
fn loso_needs_two_subjects() {
    let mut ds = separable_subjects();
    ds.subject_ids.iter_mut().for_each(|s| *s = "one".into());
    assert_eq!(
        loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::Knn, 0), &ds, None, &EvalOptions::default()).unwrap_err(),
        MlError::TooFewSubjects(1)
    );
}

#[test]
fn leave_one_row_out_mode() {
    let ds = separable_subjects();
    let opts = EvalOptions {
        mode: EvalMode::LeaveOneRowOut,
        parallel: false,
    };
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::DecisionTree, 0), &ds, None, &opts).unwrap();
    assert_eq!(r.n_folds, 30);
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn parallel_and_serial_reports_match() {
    let ds = separable_subjects();
    for kind in [ClassifierKind::RandomForest, ClassifierKind::MlpEnsemble, ClassifierKind::GradientBoosting] {
        let spec = ClassifierSpec::default_for(kind, 5);
        let par = loso_evaluate(&spec, &ds, None, &EvalOptions::default()).unwrap();
        let ser = loso_evaluate(
            &spec,
            &ds,
            None,
            &EvalOptions {
                parallel: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(serde_json::to_string(&par).unwrap(), serde_json::to_string(&ser).unwrap());
    }
}

#[test]
fn gradient_checks() {
    let ds = blobs(8, 1.0, 14);
    for kind in [ClassifierKind::Mlp, ClassifierKind::LogisticRegression] {
        let gc = gradient_check(&ClassifierSpec::default_for(kind, 4), &ds.x, &ds.y, 2).unwrap();
        assert!(gc.max_rel_error < 1e-4, "{kind}: {}", gc.max_rel_error);
    }
    let two_hidden = ClassifierSpec::new(
        ClassifierKind::Mlp,
        Hyperparams {
            hidden_sizes: Some(vec![5, 4]),
            l2: Some(0.01),
            ..Default::default()
        },
        9,
    )
    .unwrap();
    let gc = gradient_check(&two_hidden, &ds.x, &ds.y, 2).unwrap();
    assert!(gc.max_rel_error < 1e-4);
    assert!(matches!(
        gradient_check(&ClassifierSpec::default_for(ClassifierKind::Knn, 0), &ds.x, &ds.y, 2),
        Err(MlError::NotDifferentiable(_))
    ));
    let big = blobs(20, 1.0, 0);
    assert!(matches!(
        gradient_check(&ClassifierSpec::default_for(ClassifierKind::Mlp, 0), &big.x, &big.y, 2),
        Err(MlError::TooManyRows(40))
    ));
}

#[test]
fn zero_logistic_bias_gradient_vanishes_on_balanced_data() {
    let ds = blobs(10, 3.0, 15);
    let m = LogisticRegression::zeros(2, 2, 1e-4);
    let (_, g) = m.loss_and_gradient(&ds.x, &ds.y);
    assert!(g[4].abs() < 1e-10 && g[5].abs() < 1e-10);
}

#[test]
fn mlp_loss_decreases_over_epochs() {
    let ds = blobs(20, 2.0, 16);
    let spec = ClassifierSpec::new(
        ClassifierKind::Mlp,
        Hyperparams {
            epochs: Some(100),
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let m = train(&spec, &ds).unwrap();
    let ModelParams::Mlp(net) = &m.params else { panic!() };
    assert_eq!(net.loss_history.len(), 100);
    assert!(net.loss_history[99] < net.loss_history[0]);
}

#[test]
fn raw_window_loso_votes_per_session() {
    let (sessions, labels, classes) = cohort(3, 30.0);
    let opts = DatasetOptions {
        window_s: Some(5.0),
        stride_s: Some(5.0),
        ..Default::default()
    };
    let ds = build_dataset(&sessions, &labels, &classes, Representation::RawWindows, &opts).unwrap();
    assert_eq!(ds.n_rows(), 36);
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::Knn, 0), &ds, None, &EvalOptions::default()).unwrap();
    assert_eq!(r.n, 6);
    assert!(r.predictions().all(|p| p.rows.len() == 6));
}

#[test]
fn simulated_cohort_is_separable() {
    let (sessions, labels, classes) = cohort(10, 360.0);
    let ds = build_dataset(&sessions, &labels, &classes, Representation::ClinicalFeatures, &DatasetOptions::default()).unwrap();
    let mut perfect = 0;
    for kind in ClassifierKind::CLASSICAL {
        let r = loso_evaluate(&ClassifierSpec::default_for(kind, 0), &ds, None, &EvalOptions::default()).unwrap();
        println!("{kind}: {}", r.accuracy);
        perfect += usize::from(r.accuracy == 1.0);
    }
    let lda = ReducerSpec {
        kind: ReducerKind::Lda,
        n_components: 1,
    };
    let r = loso_evaluate(&ClassifierSpec::default_for(ClassifierKind::AdaBoost, 0), &ds, Some(&lda), &EvalOptions::default()).unwrap();
    println!("AdaBoost+LDA: {}", r.accuracy);
    assert!(perfect >= 3);
}

#[test]
fn experiment_and_session_prediction() {
    let (sessions, labels, classes) = cohort(4, 90.0);
    let spec = ClassifierSpec::default_for(ClassifierKind::DecisionTree, 1);
    let res = run_experiment(&sessions, &labels, &classes, &ExperimentRequest::new(spec.clone(), Representation::ClinicalFeatures)).unwrap();
    assert_eq!(res.report.n, 8);
    assert!(res.projection.is_none());
    let preds = predict_sessions(&res.model, &ExperimentRequest::new(spec.clone(), Representation::ClinicalFeatures), &sessions[..1]).unwrap();
    assert_eq!(preds.len(), 1);
    assert_eq!(preds[0].predicted, labels[&sessions[0].participant_id]);
    assert_eq!(preds[0].votes.iter().sum::<usize>(), 1);

    // Reduced without a reducer defaults to LDA with C - 1 components.
    let req = ExperimentRequest::new(spec.clone(), Representation::Reduced);
    let res = run_experiment(&sessions, &labels, &classes, &req).unwrap();
    assert_eq!(res.report.representation, Representation::Reduced);
    let proj = res.projection.unwrap();
    assert_eq!(proj.len(), 8);
    assert!(proj.iter().all(|r| r.coords.len() == 1));
    let preds = predict_sessions(&res.model, &req, &sessions).unwrap();
    let right = preds.iter().filter(|p| p.predicted == labels[&p.participant_id]).count();
    assert_eq!(right, 8);

    let mut req = ExperimentRequest::new(spec, Representation::RawWindows);
    req.options.window_s = Some(4.0);
    req.options.stride_s = Some(4.0);
    let res = run_experiment(&sessions, &labels, &classes, &req).unwrap();
    let preds = predict_sessions(&res.model, &req, &sessions[..2]).unwrap();
    let windows = session_rows(&sessions[0], Representation::RawWindows, &req.options).unwrap().len();
    assert_eq!(windows, 22);
    assert_eq!(preds[0].votes.iter().sum::<usize>(), windows);
}
