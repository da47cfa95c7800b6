use mmevent_core::classifiers::{
    argmax, kernel_matrix, linear_svm_objective, linear_svm_subgradient, predict_labels,
    predict_probabilities, train, train_linear_svm, train_rbf_svm, train_rusboost, BinaryModel,
    ClassifierConfig, DecisionTree, PlattScaling, TrainedModel,
};
use mmevent_core::FeatureVector;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn classes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn blobs(
    rng: &mut ChaCha8Rng,
    centers: &[(f64, f64)],
    counts: &[usize],
    spread: f64,
) -> (Vec<FeatureVector>, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, (&(cx, cy), &n)) in centers.iter().zip(counts).enumerate() {
        for _ in 0..n {
            x.push(FeatureVector::dense(vec![
                cx + spread * gaussian(rng),
                cy + spread * gaussian(rng),
            ]));
            y.push(c);
        }
    }
    (x, y)
}

fn linear_weights(model: &TrainedModel, class: usize) -> Vec<f64> {
    match &model.models[class] {
        BinaryModel::Linear { weights } => weights.clone(),
        other => panic!("expected linear model, got {other:?}"),
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[test]
fn linear_svm_separates_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, y) = blobs(&mut rng, &[(-2.0, -1.0), (2.0, 1.5)], &[40, 40], 0.5);
    let m = train_linear_svm(&x, &y, &classes(2), 10.0, 3).unwrap();
    assert_eq!(predict_labels(&m, &x).unwrap(), y);
}

fn subgradient_descent_min(rows: &[FeatureVector], y: &[f64], c: f64) -> f64 {
    let mut w = vec![0.0; rows[0].dim() + 1];
    let mut best = linear_svm_objective(&w, rows, y, c);
    for t in 1..=200_000 {
        let g = linear_svm_subgradient(&w, rows, y, c);
        let step = 0.5 / (t as f64).sqrt() / (1.0 + c * rows.len() as f64);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= step * gi;
        }
        best = best.min(linear_svm_objective(&w, rows, y, c));
    }
    best
}

#[test]
fn linear_objective_matches_subgradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    // overlapping blobs so several hinge terms stay active
    let (x, y) = blobs(&mut rng, &[(-0.5, 0.0), (0.5, 0.3)], &[10, 10], 0.8);
    let c = 1.0;
    let cfg = ClassifierConfig::linear_svm(c).with_calibration_folds(0);
    let m = train(&cfg, &x, &y, &classes(2)).unwrap();
    let w = linear_weights(&m, 1);
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let ours = linear_svm_objective(&w, &x, &signs, c);
    let oracle = subgradient_descent_min(&x, &signs, c);
    let rel = (ours - oracle).abs() / oracle;
    assert!(rel < 1e-3, "solver {ours} vs oracle {oracle} (rel {rel})");
}

#[test]
fn hinge_subgradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y) = blobs(&mut rng, &[(-1.0, 0.0), (1.0, 0.5)], &[15, 15], 1.0);
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let c = 0.7;
    let mut checked = 0;
    while checked < 100 {
        let w: Vec<f64> = (0..3).map(|_| gaussian(&mut rng)).collect();
        // skip points within the step of a hinge kink
        let near_kink = x.iter().zip(&signs).any(|(xi, &yi)| {
            let m = yi * (xi.dot_dense(&w[..2]) + w[2]);
            (m - 1.0).abs() < 1e-4
        });
        if near_kink {
            continue;
        }
        let g = linear_svm_subgradient(&w, &x, &signs, c);
        let h = 1e-7;
        for k in 0..3 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (linear_svm_objective(&wp, &x, &signs, c)
                - linear_svm_objective(&wm, &x, &signs, c))
                / (2.0 * h);
            let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
            assert!(rel < 1e-5, "component {k}: fd {fd} vs analytic {}", g[k]);
        }
        checked += 1;
    }
}

#[test]
fn duplicating_rows_with_half_c_keeps_the_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = blobs(&mut rng, &[(-1.0, 0.0), (1.0, 0.4)], &[25, 25], 0.9);
    let c = 1.0;
    let single = train(
        &ClassifierConfig::linear_svm(c).with_calibration_folds(0),
        &x,
        &y,
        &classes(2),
    )
    .unwrap();
    let x2: Vec<FeatureVector> = x.iter().chain(&x).cloned().collect();
    let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
    let doubled = train(
        &ClassifierConfig::linear_svm(c / 2.0).with_calibration_folds(0),
        &x2,
        &y2,
        &classes(2),
    )
    .unwrap();
    let (a, b) = (linear_weights(&single, 1), linear_weights(&doubled, 1));
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-2 * (1.0 + u.abs()), "{a:?} vs {b:?}");
    }
    let grid: Vec<FeatureVector> = (0..400)
        .map(|i| {
            FeatureVector::dense(vec![
                (i % 20) as f64 * 0.3 - 3.0,
                (i / 20) as f64 * 0.3 - 3.0,
            ])
        })
        .collect();
    let pa = predict_labels(&single, &grid).unwrap();
    let pb = predict_labels(&doubled, &grid).unwrap();
    assert!(accuracy(&pa, &pb) >= 0.99);
}

#[test]
fn zero_column_does_not_change_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, y) = blobs(
        &mut rng,
        &[(0.0, 0.0), (2.0, 0.0), (1.0, 2.0)],
        &[20, 20, 20],
        0.7,
    );
    let widen = |v: &FeatureVector| {
        let mut d = v.to_dense();
        d.push(0.0);
        FeatureVector::dense(d)
    };
    let xw: Vec<FeatureVector> = x.iter().map(widen).collect();
    for cfg in [
        ClassifierConfig::linear_svm(1.0),
        ClassifierConfig::rbf_svm(1.0, 0.5),
        ClassifierConfig::rusboost(20),
    ] {
        let a = train(&cfg, &x, &y, &classes(3)).unwrap();
        let b = train(&cfg, &xw, &y, &classes(3)).unwrap();
        assert_eq!(
            predict_labels(&a, &x).unwrap(),
            predict_labels(&b, &xw).unwrap()
        );
    }
}

#[test]
fn rbf_svm_solves_xor() {
    let x: Vec<FeatureVector> = [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)]
        .iter()
        .map(|&(a, b)| FeatureVector::dense(vec![a, b]))
        .collect();
    let y = vec![0, 0, 1, 1];
    let cfg = ClassifierConfig::rbf_svm(10.0, 2.0).with_calibration_folds(0);
    let m = train(&cfg, &x, &y, &classes(2)).unwrap();
    assert_eq!(predict_labels(&m, &x).unwrap(), y);
}

#[test]
fn small_gamma_rbf_agrees_with_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (x, y) = blobs(&mut rng, &[(-1.5, -0.5), (1.5, 0.8)], &[50, 50], 0.6);
    let lin = train_linear_svm(&x, &y, &classes(2), 1.0, 0).unwrap();
    let gamma = 1e-3;
    // K ~ 1 - gamma*|a-b|^2 behaves like a linear kernel scaled by 2*gamma
    let rbf = train_rbf_svm(&x, &y, &classes(2), 1.0 / (2.0 * gamma), gamma, 0).unwrap();
    let test: Vec<FeatureVector> = (0..500)
        .map(|_| FeatureVector::dense(vec![3.0 * gaussian(&mut rng), 3.0 * gaussian(&mut rng)]))
        .collect();
    let agree = accuracy(
        &predict_labels(&lin, &test).unwrap(),
        &predict_labels(&rbf, &test).unwrap(),
    );
    assert!(agree >= 0.95, "agreement {agree}");
}

#[test]
fn kernel_matrix_is_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows: Vec<FeatureVector> = (0..40)
        .map(|_| FeatureVector::dense((0..5).map(|_| gaussian(&mut rng)).collect()))
        .collect();
    for gamma in [0.01, 0.5, 4.0] {
        let k = kernel_matrix(&rows, gamma);
        let m = DMatrix::from_row_slice(40, 40, &k);
        assert_eq!(m, m.transpose());
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-8));
    }
}

#[test]
fn rusboost_beats_a_plain_stump_on_minority_recall() {
    let mut wins = 0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let (x, y) = blobs(&mut rng, &[(0.0, 0.0), (1.2, 1.2)], &[180, 20], 1.0);
        let idx: Vec<usize> = (0..x.len()).collect();
        let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let w = vec![1.0 / x.len() as f64; x.len()];
        let stump = DecisionTree::fit(&x, &idx, &signs, &w, 1);
        let m = train_rusboost(&x, &y, &classes(2), 50, trial).unwrap();
        let pred = predict_labels(&m, &x).unwrap();
        let minority: Vec<usize> = (0..x.len()).filter(|&i| y[i] == 1).collect();
        let boost_recall =
            minority.iter().filter(|&&i| pred[i] == 1).count() as f64 / minority.len() as f64;
        let stump_recall = minority
            .iter()
            .filter(|&&i| stump.predict(&x[i]) > 0.0)
            .count() as f64
            / minority.len() as f64;
        if boost_recall > stump_recall {
            wins += 1;
        }
    }
    assert!(wins >= 19, "RUSBoost won {wins}/20");
}

#[test]
fn boosting_is_no_worse_than_one_weak_learner_on_training_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y) = blobs(&mut rng, &[(0.0, 0.0), (2.0, 1.0)], &[60, 60], 0.8);
    let idx: Vec<usize> = (0..x.len()).collect();
    let signs: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let w = vec![1.0 / x.len() as f64; x.len()];
    let tree = DecisionTree::fit(&x, &idx, &signs, &w, 3);
    let tree_pred: Vec<usize> = x
        .iter()
        .map(|v| usize::from(tree.predict(v) > 0.0))
        .collect();
    let m = train_rusboost(&x, &y, &classes(2), 100, 4).unwrap();
    let pred = predict_labels(&m, &x).unwrap();
    assert!(accuracy(&pred, &y) >= accuracy(&tree_pred, &y));
    for b in &m.models {
        if let BinaryModel::Ensemble(e) = b {
            assert!(e.learners.iter().all(|(a, _)| a.is_finite() && *a > 0.0));
        }
    }
}

#[test]
fn probabilities_are_simplex_and_agree_with_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (x, y) = blobs(
        &mut rng,
        &[(0.0, 0.0), (2.0, 0.0), (1.0, 1.8), (3.0, 2.0)],
        &[30, 30, 30, 10],
        0.9,
    );
    let probe: Vec<FeatureVector> = (0..300)
        .map(|_| FeatureVector::dense(vec![4.0 * gaussian(&mut rng), 4.0 * gaussian(&mut rng)]))
        .collect();
    for cfg in [
        ClassifierConfig::linear_svm(1.0),
        ClassifierConfig::rbf_svm(1.0, 0.5),
        ClassifierConfig::rusboost(30),
    ] {
        let m = train(&cfg.clone().with_seed(2), &x, &y, &classes(4)).unwrap();
        let labels = predict_labels(&m, &probe).unwrap();
        let probs = predict_probabilities(&m, &probe).unwrap();
        for (p, &l) in probs.iter().zip(&labels) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(argmax(p), l, "{} probabilities {p:?}", cfg.kind.name());
        }
        for cal in m.calibration.as_ref().unwrap() {
            let grid: Vec<f64> = (-50..=50)
                .map(|i| cal.probability(i as f64 * 0.1))
                .collect();
            assert!(grid.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn deep_inside_margin_is_likely() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (x, y) = blobs(&mut rng, &[(-2.0, 0.0), (2.0, 0.0)], &[40, 40], 0.7);
    let m = train_linear_svm(&x, &y, &classes(2), 1.0, 0).unwrap();
    let p = m
        .probabilities(&FeatureVector::dense(vec![6.0, 0.0]))
        .unwrap();
    assert!(p[1] > 0.5);
    let p = m
        .probabilities(&FeatureVector::dense(vec![-6.0, 0.0]))
        .unwrap();
    assert!(p[0] > 0.5);
    let platt = PlattScaling { a: -2.0, b: 0.1 };
    assert!(platt.probability(5.0) > platt.probability(1.0));
}

#[test]
fn ovr_score_ignores_relabeling_of_other_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (x, y) = blobs(
        &mut rng,
        &[(0.0, 0.0), (2.0, 0.0), (1.0, 2.0)],
        &[20, 20, 20],
        0.8,
    );
    let swapped: Vec<usize> = y
        .iter()
        .map(|&l| match l {
            1 => 2,
            2 => 1,
            o => o,
        })
        .collect();
    let cfg = ClassifierConfig::linear_svm(1.0).with_calibration_folds(0);
    let a = train(&cfg, &x, &y, &classes(3)).unwrap();
    let b = train(&cfg, &x, &swapped, &classes(3)).unwrap();
    for v in &x {
        assert_eq!(
            a.decision_scores(v).unwrap()[0],
            b.decision_scores(v).unwrap()[0]
        );
    }
}

#[test]
fn training_is_deterministic_and_models_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (x, y) = blobs(
        &mut rng,
        &[(0.0, 0.0), (2.0, 0.0), (1.0, 2.0)],
        &[25, 25, 25],
        0.9,
    );
    for cfg in [
        ClassifierConfig::linear_svm(1.0),
        ClassifierConfig::rbf_svm(1.0, 0.5),
        ClassifierConfig::rusboost(20),
    ] {
        let a = train(&cfg.clone().with_seed(7), &x, &y, &classes(3)).unwrap();
        let b = train(&cfg.clone().with_seed(7), &x, &y, &classes(3)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: TrainedModel = serde_json::from_str(&json).unwrap();
        assert_eq!(
            predict_probabilities(&a, &x).unwrap(),
            predict_probabilities(&back, &x).unwrap()
        );
    }
}
