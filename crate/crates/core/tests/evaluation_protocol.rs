use blocksel_core::data::{generate_planted, PlantedSpec};
use blocksel_core::evaluation::{accuracy, evaluate_columns, evaluate_selection};
use blocksel_core::FeatureScores;
use ndarray::Array1;

fn spec() -> PlantedSpec {
    PlantedSpec {
        n: 90,
        k: 3,
        d_informative: 6,
        d_noise: 6,
        intra_p: 0.3,
        inter_p: 0.05,
        signal_strength: 2.0,
        noise_scale: 1.0,
        seed: 11,
    }
}

#[test]
fn report_statistics_and_determinism() {
    let net = generate_planted(&spec()).unwrap();
    let scores = FeatureScores::uniform(12);
    let a = evaluate_selection(&net, &scores, 5, 20, 3).unwrap();
    let b = evaluate_selection(&net, &scores, 5, 20, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_run.len(), 20);
    assert_eq!(a.per_run.iter().map(|r| r.seed).collect::<Vec<_>>(), (3..23).collect::<Vec<u64>>());
    let mean = a.per_run.iter().map(|r| r.acc).sum::<f64>() / 20.0;
    assert!((a.acc_mean - mean).abs() <= 1e-12);
    let nmi_mean = a.per_run.iter().map(|r| r.nmi).sum::<f64>() / 20.0;
    assert!((a.nmi_mean - nmi_mean).abs() <= 1e-12);
    assert!((0.0..=1.0).contains(&a.acc_mean) && (0.0..=1.0).contains(&a.nmi_mean));
}

#[test]
fn full_uniform_selection_is_the_all_features_baseline() {
    let net = generate_planted(&spec()).unwrap();
    let all: Vec<usize> = (0..12).collect();
    let baseline = evaluate_columns(&net, &all, 10, 0).unwrap();
    let selected = evaluate_selection(&net, &FeatureScores::uniform(12), 12, 10, 0).unwrap();
    assert_eq!(baseline, selected);
}

#[test]
fn separating_features_score_perfectly() {
    // informative features only, each lit on exactly its home block
    let spec = PlantedSpec {
        d_noise: 0,
        signal_strength: 50.0,
        ..spec()
    };
    let net = generate_planted(&spec).unwrap();
    let scores = FeatureScores::new(Array1::from_shape_fn(6, |j| 1.0 + j as f64)).unwrap();
    let report = evaluate_selection(&net, &scores, 6, 20, 0).unwrap();
    assert_eq!(report.acc_mean, 1.0);
    assert_eq!(report.acc_std, 0.0);
}

#[test]
fn majority_predictor_meets_chance_floor() {
    let truth: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let pred = vec![0; 60];
    assert!(accuracy(&pred, &truth).unwrap() >= 1.0 / 3.0);
}

#[test]
fn insufficient_support_propagates() {
    let net = generate_planted(&spec()).unwrap();
    let mut r = Array1::zeros(12);
    r[0] = 1.0;
    let scores = FeatureScores::new(r).unwrap();
    assert!(matches!(
        evaluate_selection(&net, &scores, 4, 2, 0),
        Err(blocksel_core::Error::InsufficientSupport { nnz: 1, d: 4 })
    ));
}
