use gaunet::data::{generate_synthetic, SyntheticConfig};
use gaunet::training::{cross_validate, fit, importance_scores, CvPlan, ImportanceNormalization, TrainConfig};
use gaunet::utility::{ModelKind, ModelSpec};

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 30,
        learning_rate: 1e-2,
        ..TrainConfig::with_seed(seed)
    }
}

#[test]
fn fitting_improves_the_objective() {
    let (d, _) = generate_synthetic(&SyntheticConfig { n_points: 1500, ..SyntheticConfig::with_seed(8) }).unwrap();
    for kind in [ModelKind::Linear, ModelKind::GaUnet, ModelKind::AsuDnn] {
        let r = fit(&ModelSpec::new(kind), &d, &cfg(1)).unwrap();
        assert!(r.final_objective.total > r.initial_objective.total, "{kind}");
        assert_eq!(r.n_train + r.n_validation, d.len());
        assert!(r.model.accuracy(&d).unwrap() > 0.8, "{kind}");
    }
}

#[test]
fn importance_shares_sum_to_one() {
    let (d, _) = generate_synthetic(&SyntheticConfig { n_points: 1000, ..SyntheticConfig::with_seed(8) }).unwrap();
    let m = fit(&ModelSpec::new(ModelKind::GaUnet), &d, &cfg(2)).unwrap().model;
    let r = importance_scores(&m, 100, 0.2, ImportanceNormalization::Share).unwrap();
    let total: f64 = r.variables.iter().map(|v| v.share).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(r.variables.iter().all(|v| v.selected == (v.share >= 0.2)));
    assert!(importance_scores(
        &fit(&ModelSpec::new(ModelKind::Linear), &d, &cfg(2)).unwrap().model,
        100,
        0.1,
        ImportanceNormalization::Raw
    )
    .is_err());
}

#[test]
fn cross_validation_is_reproducible() {
    let (d, _) = generate_synthetic(&SyntheticConfig { n_points: 900, ..SyntheticConfig::with_seed(9) }).unwrap();
    let plan = CvPlan::new(d.len(), 3, 4).unwrap();
    let spec = ModelSpec::new(ModelKind::Linear);
    let a = cross_validate(&spec, &d, &cfg(3), &plan).unwrap();
    let b = cross_validate(&spec, &d, &cfg(3), &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.iter().map(|f| f.n_test).sum::<usize>(), d.len());
    assert!(a.test_accuracy.stdev >= 0.0);
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let (d, _) = generate_synthetic(&SyntheticConfig { n_points: 100, ..SyntheticConfig::with_seed(1) }).unwrap();
    let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
    assert!(matches!(fit(&ModelSpec::new(ModelKind::Linear), &d, &bad), Err(gaunet::Error::Config { .. })));
}
