use seann_core::synth::split;
use seann_core::trainer::evaluate;
use seann_core::{
    lambda_weights, train, BoundConstraint, CompositeObjective, LossWeights, PesConstraint, PreparedData,
    ScenarioConfig, Task, TrainConfig,
};

fn regression_data(seed: u64) -> (PreparedData, seann_core::DataMatrix) {
    let mut scenario = ScenarioConfig::exposure_regression(seed);
    // Linear target: drop the cosine term.
    scenario.betas[4] = 0.0;
    let data = scenario.generate().unwrap();
    let parts = split(&data, [600, 200, 200], seed + 1).unwrap();
    (PreparedData::fit(&parts.train, &parts.val).unwrap(), parts.test)
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig { max_epochs: 300, seed, ..TrainConfig::default() }
}

#[test]
fn fits_noiseless_linear_target() {
    let (prepared, test) = regression_data(3);
    let model = train(&prepared, Task::Regression, &[], &LossWeights::agnostic(), &quick(1)).unwrap();
    let r2 = evaluate(&model, &test).unwrap().metric.value;
    assert!(r2 > 0.95, "R2 {r2}");
}

#[test]
fn same_seed_same_run() {
    let (prepared, _) = regression_data(4);
    let constraints = [PesConstraint::new(seann_core::ConstraintKind::Src, "fish_intake", -2.0, 1e4)];
    let weights = lambda_weights(2400.0, &[1e4]).unwrap();
    let cfg = TrainConfig { max_epochs: 40, seed: 9, ..TrainConfig::default() };
    let a = train(&prepared, Task::Regression, &constraints, &weights, &cfg).unwrap();
    let b = train(&prepared, Task::Regression, &constraints, &weights, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train(&prepared, Task::Regression, &constraints, &weights, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn frozen_network_stops_after_patience() {
    let (prepared, _) = regression_data(5);
    let cfg = TrainConfig { lr: 0.0, ..TrainConfig::default() };
    let model = train(&prepared, Task::Regression, &[], &LossWeights::agnostic(), &cfg).unwrap();
    assert_eq!(model.stopped_epoch, 11);
    assert_eq!(model.best_epoch, 1);
    assert_eq!(model.history.len(), model.stopped_epoch);
}

#[test]
fn history_and_snapshot_are_consistent() {
    let (prepared, _) = regression_data(6);
    let constraints = [
        PesConstraint::new(seann_core::ConstraintKind::Src, "mercury", 1.0, 1e4),
        PesConstraint::new(seann_core::ConstraintKind::Src, "perceived_stress", 5.0, 1e4),
    ];
    let weights = lambda_weights(2400.0, &[1e4, 1e4]).unwrap();
    let model = train(&prepared, Task::Regression, &constraints, &weights, &quick(2)).unwrap();

    assert_eq!(model.history.len(), model.stopped_epoch);
    for (i, rec) in model.history.iter().enumerate() {
        assert_eq!(rec.epoch, i + 1);
        for b in [&rec.train, &rec.val] {
            assert!((b.weighted_total(&weights) - b.total).abs() < 1e-9, "epoch {}", rec.epoch);
        }
    }
    let best = model.history.iter().map(|r| r.monitored).fold(f64::INFINITY, f64::min);
    assert_eq!(model.history[model.best_epoch - 1].monitored, best);

    // The returned parameters are the snapshot that scored the best epoch.
    let bound: Vec<BoundConstraint> =
        constraints.iter().map(|c| c.bind(prepared.train.column_names()).unwrap()).collect();
    let objective = CompositeObjective::new(Task::Regression, &bound, &weights).unwrap();
    let val = objective.value(&model.params, prepared.val.values(), prepared.val.target()).unwrap();
    assert_eq!(val.total, best);
}

#[test]
fn unknown_constraint_column_is_rejected() {
    let (prepared, _) = regression_data(7);
    let constraints = [PesConstraint::new(seann_core::ConstraintKind::Src, "salinity", 1.0, 1e4)];
    let weights = lambda_weights(2400.0, &[1e4]).unwrap();
    assert!(train(&prepared, Task::Regression, &constraints, &weights, &quick(0)).is_err());
}
