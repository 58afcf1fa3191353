use fixgraph::dataset::{gen_synthetic, CommitRecord, FileChange, Label};
use fixgraph::gnn::{checkpoint, Flavor, Model, ModelConfig};
use fixgraph::training::{predict, train, train_with, OptimizerKind, TrainConfig, TrainError};

fn small(flavor: Flavor) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 8,
        learning_rate: 5e-3,
        seed: 4,
        model: ModelConfig { flavor, hidden: 12, buckets: 128, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let corpus = gen_synthetic(10, 10, 1);
    for optimizer in [OptimizerKind::Sgd, OptimizerKind::Adam] {
        let cfg = TrainConfig { learning_rate: 0.0, optimizer, ..small(Flavor::Gcn) };
        let out = train(&corpus, &cfg).unwrap();
        let fresh = Model::new(cfg.resolved_model()).unwrap();
        assert_eq!(checkpoint::to_bytes(&out.model), checkpoint::to_bytes(&fresh));
    }
}

#[test]
fn loss_goes_down_for_every_flavor() {
    let corpus = gen_synthetic(40, 40, 2);
    for flavor in Flavor::ALL {
        let out = train(&corpus, &TrainConfig { epochs: 8, ..small(flavor) }).unwrap();
        let (first, last) = (out.log[0].loss, out.log.last().unwrap().loss);
        assert!(last < first, "{flavor}: {first} -> {last}");
        assert_eq!(out.wall_times.len(), 8);
    }
}

#[test]
fn same_seed_same_log_and_different_seed_differs() {
    let corpus = gen_synthetic(20, 20, 3);
    let a = train(&corpus, &small(Flavor::Sage)).unwrap();
    let b = train(&corpus, &small(Flavor::Sage)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&b.model));
    let c = train(&corpus, &TrainConfig { seed: 5, ..small(Flavor::Sage) }).unwrap();
    assert_ne!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&c.model));
}

#[test]
fn callback_sees_every_epoch_and_can_abort() {
    let corpus = gen_synthetic(10, 10, 6);
    let mut seen = vec![];
    train_with(&corpus, &small(Flavor::Gin), |r, _| {
        seen.push(r.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    let err = train_with(&corpus, &small(Flavor::Gin), |_, _| Err(TrainError::InvalidConfig("stop".into())));
    assert!(matches!(err, Err(TrainError::InvalidConfig(_))));
}

#[test]
fn unparsable_commits_are_skipped_in_training_and_flagged_in_prediction() {
    let mut corpus = gen_synthetic(10, 10, 7);
    let broken = CommitRecord::new(
        "broken",
        0,
        Label::Fix,
        vec![FileChange { path: "x.c".into(), before: "int f( {".into(), after: "int f( { x".into() }],
    );
    corpus.push(broken.clone());
    let out = train(&corpus, &small(Flavor::Gat)).unwrap();
    assert_eq!(out.skipped, 1);
    let preds = predict(&out.model, &[broken, corpus[0].clone()]).unwrap();
    assert!(preds[0].error.is_some() && preds[0].probability == 0.0);
    assert!(preds[1].error.is_none());
}

#[test]
fn single_class_and_bad_configs_are_rejected() {
    let fixes: Vec<_> = gen_synthetic(6, 6, 8).into_iter().filter(|c| c.label.is_fix()).collect();
    assert!(train(&fixes, &small(Flavor::Gat)).is_err());
    let corpus = gen_synthetic(6, 6, 8);
    for cfg in [
        TrainConfig { epochs: 0, ..small(Flavor::Gat) },
        TrainConfig { batch_size: 0, ..small(Flavor::Gat) },
        TrainConfig { learning_rate: f64::NAN, ..small(Flavor::Gat) },
        TrainConfig { train_ratio: 1.0, ..small(Flavor::Gat) },
    ] {
        assert!(matches!(train(&corpus, &cfg), Err(TrainError::InvalidConfig(_))));
    }
}

#[test]
fn predict_handles_empty_corpus_and_zero_classifier() {
    let mut model = Model::new(ModelConfig { hidden: 8, ..Default::default() }).unwrap();
    assert!(predict(&model, &[]).unwrap().is_empty());
    model.tensor_mut("classifier.w").unwrap().fill(0.0);
    model.tensor_mut("classifier.b").unwrap().fill(0.0);
    let preds = predict(&model, &gen_synthetic(3, 3, 9)).unwrap();
    assert!(preds.iter().all(|p| p.probability == 0.5));
}

#[test]
fn config_json_rejects_unknown_fields() {
    let cfg: TrainConfig = serde_json::from_str(r#"{"epochs": 2, "model": {"flavor": "gin"}}"#).unwrap();
    assert_eq!(cfg.epochs, 2);
    assert_eq!(cfg.model.flavor, Flavor::Gin);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 2}"#).is_err());
}
