use fedcredit::data::{standardize, synthesize, train_test_split, Dataset, SyntheticSpec};
use fedcredit::eval::auc;
use fedcredit::fed::{
    fedavg_aggregate, make_clients, run_centralized, run_federated_gbdt, run_local_baseline, FederationConfig,
    GlobalModel, Trainer,
};
use fedcredit::gbdt::{cnn_train, GbdtConfig};
use fedcredit::model::{Activation, Mlp, MlpArchitecture, TrainConfig};
use fedcredit::numerics::RngStream;
use fedcredit::partition::{apply_plan, plan_from_named, Scheme};

fn split(spec: &SyntheticSpec, seed: u64) -> (Dataset, Dataset) {
    let ds = synthesize(spec, &mut RngStream::new(seed, 0)).unwrap();
    let (train, test) = train_test_split(&ds, 0.8, &mut RngStream::new(seed, 1)).unwrap();
    let (train, stats) = standardize(&train).unwrap();
    let test = stats.apply_holdout(&test).unwrap();
    (train, test)
}

fn test_auc(model: &GlobalModel, test: &Dataset) -> f64 {
    let p = model.predict_proba(test.features()).unwrap();
    let scores: Vec<f64> = (0..p.rows()).map(|r| p.get(r, 1)).collect();
    let pos: Vec<bool> = test.labels().iter().map(|&l| l == 1).collect();
    auc(&scores, &pos).unwrap()
}

fn mlp(n_features: usize) -> Trainer {
    Trainer::Mlp {
        model: Mlp::new(MlpArchitecture::for_task(n_features, &[64], Activation::Relu, 2).unwrap()),
        sgd: TrainConfig {
            learning_rate: 0.002,
            ..Default::default()
        },
    }
}

fn gbdt() -> Trainer {
    Trainer::Gbdt {
        trees: GbdtConfig::default(),
        cnn: TrainConfig {
            learning_rate: 0.01,
            ..Default::default()
        },
    }
}

// Golden value from the first recorded run of this configuration.
const CENTRALISED_SEP3_AUC: f64 = 0.9737030432436238;

#[test]
fn centralised_mlp_on_well_separated_data() {
    let spec = SyntheticSpec {
        class_separation: 3.0,
        ..Default::default()
    };
    let (train, test) = split(&spec, 11);
    let cfg = FederationConfig {
        n_rounds: 10,
        ..Default::default()
    };
    let model = run_centralized(&train, &mlp(train.n_features()), &cfg, &RngStream::new(5, 0)).unwrap();
    let a = test_auc(&model, &test);
    assert!(a > 0.9, "auc {a}");
    assert!((a - CENTRALISED_SEP3_AUC).abs() < 1e-9, "auc {a}");
    let again = run_centralized(&train, &mlp(train.n_features()), &cfg, &RngStream::new(5, 0)).unwrap();
    assert_eq!(again.params(), model.params());
}

#[test]
fn dominant_shard_beats_smallest_shards() {
    let spec = SyntheticSpec {
        n_samples: 3000,
        class_separation: 3.0,
        ..Default::default()
    };
    let plan = plan_from_named(10, Scheme::Dominant80).unwrap();
    let cfg = FederationConfig {
        n_rounds: 10,
        ..Default::default()
    };
    let mut wins = 0;
    for seed in 0..5 {
        let (train, test) = split(&spec, 100 + seed);
        let (shards, plan) = apply_plan(&train, &plan, &mut RngStream::new(seed, 2)).unwrap();
        let base = RngStream::new(seed, 3);
        let mut clients = make_clients(shards, &base);
        let models = run_local_baseline(&mut clients, &mlp(train.n_features()), &cfg, &base).unwrap();
        let aucs: Vec<f64> = models.iter().map(|m| test_auc(m, &test)).collect();
        let small = plan
            .proportions
            .iter()
            .zip(&aucs)
            .filter(|(&p, _)| p == 2)
            .map(|(_, &a)| a)
            .fold(f64::NEG_INFINITY, f64::max);
        if aucs[0] >= small {
            wins += 1;
        }
    }
    assert!(wins >= 4, "dominant shard won {wins} of 5 seeds");
}

#[test]
fn trained_aggregator_does_not_degrade_the_ensemble() {
    let spec = SyntheticSpec::default();
    let (train, test) = split(&spec, 21);
    let plan = plan_from_named(5, Scheme::Dominant60).unwrap();
    let (shards, _) = apply_plan(&train, &plan, &mut RngStream::new(21, 2)).unwrap();
    let base = RngStream::new(21, 3);
    let Trainer::Gbdt { trees, cnn } = gbdt() else {
        unreachable!()
    };
    let cfg = FederationConfig::default();
    let pos: Vec<bool> = test.labels().iter().map(|&l| l == 1).collect();

    let mut clients = make_clients(shards.clone(), &base);
    let (warm, _) = run_federated_gbdt(
        &mut clients,
        &trees,
        &cnn,
        &FederationConfig {
            n_rounds: 0,
            ..cfg.clone()
        },
        &base,
        None,
    )
    .unwrap();
    let plain = warm.ensemble.predict_proba(test.features()).unwrap();
    let plain_auc = auc(&(0..plain.rows()).map(|r| plain.get(r, 1)).collect::<Vec<_>>(), &pos).unwrap();

    let mut clients = make_clients(shards, &base);
    let (trained, reports) = run_federated_gbdt(&mut clients, &trees, &cnn, &cfg, &base, None).unwrap();
    assert_eq!(reports.len(), cfg.n_rounds + 1);
    let trained_auc = test_auc(&GlobalModel::Gbdt(trained), &test);
    assert!(
        trained_auc >= plain_auc - 0.02,
        "trained {trained_auc} vs plain {plain_auc}"
    );
}

#[test]
fn aggregator_rounds_use_fedavg() {
    let spec = SyntheticSpec {
        n_samples: 600,
        ..Default::default()
    };
    let (train, _) = split(&spec, 31);
    let plan = plan_from_named(2, Scheme::Dominant60).unwrap();
    let (shards, _) = apply_plan(&train, &plan, &mut RngStream::new(31, 2)).unwrap();
    let base = RngStream::new(31, 3);
    let Trainer::Gbdt { trees, cnn } = gbdt() else {
        unreachable!()
    };
    let cfg = FederationConfig {
        n_rounds: 1,
        local_epochs: 2,
        full_participation: true,
        ..Default::default()
    };

    let mut clients = make_clients(shards.clone(), &base);
    let (after, _) = run_federated_gbdt(&mut clients, &trees, &cnn, &cfg, &base, None).unwrap();

    let mut clients = make_clients(shards, &base);
    let (warm, _) = run_federated_gbdt(
        &mut clients,
        &trees,
        &cnn,
        &FederationConfig {
            n_rounds: 0,
            ..cfg.clone()
        },
        &base,
        None,
    )
    .unwrap();
    let local = TrainConfig { epochs: 2, ..cnn };
    let updates: Vec<_> = clients
        .iter_mut()
        .map(|c| {
            let x = warm.ensemble.tree_prediction_matrix(c.shard.features()).unwrap();
            cnn_train(&warm.aggregator, &x, c.shard.labels(), &local, &mut c.rng)
                .unwrap()
                .0
                .params
        })
        .collect();
    assert_eq!(after.aggregator.params, fedavg_aggregate(&updates).unwrap());
    assert_eq!(after.ensemble, warm.ensemble);
}
