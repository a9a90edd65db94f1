use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fedavg_aggregate, sample_clients, FederationConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbdt::{cnn_train, train_trees, CnnAggregator, CnnArchitecture, GbdtConfig, TreeEnsemble};
use crate::model::{Mlp, Objective, ParamVector, TrainConfig};
use crate::numerics::{Matrix, RngStream};

const INIT_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const CLIENT_STREAM_BASE: u64 = 1 << 20;

/// One simulated participant. Its random stream persists across rounds.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub shard: Dataset,
    pub rng: RngStream,
}

impl ClientState {
    pub fn n_samples(&self) -> usize {
        self.shard.n_samples()
    }
}

/// Clients in shard order, each with its own stream derived from `base`.
pub fn make_clients(shards: Vec<Dataset>, base: &RngStream) -> Vec<ClientState> {
    shards
        .into_iter()
        .enumerate()
        .map(|(id, shard)| ClientState {
            id,
            shard,
            rng: base.substream(CLIENT_STREAM_BASE + id as u64),
        })
        .collect()
}

/// Model family plus its optimiser settings. The `epochs` field of each
/// [`TrainConfig`] is ignored: epochs come from the federation config.
#[derive(Clone, Debug)]
pub enum Trainer {
    Mlp { model: Mlp, sgd: TrainConfig },
    Gbdt { trees: GbdtConfig, cnn: TrainConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub ensemble: TreeEnsemble,
    pub aggregator: CnnAggregator,
}

impl GbdtModel {
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.aggregator.predict_proba(&self.ensemble.tree_prediction_matrix(x)?)
    }
}

#[derive(Clone, Debug)]
pub enum GlobalModel {
    Mlp { model: Mlp, params: ParamVector },
    Gbdt(GbdtModel),
}

impl GlobalModel {
    /// Class probabilities, `rows × n_classes`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            GlobalModel::Mlp { model, params } => model.predict(params.values(), x),
            GlobalModel::Gbdt(m) => m.predict_proba(x),
        }
    }

    /// Parameters shared between rounds (MLP weights or aggregator weights).
    pub fn params(&self) -> &ParamVector {
        match self {
            GlobalModel::Mlp { params, .. } => params,
            GlobalModel::Gbdt(m) => &m.aggregator.params,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub participant_ids: Vec<usize>,
    /// Sample-weighted mean of `client_losses`.
    pub global_loss: f64,
    /// Training loss of the aggregated model on each client's shard.
    pub client_losses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_auc: Option<f64>,
}

pub type EvalHook<'a> = &'a (dyn Fn(&GlobalModel) -> Result<f64> + Sync);

fn check_clients(clients: &[ClientState]) -> Result<()> {
    let first = clients.first().ok_or_else(|| Error::invalid("no clients"))?;
    for c in clients {
        if c.shard.is_empty() {
            return Err(Error::invalid(format!("client {} has no data", c.id)));
        }
        if c.shard.n_classes() != first.shard.n_classes() {
            return Err(Error::invalid(format!(
                "client {} has {} classes, client {} has {}",
                c.id,
                c.shard.n_classes(),
                first.id,
                first.shard.n_classes()
            )));
        }
        if c.shard.feature_names() != first.shard.feature_names() {
            return Err(Error::invalid(format!(
                "client {} has a different feature schema",
                c.id
            )));
        }
    }
    Ok(())
}

fn report(
    round: usize,
    participant_ids: Vec<usize>,
    losses: Vec<f64>,
    clients: &[ClientState],
    model: &GlobalModel,
    eval: Option<EvalHook<'_>>,
) -> Result<RoundReport> {
    let total: f64 = clients.iter().map(|c| c.n_samples() as f64).sum();
    let global_loss = clients
        .iter()
        .zip(&losses)
        .map(|(c, l)| c.n_samples() as f64 / total * l)
        .sum();
    Ok(RoundReport {
        round,
        participant_ids,
        global_loss,
        client_losses: losses,
        eval_auc: eval.map(|f| f(model)).transpose()?,
    })
}

/// Broadcast, local training on the sampled clients, FedAvg; repeated for
/// `cfg.n_rounds` rounds. Participants train concurrently but are aggregated
/// in client order, so results do not depend on scheduling.
pub fn run_federated_nn(
    clients: &mut [ClientState],
    model: &Mlp,
    sgd: &TrainConfig,
    cfg: &FederationConfig,
    base: &RngStream,
    eval: Option<EvalHook<'_>>,
) -> Result<(ParamVector, Vec<RoundReport>)> {
    cfg.validate()?;
    check_clients(clients)?;
    let local = TrainConfig {
        epochs: cfg.local_epochs,
        ..sgd.clone()
    };
    let mut sampler = base.substream(SAMPLE_STREAM);
    let mut global = model.init(&mut base.substream(INIT_STREAM));
    let mut reports = Vec::with_capacity(cfg.n_rounds);
    for round in 1..=cfg.n_rounds {
        let ids = sample_clients(clients.len(), cfg, &mut sampler);
        let updates = clients
            .par_iter_mut()
            .filter(|c| ids.binary_search(&c.id).is_ok())
            .map(|c| model.train(&global, &c.shard, &local, &mut c.rng).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        global = fedavg_aggregate(&updates)?;
        let losses = clients
            .par_iter()
            .map(|c| model.mean_loss(global.values(), c.shard.features(), c.shard.labels()))
            .collect::<Result<Vec<_>>>()?;
        let snapshot = GlobalModel::Mlp {
            model: model.clone(),
            params: global.clone(),
        };
        reports.push(report(round, ids, losses, clients, &snapshot, eval)?);
    }
    Ok((global, reports))
}

fn round_weights(parts: &[(TreeEnsemble, usize)]) -> Vec<f64> {
    let total: usize = parts.iter().map(|p| p.1).sum();
    parts
        .iter()
        .flat_map(|(e, n)| std::iter::repeat(e.learning_rate * (*n as f64 / total as f64)).take(e.n_rounds()))
        .collect()
}

fn warm_started(parts: &[(TreeEnsemble, usize)]) -> Result<GbdtModel> {
    let ensembles: Vec<TreeEnsemble> = parts.iter().map(|p| p.0.clone()).collect();
    let weights: Vec<f64> = parts.iter().map(|p| p.1 as f64).collect();
    let ensemble = TreeEnsemble::concat(&ensembles, &weights)?;
    let arch = CnnArchitecture::new(ensemble.n_rounds(), ensemble.n_classes)?;
    let aggregator = CnnAggregator::warm_start(arch, &round_weights(parts), &ensemble.base_score)?;
    Ok(GbdtModel { ensemble, aggregator })
}

/// Round 1: every client grows its trees and the server concatenates them in
/// client order; the aggregator starts at the sample-weighted average of the
/// client ensembles. Rounds 2 onwards: sampled clients train the aggregator
/// on their tree-prediction vectors and the server applies FedAvg.
pub fn run_federated_gbdt(
    clients: &mut [ClientState],
    trees: &GbdtConfig,
    cnn: &TrainConfig,
    cfg: &FederationConfig,
    base: &RngStream,
    eval: Option<EvalHook<'_>>,
) -> Result<(GbdtModel, Vec<RoundReport>)> {
    cfg.validate()?;
    check_clients(clients)?;
    let local = TrainConfig {
        epochs: cfg.local_epochs,
        ..cnn.clone()
    };
    let mut sampler = base.substream(SAMPLE_STREAM);
    let parts = clients
        .par_iter()
        .map(|c| train_trees(&c.shard, trees, None).map(|e| (e, c.n_samples())))
        .collect::<Result<Vec<_>>>()?;
    let mut model = warm_started(&parts)?;
    let inputs = clients
        .par_iter()
        .map(|c| model.ensemble.tree_prediction_matrix(c.shard.features()))
        .collect::<Result<Vec<_>>>()?;
    let losses = |model: &GbdtModel, clients: &[ClientState]| -> Result<Vec<f64>> {
        let obj = model.aggregator.objective()?;
        clients
            .iter()
            .zip(&inputs)
            .map(|(c, x)| obj.mean_loss(model.aggregator.params.values(), x, c.shard.labels()))
            .collect()
    };
    let mut reports = Vec::with_capacity(cfg.n_rounds + 1);
    let all: Vec<usize> = (0..clients.len()).collect();
    let l = losses(&model, clients)?;
    reports.push(report(1, all, l, clients, &GlobalModel::Gbdt(model.clone()), eval)?);
    for round in 2..=cfg.n_rounds + 1 {
        let ids = sample_clients(clients.len(), cfg, &mut sampler);
        let agg = &model.aggregator;
        let updates = clients
            .par_iter_mut()
            .zip(inputs.par_iter())
            .filter(|(c, _)| ids.binary_search(&c.id).is_ok())
            .map(|(c, x)| cnn_train(agg, x, c.shard.labels(), &local, &mut c.rng).map(|(a, _)| a.params))
            .collect::<Result<Vec<_>>>()?;
        model.aggregator = CnnAggregator {
            params: fedavg_aggregate(&updates)?,
        };
        let l = losses(&model, clients)?;
        reports.push(report(round, ids, l, clients, &GlobalModel::Gbdt(model.clone()), eval)?);
    }
    Ok((model, reports))
}

pub fn run_federated(
    clients: &mut [ClientState],
    trainer: &Trainer,
    cfg: &FederationConfig,
    base: &RngStream,
    eval: Option<EvalHook<'_>>,
) -> Result<(GlobalModel, Vec<RoundReport>)> {
    match trainer {
        Trainer::Mlp { model, sgd } => {
            let (params, reports) = run_federated_nn(clients, model, sgd, cfg, base, eval)?;
            Ok((
                GlobalModel::Mlp {
                    model: model.clone(),
                    params,
                },
                reports,
            ))
        }
        Trainer::Gbdt { trees, cnn } => {
            let (m, reports) = run_federated_gbdt(clients, trees, cnn, cfg, base, eval)?;
            Ok((GlobalModel::Gbdt(m), reports))
        }
    }
}

/// Independent training per client with the same total budget as a
/// federated run (`n_rounds × local_epochs` epochs), starting from the same
/// initial parameters and using each client's own stream.
pub fn run_local_baseline(
    clients: &mut [ClientState],
    trainer: &Trainer,
    cfg: &FederationConfig,
    base: &RngStream,
) -> Result<Vec<GlobalModel>> {
    cfg.validate()?;
    check_clients(clients)?;
    let epochs = cfg.n_rounds * cfg.local_epochs;
    match trainer {
        Trainer::Mlp { model, sgd } => {
            let init = model.init(&mut base.substream(INIT_STREAM));
            let sgd = TrainConfig { epochs, ..sgd.clone() };
            clients
                .par_iter_mut()
                .map(|c| {
                    let (params, _) = model.train(&init, &c.shard, &sgd, &mut c.rng)?;
                    Ok(GlobalModel::Mlp {
                        model: model.clone(),
                        params,
                    })
                })
                .collect()
        }
        Trainer::Gbdt { trees, cnn } => {
            let cnn = TrainConfig { epochs, ..cnn.clone() };
            clients
                .par_iter_mut()
                .map(|c| {
                    let ensemble = train_trees(&c.shard, trees, None)?;
                    let warm = warm_started(&[(ensemble, c.n_samples())])?;
                    let x = warm.ensemble.tree_prediction_matrix(c.shard.features())?;
                    let (aggregator, _) = cnn_train(&warm.aggregator, &x, c.shard.labels(), &cnn, &mut c.rng)?;
                    Ok(GlobalModel::Gbdt(GbdtModel {
                        ensemble: warm.ensemble,
                        aggregator,
                    }))
                })
                .collect()
        }
    }
}

/// One model on the whole training set: the local baseline with a single client.
pub fn run_centralized(
    train: &Dataset,
    trainer: &Trainer,
    cfg: &FederationConfig,
    base: &RngStream,
) -> Result<GlobalModel> {
    let mut clients = make_clients(vec![train.clone()], base);
    let mut models = run_local_baseline(&mut clients, trainer, cfg, base)?;
    models.pop().ok_or_else(|| Error::invalid("no model trained"))
}
