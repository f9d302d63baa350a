use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Conv;
use super::{NetworkSpec, NetworkWeights, TrainingMeta};
use crate::datasetgen::{hex_digest, DatasetManifest, Kind, Split};
use crate::field::Raster;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_drop_every: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-4,
            lr_drop_every: 5,
            lr_drop_factor: 5.0,
            batch_size: 1,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.initial_lr > 0.0
            && self.lr_drop_every > 0
            && self.lr_drop_factor > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.epsilon > 0.0;
        let betas = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !positive || !betas {
            return Err(Error::Parameter(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// Learning rate for 1-based `epoch`: stepwise decay every `lr_drop_every` epochs.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    let drops = (epoch.max(1) - 1) / cfg.lr_drop_every;
    cfg.initial_lr / cfg.lr_drop_factor.powi(drops as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

struct Adam {
    m: Vec<Conv>,
    v: Vec<Conv>,
    t: i32,
}

impl Adam {
    fn new(w: &NetworkWeights) -> Self {
        let zero: Vec<Conv> = w
            .layers
            .iter()
            .map(|c| Conv::zeros(c.in_channels, c.out_channels, c.kernel))
            .collect();
        Adam {
            m: zero.clone(),
            v: zero,
            t: 0,
        }
    }

    fn step(&mut self, w: &mut NetworkWeights, grads: &[Conv], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in w.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pairs = [
                (&mut p.weights, &g.weights, &mut m.weights, &mut v.weights),
                (&mut p.bias, &g.bias, &mut m.bias, &mut v.bias),
            ];
            for (pv, gv, mv, vv) in pairs {
                for i in 0..pv.len() {
                    mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
                    vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
                    pv[i] -= lr * (mv[i] / c1) / ((vv[i] / c2).sqrt() + cfg.epsilon);
                }
            }
        }
    }
}

fn mean_loss(w: &NetworkWeights, n: usize, load: &dyn Fn(usize) -> Result<(Raster, Raster)>) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..n {
        let (input, target) = load(i)?;
        let out = w.forward(&input)?;
        total += out
            .values()
            .iter()
            .zip(target.values())
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
            / out.len() as f64;
    }
    Ok(total / n as f64)
}

fn run(
    spec: NetworkSpec,
    cfg: &TrainConfig,
    n_train: usize,
    load_train: &dyn Fn(usize) -> Result<(Raster, Raster)>,
    n_val: usize,
    load_val: &dyn Fn(usize) -> Result<(Raster, Raster)>,
) -> Result<NetworkWeights> {
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::Count("no training pairs of the requested kind".into()));
    }
    let mut weights = NetworkWeights::init(spec, cfg.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut adam = Adam::new(&weights);
    let initial_loss = mean_loss(&weights, n_train, load_train)?;
    log::info!("initial training loss {initial_loss:.6e} over {n_train} pairs");
    let mut log_rows = Vec::new();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=cfg.epochs {
        let lr = learning_rate(cfg, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<Conv>> = None;
            for &i in batch {
                let (input, target) = load_train(i)?;
                let (loss, grads) = weights.loss_and_grad(&input, &target)?;
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        reason: format!("loss became {loss}"),
                    });
                }
                total += loss;
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        for (ac, g) in a.iter_mut().zip(&grads) {
                            ac.weights.iter_mut().zip(&g.weights).for_each(|(x, y)| *x += y);
                            ac.bias.iter_mut().zip(&g.bias).for_each(|(x, y)| *x += y);
                        }
                        a
                    }
                });
            }
            let mut grads = acc.expect("non-empty batch");
            if batch.len() > 1 {
                let s = 1.0 / batch.len() as f64;
                for g in &mut grads {
                    g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|x| *x *= s);
                }
            }
            adam.step(&mut weights, &grads, lr, cfg);
        }
        let train_loss = total / n_train as f64;
        if !weights.layers.iter().all(|c| c.weights.iter().chain(&c.bias).all(|v| v.is_finite())) {
            return Err(Error::Training {
                epoch,
                reason: "weights became non-finite".into(),
            });
        }
        let validation_loss = if n_val > 0 {
            Some(mean_loss(&weights, n_val, load_val)?)
        } else {
            None
        };
        log::info!("epoch {epoch}: lr {lr:.3e} train {train_loss:.6e} validation {validation_loss:?}");
        log_rows.push(EpochLog {
            epoch,
            lr,
            train_loss,
            validation_loss,
        });
    }
    let final_loss = mean_loss(&weights, n_train, load_train)?;
    weights.meta = TrainingMeta {
        epochs: cfg.epochs,
        initial_loss,
        final_loss,
        epoch_log: log_rows,
        seed: cfg.seed,
        train_pairs: n_train,
        ..TrainingMeta::default()
    };
    Ok(weights)
}

/// Trains on in-memory `(input, target)` pairs; `validation` only feeds the epoch log.
pub fn train_pairs(
    train: &[(Raster, Raster)],
    validation: &[(Raster, Raster)],
    spec: NetworkSpec,
    cfg: &TrainConfig,
) -> Result<NetworkWeights> {
    run(
        spec,
        cfg,
        train.len(),
        &|i| Ok(train[i].clone()),
        validation.len(),
        &|i| Ok(validation[i].clone()),
    )
}

/// Trains one network on the training split of `kind` in `dataset`,
/// streaming pairs from disk.
pub fn train(dataset: &DatasetManifest, kind: Kind, spec: NetworkSpec, cfg: &TrainConfig) -> Result<NetworkWeights> {
    let train: Vec<_> = dataset.pairs_of(kind).filter(|p| p.split == Split::Train).collect();
    let val: Vec<_> = dataset.pairs_of(kind).filter(|p| p.split == Split::Validation).collect();
    let load = |rec: &crate::datasetgen::PairRecord| -> Result<(Raster, Raster)> {
        let root = &dataset.root;
        Ok((
            crate::bench::io::read_raster(root.join(&rec.input))?,
            crate::bench::io::read_raster(root.join(&rec.target))?,
        ))
    };
    let mut w = run(
        spec,
        cfg,
        train.len(),
        &|i| load(train[i]),
        val.len(),
        &|i| load(val[i]),
    )?;
    w.meta.kind = Some(kind.to_string());
    w.meta.dataset_hash = dataset.hash()?;
    w.meta.params_hash = hex_digest(serde_json::to_string(&dataset.params)?.as_bytes());
    Ok(w)
}
