use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::network::Network;
use crate::data::{augment, augment_rng, AugmentConfig, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary cross-entropy on `sigmoid(f(x))`.
    #[default]
    Logistic,
}

impl Loss {
    /// Loss of output `f` against a `{0, 1}` label.
    pub fn value(self, f: f64, label: u32) -> f64 {
        match self {
            Loss::Logistic => {
                if label == 1 {
                    softplus(-f)
                } else {
                    softplus(f)
                }
            }
        }
    }

    /// Derivative of the loss with respect to `f`.
    pub fn derivative(self, f: f64, label: u32) -> f64 {
        match self {
            Loss::Logistic => sigmoid(f) - f64::from(label),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mini-batch SGD settings. Defaults follow the usual Keras SGD defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Set from the checkpoint schedule by `with_schedule`.
    #[serde(skip)]
    pub epochs: u32,
    /// Epochs after which to snapshot parameters; sorted, includes 0.
    pub checkpoint_epochs: Vec<u32>,
    pub loss: Loss,
    pub seed: u64,
    pub augmentation: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.0,
            batch_size: 32,
            epochs: 10,
            checkpoint_epochs: vec![0, 1, 3, 10],
            loss: Loss::Logistic,
            seed: 0,
            augmentation: None,
        }
    }
}

impl TrainConfig {
    /// Config whose epoch count and checkpoint schedule come from `schedule`.
    pub fn with_schedule(mut self, schedule: &[u32]) -> Self {
        self.checkpoint_epochs = schedule.to_vec();
        self.epochs = schedule.iter().copied().max().unwrap_or(0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let cps = &self.checkpoint_epochs;
        if cps.first() != Some(&0) {
            return Err(Error::Config("checkpoint epochs must start with 0".into()));
        }
        if cps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("checkpoint epochs {cps:?} must be strictly increasing")));
        }
        if let Some(&last) = cps.last() {
            if last > self.epochs {
                return Err(Error::Config(format!(
                    "checkpoint epoch {last} exceeds the {} training epochs",
                    self.epochs
                )));
            }
        }
        if let Some(aug) = &self.augmentation {
            aug.validate()?;
        }
        Ok(())
    }
}

fn check_data(data: &Dataset, net: &Network) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if let Some(bad) = data.labels().iter().find(|&&l| l > 1) {
        return Err(Error::Input(format!("label {bad} is not in {{0, 1}}")));
    }
    if data.shape() != Some(net.input_shape()) {
        return Err(Error::Input(format!(
            "dataset images are {:?}, network expects {}",
            data.shape(),
            net.input_shape()
        )));
    }
    Ok(())
}

/// Mean training loss of `net` over `data`.
pub fn mean_loss(net: &Network, data: &Dataset, loss: Loss) -> Result<f64> {
    let per: Vec<f64> = data
        .images()
        .par_iter()
        .zip(data.labels())
        .map(|(x, &y)| Ok(loss.value(net.output(x)?, y)))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Trains `net` in place and returns a snapshot at every checkpoint epoch,
/// starting with the untouched initialization at epoch 0.
///
/// Examples are reshuffled every epoch by a generator seeded from
/// `cfg.seed`. Per-example gradients may be computed in parallel but are
/// summed in batch order, so results do not depend on the thread count.
pub fn train_sgd(net: &mut Network, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<Checkpoint>> {
    cfg.validate()?;
    check_data(data, net)?;
    let mut checkpoints = Vec::with_capacity(cfg.checkpoint_epochs.len());
    let mut next_cp = cfg.checkpoint_epochs.iter().peekable();
    if next_cp.next_if_eq(&&0).is_some() {
        checkpoints.push(Checkpoint::capture(net, 0, cfg.seed));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7368_7566_666c_6521);
    let mut velocity = vec![0.0; net.param_count()];
    let mut step = vec![0.0; net.param_count()];

    for epoch in 1..=cfg.epochs {
        if next_cp.peek().is_none() {
            break;
        }
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let image = &data.images()[i];
                    let augmented;
                    let x = match &cfg.augmentation {
                        Some(aug) => {
                            augmented = augment(image, &mut augment_rng(cfg.seed, epoch, i), aug)?;
                            &augmented
                        }
                        None => image,
                    };
                    let (acts, grad) = net.forward_with_grad(x)?;
                    Ok((cfg.loss.derivative(acts.output(), data.labels()[i]), grad))
                })
                .collect::<Result<_>>()?;
            step.fill(0.0);
            for (dloss, grad) in &grads {
                crate::linalg::axpy(*dloss, grad, &mut step);
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&step) {
                *v = cfg.momentum * *v - scale * g;
                *p += *v;
            }
        }
        if next_cp.next_if_eq(&&epoch).is_some() {
            checkpoints.push(Checkpoint::capture(net, epoch, cfg.seed));
        }
    }
    Ok(checkpoints)
}
