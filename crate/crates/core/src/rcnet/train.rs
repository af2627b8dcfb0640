use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{NetworkParams, RcNet, Skips};
use super::{sample_mask, ConnectionMask, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::volume::{LabelVolume, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    BinaryCrossEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connections {
    /// Fresh Bernoulli(alpha) mask every iteration.
    #[default]
    Randomized,
    /// Every skip always on (the static U-Net graph).
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: Loss,
    pub connections: Connections,
    /// Seeds mask sampling and the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-4, epochs: 60, batch_size: 1, loss: Loss::BinaryCrossEntropy, connections: Connections::Randomized, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::OutOfRange { name: "learning_rate", value: self.learning_rate, range: "[0, inf)" });
        }
        if self.batch_size == 0 {
            return Err(Error::OutOfRange { name: "batch_size", value: 0.0, range: "[1, inf)" });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// Loss of every iteration, measured before its update.
    pub iteration_losses: Vec<f64>,
    /// Mean iteration loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mean voxelwise binary cross-entropy computed from logits, and its
/// gradient w.r.t. the logits.
pub fn bce_with_logits(logits: &Tensor, labels: &[u8]) -> Result<(f64, Tensor)> {
    if logits.len() != labels.len() {
        return Err(Error::shape("labels vs logits", logits.shape().to_vec(), [labels.len()]));
    }
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .data()
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = y as f64;
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
            (crate::tensor::sigmoid(z) - y) / n
        })
        .collect();
    Ok((loss / n, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Plain SGD on voxelwise binary cross-entropy. One iteration processes one
/// batch under one freshly sampled connection mask. Images are standardized
/// before they enter the network.
pub fn train_toy(spec: &NetworkSpec, config: &TrainConfig, dataset: &[(Volume, LabelVolume)]) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidShape { shape: vec![0], reason: "training set is empty".into() });
    }
    for (v, l) in dataset {
        if v.dims() != l.dims() {
            return Err(Error::shape("label volume vs image", v.dims().to_vec(), l.dims().to_vec()));
        }
        spec.check_input(v.dims())?;
    }

    let mut net = RcNet::init(spec.clone())?;
    let mut mask_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let inputs: Vec<Tensor> = dataset.iter().map(|(v, _)| v.standardized().to_tensor()).collect();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut iteration_losses = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let mask = match config.connections {
                Connections::Randomized => sample_mask(spec.alpha, spec.depth, &mut mask_rng),
                Connections::Fixed => ConnectionMask::all(spec.depth, true),
            };
            let mut grads = net.params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let trace = net.forward_trace(&inputs[i], Skips::Mask(&mask))?;
                let (loss, g_logits) = bce_with_logits(&trace.logits, dataset[i].1.labels())?;
                let g = net.backward(&trace, &g_logits)?;
                grads.axpy(1.0 / batch.len() as f64, &g)?;
                batch_loss += loss / batch.len() as f64;
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { iteration: iteration_losses.len() });
            }
            if config.learning_rate > 0.0 {
                net.params.axpy(-config.learning_rate, &grads)?;
            }
            iteration_losses.push(batch_loss);
            epoch_total += batch_loss;
            batches += 1;
        }
        let mean = epoch_total / batches as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainReport { params: net.params, iteration_losses, epoch_losses })
}
