use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::layouts::{LayoutName, ModelLayout};
use crate::nn::{softmax_cross_entropy, Network, Sgd};
use crate::quantifiers::Quantifier;

pub const LEARNING_RATES: [f64; 3] = [0.1, 0.01, 0.001];
pub const BATCH_SIZES: [usize; 5] = [32, 50, 64, 128, 256];
pub const EPOCH_CHECKPOINTS: [usize; 3] = [200, 500, 700];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
    pub layout: LayoutName,
    pub quantifier: Quantifier,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 200,
            momentum: 0.9,
            seed: 0,
            layout: LayoutName::Model7,
            quantifier: Quantifier::Most,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        self.quantifier.validate()
    }
}

/// Per-epoch mean training loss.
pub type LossHistory = Vec<f64>;

fn check_data(layout: &ModelLayout, data: &Dataset) -> Result<()> {
    if data.variables() != layout.variables() || data.window() != layout.window() {
        return Err(Error::invalid(
            "data",
            format!(
                "windows are {}x{}, the layout expects {}x{}",
                data.variables(),
                data.window(),
                layout.variables(),
                layout.window()
            ),
        ));
    }
    if let Some(&bad) = data.labels().iter().find(|&&l| l >= layout.classes()) {
        return Err(Error::invalid(
            "data",
            format!("label {bad} is outside the {} classes of the layout", layout.classes()),
        ));
    }
    Ok(())
}

/// Trains a fresh network for `config.epochs` epochs.
pub fn train(layout: &ModelLayout, data: &Dataset, config: &TrainConfig) -> Result<(Network, LossHistory)> {
    train_with_checkpoints(layout, data, config, &[], |_, _| Ok(()))
}

/// Like [`train`], calling `on_checkpoint(epoch, &network)` after each epoch
/// listed in `checkpoints` (and after epoch 0 if listed). Nothing in an
/// epoch depends on the total epoch count, so the network seen at epoch `e`
/// is the one a separate `e`-epoch run would return.
///
/// Each epoch visits the windows in a fresh permutation drawn from the
/// config seed and the epoch index; the last batch may be short.
pub fn train_with_checkpoints(
    layout: &ModelLayout,
    data: &Dataset,
    config: &TrainConfig,
    checkpoints: &[usize],
    mut on_checkpoint: impl FnMut(usize, &Network) -> Result<()>,
) -> Result<(Network, LossHistory)> {
    config.validate()?;
    check_data(layout, data)?;
    let mut net = Network::new(layout, config.seed)?;
    let mut opt = Sgd::new(config.learning_rate, config.momentum)?;
    let mut history = Vec::with_capacity(config.epochs);
    if checkpoints.contains(&0) {
        on_checkpoint(0, &net)?;
    }
    if data.is_empty() && config.epochs > 0 {
        return Err(Error::invalid("data", "no training windows"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (input, labels) = data.batch(batch)?;
            let (logits, caches) = net.forward_train(&input)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            let grads = net.backward(grad, caches)?;
            opt.step(net.parameters_mut(), &grads);
        }
        let mean = total / data.len() as f64;
        if !net.parameters().iter().all(|p| p.iter().all(|x| x.is_finite())) {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        history.push(mean);
        if checkpoints.contains(&epoch) {
            on_checkpoint(epoch, &net)?;
        }
    }
    Ok((net, history))
}
