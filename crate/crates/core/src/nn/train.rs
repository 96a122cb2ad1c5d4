use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::vae::{standard_normal, VaeModel, LATENT_DIM};
use super::Tensor;
use crate::codec::{Dataset, Split, IMAGE_SIZE, PIXELS};
use crate::{seeded_rng, Error, Result};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch: 32,
            lr: 1e-3,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean total loss over the epoch's mini-batches, weighted by batch size.
    pub train_loss: f64,
    pub train_recon: f64,
    pub train_kl: f64,
    /// Total loss on the test split after the epoch.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Images of one split in a canonical order (by bc id, then pixel bits), so
/// training does not depend on record order in the file.
fn split_images(ds: &Dataset, split: Split) -> Vec<&[f32]> {
    let mut recs: Vec<_> = ds.split_records(split).collect();
    recs.sort_by(|a, b| {
        a.bc_id.cmp(&b.bc_id).then_with(|| {
            let ka = a.depth.pixels.iter().map(|p| p.to_bits());
            let kb = b.depth.pixels.iter().map(|p| p.to_bits());
            ka.cmp(kb)
        })
    });
    recs.into_iter()
        .map(|r| r.depth.pixels.as_slice())
        .collect()
}

fn stack(images: &[&[f32]], idx: &[usize]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(idx.len() * PIXELS);
    for &i in idx {
        data.extend_from_slice(images[i]);
    }
    Tensor {
        shape: alloc::vec![idx.len(), IMAGE_SIZE, IMAGE_SIZE, 1],
        data,
    }
}

fn validation_loss(
    model: &VaeModel<f32>,
    images: &[&[f32]],
    batch: usize,
    seed: u64,
) -> Result<f64> {
    // The same noise every epoch keeps the curve free of sampling jitter.
    let mut rng = seeded_rng(seed, VALIDATION_STREAM);
    let idx: Vec<usize> = (0..images.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch) {
        let x = stack(images, chunk);
        let eps = standard_normal(&[chunk.len(), LATENT_DIM], &mut rng);
        total += model.loss_with_noise(&x, &eps)?.total * chunk.len() as f64;
    }
    Ok(total / images.len() as f64)
}

/// Trains a freshly initialized model on the train split. `on_epoch` sees the
/// statistics and the weights after every epoch (for logging and checkpoints).
pub fn train(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &VaeModel<f32>),
) -> Result<(VaeModel<f32>, TrainHistory)> {
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let train_images = split_images(ds, Split::Train);
    let val_images = split_images(ds, Split::Test);
    if train_images.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_images.is_empty() {
        return Err(Error::EmptySplit("test"));
    }
    let mut model = VaeModel::<f32>::init(&mut seeded_rng(cfg.seed, INIT_STREAM));
    let sizes: Vec<usize> = model.parameters().iter().map(|t| t.len()).collect();
    let mut adam = AdamState::<f32>::new(&sizes, cfg.adam);
    let mut rng = seeded_rng(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_images.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch) {
            let x = stack(&train_images, chunk);
            let (loss, grad) = model.loss_and_grads(&x, &mut rng)?;
            let w = chunk.len() as f64;
            total += loss.total * w;
            recon += loss.recon * w;
            kl += loss.kl * w;
            let grads: Vec<&[f32]> = grad
                .parameters()
                .iter()
                .map(|t| t.data.as_slice())
                .collect();
            let mut params: Vec<&mut [f32]> = model
                .parameters_mut()
                .into_iter()
                .map(|t| t.data.as_mut_slice())
                .collect();
            adam.update(&mut params, &grads, cfg.lr);
        }
        let n = train_images.len() as f64;
        let stats = EpochStats {
            epoch,
            train_loss: total / n,
            train_recon: recon / n,
            train_kl: kl / n,
            val_loss: validation_loss(&model, &val_images, cfg.batch, cfg.seed)?,
        };
        log::debug!(
            "epoch {epoch}: train {:.4} val {:.4}",
            stats.train_loss,
            stats.val_loss
        );
        on_epoch(&stats, &model);
        history.epochs.push(stats);
    }
    Ok((model, history))
}
