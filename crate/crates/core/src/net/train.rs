use std::collections::HashSet;
use std::f64::consts::PI;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::{sample_mask, MaskSet};
use super::model::{Gradients, MmnModel, ParamKind};
use super::normalize::InputStats;
use super::{SubjectRecord, CONTEXT_DIM};
use crate::conv::FeatureMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mask_fraction: f64,
    pub lr: f64,
    pub lr_min: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mask_fraction: 0.5,
            lr: 1e-3,
            lr_min: 0.0,
            epochs: 50,
            weight_decay: 1e-4,
            patience: 10,
            batch_size: 8,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(Error::Config(format!(
                "mask_fraction {} outside (0, 1)",
                self.mask_fraction
            )));
        }
        if self.lr < 0.0 || self.lr_min < 0.0 || self.lr_min > self.lr {
            return Err(Error::Config("learning rates must satisfy 0 <= lr_min <= lr".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `η_t = η_min + ½(η_max − η_min)(1 + cos(π·t/T))`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let frac = if total == 0 {
        1.0
    } else {
        t.min(total) as f64 / total as f64
    };
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * frac).cos())
}

/// Adam with decoupled weight decay. Decay applies to filter coefficients
/// and the context projection only.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(model: &MmnModel, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = Gradients::zeros_like(model).0;
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut MmnModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let kinds: Vec<ParamKind> = model.parameters().iter().map(|(k, _)| *k).collect();
        for (i, p) in model.parameters_mut().into_iter().enumerate() {
            let decay = matches!(kinds[i], ParamKind::Sh | ParamKind::ContextProjection);
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.0[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                let wd = if decay { self.weight_decay * p[j] } else { 0.0 };
                p[j] -= lr * (update + wd);
            }
        }
    }
}

/// One masked training example in normalized space.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    /// Position in the dataset; fixes the reduction order.
    pub index: usize,
    pub x: &'a FeatureMap,
    pub context: [f64; CONTEXT_DIM],
    pub mask: &'a [usize],
}

/// Mean loss and mean gradient over a batch. Examples are evaluated in
/// parallel and summed in ascending `index` order, so the result does not
/// depend on the order of `examples` or on the thread count.
pub fn batch_loss_and_gradients(model: &MmnModel, examples: &[Example<'_>]) -> Result<(f64, Gradients)> {
    if examples.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let mut sorted: Vec<&Example<'_>> = examples.iter().collect();
    sorted.sort_by_key(|e| e.index);
    let parts: Vec<(f64, Gradients)> = sorted
        .par_iter()
        .map(|e| model.loss_and_gradients(e.x, &e.context, e.mask))
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g);
    }
    let n = examples.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Mean masked loss over a fixed set of examples.
pub fn evaluate(model: &MmnModel, examples: &[Example<'_>]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Usage("empty evaluation set".into()));
    }
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|e| model.masked_loss(e.x, &e.context, e.mask))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn initial_val_loss(&self) -> f64 {
        self.records[0].val_loss
    }
}

struct Prepared {
    x: Vec<FeatureMap>,
    ctx: Vec<[f64; CONTEXT_DIM]>,
}

fn prepare(stats: &InputStats, subjects: &[SubjectRecord]) -> Result<Prepared> {
    let x = subjects
        .iter()
        .map(|s| stats.normalize(&s.features))
        .collect::<Result<_>>()?;
    let ctx = subjects
        .iter()
        .map(|s| stats.context_features(&s.context))
        .collect::<Result<_>>()?;
    Ok(Prepared { x, ctx })
}

/// Fits normalization on `train_set`, then runs masked-reconstruction
/// training with AdamW, a per-epoch cosine schedule and early stopping on
/// the validation loss. The model ends with the best-epoch parameters.
pub fn train(
    model: &mut MmnModel,
    train_set: &[SubjectRecord],
    val_set: &[SubjectRecord],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Usage(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let train_ids: HashSet<&str> = train_set.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = val_set.iter().find(|s| train_ids.contains(s.id.as_str())) {
        return Err(Error::Usage(format!(
            "subject {} is in both train and validation sets",
            s.id
        )));
    }
    model.set_stats(InputStats::fit(train_set)?)?;
    let tr = prepare(model.stats(), train_set)?;
    let va = prepare(model.stats(), val_set)?;
    let nv = model.input_vertices();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    val_rng.set_stream(1);
    let val_masks: Vec<MaskSet> = (0..val_set.len())
        .map(|_| sample_mask(nv, cfg.mask_fraction, &mut val_rng))
        .collect::<Result<_>>()?;
    let val_examples: Vec<Example<'_>> = (0..val_set.len())
        .map(|i| Example {
            index: i,
            x: &va.x[i],
            context: va.ctx[i],
            mask: &val_masks[i],
        })
        .collect();

    let initial = evaluate(model, &val_examples)?;
    info!("epoch 0: val {initial:.5}");
    let mut records = vec![EpochRecord {
        epoch: 0,
        lr: cfg.lr,
        train_loss: None,
        val_loss: initial,
    }];
    let mut best = (0usize, initial, model.clone());
    let mut opt = AdamW::new(model, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr, cfg.lr_min);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let masks: Vec<MaskSet> = chunk
                .iter()
                .map(|_| sample_mask(nv, cfg.mask_fraction, &mut rng))
                .collect::<Result<_>>()?;
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .zip(&masks)
                .map(|(&i, m)| Example {
                    index: i,
                    x: &tr.x[i],
                    context: tr.ctx[i],
                    mask: m,
                })
                .collect();
            let (loss, grads) = batch_loss_and_gradients(model, &batch)?;
            epoch_loss += loss * chunk.len() as f64;
            opt.step(model, &grads, lr);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = evaluate(model, &val_examples)?;
        info!("epoch {epoch}: lr {lr:.2e} train {train_loss:.5} val {val_loss:.5}");
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: Some(train_loss),
            val_loss,
        });
        if val_loss < best.1 {
            best = (epoch, val_loss, model.clone());
        } else if epoch - best.0 >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_val_loss, best_model) = best;
    *model = best_model;
    Ok(TrainHistory {
        records,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}
