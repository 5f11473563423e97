//! The three training stages plus linear probes for the ablations.

use std::path::Path;

use log::info;
use presence_csi::Case;
use presence_nn::{seeded_rng, softmax, softmax_backward, Adam, LinearHead, Mode, Module, NUM_CLASSES, PROJECTION_DIM};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::augment;
use crate::batching::stratified_batches;
use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::losses::{cross_entropy, stage2_loss, supcon_loss};
use crate::model::{Branch, Heads};
use crate::s3fec::{s3fec_backward, s3fec_forward};
use crate::{Result, TrainError};

/// Per-stage RNG streams, so each stage is reproducible on its own.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    seeded_rng(seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// One loss-curve row; absent components are empty in the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub epoch: usize,
    pub stage: u8,
    pub loss: f64,
    pub supcon: Option<f64>,
    pub consultation: Option<f64>,
    pub cross_entropy: Option<f64>,
}

pub fn write_loss_csv(rows: &[LossRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Default)]
struct EpochMeans {
    count: usize,
    sums: [f64; 4],
}

impl EpochMeans {
    fn add(&mut self, values: [f64; 4]) {
        self.count += 1;
        self.sums.iter_mut().zip(values).for_each(|(s, v)| *s += v);
    }

    fn mean(&self, i: usize) -> f64 {
        self.sums[i] / self.count.max(1) as f64
    }
}

fn finite(stage: u8, epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() { Ok(()) } else { Err(TrainError::NonFinite(format!("stage {stage} loss at epoch {epoch}"))) }
}

/// Originals followed by one augmented view of each.
fn contrastive_views(images: &[f32], channels: usize, w: usize, h: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let per = channels * w * h;
    let mut batch = images.to_vec();
    for image in images.chunks(per) {
        batch.extend(augment(image, channels, w, h, &config.augment, rng)?);
    }
    Ok(batch)
}

/// One contrastive step: forward both views, take the loss and its
/// projection gradient from `objective`, back-propagate, update.
fn contrastive_step(
    branch: &mut Branch,
    adam: &mut Adam<f32>,
    views: &[f32],
    n: usize,
    w: usize,
    h: usize,
    objective: impl FnOnce(&[f32]) -> Result<([f64; 3], Vec<f32>)>,
) -> Result<[f64; 3]> {
    branch.zero_grad();
    let v = branch.encoder.forward(views, n, h, w, Mode::Train)?;
    let z = branch.projection.forward(&v, Mode::Train)?;
    let (values, dz) = objective(&z)?;
    let dv = branch.projection.backward(&dz)?;
    branch.encoder.backward(&dv)?;
    adam.step(branch.named_params_mut(""))?;
    Ok(values)
}

/// Stage 1: supervised contrastive training of the RP encoder.
pub fn train_stage1(data: &Dataset, config: &TrainConfig) -> Result<(Branch, Vec<LossRow>)> {
    config.validate()?;
    data.require_classes(2)?;
    let mut rng = stage_rng(config.seed, 1);
    let mut branch = Branch::new(config.encoder.spec(1), &mut rng)?;
    let mut adam = Adam::new(config.optimizer)?;
    let labels = data.labels();
    let (w, h) = (data.width, data.height);
    let mut rows = Vec::new();
    for epoch in 1..=config.epochs.stage1 {
        let mut means = EpochMeans::default();
        for batch in stratified_batches(&labels, config.batch_size, &mut rng)? {
            let views = contrastive_views(&data.rp_batch(&batch), 1, w, h, config, &mut rng)?;
            let batch_labels: Vec<Case> = batch.iter().chain(&batch).map(|&i| labels[i]).collect();
            let values = contrastive_step(&mut branch, &mut adam, &views, 2 * batch.len(), w, h, |z| {
                let out = supcon_loss(z, &batch_labels, PROJECTION_DIM, config.loss.temperature, config.loss.supcon_reduction)?;
                Ok(([f64::from(out.loss), f64::from(out.loss), 0.0], out.grad))
            })?;
            means.add([values[0], values[1], 0.0, 0.0]);
        }
        finite(1, epoch, means.mean(0))?;
        info!("stage 1 epoch {epoch}: supcon {:.5}", means.mean(0));
        rows.push(LossRow { epoch, stage: 1, loss: means.mean(0), supcon: Some(means.mean(1)), consultation: None, cross_entropy: None });
    }
    Ok((branch, rows))
}

/// Stage 2: the ratio encoder with the supervised contrastive loss plus the
/// consultation term against the frozen stage-1 branch. The stage-1 branch
/// sees the un-augmented RPs only, so its projections are computed once.
pub fn train_stage2(data: &Dataset, stage1: &Branch, config: &TrainConfig) -> Result<(Branch, Vec<LossRow>)> {
    config.validate()?;
    data.require_classes(2)?;
    let mut rng = stage_rng(config.seed, 2);
    let mut branch = Branch::new(config.encoder.spec(data.q), &mut rng)?;
    let mut adam = Adam::new(config.optimizer)?;
    let labels = data.labels();
    let (w, h) = (data.width, data.height);
    let all: Vec<usize> = (0..data.len()).collect();
    let reference = stage1.projections(&data.rp_batch(&all), w, h)?;
    let mut rows = Vec::new();
    for epoch in 1..=config.epochs.stage2 {
        let mut means = EpochMeans::default();
        for batch in stratified_batches(&labels, config.batch_size, &mut rng)? {
            let views = contrastive_views(&data.ratio_batch(&batch), data.q, w, h, config, &mut rng)?;
            let batch_labels: Vec<Case> = batch.iter().chain(&batch).map(|&i| labels[i]).collect();
            let z_ref: Vec<f32> = batch.iter().flat_map(|&i| reference[i * PROJECTION_DIM..(i + 1) * PROJECTION_DIM].iter().copied()).collect();
            let values = contrastive_step(&mut branch, &mut adam, &views, 2 * batch.len(), w, h, |z| {
                let out = stage2_loss(z, &batch_labels, &z_ref, PROJECTION_DIM, &config.loss)?;
                Ok(([f64::from(out.loss), f64::from(out.supcon), f64::from(out.consultation)], out.grad))
            })?;
            means.add([values[0], values[1], values[2], 0.0]);
        }
        finite(2, epoch, means.mean(0))?;
        info!("stage 2 epoch {epoch}: loss {:.5} (supcon {:.5}, consultation {:.5})", means.mean(0), means.mean(1), means.mean(2));
        rows.push(LossRow {
            epoch,
            stage: 2,
            loss: means.mean(0),
            supcon: Some(means.mean(1)),
            consultation: Some(means.mean(2)),
            cross_entropy: None,
        });
    }
    Ok((branch, rows))
}

fn rows_of(values: &[f32], indices: &[usize], dim: usize) -> Vec<f32> {
    indices.iter().flat_map(|&i| values[i * dim..(i + 1) * dim].iter().copied()).collect()
}

/// Stage 3: both linear heads by cross entropy on the switch output, with
/// the encoders frozen (their representations are computed once).
pub fn train_stage3(data: &Dataset, stage1: &Branch, stage2: &Branch, config: &TrainConfig) -> Result<(Heads, Vec<LossRow>)> {
    config.validate()?;
    data.require_classes(2)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let v_rp = stage1.representations(&data.rp_batch(&all), data.width, data.height)?;
    let v_ratio = stage2.representations(&data.ratio_batch(&all), data.width, data.height)?;
    train_heads(&v_rp, &v_ratio, &data.labels(), config)
}

/// Stage 3 on precomputed representations.
pub fn train_heads(v_rp: &[f32], v_ratio: &[f32], labels: &[Case], config: &TrainConfig) -> Result<(Heads, Vec<LossRow>)> {
    let dim = presence_nn::REPRESENTATION_DIM;
    let mut rng = stage_rng(config.seed, 3);
    let mut heads = Heads::new(&mut rng);
    let mut adam = Adam::new(config.optimizer)?;
    let mut rows = Vec::new();
    for epoch in 1..=config.epochs.stage3 {
        let mut means = EpochMeans::default();
        for batch in stratified_batches(labels, config.batch_size, &mut rng)? {
            heads.zero_grad();
            let logits_rp = heads.rp.forward(&rows_of(v_rp, &batch, dim), Mode::Train)?;
            let logits_ratio = heads.ratio.forward(&rows_of(v_ratio, &batch, dim), Mode::Train)?;
            let probs = logits_rp
                .chunks(NUM_CLASSES)
                .zip(logits_ratio.chunks(NUM_CLASSES))
                .map(|(a, b)| s3fec_forward(a, b))
                .collect::<Result<Vec<_>>>()?;
            let finals: Vec<f32> = probs.iter().flat_map(|p| p.y_final.iter().copied()).collect();
            let batch_labels: Vec<Case> = batch.iter().map(|&i| labels[i]).collect();
            let ce = cross_entropy(&finals, &batch_labels, NUM_CLASSES, config.loss.ce_reduction)?;
            let (mut d_rp, mut d_ratio) = (Vec::new(), Vec::new());
            for (p, d) in probs.iter().zip(ce.grad.chunks(NUM_CLASSES)) {
                let (a, b) = s3fec_backward(p, d);
                d_rp.extend(a);
                d_ratio.extend(b);
            }
            heads.rp.backward(&d_rp)?;
            heads.ratio.backward(&d_ratio)?;
            adam.step(heads.named_params_mut(""))?;
            let loss = f64::from(ce.loss);
            means.add([loss, 0.0, 0.0, loss]);
        }
        finite(3, epoch, means.mean(0))?;
        info!("stage 3 epoch {epoch}: cross entropy {:.5}", means.mean(0));
        rows.push(LossRow { epoch, stage: 3, loss: means.mean(0), supcon: None, consultation: None, cross_entropy: Some(means.mean(3)) });
    }
    Ok((heads, rows))
}

/// A single linear softmax classifier on frozen representations, trained
/// like stage 3 but without the switch: the single-input ablations.
pub fn train_probe(v: &[f32], labels: &[Case], config: &TrainConfig, salt: u64) -> Result<LinearHead<f32>> {
    let dim = presence_nn::REPRESENTATION_DIM;
    let mut rng = stage_rng(config.seed ^ salt, 4);
    let mut head = LinearHead::new(&mut rng);
    let mut adam = Adam::new(config.optimizer)?;
    for epoch in 1..=config.epochs.stage3 {
        for batch in stratified_batches(labels, config.batch_size, &mut rng)? {
            head.zero_grad();
            let logits = head.forward(&rows_of(v, &batch, dim), Mode::Train)?;
            let probs: Vec<f32> = logits.chunks(NUM_CLASSES).flat_map(softmax).collect();
            let batch_labels: Vec<Case> = batch.iter().map(|&i| labels[i]).collect();
            let ce = cross_entropy(&probs, &batch_labels, NUM_CLASSES, config.loss.ce_reduction)?;
            finite(4, epoch, f64::from(ce.loss))?;
            let d: Vec<f32> = probs.chunks(NUM_CLASSES).zip(ce.grad.chunks(NUM_CLASSES)).flat_map(|(p, g)| softmax_backward(p, g)).collect();
            head.backward(&d)?;
            adam.step(head.named_params_mut(""))?;
        }
    }
    Ok(head)
}
