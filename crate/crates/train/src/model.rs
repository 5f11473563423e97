//! The three trained parts and their checkpoints.

use std::path::Path;

use presence_nn::checkpoint::{self, restore};
use presence_nn::layers::join;
use presence_nn::{Encoder, EncoderSpec, LinearHead, Module, Param, ProjectionHead, NUM_CLASSES};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::s3fec::{fuse, ClassProbabilities};
use crate::{Result, TrainError};

/// Images per inference chunk.
pub const INFER_CHUNK: usize = 256;

/// Encoder plus projection head, trained contrastively (stages 1 and 2).
#[derive(Debug, Clone)]
pub struct Branch {
    pub encoder: Encoder<f32>,
    pub projection: ProjectionHead<f32>,
}

impl Branch {
    pub fn new(spec: EncoderSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self { encoder: Encoder::new(spec, rng)?, projection: ProjectionHead::new(rng) })
    }

    pub fn in_channels(&self) -> usize {
        self.encoder.spec.in_channels
    }

    /// Inference-mode representations (`n x 512`) of stacked images.
    pub fn representations(&self, images: &[f32], w: usize, h: usize) -> Result<Vec<f32>> {
        let per_image = self.in_channels() * w * h;
        let mut out = Vec::with_capacity(images.len() / per_image.max(1) * presence_nn::REPRESENTATION_DIM);
        for chunk in images.chunks(INFER_CHUNK * per_image) {
            out.extend(self.encoder.infer(chunk, chunk.len() / per_image, h, w)?);
        }
        Ok(out)
    }

    /// Inference-mode unit projections (`n x 128`).
    pub fn projections(&self, images: &[f32], w: usize, h: usize) -> Result<Vec<f32>> {
        Ok(self.projection.infer(&self.representations(images, w, h)?)?)
    }

    pub fn save(&self, path: &Path, prefix: &str) -> Result<()> {
        checkpoint::save(path, self, prefix)?;
        Ok(())
    }

    pub fn load(path: &Path, prefix: &str, spec: EncoderSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let stored = checkpoint::read(path).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut branch = Self::new(spec, rng)?;
        restore(&stored, &mut branch, prefix)?;
        Ok(branch)
    }
}

impl Module<f32> for Branch {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<f32>)>) {
        self.encoder.visit(&join(prefix, "encoder"), out);
        self.projection.visit(&join(prefix, "projection"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<f32>)>) {
        self.encoder.visit_mut(&join(prefix, "encoder"), out);
        self.projection.visit_mut(&join(prefix, "projection"), out);
    }
}

/// The two linear heads feeding the switch (stage 3).
#[derive(Debug, Clone)]
pub struct Heads {
    pub rp: LinearHead<f32>,
    pub ratio: LinearHead<f32>,
}

impl Heads {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        Self { rp: LinearHead::new(rng), ratio: LinearHead::new(rng) }
    }

    /// Fused probabilities for each pair of representation rows.
    pub fn classify(&self, v_rp: &[f32], v_ratio: &[f32]) -> Result<Vec<ClassProbabilities<f32>>> {
        let (p_rp, p_ratio) = (self.rp.probabilities(v_rp)?, self.ratio.probabilities(v_ratio)?);
        if p_rp.len() != p_ratio.len() {
            return Err(TrainError::Shape("representation batches differ in length".into()));
        }
        Ok(p_rp.chunks(NUM_CLASSES).zip(p_ratio.chunks(NUM_CLASSES)).map(|(d, r)| fuse(d.to_vec(), r.to_vec())).collect())
    }

    pub fn save(&self, path: &Path, prefix: &str) -> Result<()> {
        checkpoint::save(path, self, prefix)?;
        Ok(())
    }

    pub fn load(path: &Path, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Self> {
        let stored = checkpoint::read(path).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut heads = Self::new(rng);
        restore(&stored, &mut heads, prefix)?;
        Ok(heads)
    }
}

impl Module<f32> for Heads {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<f32>)>) {
        self.rp.visit(&join(prefix, "head_rp"), out);
        self.ratio.visit(&join(prefix, "head_ratio"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<f32>)>) {
        self.rp.visit_mut(&join(prefix, "head_rp"), out);
        self.ratio.visit_mut(&join(prefix, "head_ratio"), out);
    }
}

/// Frozen encoders plus trained heads: the deployed classifier.
#[derive(Debug, Clone)]
pub struct PresenceModel {
    pub stage1: Branch,
    pub stage2: Branch,
    pub heads: Heads,
}

/// Representations of a whole dataset under both encoders.
#[derive(Debug, Clone)]
pub struct Representations {
    pub rp: Vec<f32>,
    pub ratio: Vec<f32>,
}

impl PresenceModel {
    pub fn representations(&self, data: &Dataset) -> Result<Representations> {
        let all: Vec<usize> = (0..data.len()).collect();
        Ok(Representations {
            rp: self.stage1.representations(&data.rp_batch(&all), data.width, data.height)?,
            ratio: self.stage2.representations(&data.ratio_batch(&all), data.width, data.height)?,
        })
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<ClassProbabilities<f32>>> {
        let reps = self.representations(data)?;
        self.heads.classify(&reps.rp, &reps.ratio)
    }

    /// Case and probabilities for one `(RP, merged ratio)` pair.
    pub fn predict(&self, rp: &[f32], ratio: &[f32], w: usize, h: usize) -> Result<ClassProbabilities<f32>> {
        if rp.len() != w * h || ratio.len() != self.stage2.in_channels() * w * h {
            return Err(TrainError::Shape(format!("inputs have {} and {} values for {w}x{h}", rp.len(), ratio.len())));
        }
        let v_rp = self.stage1.representations(rp, w, h)?;
        let v_ratio = self.stage2.representations(ratio, w, h)?;
        Ok(self.heads.classify(&v_rp, &v_ratio)?.remove(0))
    }
}
