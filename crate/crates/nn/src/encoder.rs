//! Compact residual encoder: image batch to 512-d representations.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{
    global_avg_pool, global_avg_pool_backward, join, relu_backward, relu_inplace, BatchNorm2d, Conv2d, Linear, Mode,
    Module,
};
use crate::real::Real;
use crate::tensor::{Act, Param};
use crate::{NnError, Result};

pub const REPRESENTATION_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    pub in_channels: usize,
    pub stage_channels: Vec<usize>,
    pub out_dim: usize,
    /// Residual blocks per stage; 2 gives ResNet-18 depth.
    pub blocks_per_stage: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { in_channels: 1, stage_channels: vec![32, 64, 128, 256], out_dim: REPRESENTATION_DIM, blocks_per_stage: 1 }
    }
}

impl EncoderSpec {
    pub fn with_in_channels(in_channels: usize) -> Self {
        Self { in_channels, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(NnError::Config("in_channels must be positive".into()));
        }
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) {
            return Err(NnError::Config("stage_channels must be non-empty and positive".into()));
        }
        if self.out_dim != REPRESENTATION_DIM {
            return Err(NnError::Config(format!("out_dim must be {REPRESENTATION_DIM}")));
        }
        if self.blocks_per_stage == 0 {
            return Err(NnError::Config("blocks_per_stage must be positive".into()));
        }
        Ok(())
    }
}

/// conv-bn-relu-conv-bn plus a (projected) skip, then relu.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub shortcut: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    masks: Option<(Vec<bool>, Vec<bool>)>,
}

impl<T: Real> BasicBlock<T> {
    pub fn new(in_c: usize, out_c: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let shortcut = (stride != 1 || in_c != out_c).then(|| (Conv2d::new(in_c, out_c, 1, stride, rng), BatchNorm2d::new(out_c)));
        Self {
            conv1: Conv2d::new(in_c, out_c, 3, stride, rng),
            bn1: BatchNorm2d::new(out_c),
            conv2: Conv2d::new(out_c, out_c, 3, 1, rng),
            bn2: BatchNorm2d::new(out_c),
            shortcut,
            masks: None,
        }
    }

    fn add_relu(mut main: Act<T>, skip: &Act<T>, mode: Mode) -> (Act<T>, Option<Vec<bool>>) {
        main.data.iter_mut().zip(&skip.data).for_each(|(a, &b)| *a += b);
        let mask = relu_inplace(&mut main.data, mode);
        (main, mask)
    }

    pub fn eval(&self, x: &Act<T>) -> Result<Act<T>> {
        let mut a = self.bn1.eval(&self.conv1.eval(x)?)?;
        relu_inplace(&mut a.data, Mode::Eval);
        let b = self.bn2.eval(&self.conv2.eval(&a)?)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.eval(&conv.eval(x)?)?,
            None => x.clone(),
        };
        Ok(Self::add_relu(b, &skip, Mode::Eval).0)
    }

    pub fn forward(&mut self, x: &Act<T>, mode: Mode) -> Result<Act<T>> {
        let mut a = self.bn1.forward(&self.conv1.forward(x, mode)?, mode)?;
        let mask1 = relu_inplace(&mut a.data, mode);
        let b = self.bn2.forward(&self.conv2.forward(&a, mode)?, mode)?;
        let skip = match self.shortcut.as_mut() {
            Some((conv, bn)) => bn.forward(&conv.forward(x, mode)?, mode)?,
            None => x.clone(),
        };
        let (out, mask2) = Self::add_relu(b, &skip, mode);
        self.masks = mask1.zip(mask2);
        Ok(out)
    }

    pub fn backward(&mut self, dout: &Act<T>) -> Result<Act<T>> {
        let (mask1, mask2) = self.masks.take().ok_or_else(|| NnError::State("block backward without forward".into()))?;
        let mut d = dout.clone();
        relu_backward(&mut d.data, &mask2);
        let mut da = self.conv2.backward(&self.bn2.backward(&d)?)?;
        relu_backward(&mut da.data, &mask1);
        let mut dx = self.conv1.backward(&self.bn1.backward(&da)?)?;
        let dskip = match self.shortcut.as_mut() {
            Some((conv, bn)) => conv.backward(&bn.backward(&d)?)?,
            None => d,
        };
        dx.data.iter_mut().zip(&dskip.data).for_each(|(a, &b)| *a += b);
        Ok(dx)
    }
}

impl<T: Real> Module<T> for BasicBlock<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.conv1.visit(&join(prefix, "conv1"), out);
        self.bn1.visit(&join(prefix, "bn1"), out);
        self.conv2.visit(&join(prefix, "conv2"), out);
        self.bn2.visit(&join(prefix, "bn2"), out);
        if let Some((conv, bn)) = &self.shortcut {
            conv.visit(&join(prefix, "shortcut.conv"), out);
            bn.visit(&join(prefix, "shortcut.bn"), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.conv1.visit_mut(&join(prefix, "conv1"), out);
        self.bn1.visit_mut(&join(prefix, "bn1"), out);
        self.conv2.visit_mut(&join(prefix, "conv2"), out);
        self.bn2.visit_mut(&join(prefix, "bn2"), out);
        if let Some((conv, bn)) = self.shortcut.as_mut() {
            conv.visit_mut(&join(prefix, "shortcut.conv"), out);
            bn.visit_mut(&join(prefix, "shortcut.bn"), out);
        }
    }
}

/// Stem, residual stages, global average pool, linear map to 512.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    pub spec: EncoderSpec,
    pub stem: Conv2d<T>,
    pub stem_bn: BatchNorm2d<T>,
    pub blocks: Vec<BasicBlock<T>>,
    pub fc: Linear<T>,
    state: Option<EncoderState>,
}

#[derive(Debug, Clone)]
struct EncoderState {
    stem_mask: Vec<bool>,
    pooled_shape: (usize, usize, usize, usize),
}

impl<T: Real> Encoder<T> {
    pub fn new(spec: EncoderSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let c0 = spec.stage_channels[0];
        let stem = Conv2d::new(spec.in_channels, c0, 3, 1, rng);
        let mut blocks = Vec::new();
        let mut in_c = c0;
        for (stage, &c) in spec.stage_channels.iter().enumerate() {
            for b in 0..spec.blocks_per_stage {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(in_c, c, stride, rng));
                in_c = c;
            }
        }
        let fc = Linear::new(in_c, spec.out_dim, true, rng);
        Ok(Self { spec, stem, stem_bn: BatchNorm2d::new(c0), blocks, fc, state: None })
    }

    fn input(&self, images: &[T], n: usize, h: usize, w: usize) -> Result<Act<T>> {
        if n == 0 || h == 0 || w == 0 {
            return Err(NnError::Shape("empty image batch".into()));
        }
        Act::from_samples(images, n, self.spec.in_channels, h, w)
    }

    /// Representations of `n` sample-major `C x h x w` images, as `n x 512`
    /// rows, without touching layer state (always inference statistics).
    pub fn infer(&self, images: &[T], n: usize, h: usize, w: usize) -> Result<Vec<T>> {
        let x = self.input(images, n, h, w)?;
        let mut a = self.stem_bn.eval(&self.stem.eval(&x)?)?;
        relu_inplace(&mut a.data, Mode::Eval);
        for block in &self.blocks {
            a = block.eval(&a)?;
        }
        let out = self.fc.apply(&global_avg_pool(&a))?;
        check_finite(&out)?;
        Ok(out)
    }

    pub fn forward(&mut self, images: &[T], n: usize, h: usize, w: usize, mode: Mode) -> Result<Vec<T>> {
        if mode == Mode::Eval {
            self.state = None;
            return self.infer(images, n, h, w);
        }
        let x = self.input(images, n, h, w)?;
        let mut a = self.stem_bn.forward(&self.stem.forward(&x, mode)?, mode)?;
        let stem_mask = relu_inplace(&mut a.data, mode).unwrap_or_default();
        for block in &mut self.blocks {
            a = block.forward(&a, mode)?;
        }
        let out = self.fc.forward(&global_avg_pool(&a), mode)?;
        check_finite(&out)?;
        self.state = Some(EncoderState { stem_mask, pooled_shape: (a.c, a.n, a.h, a.w) });
        Ok(out)
    }

    /// Accumulates parameter gradients from `d_out` (`n x 512`).
    pub fn backward(&mut self, d_out: &[T]) -> Result<()> {
        let state = self.state.take().ok_or_else(|| NnError::State("encoder backward without forward".into()))?;
        let (c, n, h, w) = state.pooled_shape;
        let d_pool = self.fc.backward(d_out)?;
        let mut d = global_avg_pool_backward(&d_pool, c, n, h, w);
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d)?;
        }
        relu_backward(&mut d.data, &state.stem_mask);
        let d = self.stem_bn.backward(&d)?;
        self.stem.backward(&d)?;
        Ok(())
    }
}

impl<T: Real> Module<T> for Encoder<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.stem.visit(&join(prefix, "stem"), out);
        self.stem_bn.visit(&join(prefix, "stem_bn"), out);
        for (i, block) in self.blocks.iter().enumerate() {
            block.visit(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.fc.visit(&join(prefix, "fc"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.stem.visit_mut(&join(prefix, "stem"), out);
        self.stem_bn.visit_mut(&join(prefix, "stem_bn"), out);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_mut(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.fc.visit_mut(&join(prefix, "fc"), out);
    }
}

pub(crate) fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) { Ok(()) } else { Err(NnError::NonFinite("forward output")) }
}
