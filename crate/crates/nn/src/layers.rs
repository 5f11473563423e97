//! Layers with explicit forward/backward passes.
//!
//! Each layer caches what its backward pass needs only when run in
//! [`Mode::Train`]; gradients accumulate into [`Param::grad`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::real::{gemm, Mat, Real};
use crate::tensor::{Act, Param, Tensor};
use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, caches for backward.
    Train,
    /// Running statistics, no caches.
    Eval,
}

/// Named parameter access; names are dotted paths below `prefix`.
pub trait Module<T: Real> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>);

    fn named_params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut out);
        out
    }

    fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        self.visit_mut(prefix, &mut out);
        out
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut("") {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.named_params("").iter().filter(|(_, p)| p.is_trainable()).map(|(_, p)| p.value.len()).sum()
    }
}

/// `prefix.name`, or `name` alone under an empty prefix.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") }
}

/// Kaiming-uniform: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Real>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(rng.random_range(-bound..bound))).collect();
    Tensor { shape, data, requires_grad: true }
}

fn missing_cache() -> NnError {
    NnError::State("backward called without a training-mode forward".into())
}

/// 2-D convolution without bias (a batch norm always follows).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`.
    pub weight: Param<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Vec<T>, (usize, usize, usize, usize))>,
    /// Patch-matrix buffer reused across steps.
    scratch: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: Param::trainable(kaiming_uniform(vec![out_channels, in_channels, kernel, kernel], fan_in, rng)),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            cache: None,
            scratch: Vec::new(),
        }
    }

    fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Output columns `[lo, hi)` whose input column `ox s + kx - p` is in range.
    fn valid_range(&self, k_offset: usize, size: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        let shift = k_offset as isize - p;
        let lo = if shift >= 0 { 0 } else { (-shift + s - 1) / s };
        let hi = ((size as isize - 1 - shift).div_euclid(s) + 1).clamp(0, out as isize);
        (lo.min(hi) as usize, hi as usize)
    }

    /// `[C k k, N Ho Wo]` patch matrix, written into `cols`.
    fn im2col(&self, x: &Act<T>, ho: usize, wo: usize, cols: &mut Vec<T>) {
        let (k, s) = (self.kernel, self.stride);
        let cols_per_row = x.n * ho * wo;
        cols.clear();
        cols.resize(x.c * k * k * cols_per_row, T::zero());
        for c in 0..x.c {
            let chan = x.channel(c);
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, x.h, ho);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, x.w, wo);
                    let row = &mut cols[((c * k + ky) * k + kx) * cols_per_row..][..cols_per_row];
                    for n in 0..x.n {
                        let img = &chan[n * x.plane()..][..x.plane()];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - self.padding;
                            let src = &img[iy * x.w..][..x.w];
                            let dst = &mut row[(n * ho + oy) * wo..][..wo];
                            if ox_lo == ox_hi {
                                continue;
                            }
                            let ix0 = ox_lo * s + kx - self.padding;
                            if s == 1 {
                                dst[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + ox_hi - ox_lo]);
                            } else {
                                for (d, &v) in dst[ox_lo..ox_hi].iter_mut().zip(src[ix0..].iter().step_by(s)) {
                                    *d = v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], (c_in, n_in, h, w): (usize, usize, usize, usize), ho: usize, wo: usize) -> Act<T> {
        let (k, s) = (self.kernel, self.stride);
        let mut dx = Act::zeros(c_in, n_in, h, w);
        let cols_per_row = n_in * ho * wo;
        let plane = h * w;
        for c in 0..c_in {
            for ky in 0..k {
                let (oy_lo, oy_hi) = self.valid_range(ky, h, ho);
                for kx in 0..k {
                    let (ox_lo, ox_hi) = self.valid_range(kx, w, wo);
                    if ox_lo == ox_hi {
                        continue;
                    }
                    let row = &cols[((c * k + ky) * k + kx) * cols_per_row..][..cols_per_row];
                    for n in 0..n_in {
                        let img = &mut dx.data[(c * n_in + n) * plane..][..plane];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - self.padding;
                            let src = &row[(n * ho + oy) * wo + ox_lo..][..ox_hi - ox_lo];
                            let ix0 = ox_lo * s + kx - self.padding;
                            let dst = &mut img[iy * w + ix0..];
                            for (d, &v) in dst.iter_mut().step_by(s).zip(src) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn compute(&self, x: &Act<T>, mut cols: Vec<T>) -> Result<(Act<T>, Vec<T>)> {
        if x.c != self.in_channels {
            return Err(NnError::Shape(format!("conv expects {} channels, got {}", self.in_channels, x.c)));
        }
        if x.h + 2 * self.padding < self.kernel || x.w + 2 * self.padding < self.kernel {
            return Err(NnError::Shape(format!("input {}x{} smaller than the kernel", x.h, x.w)));
        }
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        self.im2col(x, ho, wo, &mut cols);
        let inner = self.in_channels * self.kernel * self.kernel;
        let mut y = Act::zeros(self.out_channels, x.n, ho, wo);
        let len = x.n * ho * wo;
        gemm(Mat::new(&self.weight.value.data, self.out_channels, inner), Mat::new(&cols, inner, len), T::zero(), &mut y.data);
        Ok((y, cols))
    }

    /// Inference without touching layer state.
    pub fn eval(&self, x: &Act<T>) -> Result<Act<T>> {
        Ok(self.compute(x, Vec::new())?.0)
    }

    pub fn forward(&mut self, x: &Act<T>, mode: Mode) -> Result<Act<T>> {
        let scratch = std::mem::take(&mut self.scratch);
        let (y, cols) = self.compute(x, scratch)?;
        match mode {
            Mode::Train => self.cache = Some((cols, (x.c, x.n, x.h, x.w))),
            Mode::Eval => {
                self.cache = None;
                self.scratch = cols;
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Result<Act<T>> {
        let (cols, in_shape) = self.cache.take().ok_or_else(missing_cache)?;
        let inner = self.in_channels * self.kernel * self.kernel;
        let len = dy.n * dy.h * dy.w;
        gemm(Mat::new(&dy.data, self.out_channels, len), Mat::t(&cols, inner, len), T::one(), &mut self.weight.grad);
        let mut dcols = cols;
        gemm(Mat::t(&self.weight.value.data, self.out_channels, inner), Mat::new(&dy.data, self.out_channels, len), T::zero(), &mut dcols);
        let dx = self.col2im(&dcols, in_shape, dy.h, dy.w);
        self.scratch = dcols;
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization over `(N, H, W)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    /// Normalized input and `1 / sqrt(var + eps)` per channel.
    cache: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        let filled = |v: f64| Tensor { shape: vec![channels], data: vec![T::of(v); channels], requires_grad: false };
        Self {
            gamma: Param::trainable(filled(1.0)),
            beta: Param::trainable(filled(0.0)),
            running_mean: Param::buffer(filled(0.0)),
            running_var: Param::buffer(filled(1.0)),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Act<T>) -> Result<()> {
        if x.c != self.channels() {
            return Err(NnError::Shape(format!("batch norm expects {} channels, got {}", self.channels(), x.c)));
        }
        Ok(())
    }

    /// Normalizes with the running statistics.
    pub fn eval(&self, x: &Act<T>) -> Result<Act<T>> {
        self.check(x)?;
        let m = x.n * x.plane();
        let mut y = x.clone();
        for c in 0..x.c {
            let inv = T::one() / (self.running_var.value.data[c] + T::of(BN_EPS)).sqrt();
            let scale = self.gamma.value.data[c] * inv;
            let shift = self.beta.value.data[c] - self.running_mean.value.data[c] * scale;
            y.data[c * m..(c + 1) * m].iter_mut().for_each(|v| *v = *v * scale + shift);
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Act<T>, mode: Mode) -> Result<Act<T>> {
        self.check(x)?;
        let m = x.n * x.plane();
        let eps = T::of(BN_EPS);
        let mut y = x.clone();
        match mode {
            Mode::Eval => {
                self.cache = None;
                return self.eval(x);
            }
            Mode::Train => {
                if m < 2 {
                    return Err(NnError::Shape("batch norm in training needs more than one value per channel".into()));
                }
                let mut xhat = vec![T::zero(); x.data.len()];
                let mut inv_std = vec![T::zero(); x.c];
                let momentum = T::of(BN_MOMENTUM);
                let mf = T::of(m as f64);
                for c in 0..x.c {
                    let xs = x.channel(c);
                    let mean = xs.iter().copied().sum::<T>() / mf;
                    let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mf;
                    let inv = T::one() / (var + eps).sqrt();
                    inv_std[c] = inv;
                    let (g, b) = (self.gamma.value.data[c], self.beta.value.data[c]);
                    for ((xh, out), &v) in xhat[c * m..(c + 1) * m].iter_mut().zip(&mut y.data[c * m..(c + 1) * m]).zip(xs) {
                        *xh = (v - mean) * inv;
                        *out = g * *xh + b;
                    }
                    let unbiased = var * mf / T::of((m - 1) as f64);
                    let rm = &mut self.running_mean.value.data[c];
                    *rm = (T::one() - momentum) * *rm + momentum * mean;
                    let rv = &mut self.running_var.value.data[c];
                    *rv = (T::one() - momentum) * *rv + momentum * unbiased;
                }
                self.cache = Some((xhat, inv_std));
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Result<Act<T>> {
        let (xhat, inv_std) = self.cache.take().ok_or_else(missing_cache)?;
        let m = dy.n * dy.plane();
        let mf = T::of(m as f64);
        let mut dx = dy.clone();
        for c in 0..dy.c {
            let range = c * m..(c + 1) * m;
            let (g, xh) = (&dy.data[range.clone()], &xhat[range.clone()]);
            let sum_g = g.iter().copied().sum::<T>();
            let sum_gx = g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
            self.beta.grad[c] += sum_g;
            self.gamma.grad[c] += sum_gx;
            let k = self.gamma.value.data[c] * inv_std[c] / mf;
            for ((d, &gi), &xi) in dx.data[range].iter_mut().zip(g).zip(xh) {
                *d = k * (mf * gi - sum_g - xi * sum_gx);
            }
        }
        Ok(dx)
    }
}

impl<T: Real> Module<T> for BatchNorm2d<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }
}

/// In-place ReLU; returns the pass-through mask when training.
pub fn relu_inplace<T: Real>(data: &mut [T], mode: Mode) -> Option<Vec<bool>> {
    let mut mask = (mode == Mode::Train).then(|| Vec::with_capacity(data.len()));
    for v in data.iter_mut() {
        let pass = *v > T::zero();
        if !pass {
            *v = T::zero();
        }
        if let Some(m) = mask.as_mut() {
            m.push(pass);
        }
    }
    mask
}

pub fn relu_backward<T: Real>(grad: &mut [T], mask: &[bool]) {
    for (g, &pass) in grad.iter_mut().zip(mask) {
        if !pass {
            *g = T::zero();
        }
    }
}

/// Global average pool: `[C, N, H, W]` to sample-major `[N, C]`.
pub fn global_avg_pool<T: Real>(x: &Act<T>) -> Vec<T> {
    let plane = x.plane();
    let scale = T::one() / T::of(plane as f64);
    let mut out = vec![T::zero(); x.n * x.c];
    for c in 0..x.c {
        for n in 0..x.n {
            let s = x.data[(c * x.n + n) * plane..][..plane].iter().copied().sum::<T>();
            out[n * x.c + c] = s * scale;
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Real>(d: &[T], c: usize, n: usize, h: usize, w: usize) -> Act<T> {
    let plane = h * w;
    let scale = T::one() / T::of(plane as f64);
    let mut dx = Act::zeros(c, n, h, w);
    for ci in 0..c {
        for ni in 0..n {
            let v = d[ni * c + ci] * scale;
            dx.data[(ci * n + ni) * plane..][..plane].iter_mut().for_each(|x| *x = v);
        }
    }
    dx
}

/// Fully connected layer on sample-major rows: `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    /// `[out, in]`.
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<Vec<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::trainable(kaiming_uniform(vec![out_dim, in_dim], in_dim, rng)),
            bias: bias.then(|| Param::trainable(Tensor::zeros(vec![out_dim]))),
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape[0]
    }

    /// `x` holds `n` rows of `in_dim` values.
    pub fn forward(&mut self, x: &[T], mode: Mode) -> Result<Vec<T>> {
        let y = self.apply(x)?;
        self.cache = (mode == Mode::Train).then(|| x.to_vec());
        Ok(y)
    }

    /// Stateless forward.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let (i, o) = (self.in_dim(), self.out_dim());
        if x.len() % i != 0 {
            return Err(NnError::Shape(format!("linear expects rows of {i}, got {} values", x.len())));
        }
        let n = x.len() / i;
        let mut y = vec![T::zero(); n * o];
        if let Some(b) = &self.bias {
            for row in y.chunks_mut(o) {
                row.copy_from_slice(&b.value.data);
            }
        }
        gemm(Mat::new(x, n, i), Mat::t(&self.weight.value.data, o, i), T::one(), &mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, dy: &[T]) -> Result<Vec<T>> {
        let x = self.cache.take().ok_or_else(missing_cache)?;
        let (i, o) = (self.in_dim(), self.out_dim());
        let n = x.len() / i;
        if dy.len() != n * o {
            return Err(NnError::Shape(format!("linear backward expects {} values, got {}", n * o, dy.len())));
        }
        gemm(Mat::t(dy, n, o), Mat::new(&x, n, i), T::one(), &mut self.weight.grad);
        if let Some(b) = self.bias.as_mut() {
            for row in dy.chunks(o) {
                for (g, &d) in b.grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![T::zero(); n * i];
        gemm(Mat::new(dy, n, o), Mat::new(&self.weight.value.data, o, i), T::zero(), &mut dx);
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((join(prefix, "bias"), b));
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        if let Some(b) = self.bias.as_mut() {
            out.push((join(prefix, "bias"), b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn naive_conv(x: &Act<f64>, conv: &Conv2d<f64>) -> Act<f64> {
        let (k, s, p) = (conv.kernel, conv.stride, conv.padding as isize);
        let (ho, wo) = (conv.out_size(x.h), conv.out_size(x.w));
        let mut y = Act::zeros(conv.out_channels, x.n, ho, wo);
        for o in 0..conv.out_channels {
            for n in 0..x.n {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for c in 0..x.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - p;
                                    let ix = (ox * s + kx) as isize - p;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                        let v = x.data[((c * x.n + n) * x.h + iy as usize) * x.w + ix as usize];
                                        acc += v * conv.weight.value.data[((o * x.c + c) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        y.data[((o * x.n + n) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut rng = seeded_rng(3);
        for (k, s, h, w) in [(3, 1, 5, 4), (3, 2, 7, 6), (1, 2, 5, 5), (3, 2, 2, 3), (1, 1, 3, 3)] {
            let conv = Conv2d::<f64>::new(2, 3, k, s, &mut rng);
            let x = Act { c: 2, n: 2, h, w, data: (0..2 * 2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let got = conv.eval(&x).unwrap();
            let want = naive_conv(&x, &conv);
            assert_eq!((got.h, got.w), (want.h, want.w));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
