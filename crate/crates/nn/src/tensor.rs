use crate::real::Real;
use crate::{NnError, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub requires_grad: bool,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::Shape(format!("shape {shape:?} needs {expected} values, got {}", data.len())));
        }
        Ok(Self { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![T::zero(); len], requires_grad: false }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A named-by-position learnable (or buffered) tensor with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn trainable(value: Tensor<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Self { value: Tensor { requires_grad: true, ..value }, grad }
    }

    /// State that is saved with the model but never updated by the optimizer.
    pub fn buffer(value: Tensor<T>) -> Self {
        Self { value: Tensor { requires_grad: false, ..value }, grad: Vec::new() }
    }

    pub fn is_trainable(&self) -> bool {
        self.value.requires_grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Activations in channel-major layout `[C, N, H, W]`: each channel's values
/// over the whole batch are contiguous, which turns convolutions into a
/// single matrix product and batch normalization into contiguous reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self { c, n, h, w, data: vec![T::zero(); c * n * h * w] }
    }

    /// From sample-major `[N, C, H, W]` images.
    pub fn from_samples(images: &[T], n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let plane = h * w;
        if images.len() != n * c * plane {
            return Err(NnError::Shape(format!("expected {n}x{c}x{h}x{w} values, got {}", images.len())));
        }
        let mut data = vec![T::zero(); images.len()];
        for s in 0..n {
            for ch in 0..c {
                let src = &images[(s * c + ch) * plane..][..plane];
                data[(ch * n + s) * plane..][..plane].copy_from_slice(src);
            }
        }
        Ok(Self { c, n, h, w, data })
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Values of one channel across the batch.
    pub fn channel(&self, c: usize) -> &[T] {
        let len = self.n * self.plane();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.c, self.n, self.h, self.w) == (other.c, other.n, other.h, other.w)
    }
}
