//! Dense NHWC tensors with a small reverse-mode differentiation engine.
//!
//! Only the layer set needed by the deblurring network is provided:
//! same-padded convolution, 2x2 max pooling, nearest-neighbour upsampling,
//! ReLU/sigmoid, channel concatenation, inverted dropout and an MSE loss.
//! Every op has an eager forward kernel in [`ops`]; [`Tape`] records the ops
//! of a forward pass so that [`Tape::backward`] can replay their adjoints.

mod graph;
mod init;
pub mod ops;
mod optim;
mod scalar;
mod tape;

use std::fmt;

pub use graph::{Eager, Graph, ShapeEvent, ShapeGraph};
pub use init::{he_init, zero_bias};
pub use ops::Padding;
pub use optim::{Adam, AdamConfig, AdamState};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 4],
        right: [usize; 4],
    },
    #[error("{op}: spatial dims {height}x{width} must be even")]
    OddSpatial {
        op: &'static str,
        height: usize,
        width: usize,
    },
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("element count {len} does not match shape {shape:?}")]
    BadLength { shape: [usize; 4], len: usize },
    #[error("stride {0} unsupported; only stride 1 convolutions are implemented")]
    UnsupportedStride(usize),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Batch x height x width x channel array, channel fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: [usize; 4], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::BadLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [n, h, w, c] = shape;
        let mut data = Vec::with_capacity(n * h * w * c);
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        data.push(f([b, y, x, ch]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, [b, y, x, c]: [usize; 4]) -> usize {
        let [_, h, w, ch] = self.shape;
        ((b * h + y) * w + x) * ch + c
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], value: T) {
        let i = self.index(idx);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies channels `[start, start + count)` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Self {
        let [n, h, w, c] = self.shape;
        assert!(start + count <= c, "channel slice out of range");
        let mut data = Vec::with_capacity(n * h * w * count);
        for px in self.data.chunks_exact(c) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Self {
            shape: [n, h, w, count],
            data,
        }
    }

    /// Copies batch items `[start, start + count)` into a new tensor.
    pub fn slice_batch(&self, start: usize, count: usize) -> Self {
        let [n, h, w, c] = self.shape;
        assert!(start + count <= n, "batch slice out of range");
        let item = h * w * c;
        Self {
            shape: [count, h, w, c],
            data: self.data[start * item..(start + count) * item].to_vec(),
        }
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[&Tensor4<T>]) -> Result<Self> {
        let first = items.first().map(|t| t.shape).unwrap_or([0, 0, 0, 0]);
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            if t.shape[1..] != first[1..] {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    left: first,
                    right: t.shape,
                });
            }
            n += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            shape: [n, first[1], first[2], first[3]],
            data,
        })
    }
}

impl<T: Scalar> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data.iter().take(8).map(|v| v.as_f64()).collect();
        f.debug_struct("Tensor4")
            .field("shape", &self.shape)
            .field("head", &preview)
            .finish()
    }
}
