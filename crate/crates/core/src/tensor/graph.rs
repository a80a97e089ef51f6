use std::borrow::Cow;

use super::ops::{self, Padding};
use super::{Result, Scalar, Tape, Tensor4, TensorError, Var};

/// Execution backend for a network definition. The same layer graph runs
/// eagerly (inference), on a [`Tape`] (training) or over shapes only.
pub trait Graph<'a, T: Scalar> {
    type Value;

    fn input(&mut self, value: Tensor4<T>) -> Self::Value;
    fn param(&mut self, value: &'a Tensor4<T>) -> Self::Value;
    fn conv2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: &Self::Value,
        pad: Padding,
    ) -> Result<Self::Value>;
    fn maxpool2x2(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn upconv2x(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value)
        -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value;
    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn dropout(&mut self, x: &Self::Value, rate: f64, seed: u64, training: bool)
        -> Result<Self::Value>;
}

impl<'a, T: Scalar> Graph<'a, T> for Tape<'a, T> {
    type Value = Var;

    fn input(&mut self, value: Tensor4<T>) -> Var {
        self.constant(value)
    }

    fn param(&mut self, value: &'a Tensor4<T>) -> Var {
        Tape::param(self, value)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, pad: Padding) -> Result<Var> {
        Tape::conv2d(self, *x, *w, Some(*b), pad)
    }

    fn maxpool2x2(&mut self, x: &Var) -> Result<Var> {
        Tape::maxpool2x2(self, *x)
    }

    fn upconv2x(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        Tape::upconv2x(self, *x, *w, Some(*b))
    }

    fn relu(&mut self, x: &Var) -> Var {
        Tape::relu(self, *x)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        Tape::sigmoid(self, *x)
    }

    fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::concat_channels(self, *a, *b)
    }

    fn dropout(&mut self, x: &Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        Tape::dropout(self, *x, rate, seed, training)
    }
}

/// Direct evaluation without recording; intermediates are freed as soon as
/// the caller drops them.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<'a, T: Scalar> Graph<'a, T> for Eager {
    type Value = Cow<'a, Tensor4<T>>;

    fn input(&mut self, value: Tensor4<T>) -> Self::Value {
        Cow::Owned(value)
    }

    fn param(&mut self, value: &'a Tensor4<T>) -> Self::Value {
        Cow::Borrowed(value)
    }

    fn conv2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: &Self::Value,
        pad: Padding,
    ) -> Result<Self::Value> {
        ops::conv2d(x, w, Some(b), pad).map(Cow::Owned)
    }

    fn maxpool2x2(&mut self, x: &Self::Value) -> Result<Self::Value> {
        ops::maxpool2x2(x).map(|(y, _)| Cow::Owned(y))
    }

    fn upconv2x(&mut self, x: &Self::Value, w: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        let up = ops::upsample2x(x);
        ops::conv2d(&up, w, Some(b), Padding::same(2, 2)).map(Cow::Owned)
    }

    fn relu(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(ops::relu(x))
    }

    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(ops::sigmoid(x))
    }

    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        ops::concat_channels(a, b).map(Cow::Owned)
    }

    fn dropout(&mut self, x: &Self::Value, rate: f64, seed: u64, training: bool) -> Result<Self::Value> {
        if !training {
            if !(0.0..1.0).contains(&rate) {
                return Err(TensorError::InvalidRate(rate));
            }
            return Ok(x.clone());
        }
        ops::dropout(x, rate, seed, training).map(|(y, _)| Cow::Owned(y))
    }
}

/// One layer application observed by [`ShapeGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeEvent {
    pub op: &'static str,
    pub inputs: Vec<[usize; 4]>,
    pub output: [usize; 4],
}

/// Propagates shapes through a network without touching any data, applying
/// the same validity checks as the real kernels.
#[derive(Debug, Default, Clone)]
pub struct ShapeGraph {
    pub events: Vec<ShapeEvent>,
}

impl ShapeGraph {
    fn record(&mut self, op: &'static str, inputs: &[[usize; 4]], output: [usize; 4]) -> [usize; 4] {
        self.events.push(ShapeEvent {
            op,
            inputs: inputs.to_vec(),
            output,
        });
        output
    }

    fn conv_shape(
        op: &'static str,
        x: [usize; 4],
        w: [usize; 4],
        b: [usize; 4],
    ) -> Result<[usize; 4]> {
        if x[3] != w[2] {
            return Err(TensorError::ShapeMismatch { op, left: x, right: w });
        }
        if b.iter().product::<usize>() != w[3] {
            return Err(TensorError::ShapeMismatch { op, left: w, right: b });
        }
        Ok([x[0], x[1], x[2], w[3]])
    }
}

impl<'a, T: Scalar> Graph<'a, T> for ShapeGraph {
    type Value = [usize; 4];

    fn input(&mut self, value: Tensor4<T>) -> [usize; 4] {
        value.shape()
    }

    fn param(&mut self, value: &'a Tensor4<T>) -> [usize; 4] {
        value.shape()
    }

    fn conv2d(&mut self, x: &[usize; 4], w: &[usize; 4], b: &[usize; 4], _pad: Padding) -> Result<[usize; 4]> {
        let out = Self::conv_shape("conv2d", *x, *w, *b)?;
        Ok(self.record("conv2d", &[*x, *w], out))
    }

    fn maxpool2x2(&mut self, x: &[usize; 4]) -> Result<[usize; 4]> {
        let [n, h, w, c] = *x;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::OddSpatial {
                op: "maxpool2x2",
                height: h,
                width: w,
            });
        }
        Ok(self.record("maxpool2x2", &[*x], [n, h / 2, w / 2, c]))
    }

    fn upconv2x(&mut self, x: &[usize; 4], w: &[usize; 4], b: &[usize; 4]) -> Result<[usize; 4]> {
        let up = [x[0], 2 * x[1], 2 * x[2], x[3]];
        let out = Self::conv_shape("upconv2x", up, *w, *b)?;
        Ok(self.record("upconv2x", &[*x, *w], out))
    }

    fn relu(&mut self, x: &[usize; 4]) -> [usize; 4] {
        self.record("relu", &[*x], *x)
    }

    fn sigmoid(&mut self, x: &[usize; 4]) -> [usize; 4] {
        self.record("sigmoid", &[*x], *x)
    }

    fn concat_channels(&mut self, a: &[usize; 4], b: &[usize; 4]) -> Result<[usize; 4]> {
        if a[..3] != b[..3] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                left: *a,
                right: *b,
            });
        }
        Ok(self.record("concat_channels", &[*a, *b], [a[0], a[1], a[2], a[3] + b[3]]))
    }

    fn dropout(&mut self, x: &[usize; 4], rate: f64, _seed: u64, _training: bool) -> Result<[usize; 4]> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidRate(rate));
        }
        Ok(self.record("dropout", &[*x], *x))
    }
}
