use std::borrow::Cow;

use super::ops::{self, Padding};
use super::{Result, Scalar, Tensor4, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, pad: Padding },
    MaxPool { x: Var, argmax: Vec<u32> },
    Upsample { x: Var },
    Relu { x: Var },
    Sigmoid { x: Var },
    Concat { a: Var, b: Var, channels_a: usize },
    Dropout { x: Var, mask: Option<Vec<T>> },
    Mse { pred: Var, target: Var },
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor4<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward pass in execution order. [`Tape::backward`] consumes the
/// tape, so a recording can drive exactly one backward pass.
pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor4<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor4<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    /// An owned leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor4<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// A borrowed parameter leaf.
    pub fn param(&mut self, value: &'a Tensor4<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor4<T> {
        &self.nodes[v.0].value
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, pad: Padding) -> Result<Var> {
        let out = ops::conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            pad,
        )?;
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Cow::Owned(out), Op::Conv2d { x, w, b, pad }, rg))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = ops::maxpool2x2(self.value(x))?;
        let rg = self.needs(x);
        Ok(self.push(Cow::Owned(out), Op::MaxPool { x, argmax }, rg))
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let out = ops::upsample2x(self.value(x));
        let rg = self.needs(x);
        self.push(Cow::Owned(out), Op::Upsample { x }, rg)
    }

    /// Nearest-neighbour 2x upsampling followed by a same-padded 2x2 convolution.
    pub fn upconv2x(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let [kh, kw, _, _] = self.value(w).shape();
        if (kh, kw) != (2, 2) {
            return Err(TensorError::ShapeMismatch {
                op: "upconv2x",
                left: self.value(x).shape(),
                right: self.value(w).shape(),
            });
        }
        let up = self.upsample2x(x);
        self.conv2d(up, w, b, Padding::same(2, 2))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        let rg = self.needs(x);
        self.push(Cow::Owned(out), Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        let rg = self.needs(x);
        self.push(Cow::Owned(out), Op::Sigmoid { x }, rg)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let channels_a = self.value(a).channels();
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Cow::Owned(out), Op::Concat { a, b, channels_a }, rg))
    }

    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        let (out, mask) = ops::dropout(self.value(x), rate, seed, training)?;
        let rg = self.needs(x);
        Ok(self.push(Cow::Owned(out), Op::Dropout { x, mask }, rg))
    }

    /// Scalar MSE node, stored as a `[1, 1, 1, 1]` tensor.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::mse_loss(self.value(pred), self.value(target))?;
        let rg = self.needs(pred) || self.needs(target);
        let out = Tensor4::full([1, 1, 1, 1], loss);
        Ok(self.push(Cow::Owned(out), Op::Mse { pred, target }, rg))
    }

    /// Backpropagates from a scalar output.
    pub fn backward(self, output: Var) -> Result<Gradients<T>> {
        let seed = Tensor4::full(self.value(output).shape(), T::one());
        self.backward_with(output, seed)
    }

    /// Backpropagates an explicit upstream gradient for `output`. Adjoints are
    /// applied in exact reverse recording order; only leaf gradients are kept.
    pub fn backward_with(self, output: Var, upstream: Tensor4<T>) -> Result<Gradients<T>> {
        let shape = self.value(output).shape();
        if upstream.shape() != shape {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                left: shape,
                right: upstream.shape(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor4<T>>> = (0..n).map(|_| None).collect();
        grads[output.0] = Some(upstream);

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, w, b, pad } => {
                    let cg = ops::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &g,
                        *pad,
                        self.needs(*x),
                    )?;
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*w) {
                        accumulate(&mut grads, *w, cg.kernel);
                    }
                    if let Some(b) = b {
                        if self.needs(*b) {
                            accumulate(&mut grads, *b, cg.bias);
                        }
                    }
                }
                Op::MaxPool { x, argmax } => {
                    if self.needs(*x) {
                        let dx = ops::maxpool2x2_backward(self.value(*x).shape(), argmax, &g);
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Upsample { x } => {
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, ops::upsample2x_backward(&g));
                    }
                }
                Op::Relu { x } => {
                    if self.needs(*x) {
                        let dx = ops::relu_backward(self.value(*x), &g);
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Sigmoid { x } => {
                    if self.needs(*x) {
                        let dx = ops::sigmoid_backward(&node.value, &g);
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Concat { a, b, channels_a } => {
                    let (ga, gb) = ops::concat_channels_backward(&g, *channels_a);
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Dropout { x, mask } => {
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, ops::dropout_backward(mask.as_deref(), &g));
                    }
                }
                Op::Mse { pred, target } => {
                    let scale = g.data()[0];
                    let (p, t) = (self.value(*pred), self.value(*target));
                    if self.needs(*pred) {
                        accumulate(&mut grads, *pred, ops::mse_loss_backward(p, t, scale));
                    }
                    if self.needs(*target) {
                        accumulate(&mut grads, *target, ops::mse_loss_backward(t, p, scale));
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor4<T>>], v: Var, g: Tensor4<T>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Leaf gradients produced by a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor4<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor4<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor4<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
