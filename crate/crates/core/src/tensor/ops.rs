//! Eager forward and adjoint kernels.
//!
//! Convolutions are lowered to im2col + GEMM over fixed-size row chunks. The
//! chunking depends only on tensor shapes, so results do not depend on how
//! many threads execute the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Result, Scalar, Tensor4, TensorError};

/// Target im2col buffer size per chunk, in elements.
const CHUNK_ELEMS: usize = 1 << 18;

/// Zero padding for a stride-1 convolution whose output keeps the input's
/// spatial size. The trailing side receives `k - 1 - leading`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub left: usize,
}

impl Padding {
    /// Centred padding for odd kernels; for a 2x2 kernel this pads one row
    /// and column on the bottom/right only.
    pub fn same(kh: usize, kw: usize) -> Self {
        Self {
            top: (kh - 1) / 2,
            left: (kw - 1) / 2,
        }
    }

    /// The padding of the adjoint convolution.
    fn flipped(self, kh: usize, kw: usize) -> Self {
        Self {
            top: kh - 1 - self.top,
            left: kw - 1 - self.left,
        }
    }
}

fn check_conv<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    pad: Padding,
) -> Result<()> {
    let [kh, kw, cin, cout] = kernel.shape();
    if input.channels() != cin || kh == 0 || kw == 0 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            left: input.shape(),
            right: kernel.shape(),
        });
    }
    if pad.top >= kh || pad.left >= kw {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d padding",
            left: [pad.top, pad.left, 0, 0],
            right: kernel.shape(),
        });
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                left: kernel.shape(),
                right: b.shape(),
            });
        }
    }
    Ok(())
}

/// Fills `col` with the receptive fields of output pixels `[row0, row0 + rows)`.
fn im2col<T: Scalar>(
    input: &Tensor4<T>,
    kh: usize,
    kw: usize,
    pad: Padding,
    row0: usize,
    rows: usize,
    col: &mut [T],
) {
    let [_, h, w, c] = input.shape();
    let k = kh * kw * c;
    let src = input.data();
    for r in 0..rows {
        let p = row0 + r;
        let b = p / (h * w);
        let y = (p / w) % h;
        let x = p % w;
        let dst = &mut col[r * k..(r + 1) * k];
        for ky in 0..kh {
            let iy = (y + ky) as isize - pad.top as isize;
            for kx in 0..kw {
                let ix = (x + kx) as isize - pad.left as isize;
                let seg = &mut dst[(ky * kw + kx) * c..(ky * kw + kx + 1) * c];
                if iy < 0 || iy >= h as isize || ix < 0 || ix >= w as isize {
                    seg.fill(T::zero());
                } else {
                    let off = ((b * h + iy as usize) * w + ix as usize) * c;
                    seg.copy_from_slice(&src[off..off + c]);
                }
            }
        }
    }
}

fn chunk_rows(k: usize, total: usize) -> usize {
    (CHUNK_ELEMS / k.max(1)).clamp(1, total.max(1))
}

/// Stride-1 same-size convolution. `kernel` is `[kh, kw, cin, cout]`, `bias`
/// holds `cout` values.
pub fn conv2d<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &Tensor4<T>,
    bias: Option<&Tensor4<T>>,
    pad: Padding,
) -> Result<Tensor4<T>> {
    check_conv(input, kernel, bias, pad)?;
    let [n, h, w, _] = input.shape();
    let [kh, kw, cin, cout] = kernel.shape();
    let rows = n * h * w;
    let k = kh * kw * cin;
    let mut out = Tensor4::zeros([n, h, w, cout]);
    if rows == 0 || cout == 0 {
        return Ok(out);
    }
    if kh == 1 && kw == 1 {
        T::gemm(rows, k, cout, input.data(), false, kernel.data(), false, out.data_mut(), false);
    } else {
        let step = chunk_rows(k, rows);
        out.data_mut()
            .par_chunks_mut(step * cout)
            .enumerate()
            .for_each(|(i, dst)| {
                let row0 = i * step;
                let m = dst.len() / cout;
                let mut col = vec![T::zero(); m * k];
                im2col(input, kh, kw, pad, row0, m, &mut col);
                T::gemm(m, k, cout, &col, false, kernel.data(), false, dst, false);
            });
    }
    if let Some(b) = bias {
        let b = b.data();
        for px in out.data_mut().chunks_exact_mut(cout) {
            for (v, &bb) in px.iter_mut().zip(b) {
                *v = *v + bb;
            }
        }
    }
    Ok(out)
}

/// Spatially flipped kernel with input/output channels swapped.
fn adjoint_kernel<T: Scalar>(kernel: &Tensor4<T>) -> Tensor4<T> {
    let [kh, kw, cin, cout] = kernel.shape();
    Tensor4::from_fn([kh, kw, cout, cin], |[ky, kx, co, ci]| {
        kernel.at([kh - 1 - ky, kw - 1 - kx, ci, co])
    })
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub kernel: Tensor4<T>,
    pub bias: Tensor4<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    kernel: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    pad: Padding,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let [n, h, w, _] = input.shape();
    let [kh, kw, cin, cout] = kernel.shape();
    if grad_out.shape() != [n, h, w, cout] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d backward",
            left: grad_out.shape(),
            right: [n, h, w, cout],
        });
    }
    let rows = n * h * w;
    let k = kh * kw * cin;

    let mut bias = Tensor4::zeros([1, 1, 1, cout]);
    {
        let db = bias.data_mut();
        for px in grad_out.data().chunks_exact(cout) {
            for (acc, &g) in db.iter_mut().zip(px) {
                *acc = *acc + g;
            }
        }
    }

    let mut dk = Tensor4::zeros(kernel.shape());
    if kh == 1 && kw == 1 {
        T::gemm(k, rows, cout, input.data(), true, grad_out.data(), false, dk.data_mut(), false);
    } else {
        let step = chunk_rows(k, rows);
        let mut col = vec![T::zero(); step * k];
        let mut row0 = 0;
        while row0 < rows {
            let m = step.min(rows - row0);
            im2col(input, kh, kw, pad, row0, m, &mut col[..m * k]);
            T::gemm(
                k,
                m,
                cout,
                &col[..m * k],
                true,
                &grad_out.data()[row0 * cout..(row0 + m) * cout],
                false,
                dk.data_mut(),
                true,
            );
            row0 += m;
        }
    }

    let dx = if need_input_grad {
        Some(conv2d(
            grad_out,
            &adjoint_kernel(kernel),
            None,
            pad.flipped(kh, kw),
        )?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: dx,
        kernel: dk,
        bias,
    })
}

/// 2x2 / stride-2 max pooling. Returns the pooled map and, per output
/// element, the flat index of the selected input. Ties go to the first
/// element in row-major order within the window.
pub fn maxpool2x2<T: Scalar>(input: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<u32>)> {
    let [n, h, w, c] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::OddSpatial {
            op: "maxpool2x2",
            height: h,
            width: w,
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([n, oh, ow, c]);
    let mut argmax = vec![0u32; n * oh * ow * c];
    let src = input.data();
    let mut o = 0;
    for b in 0..n {
        for y in 0..oh {
            for x in 0..ow {
                for ch in 0..c {
                    let mut best_i = input.index([b, 2 * y, 2 * x, ch]);
                    let mut best = src[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = input.index([b, 2 * y + dy, 2 * x + dx, ch]);
                        if src[i] > best {
                            best = src[i];
                            best_i = i;
                        }
                    }
                    out.data_mut()[o] = best;
                    argmax[o] = best_i as u32;
                    o += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward<T: Scalar>(
    input_shape: [usize; 4],
    argmax: &[u32],
    grad_out: &Tensor4<T>,
) -> Tensor4<T> {
    let mut dx = Tensor4::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i as usize] = d[i as usize] + g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let [n, h, w, c] = input.shape();
    let mut out = Tensor4::zeros([n, 2 * h, 2 * w, c]);
    let src = input.data();
    let dst = out.data_mut();
    for b in 0..n {
        for y in 0..2 * h {
            for x in 0..2 * w {
                let s = ((b * h + y / 2) * w + x / 2) * c;
                let d = ((b * 2 * h + y) * 2 * w + x) * c;
                dst[d..d + c].copy_from_slice(&src[s..s + c]);
            }
        }
    }
    out
}

pub fn upsample2x_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Tensor4<T> {
    let [n, h2, w2, c] = grad_out.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Tensor4::zeros([n, h, w, c]);
    let src = grad_out.data();
    let dst = dx.data_mut();
    for b in 0..n {
        for y in 0..h2 {
            for x in 0..w2 {
                let s = ((b * h2 + y) * w2 + x) * c;
                let d = ((b * h + y / 2) * w + x / 2) * c;
                for ch in 0..c {
                    dst[d + ch] = dst[d + ch] + src[s + ch];
                }
            }
        }
    }
    dx
}

pub fn relu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(input: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4 {
        shape: input.shape(),
        data,
    }
}

/// Logistic sigmoid, kept strictly inside (0, 1) even where the exact value
/// rounds to an endpoint.
pub fn sigmoid<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / T::lit(2.0);
    input.map(|x| {
        let y = if x >= T::zero() {
            T::one() / (T::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (T::one() + e)
        };
        y.max(lo).min(hi)
    })
}

pub fn sigmoid_backward<T: Scalar>(output: &Tensor4<T>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor4 {
        shape: output.shape(),
        data,
    }
}

/// Channel concatenation; `a`'s channels come first.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, h, w, ca] = a.shape();
    let cb = b.channels();
    if b.shape()[..3] != a.shape()[..3] {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut data = Vec::with_capacity(n * h * w * (ca + cb));
    if ca == 0 {
        data.extend_from_slice(b.data());
    } else if cb == 0 {
        data.extend_from_slice(a.data());
    } else {
        for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
            data.extend_from_slice(pa);
            data.extend_from_slice(pb);
        }
    }
    Ok(Tensor4 {
        shape: [n, h, w, ca + cb],
        data,
    })
}

pub fn concat_channels_backward<T: Scalar>(
    grad_out: &Tensor4<T>,
    channels_a: usize,
) -> (Tensor4<T>, Tensor4<T>) {
    let c = grad_out.channels();
    (
        grad_out.slice_channels(0, channels_a),
        grad_out.slice_channels(channels_a, c - channels_a),
    )
}

/// Inverted dropout. Returns the output and the multiplicative mask (absent
/// when the op is the identity).
pub fn dropout<T: Scalar>(
    input: &Tensor4<T>,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<(Tensor4<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) || rate.is_nan() {
        return Err(TensorError::InvalidRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let data = input
        .data()
        .iter()
        .zip(&mask)
        .map(|(&x, &m)| x * m)
        .collect();
    Ok((
        Tensor4 {
            shape: input.shape(),
            data,
        },
        Some(mask),
    ))
}

pub fn dropout_backward<T: Scalar>(mask: Option<&[T]>, grad_out: &Tensor4<T>) -> Tensor4<T> {
    match mask {
        None => grad_out.clone(),
        Some(mask) => Tensor4 {
            shape: grad_out.shape(),
            data: grad_out
                .data()
                .iter()
                .zip(mask)
                .map(|(&g, &m)| g * m)
                .collect(),
        },
    }
}

/// Mean squared error over every element.
pub fn mse_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "mse_loss",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let sum = pred
        .data()
        .iter()
        .zip(target.data())
        .fold(0.0f64, |acc, (&p, &t)| {
            let d = (p - t).as_f64();
            acc + d * d
        });
    Ok(T::lit(sum / pred.len() as f64))
}

pub fn mse_loss_backward<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>, scale: T) -> Tensor4<T> {
    let k = scale * T::lit(2.0 / pred.len().max(1) as f64);
    Tensor4 {
        shape: pred.shape(),
        data: pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| k * (p - t))
            .collect(),
    }
}
