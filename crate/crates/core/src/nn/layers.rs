//! Per-image layer kernels: 3×3 same convolution, 2×2 max-pooling, dense, ReLU.

use super::tensor::{matmul, Scalar, Tensor};
use crate::error::{Error, Result};

fn dims3<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::param(format!("{what}: expected a C×H×W tensor, got {:?}", t.shape()))),
    }
}

/// Unfolds a zero-padded `C×H×W` input into a `(C·9) × (H·W)` patch matrix.
pub(crate) fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::ZERO; c * 9 * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::ZERO; c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src = &row[y * w..(y + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d += *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
    out
}

fn check_conv<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = dims3(input, "conv input")?;
    let m = match *weights.shape() {
        [m, wc, 3, 3] if wc == c => m,
        _ => {
            return Err(Error::param(format!(
                "conv weights {:?} do not fit a {c}-channel input",
                weights.shape()
            )))
        }
    };
    bias.expect_shape(&[m], "conv bias")?;
    Ok((c, h, w, m))
}

/// 3×3 cross-correlation with zero "same" padding, stride 1.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w, m) = check_conv(input, weights, bias)?;
    let hw = h * w;
    let col = im2col(input.data(), c, h, w);
    let mut out = vec![T::ZERO; m * hw];
    for (map, b) in bias.data().iter().enumerate() {
        out[map * hw..(map + 1) * hw].fill(*b);
    }
    matmul(m, c * 9, hw, weights.data(), false, &col, false, &mut out, true);
    Tensor::new(&[m, h, w], out)
}

/// Gradients of a convolution given `dL/d(output)`.
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let (c, h, w) = dims3(input, "conv input")?;
    let m = weights.shape()[0];
    weights.expect_shape(&[m, c, 3, 3], "conv weights")?;
    grad_out.expect_shape(&[m, h, w], "conv output gradient")?;
    let hw = h * w;
    let col = im2col(input.data(), c, h, w);
    let mut gw = vec![T::ZERO; m * c * 9];
    matmul(m, hw, c * 9, grad_out.data(), false, &col, true, &mut gw, false);
    let gb = grad_out
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().fold(T::ZERO, |a, &v| a + v))
        .collect();
    let input_grad = if need_input_grad {
        let mut gcol = vec![T::ZERO; c * 9 * hw];
        matmul(c * 9, m, hw, weights.data(), true, grad_out.data(), false, &mut gcol, false);
        Some(Tensor::new(&[c, h, w], col2im(&gcol, c, h, w))?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: input_grad,
        weights: Tensor::new(&[m, c, 3, 3], gw)?,
        bias: Tensor::new(&[m], gb)?,
    })
}

/// Winner of each 2×2 window as its row-major position 0..4.
pub type PoolWinners = Vec<u8>;

/// 2×2 max-pooling, stride 2; ties go to the first element in window order.
pub fn maxpool2d_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolWinners)> {
    let (c, h, w) = dims3(input, "pool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::param(format!("max-pool needs even spatial dims, got {h}×{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut winners = Vec::with_capacity(c * oh * ow);
    for rows in input.data().chunks_exact(2 * w) {
        let (top, bottom) = rows.split_at(w);
        for (t, b) in top.chunks_exact(2).zip(bottom.chunks_exact(2)) {
            let window = [t[0], t[1], b[0], b[1]];
            let mut best = 0;
            for k in 1..4 {
                if window[k] > window[best] {
                    best = k;
                }
            }
            out.push(window[best]);
            winners.push(best as u8);
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, winners))
}

/// Routes each pooled value back to its window's winner.
pub fn maxpool2d_backward<T: Scalar>(grad_out: &Tensor<T>, winners: &[u8], input_shape: &[usize]) -> Result<Tensor<T>> {
    let [c, h, w] = *input_shape else {
        return Err(Error::param("pool input shape must be C×H×W"));
    };
    grad_out.expect_shape(&[c, h / 2, w / 2], "pool output gradient")?;
    if winners.len() != grad_out.len() {
        return Err(Error::param("winner count does not match pooled size"));
    }
    let mut out = vec![T::ZERO; c * h * w];
    let ow = w / 2;
    let pooled_rows = grad_out.data().chunks_exact(ow).zip(winners.chunks_exact(ow));
    for (rows, (g, win)) in out.chunks_exact_mut(2 * w).zip(pooled_rows) {
        for (ox, (&g, &win)) in g.iter().zip(win).enumerate() {
            rows[(win as usize >> 1) * w + 2 * ox + (win as usize & 1)] = g;
        }
    }
    Tensor::new(input_shape, out)
}

pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let n = input.len();
    let k = match *weights.shape() {
        [k, wn] if wn == n => k,
        _ => return Err(Error::param(format!("dense weights {:?} do not fit {n} inputs", weights.shape()))),
    };
    bias.expect_shape(&[k], "dense bias")?;
    let mut out = bias.data().to_vec();
    matmul(k, n, 1, weights.data(), false, input.data(), false, &mut out, true);
    Tensor::new(&[k], out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
    let n = input.len();
    let k = grad_out.len();
    weights.expect_shape(&[k, n], "dense weights")?;
    let mut gw = vec![T::ZERO; k * n];
    matmul(k, 1, n, grad_out.data(), false, input.data(), false, &mut gw, false);
    let mut gi = vec![T::ZERO; n];
    matmul(n, k, 1, weights.data(), true, grad_out.data(), false, &mut gi, false);
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), gi)?,
        weights: Tensor::new(&[k, n], gw)?,
        bias: grad_out.clone(),
    })
}

pub fn relu<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if !(*v > T::ZERO) {
            *v = T::ZERO;
        }
    }
}

/// Zeroes the gradient wherever the ReLU output was not positive.
pub fn relu_backward<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &a) in grad.data_mut().iter_mut().zip(output.data()) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}
