//! Batched layer kernels. Tensors are flat, row-major, batch-first
//! (`N x C x H x W` for maps, `N x D` for vectors).

use super::real::{matmul, Real};

/// Shape of a same-padded, stride-1 square convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn plane(&self) -> usize {
        self.size * self.size
    }
}

/// Unfolds one `C x S x S` input into a `(C*K*K) x (S*S)` patch matrix.
fn im2col<T: Real>(shape: &ConvShape, input: &[T], cols: &mut [T]) {
    let s = shape.size;
    let k = shape.kernel;
    let pad = (k / 2) as isize;
    for c in 0..shape.in_channels {
        let plane = &input[c * s * s..(c + 1) * s * s];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * s * s..(row + 1) * s * s];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (s as isize - dx).min(s as isize) as usize;
                for y in 0..s {
                    let sy = y as isize + ky as isize - pad;
                    let out = &mut dst[y * s..(y + 1) * s];
                    if sy < 0 || sy >= s as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * s..(sy as usize + 1) * s];
                    out[..x_lo].fill(T::zero());
                    out[x_hi..].fill(T::zero());
                    for x in x_lo..x_hi {
                        out[x] = src[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im<T: Real>(shape: &ConvShape, cols: &[T], grad_input: &mut [T]) {
    let s = shape.size;
    let k = shape.kernel;
    let pad = (k / 2) as isize;
    for c in 0..shape.in_channels {
        let plane = &mut grad_input[c * s * s..(c + 1) * s * s];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * s * s..(row + 1) * s * s];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (s as isize - dx).min(s as isize) as usize;
                for y in 0..s {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= s as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * s..(sy as usize + 1) * s];
                    for x in x_lo..x_hi {
                        dst[(x as isize + dx) as usize] += src[y * s + x];
                    }
                }
            }
        }
    }
}

/// Convolution followed by ReLU. Weight layout `[out][in][ky][kx]`.
pub fn conv_relu_forward<T: Real>(
    shape: &ConvShape,
    weight: &[T],
    bias: &[T],
    input: &[T],
    batch: usize,
) -> Vec<T> {
    let (patch, plane) = (shape.patch(), shape.plane());
    let in_len = shape.in_channels * plane;
    let out_len = shape.out_channels * plane;
    let mut cols = vec![T::zero(); patch * plane];
    let mut out = vec![T::zero(); batch * out_len];
    for b in 0..batch {
        im2col(shape, &input[b * in_len..(b + 1) * in_len], &mut cols);
        let y = &mut out[b * out_len..(b + 1) * out_len];
        for (f, row) in y.chunks_exact_mut(plane).enumerate() {
            row.fill(bias[f]);
        }
        matmul(shape.out_channels, patch, plane, weight, false, &cols, false, y, true);
        for v in y.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
    out
}

/// Backward pass of [`conv_relu_forward`]. `output` is the forward result
/// (used as the ReLU mask). Gradients accumulate into `grad_weight` and
/// `grad_bias`; the input gradient is returned when `want_input_grad`.
#[allow(clippy::too_many_arguments)]
pub fn conv_relu_backward<T: Real>(
    shape: &ConvShape,
    weight: &[T],
    input: &[T],
    output: &[T],
    grad_output: &[T],
    batch: usize,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let (patch, plane) = (shape.patch(), shape.plane());
    let in_len = shape.in_channels * plane;
    let out_len = shape.out_channels * plane;
    let mut cols = vec![T::zero(); patch * plane];
    let mut dcols = vec![T::zero(); patch * plane];
    let mut dy = vec![T::zero(); out_len];
    let mut grad_input = want_input_grad.then(|| vec![T::zero(); batch * in_len]);
    for b in 0..batch {
        let y = &output[b * out_len..(b + 1) * out_len];
        let g = &grad_output[b * out_len..(b + 1) * out_len];
        for ((d, &yv), &gv) in dy.iter_mut().zip(y).zip(g) {
            *d = if yv > T::zero() { gv } else { T::zero() };
        }
        for (f, row) in dy.chunks_exact(plane).enumerate() {
            grad_bias[f] += row.iter().copied().sum::<T>();
        }
        im2col(shape, &input[b * in_len..(b + 1) * in_len], &mut cols);
        matmul(shape.out_channels, plane, patch, &dy, false, &cols, true, grad_weight, true);
        if let Some(gi) = grad_input.as_mut() {
            matmul(patch, shape.out_channels, plane, weight, true, &dy, false, &mut dcols, false);
            col2im(shape, &dcols, &mut gi[b * in_len..(b + 1) * in_len]);
        }
    }
    grad_input
}

/// 2x2 stride-2 max pool; odd trailing rows/columns are dropped.
/// Returns the pooled tensor and, per output, the flat input index of the
/// maximum (first one in row-major window order on ties).
pub fn maxpool_forward<T: Real>(
    input: &[T],
    batch: usize,
    channels: usize,
    size: usize,
) -> (Vec<T>, Vec<u32>) {
    let half = size / 2;
    let mut out = Vec::with_capacity(batch * channels * half * half);
    let mut idx = Vec::with_capacity(out.capacity());
    for bc in 0..batch * channels {
        let base = bc * size * size;
        for oy in 0..half {
            for ox in 0..half {
                let mut best = base + (2 * oy) * size + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * size + 2 * ox + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub fn maxpool_backward<T: Real>(grad_output: &[T], indices: &[u32], input_len: usize) -> Vec<T> {
    let mut grad = vec![T::zero(); input_len];
    for (&g, &i) in grad_output.iter().zip(indices) {
        grad[i as usize] += g;
    }
    grad
}

/// `y = x W^T + b` with `W` stored `[out][in]`.
pub fn linear_forward<T: Real>(
    weight: &[T],
    bias: &[T],
    input: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        out.extend_from_slice(bias);
    }
    matmul(batch, inputs, outputs, input, false, weight, true, &mut out, true);
    out
}

/// Accumulates weight/bias gradients and returns the input gradient if asked.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Real>(
    weight: &[T],
    input: &[T],
    grad_output: &[T],
    batch: usize,
    inputs: usize,
    outputs: usize,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    matmul(outputs, batch, inputs, grad_output, true, input, false, grad_weight, true);
    for row in grad_output.chunks_exact(outputs) {
        for (gb, &g) in grad_bias.iter_mut().zip(row) {
            *gb += g;
        }
    }
    want_input_grad.then(|| {
        let mut gi = vec![T::zero(); batch * inputs];
        matmul(batch, outputs, inputs, grad_output, false, weight, false, &mut gi, false);
        gi
    })
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_mask<T: Real>(grad: &mut [T], output: &[T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}
