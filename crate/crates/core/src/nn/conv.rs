//! Convolution primitives for the spatial codecs.
//!
//! Activations use a channel-major `(C, B, H, W)` layout so an im2col
//! convolution is a single matrix product whose result is already laid out
//! as the next activation.

use ndarray::{Array2, Array4, ArrayView2, Axis};

const SLOPE: f32 = super::LEAKY_SLOPE as f32;

/// Unrolls `k×k` patches (stride 1, same padding) into `(C·k·k, B·H·W)`.
pub fn im2col(x: &Array4<f32>, k: usize) -> Array2<f32> {
    let (c, b, h, w) = x.dim();
    if k == 1 {
        return x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, b * h * w))
            .expect("contiguous");
    }
    let pad = (k / 2) as isize;
    let hw = h * w;
    let ncols = b * hw;
    let mut cols = Array2::<f32>::zeros((c * k * k, ncols));
    let xs = x.as_slice().expect("standard layout");
    let out = cols.as_slice_mut().unwrap();
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut out[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for bi in 0..b {
                    let src = &xs[(ci * b + bi) * hw..(ci * b + bi + 1) * hw];
                    let dst = &mut dst[bi * hw..(bi + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx.max(0)) as usize;
                        let srow = &src[sy * w..(sy + 1) * w];
                        let drow = &mut dst[y * w..(y + 1) * w];
                        for xx in x0..x1 {
                            drow[xx] = srow[(xx as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub fn col2im(cols: &Array2<f32>, shape: (usize, usize, usize, usize), k: usize) -> Array4<f32> {
    let (c, b, h, w) = shape;
    if k == 1 {
        return cols
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(shape)
            .expect("contiguous");
    }
    let pad = (k / 2) as isize;
    let hw = h * w;
    let ncols = b * hw;
    let mut x = Array4::<f32>::zeros(shape);
    let xs = x.as_slice_mut().unwrap();
    let cs = cols.as_slice().expect("standard layout");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cs[row * ncols..(row + 1) * ncols];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for bi in 0..b {
                    let dst = &mut xs[(ci * b + bi) * hw..(ci * b + bi + 1) * hw];
                    let src = &src[bi * hw..(bi + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx.max(0)) as usize;
                        let srow = &src[y * w..(y + 1) * w];
                        let drow = &mut dst[sy * w..(sy + 1) * w];
                        for xx in x0..x1 {
                            drow[(xx as isize + dx) as usize] += srow[xx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Convolution with weights `(C_out, C_in·k·k)`. Returns the output and the
/// unrolled input needed by the backward pass.
pub fn conv_forward(
    x: &Array4<f32>,
    weight: &[f32],
    bias: &[f32],
    c_out: usize,
    k: usize,
) -> (Array4<f32>, Array2<f32>) {
    let (c_in, b, h, w) = x.dim();
    let cols = im2col(x, k);
    let wv = ArrayView2::from_shape((c_out, c_in * k * k), weight).expect("weight shape");
    let mut y = wv.dot(&cols);
    for (mut row, &bb) in y.axis_iter_mut(Axis(0)).zip(bias) {
        row.mapv_inplace(|v| v + bb);
    }
    let y = y.into_shape_with_order((c_out, b, h, w)).expect("output shape");
    (y, cols)
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    cols: &Array2<f32>,
    in_shape: (usize, usize, usize, usize),
    weight: &[f32],
    dy: &Array4<f32>,
    gw: &mut [f32],
    gb: &mut [f32],
    k: usize,
    need_dx: bool,
) -> Option<Array4<f32>> {
    let (c_out, b, h, w) = dy.dim();
    let c_in = in_shape.0;
    let dy2 = dy
        .view()
        .into_shape_with_order((c_out, b * h * w))
        .expect("contiguous grad");
    let dw = dy2.dot(&cols.t());
    for (g, d) in gw.iter_mut().zip(dw.iter()) {
        *g += d;
    }
    for (g, row) in gb.iter_mut().zip(dy2.axis_iter(Axis(0))) {
        *g += row.sum();
    }
    if !need_dx {
        return None;
    }
    let wv = ArrayView2::from_shape((c_out, c_in * k * k), weight).expect("weight shape");
    let dcols = wv.t().dot(&dy2);
    Some(col2im(&dcols, in_shape, k))
}

pub fn leaky_relu(x: &mut Array4<f32>) {
    x.mapv_inplace(|v| if v > 0.0 { v } else { SLOPE * v });
}

/// Backward through a leaky rectifier given its *output* (sign-preserving).
pub fn leaky_relu_backward(out: &Array4<f32>, dy: &mut Array4<f32>) {
    ndarray::Zip::from(dy).and(out).for_each(|d, &o| {
        if o <= 0.0 {
            *d *= SLOPE;
        }
    });
}

pub fn avg_pool2(x: &Array4<f32>) -> Array4<f32> {
    let (c, b, h, w) = x.dim();
    let (h2, w2) = (h / 2, w / 2);
    let mut y = Array4::<f32>::zeros((c, b, h2, w2));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().unwrap();
    for p in 0..c * b {
        let src = &xs[p * h * w..(p + 1) * h * w];
        let dst = &mut ys[p * h2 * w2..(p + 1) * h2 * w2];
        for yy in 0..h2 {
            for xx in 0..w2 {
                let i = 2 * yy * w + 2 * xx;
                dst[yy * w2 + xx] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    y
}

pub fn avg_pool2_backward(dy: &Array4<f32>) -> Array4<f32> {
    let (c, b, h2, w2) = dy.dim();
    let (h, w) = (h2 * 2, w2 * 2);
    let mut dx = Array4::<f32>::zeros((c, b, h, w));
    let ds = dy.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().unwrap();
    for p in 0..c * b {
        let src = &ds[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut xs[p * h * w..(p + 1) * h * w];
        for yy in 0..h {
            for xx in 0..w {
                dst[yy * w + xx] = 0.25 * src[(yy / 2) * w2 + xx / 2];
            }
        }
    }
    dx
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2(x: &Array4<f32>) -> Array4<f32> {
    let (c, b, h, w) = x.dim();
    let (h2, w2) = (h * 2, w * 2);
    let mut y = Array4::<f32>::zeros((c, b, h2, w2));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().unwrap();
    for p in 0..c * b {
        let src = &xs[p * h * w..(p + 1) * h * w];
        let dst = &mut ys[p * h2 * w2..(p + 1) * h2 * w2];
        for yy in 0..h2 {
            for xx in 0..w2 {
                dst[yy * w2 + xx] = src[(yy / 2) * w + xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward(dy: &Array4<f32>) -> Array4<f32> {
    let (c, b, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array4::<f32>::zeros((c, b, h, w));
    let ds = dy.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().unwrap();
    for p in 0..c * b {
        let src = &ds[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut xs[p * h * w..(p + 1) * h * w];
        for yy in 0..h2 {
            for xx in 0..w2 {
                dst[(yy / 2) * w + xx / 2] += src[yy * w2 + xx];
            }
        }
    }
    dx
}
