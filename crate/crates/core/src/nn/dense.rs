//! Fully connected primitives on `(batch, features)` matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::LEAKY_SLOPE;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// `y = x·W + b` with `W` stored as `(in, out)`.
pub fn linear_forward(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Array2<f64> {
    let dw = x.t().dot(&dy);
    for (g, d) in gw.iter_mut().zip(dw.iter()) {
        *g += d;
    }
    for (g, d) in gb.iter_mut().zip(dy.sum_axis(Axis(0)).iter()) {
        *g += d;
    }
    dy.dot(&w.t())
}

pub fn leaky_relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
}

pub fn leaky_relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(pre).for_each(|d, &p| {
        if p <= 0.0 {
            *d *= LEAKY_SLOPE;
        }
    });
    dx
}

/// Saved state of a training-mode batch-norm forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

pub fn batch_norm_train(
    z: &Array2<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
) -> (Array2<f64>, BatchNormCache) {
    let n = z.nrows() as f64;
    let mean = z.sum_axis(Axis(0)) / n;
    let centered = z - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = &centered * &inv_std;
    let y = &xhat * &gamma + beta;
    (
        y,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

pub fn batch_norm_eval(
    z: &Array2<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    running_mean: ArrayView1<f64>,
    running_var: ArrayView1<f64>,
) -> Array2<f64> {
    let inv_std = running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    ((z - &running_mean) * &inv_std) * gamma + beta
}

/// Returns `dz`; accumulates into `ggamma`, `gbeta`.
pub fn batch_norm_backward(
    dy: &Array2<f64>,
    cache: &BatchNormCache,
    gamma: ArrayView1<f64>,
    ggamma: &mut [f64],
    gbeta: &mut [f64],
) -> Array2<f64> {
    let n = dy.nrows() as f64;
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0));
    for (g, d) in ggamma.iter_mut().zip(dgamma.iter()) {
        *g += d;
    }
    for (g, d) in gbeta.iter_mut().zip(dbeta.iter()) {
        *g += d;
    }
    let dxhat = dy * &gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
    let mut dz = &dxhat * n - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat);
    dz *= &(&cache.inv_std / n);
    dz
}

/// Exponential running-statistics update (unbiased variance).
pub fn update_running_stats(cache: &BatchNormCache, batch: usize, running_mean: &mut [f64], running_var: &mut [f64]) {
    let unbias = if batch > 1 {
        batch as f64 / (batch as f64 - 1.0)
    } else {
        1.0
    };
    for i in 0..running_mean.len() {
        running_mean[i] = (1.0 - BN_MOMENTUM) * running_mean[i] + BN_MOMENTUM * cache.mean[i];
        running_var[i] = (1.0 - BN_MOMENTUM) * running_var[i] + BN_MOMENTUM * cache.var[i] * unbias;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fd_check(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, analytic: &Array2<f64>) {
        let h = 1e-6;
        for idx in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            xm.as_slice_mut().unwrap()[idx] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h);
            let ana = analytic.as_slice().unwrap()[idx];
            assert!((num - ana).abs() < 1e-6 * (1.0 + num.abs()), "{idx}: {num} vs {ana}");
        }
    }

    #[test]
    fn batch_norm_input_gradient() {
        let z = array![[0.3, -1.2, 2.0], [1.5, 0.2, -0.7], [-0.4, 0.9, 0.1], [0.8, -0.3, 1.1]];
        let gamma = array![1.3, 0.7, -0.4];
        let beta = array![0.1, -0.2, 0.3];
        let weights = array![[1.0, 2.0, -1.0], [0.5, -0.3, 0.2], [-1.1, 0.4, 0.9], [0.7, 0.6, -0.8]];
        let loss = |z: &Array2<f64>| {
            let (y, _) = batch_norm_train(z, gamma.view(), beta.view());
            (&y * &weights).sum()
        };
        let (_, cache) = batch_norm_train(&z, gamma.view(), beta.view());
        let mut gg = vec![0.0; 3];
        let mut gb = vec![0.0; 3];
        let dz = batch_norm_backward(&weights, &cache, gamma.view(), &mut gg, &mut gb);
        fd_check(loss, &z, &dz);
    }

    #[test]
    fn linear_and_leaky_gradient() {
        let x = array![[0.3, -1.2], [1.5, 0.2], [-0.4, 0.9]];
        let w = array![[0.2, -0.5, 1.0], [0.7, 0.1, -0.3]];
        let b = array![0.05, -0.1, 0.2];
        let weights = array![[1.0, 2.0, -1.0], [0.5, -0.3, 0.2], [-1.1, 0.4, 0.9]];
        let loss = |x: &Array2<f64>| {
            let y = leaky_relu(&linear_forward(x.view(), w.view(), b.view()));
            (&y * &weights).sum()
        };
        let pre = linear_forward(x.view(), w.view(), b.view());
        let dpre = leaky_relu_backward(&pre, &weights);
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 3];
        let dx = linear_backward(x.view(), w.view(), dpre.view(), &mut gw, &mut gb);
        fd_check(loss, &x, &dx);
    }
}
