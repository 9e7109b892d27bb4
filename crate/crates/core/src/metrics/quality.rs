use super::{MetricsError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
const WIN: usize = 11;
const WIN_SIGMA: f64 = 1.5;
const MIN_SIDE: usize = 161;

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(MetricsError::Shape(a.shape().to_vec(), b.shape().to_vec()));
    }
    Ok(())
}

/// `10·log10(1 / MSE)` for images in [0,1]; `+∞` when they are identical.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    if a.numel() == 0 {
        return Err(MetricsError::Invalid("psnr of an empty image".into()));
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    let mse = sse / a.numel() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> [f64; WIN] {
    let mut w = [0.0; WIN];
    let c = (WIN / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WIN_SIGMA * WIN_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" Gaussian filtering of one plane.
fn filter(plane: &[f64], h: usize, w: usize, win: &[f64; WIN]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - WIN, w + 1 - WIN);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..WIN).map(|k| win[k] * plane[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..WIN).map(|k| win[k] * rows[(i + k) * ow + j]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean luminance term and mean contrast-structure term of one plane pair.
pub fn ssim_components(x: &[f64], y: &[f64], h: usize, w: usize) -> (f64, f64) {
    let win = gaussian_window();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mx, ..) = filter(x, h, w, &win);
    let (my, ..) = filter(y, h, w, &win);
    let (sxx, ..) = filter(&prod(x, x), h, w, &win);
    let (syy, ..) = filter(&prod(y, y), h, w, &win);
    let (sxy, ..) = filter(&prod(x, y), h, w, &win);
    let n = mx.len() as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mx.len() {
        let (a, b) = (mx[i], my[i]);
        let vx = sxx[i] - a * a;
        let vy = syy[i] - b * b;
        let cov = sxy[i] - a * b;
        l_sum += (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        cs_sum += (2.0 * cov + SSIM_C2) / (vx + vy + SSIM_C2);
    }
    (l_sum / n, cs_sum / n)
}

/// 2×2 average pooling with ceil-sized output; an odd trailing row or
/// column is averaged over the pixels that exist.
fn downsample(p: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let (mut s, mut n) = (0.0, 0.0);
            for di in 0..2 {
                for dj in 0..2 {
                    let (r, c) = (2 * i + di, 2 * j + dj);
                    if r < h && c < w {
                        s += p[r * w + c];
                        n += 1.0;
                    }
                }
            }
            out[i * ow + j] = s / n;
        }
    }
    (out, oh, ow)
}

fn ms_ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let (mut x, mut y, mut h, mut w) = (x.to_vec(), y.to_vec(), h, w);
    let mut acc = 1.0;
    for (s, &weight) in MSSSIM_WEIGHTS.iter().enumerate() {
        let (l, cs) = ssim_components(&x, &y, h, w);
        let term = if s + 1 == MSSSIM_WEIGHTS.len() { l * cs } else { cs };
        acc *= term.max(0.0).powf(weight);
        if s + 1 < MSSSIM_WEIGHTS.len() {
            let (nx, nh, nw) = downsample(&x, h, w);
            y = downsample(&y, h, w).0;
            (x, h, w) = (nx, nh, nw);
        }
    }
    acc
}

/// Five-scale MS-SSIM of `C×H×W` images in [0,1], averaged over channels.
pub fn ms_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b)?;
    let (c, h, w) = a.chw().map_err(|e| MetricsError::Invalid(e.to_string()))?;
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(MetricsError::TooSmall { h, w });
    }
    if a.data() == b.data() {
        return Ok(1.0);
    }
    let plane = h * w;
    let to64 = |t: &Tensor<T>, k: usize| t.data()[k * plane..(k + 1) * plane].iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>();
    let total: f64 = (0..c).map(|k| ms_ssim_plane(&to64(a, k), &to64(b, k), h, w)).sum();
    Ok(total / c as f64)
}
