//! Autoregressive context model.
//!
//! A 5×5 convolution masked so that position `(i, j)` only sees latents at
//! raster-earlier positions (all channels) feeds, together with the
//! hyperprior features, a three-layer 1×1 network producing (μ, σ).
//!
//! [`ContextModel::params_at`] evaluates one position in plain `f64` with
//! a fixed summation order. Encoder and decoder both call it, which is what
//! makes serial decoding reproduce the encoder's tables bit for bit.

use super::blocks::SLOPE;
use super::{ParamStore, Result};
use crate::scalar::Scalar;
use crate::stats::sigma_from_raw;
use crate::tensor::Tensor;

pub const MASK_SIZE: usize = 5;

/// 1 where the tap reads a raster-earlier position, else 0; shape
/// `c_out × c_in × 5 × 5`.
pub fn causal_mask<T: Scalar>(c_out: usize, c_in: usize) -> Tensor<T> {
    let k = MASK_SIZE;
    let c = k / 2;
    let plane: Vec<T> = (0..k * k).map(|i| if i < c * k + c { T::one() } else { T::zero() }).collect();
    let data = (0..c_out * c_in).flat_map(|_| plane.iter().copied()).collect();
    Tensor::new(vec![c_out, c_in, k, k], data).expect("consistent shape")
}

#[derive(Debug, Clone)]
struct Dense {
    w: Vec<f64>,
    b: Vec<f64>,
    c_in: usize,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        for (o, &bias) in self.b.iter().enumerate() {
            let row = &self.w[o * self.c_in..(o + 1) * self.c_in];
            let mut acc = bias;
            for (&wv, &xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            out.push(if relu && acc <= 0.0 { acc * SLOPE } else { acc });
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContextModel {
    m: usize,
    /// Causal taps only: `(c_out, c_in, dy, dx)` flattened per output channel.
    taps: Vec<Vec<(usize, isize, isize, f64)>>,
    masked_bias: Vec<f64>,
    fc: [Dense; 3],
}

impl ContextModel {
    pub fn new<T: Scalar>(params: &ParamStore<T>, m: usize) -> Result<Self> {
        let to64 = |name: &str| -> Result<Vec<f64>> { Ok(params.get(name)?.data().iter().map(|v| v.to_f64_lossy()).collect()) };
        let k = MASK_SIZE;
        let c = (k / 2) as isize;
        let w = to64("ctx.masked.weight")?;
        let mut taps = vec![Vec::new(); 2 * m];
        for (co, t) in taps.iter_mut().enumerate() {
            for ci in 0..m {
                for p in 0..(k * k) / 2 {
                    let v = w[(co * m + ci) * k * k + p];
                    if v != 0.0 {
                        t.push((ci, (p / k) as isize - c, (p % k) as isize - c, v));
                    }
                }
            }
        }
        let dense = |name: &str, c_in: usize| -> Result<Dense> {
            Ok(Dense { w: to64(&format!("{name}.weight"))?, b: to64(&format!("{name}.bias"))?, c_in })
        };
        Ok(Self {
            m,
            taps,
            masked_bias: to64("ctx.masked.bias")?,
            fc: [dense("ctx.fc1", 4 * m)?, dense("ctx.fc2", 3 * m)?, dense("ctx.fc3", 3 * m)?],
        })
    }

    /// (μ, σ) for every channel at `(i, j)`. `yhat` is `M × h × w`; entries
    /// at or after `(i, j)` in raster order are never read. `hyper` is the
    /// `2M × h × w` hyperprior output.
    pub fn params_at(&self, yhat: &[f64], hyper: &[f64], h: usize, w: usize, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let plane = h * w;
        let mut feat = Vec::with_capacity(4 * m);
        for (taps, &bias) in self.taps.iter().zip(&self.masked_bias) {
            let mut acc = bias;
            for &(ci, dy, dx, wv) in taps {
                let (y, x) = (i as isize + dy, j as isize + dx);
                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                    acc += wv * yhat[ci * plane + y as usize * w + x as usize];
                }
            }
            feat.push(acc);
        }
        feat.extend((0..2 * m).map(|c| hyper[c * plane + i * w + j]));
        let (mut a, mut b) = (Vec::with_capacity(3 * m), Vec::with_capacity(3 * m));
        self.fc[0].apply(&feat, &mut a, true);
        self.fc[1].apply(&a, &mut b, true);
        self.fc[2].apply(&b, &mut a, false);
        let mu = a[..m].to_vec();
        let sigma = a[m..2 * m].iter().map(|&r| sigma_from_raw(r)).collect();
        (mu, sigma)
    }
}
