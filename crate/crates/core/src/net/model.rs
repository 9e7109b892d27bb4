use std::path::Path;

use rand::Rng;

use super::blocks::{attention_block, conv, deconv_to, res_block, SLOPE};
use super::params::has_mid_attention;
use super::{causal_mask, io_err, quantize::uniform_noise, Binding, CodecConfig, NetError, ParamStore, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

pub const LEAKY_SLOPE: f64 = SLOPE;
pub const CHECKPOINT_FILE: &str = "checkpoint.pcnw";
pub const SIDECAR_FILE: &str = "config.json";

/// Per-element Gaussian parameters of a `c × h × w` latent, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub shape: [usize; 3],
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Training-time quantization noise for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise<T> {
    pub y: Tensor<T>,
    pub z: Tensor<T>,
}

impl<T: Scalar> Noise<T> {
    pub fn sample<R: Rng>(cfg: &CodecConfig, height: usize, width: usize, rng: &mut R) -> Result<Self> {
        let (h, w) = cfg.latent_size(height, width)?;
        let (zh, zw) = CodecConfig::hyper_size(h, w);
        Ok(Self { y: uniform_noise(&[cfg.m, h, w], rng), z: uniform_noise(&[cfg.n, zh, zw], rng) })
    }

    pub fn zeros(cfg: &CodecConfig, height: usize, width: usize) -> Result<Self> {
        let (h, w) = cfg.latent_size(height, width)?;
        let (zh, zw) = CodecConfig::hyper_size(h, w);
        Ok(Self { y: Tensor::zeros(vec![cfg.m, h, w]), z: Tensor::zeros(vec![cfg.n, zh, zw]) })
    }
}

/// Graph handles of one training-mode forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub y: Var,
    pub y_tilde: Var,
    pub z: Var,
    pub z_tilde: Var,
    pub mu: Var,
    pub sigma: Var,
    pub x_hat: Var,
    /// Estimated bits of the main and hyper latents.
    pub rate_y: Var,
    pub rate_z: Var,
    pub mse: Var,
    pub loss: Var,
}

/// `(rate_y + rate_z)/pixels + λ·255²·mse`.
pub fn rd_loss(rate_bits: f64, mse: f64, lambda: f64, num_pixels: usize) -> f64 {
    rate_bits / num_pixels as f64 + lambda * 255.0 * 255.0 * mse
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codec<T> {
    pub config: CodecConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Codec<T> {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: CodecConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::from_arrays(&config, params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect())?;
        Ok(Self { config, params })
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Binding {
        Binding::new(g, &self.params, trainable)
    }

    pub fn config_hash(&self) -> u32 {
        self.params.config_hash(&self.config)
    }

    fn check_input(&self, g: &Graph<T>, x: Var, channels: usize) -> Result<(usize, usize)> {
        match *g.shape(x) {
            [c, h, w] if c == channels => {
                self.config.latent_size(h, w)?;
                Ok((h, w))
            }
            ref s => Err(NetError::Geometry(format!("expected a {channels}×H×W input, got {s:?}"))),
        }
    }

    fn analysis(&self, g: &mut Graph<T>, b: &Binding, branch: &str, x: Var) -> Result<Var> {
        let mut h = x;
        for s in 0..self.config.depth {
            h = conv(g, b, &format!("{branch}.down{s}"), h, 2)?;
            h = g.leaky_relu(h, SLOPE)?;
            h = res_block(g, b, &format!("{branch}.res{s}"), h)?;
            if has_mid_attention(&self.config, s) {
                h = attention_block(g, b, &format!("{branch}.attn_mid"), h)?;
            }
        }
        attention_block(g, b, &format!("{branch}.attn_out"), h)
    }

    /// `3×H×W → N×H/16×W/16` (for the default depth of 4).
    pub fn analysis_image(&self, g: &mut Graph<T>, b: &Binding, x: Var) -> Result<Var> {
        self.check_input(g, x, 3)?;
        self.analysis(g, b, "ga_img", x)
    }

    /// `1×H×W → N×H/16×W/16`, with its own parameters.
    pub fn analysis_pointcloud(&self, g: &mut Graph<T>, b: &Binding, x: Var) -> Result<Var> {
        self.check_input(g, x, 1)?;
        if !self.config.point_branch {
            return Err(NetError::Config("the depth branch is ablated in this model".into()));
        }
        self.analysis(g, b, "ga_pc", x)
    }

    /// Channel gate `sigmoid(f(avgpool x) + f(maxpool x))` with `f` a shared
    /// `M → M/4 → M` 1×1 bottleneck.
    pub fn channel_gate(&self, g: &mut Graph<T>, b: &Binding, x: Var) -> Result<Var> {
        let m = self.config.m;
        let avg = g.global_avg_pool(x)?;
        let max = g.global_max_pool(x)?;
        let mut branch = |v: Var| -> Result<Var> {
            let v = g.reshape(v, &[m, 1, 1])?;
            let v = conv(g, b, "fuse.fc1", v, 1)?;
            let v = g.leaky_relu(v, SLOPE)?;
            conv(g, b, "fuse.fc2", v, 1)
        };
        let (fa, fm) = (branch(avg)?, branch(max)?);
        let s = g.add(fa, fm)?;
        let s = g.sigmoid(s)?;
        Ok(g.reshape(s, &[m])?)
    }

    /// Fusion: `x = conv3×3(concat(y_img, y_pc))`, then `x + x ⊙ gate(x)`
    /// with attention, or `x` alone without.
    pub fn mmfft(&self, g: &mut Graph<T>, b: &Binding, y_img: Var, y_pc: Var) -> Result<Var> {
        if g.shape(y_img) != g.shape(y_pc) {
            return Err(NetError::Geometry(format!("latent shapes differ: {:?} vs {:?}", g.shape(y_img), g.shape(y_pc))));
        }
        let t = g.concat_channels(&[y_img, y_pc])?;
        let x = conv(g, b, "fuse.conv", t, 1)?;
        if !self.config.attention {
            return Ok(x);
        }
        let s = self.channel_gate(g, b, x)?;
        let gated = g.mul_channel(x, s)?;
        Ok(g.add(x, gated)?)
    }

    /// Both analysis branches and the fusion. With the depth branch
    /// ablated, `y_pc` is all zeros.
    pub fn fused_latent(&self, g: &mut Graph<T>, b: &Binding, x_img: Var, x_depth: Var) -> Result<Var> {
        let (h, w) = self.check_input(g, x_img, 3)?;
        let y_img = self.analysis_image(g, b, x_img)?;
        let y_pc = if self.config.point_branch {
            if self.check_input(g, x_depth, 1)? != (h, w) {
                return Err(NetError::Geometry("image and depth sizes differ".into()));
            }
            self.analysis_pointcloud(g, b, x_depth)?
        } else {
            let shape = g.shape(y_img).to_vec();
            g.constant(Tensor::zeros(shape))
        };
        self.mmfft(g, b, y_img, y_pc)
    }

    /// `M×h×w → N×⌈h/4⌉×⌈w/4⌉`.
    pub fn hyper_analysis(&self, g: &mut Graph<T>, b: &Binding, y: Var) -> Result<Var> {
        let z = conv(g, b, "ha.conv1", y, 2)?;
        let z = g.leaky_relu(z, SLOPE)?;
        conv(g, b, "ha.conv2", z, 2)
    }

    /// `N×zh×zw → 2M×h×w` raw features for a main latent of `h × w`.
    pub fn hyper_synthesis(&self, g: &mut Graph<T>, b: &Binding, z_hat: Var, h: usize, w: usize) -> Result<Var> {
        let mid = deconv_to(g, b, "hs.deconv1", z_hat, h.div_ceil(2), w.div_ceil(2))?;
        let mid = g.leaky_relu(mid, SLOPE)?;
        deconv_to(g, b, "hs.deconv2", mid, h, w)
    }

    /// Splits `2M` raw channels into μ and `σ = max(softplus(raw), σ_min)`.
    pub fn gaussian_from_raw(&self, g: &mut Graph<T>, raw: Var) -> Result<(Var, Var)> {
        let m = self.config.m;
        let mu = g.slice_channels(raw, 0, m)?;
        let s = g.slice_channels(raw, m, m)?;
        let s = g.softplus(s)?;
        let sigma = g.lower_bound(s, self.config.sigma_min)?;
        Ok((mu, sigma))
    }

    /// Context-refined parameters over the whole latent at once (training).
    pub fn context_gaussian(&self, g: &mut Graph<T>, b: &Binding, y_q: Var, hyper: Var) -> Result<(Var, Var)> {
        let m = self.config.m;
        let w = b.get("ctx.masked.weight")?;
        let mask = g.constant(causal_mask(2 * m, m));
        let wm = g.mul(w, mask)?;
        let ctx = g.conv2d(y_q, wm, Some(b.get("ctx.masked.bias")?), 1, super::MASK_SIZE / 2)?;
        let f = g.concat_channels(&[ctx, hyper])?;
        let f = conv(g, b, "ctx.fc1", f, 1)?;
        let f = g.leaky_relu(f, SLOPE)?;
        let f = conv(g, b, "ctx.fc2", f, 1)?;
        let f = g.leaky_relu(f, SLOPE)?;
        let raw = conv(g, b, "ctx.fc3", f, 1)?;
        self.gaussian_from_raw(g, raw)
    }

    /// Factorized prior of the hyper-latent: one learned Gaussian per
    /// channel, broadcast over `zh × zw`.
    pub fn z_prior(&self, g: &mut Graph<T>, b: &Binding, zh: usize, zw: usize) -> Result<(Var, Var)> {
        let mu = g.broadcast_channels(b.get("prior_z.mu")?, zh, zw)?;
        let s = g.broadcast_channels(b.get("prior_z.sigma")?, zh, zw)?;
        let s = g.softplus(s)?;
        Ok((mu, g.lower_bound(s, self.config.sigma_min)?))
    }

    /// `M×h×w → 3×H×W`, unclamped.
    pub fn synthesis(&self, g: &mut Graph<T>, b: &Binding, y_hat: Var, height: usize, width: usize) -> Result<Var> {
        let d = self.config.depth;
        let mut h = attention_block(g, b, "gs.attn_in", y_hat)?;
        for s in 0..d {
            h = res_block(g, b, &format!("gs.res{s}"), h)?;
            let f = 1 << (d - s - 1);
            h = deconv_to(g, b, &format!("gs.up{s}"), h, height / f, width / f)?;
            if s + 1 < d {
                h = g.leaky_relu(h, SLOPE)?;
            }
            if has_mid_attention(&self.config, s) {
                h = attention_block(g, b, "gs.attn_mid", h)?;
            }
        }
        Ok(h)
    }

    /// Full training-mode pass: noisy latents, estimated rates, unclamped
    /// reconstruction and the RD loss. Distortion compares against the
    /// image channels only.
    pub fn forward(&self, g: &mut Graph<T>, b: &Binding, x_img: Var, x_depth: Var, noise: &Noise<T>) -> Result<ForwardOutput> {
        let (height, width) = self.check_input(g, x_img, 3)?;
        let (h, w) = self.config.latent_size(height, width)?;
        let y = self.fused_latent(g, b, x_img, x_depth)?;
        let z = self.hyper_analysis(g, b, y)?;
        let nz = g.constant(noise.z.clone());
        let z_tilde = g.add(z, nz)?;
        let ny = g.constant(noise.y.clone());
        let y_tilde = g.add(y, ny)?;
        let hyper = self.hyper_synthesis(g, b, z_tilde, h, w)?;
        let (mu, sigma) =
            if self.config.context { self.context_gaussian(g, b, y_tilde, hyper)? } else { self.gaussian_from_raw(g, hyper)? };
        let rate_y = g.gaussian_rate(y_tilde, mu, sigma)?;
        let (zh, zw) = CodecConfig::hyper_size(h, w);
        let (mu_z, sigma_z) = self.z_prior(g, b, zh, zw)?;
        let rate_z = g.gaussian_rate(z_tilde, mu_z, sigma_z)?;
        let x_hat = self.synthesis(g, b, y_tilde, height, width)?;
        let mse = g.mse(x_img, x_hat)?;
        let rate = g.add(rate_y, rate_z)?;
        let bpp = g.scale(rate, 1.0 / (height * width) as f64)?;
        let dist = g.scale(mse, self.config.lambda * 255.0 * 255.0)?;
        let loss = g.add(bpp, dist)?;
        Ok(ForwardOutput { y, y_tilde, z, z_tilde, mu, sigma, x_hat, rate_y, rate_z, mse, loss })
    }

    /// Splits a `4×H×W` unified sample into image and depth tensors.
    pub fn split_sample(sample: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (c, h, w) = sample.chw()?;
        if c != 4 {
            return Err(NetError::Geometry(format!("expected a 4-channel sample, got {c} channels")));
        }
        let plane = h * w;
        let d = sample.data();
        Ok((Tensor::new(vec![3, h, w], d[..3 * plane].to_vec())?, Tensor::new(vec![1, h, w], d[3 * plane..].to_vec())?))
    }

    /// Writes `checkpoint.pcnw` and the `config.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let w = dir.join(CHECKPOINT_FILE);
        std::fs::write(&w, self.params.to_pcnw()).map_err(io_err(&w))?;
        let s = dir.join(SIDECAR_FILE);
        std::fs::write(&s, self.config.to_json()).map_err(io_err(&s))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let s = dir.join(SIDECAR_FILE);
        let config = CodecConfig::from_json(&std::fs::read_to_string(&s).map_err(io_err(&s))?)?;
        let w = dir.join(CHECKPOINT_FILE);
        let bytes = std::fs::read(&w).map_err(io_err(&w))?;
        let params = ParamStore::from_pcnw(&config, bytes.as_slice())?;
        Ok(Self { config, params })
    }
}
