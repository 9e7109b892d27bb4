//! Encoder and decoder: network inference plus entropy coding.
//!
//! Latents are coded position by position in raster order, all channels
//! of a position together, so the same order serves both the plain
//! hyperprior model and the context model.

use crate::entropy::{build_cdf, decode_value, encode_value, Bitstream, CdfTable, RangeDecoder, RangeEncoder, DEFAULT_TAIL};
use crate::net::{lambda_index, Codec, CodecConfig, ContextModel, GaussianParams, NetError, Result};
use crate::scalar::Scalar;
use crate::stats::{rate_term, sigma_from_raw};
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub y_hat: Vec<i32>,
    pub z_hat: Vec<i32>,
    pub y_params: GaussianParams,
    /// Entropy-model estimates, in bits.
    pub estimated_y_bits: f64,
    pub estimated_z_bits: f64,
    /// Actual payload sizes, in bytes.
    pub y_bytes: usize,
    pub z_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    /// `3×H×W`, clamped and rounded to 8-bit levels (`k / 255`).
    pub image: Tensor<f32>,
    pub y_hat: Vec<i32>,
    pub y_params: GaussianParams,
}

/// Bits the entropy model assigns to `values` (likelihood floored at 2⁻¹⁶).
pub fn estimated_bits(values: &[i32], params: &GaussianParams) -> f64 {
    values.iter().zip(params.mu.iter().zip(&params.sigma)).map(|(&v, (&mu, &s))| rate_term(v as f64 - mu, s).bits).sum()
}

fn round_to_i32<T: Scalar>(t: &Tensor<T>) -> Result<Vec<i32>> {
    t.data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let r = v.to_f64_lossy().round();
            if r.is_finite() && r.abs() < (1 << 24) as f64 {
                Ok(r as i32)
            } else {
                Err(NetError::Tensor(crate::TensorError::NonFinite { op: "quantize", index: i }))
            }
        })
        .collect()
}

fn z_params<T: Scalar>(model: &Codec<T>, zh: usize, zw: usize) -> Result<GaussianParams> {
    let n = model.config.n;
    let mu = model.params.get("prior_z.mu")?.data();
    let raw = model.params.get("prior_z.sigma")?.data();
    let plane = zh * zw;
    let mut p = GaussianParams { shape: [n, zh, zw], mu: Vec::with_capacity(n * plane), sigma: Vec::with_capacity(n * plane) };
    for c in 0..n {
        let (m, s) = (mu[c].to_f64_lossy(), sigma_from_raw(raw[c].to_f64_lossy()).max(model.config.sigma_min));
        p.mu.extend(std::iter::repeat(m).take(plane));
        p.sigma.extend(std::iter::repeat(s).take(plane));
    }
    Ok(p)
}

fn hyper_features<T: Scalar>(model: &Codec<T>, z_hat: &[i32], zshape: [usize; 3], h: usize, w: usize) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let z = Tensor::new(zshape.to_vec(), z_hat.iter().map(|&v| T::from_f64_lossy(v as f64)).collect())?;
    let z = g.constant(z);
    let hyper = model.hyper_synthesis(&mut g, &b, z, h, w)?;
    Ok(g.value(hyper).data().iter().map(|v| v.to_f64_lossy()).collect())
}

/// Parameters at position `(i, j)` without a context model.
fn plain_params_at(hyper: &[f64], m: usize, plane: usize, pos: usize) -> (Vec<f64>, Vec<f64>) {
    let mu = (0..m).map(|c| hyper[c * plane + pos]).collect();
    let sigma = (0..m).map(|c| sigma_from_raw(hyper[(m + c) * plane + pos])).collect();
    (mu, sigma)
}

/// Walks the latent in coding order, asking `code` for each position's
/// values after handing it that position's parameters.
fn walk_latent<T: Scalar>(
    model: &Codec<T>,
    hyper: &[f64],
    h: usize,
    w: usize,
    y_hat: &mut [i32],
    mut code: impl FnMut(&[f64], &[f64], &mut [i32]) -> Result<()>,
) -> Result<GaussianParams> {
    let m = model.config.m;
    let plane = h * w;
    let ctx = if model.config.context { Some(ContextModel::new(&model.params, m)?) } else { None };
    let mut params = GaussianParams { shape: [m, h, w], mu: vec![0.0; m * plane], sigma: vec![0.0; m * plane] };
    let mut yf = vec![0.0f64; m * plane];
    let mut vals = vec![0i32; m];
    for i in 0..h {
        for j in 0..w {
            let pos = i * w + j;
            let (mu, sigma) = match &ctx {
                Some(c) => c.params_at(&yf, hyper, h, w, i, j),
                None => plain_params_at(hyper, m, plane, pos),
            };
            let sigma: Vec<f64> = sigma.into_iter().map(|s| s.max(model.config.sigma_min)).collect();
            for c in 0..m {
                vals[c] = y_hat[c * plane + pos];
            }
            code(&mu, &sigma, &mut vals)?;
            for c in 0..m {
                y_hat[c * plane + pos] = vals[c];
                yf[c * plane + pos] = vals[c] as f64;
                params.mu[c * plane + pos] = mu[c];
                params.sigma[c * plane + pos] = sigma[c];
            }
        }
    }
    Ok(params)
}

fn tables(mu: &[f64], sigma: &[f64]) -> Result<Vec<CdfTable>> {
    Ok(mu.iter().zip(sigma).map(|(&m, &s)| build_cdf(m, s, DEFAULT_TAIL)).collect::<Result<Vec<_>, _>>()?)
}

/// Compresses a `4×H×W` unified sample.
pub fn encode<T: Scalar>(model: &Codec<T>, sample: &Tensor<T>) -> Result<Encoded> {
    let (img, depth) = Codec::split_sample(sample)?;
    let (_, height, width) = img.chw()?;
    let (h, w) = model.config.latent_size(height, width)?;
    if height > u16::MAX as usize || width > u16::MAX as usize {
        return Err(NetError::Geometry(format!("{height}×{width} exceeds the 16-bit header fields")));
    }
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let xi = g.constant(img);
    let xd = g.constant(depth);
    let y = model.fused_latent(&mut g, &b, xi, xd)?;
    let z = model.hyper_analysis(&mut g, &b, y)?;
    let mut y_hat = round_to_i32(g.value(y))?;
    let z_hat = round_to_i32(g.value(z))?;
    let (zh, zw) = CodecConfig::hyper_size(h, w);

    let zp = z_params(model, zh, zw)?;
    let mut zenc = RangeEncoder::new();
    for (&v, t) in z_hat.iter().zip(tables(&zp.mu, &zp.sigma)?) {
        encode_value(&mut zenc, &t, v)?;
    }
    let z_bytes = zenc.finish();

    let hyper = hyper_features(model, &z_hat, [model.config.n, zh, zw], h, w)?;
    let mut yenc = RangeEncoder::new();
    let y_params = walk_latent(model, &hyper, h, w, &mut y_hat, |mu, sigma, vals| {
        for (c, &v) in vals.iter().enumerate() {
            encode_value(&mut yenc, &build_cdf(mu[c], sigma[c], DEFAULT_TAIL)?, v)?;
        }
        Ok(())
    })?;
    let y_bytes = yenc.finish();

    let estimated_y_bits = estimated_bits(&y_hat, &y_params);
    let estimated_z_bits = estimated_bits(&z_hat, &zp);
    let (yl, zl) = (y_bytes.len(), z_bytes.len());
    let stream = Bitstream::new(
        model.config_hash(),
        lambda_index(model.config.lambda),
        height as u16,
        width as u16,
        z_bytes,
        y_bytes,
    );
    Ok(Encoded {
        bytes: stream.serialize(),
        y_hat,
        z_hat,
        y_params,
        estimated_y_bits,
        estimated_z_bits,
        y_bytes: yl,
        z_bytes: zl,
    })
}

/// Decodes a PCNI stream. Needs only the model: no depth input.
pub fn decode<T: Scalar>(model: &Codec<T>, bytes: &[u8]) -> Result<Decoded> {
    let stream = Bitstream::deserialize_for(bytes, model.config_hash())?;
    let (height, width) = (stream.header.height as usize, stream.header.width as usize);
    let (h, w) = model.config.latent_size(height, width)?;
    let (zh, zw) = CodecConfig::hyper_size(h, w);

    let zp = z_params(model, zh, zw)?;
    let mut zdec = RangeDecoder::new(&stream.z);
    let z_hat = tables(&zp.mu, &zp.sigma)?.iter().map(|t| decode_value(&mut zdec, t)).collect::<Result<Vec<_>, _>>()?;
    zdec.finish()?;

    let hyper = hyper_features(model, &z_hat, [model.config.n, zh, zw], h, w)?;
    let mut y_hat = vec![0i32; model.config.m * h * w];
    let mut ydec = RangeDecoder::new(&stream.y);
    let y_params = walk_latent(model, &hyper, h, w, &mut y_hat, |mu, sigma, vals| {
        for (c, v) in vals.iter_mut().enumerate() {
            *v = decode_value(&mut ydec, &build_cdf(mu[c], sigma[c], DEFAULT_TAIL)?)?;
        }
        Ok(())
    })?;
    ydec.finish()?;

    let image = reconstruct(model, &y_hat, height, width)?;
    Ok(Decoded { image, y_hat, y_params })
}

/// Synthesis of a quantized latent, clamped to [0,1] and rounded to 8 bits.
pub fn reconstruct<T: Scalar>(model: &Codec<T>, y_hat: &[i32], height: usize, width: usize) -> Result<Tensor<f32>> {
    let (h, w) = model.config.latent_size(height, width)?;
    let mut g = Graph::new();
    let b = model.bind(&mut g, false);
    let y = Tensor::new(vec![model.config.m, h, w], y_hat.iter().map(|&v| T::from_f64_lossy(v as f64)).collect())?;
    let y = g.constant(y);
    let x = model.synthesis(&mut g, &b, y, height, width)?;
    Ok(g.value(x).map(|v| v).cast::<f32>().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0))
}
