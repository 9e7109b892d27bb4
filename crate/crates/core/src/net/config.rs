use serde::{Deserialize, Serialize};

use super::{NetError, Result};
use crate::kitti::DEFAULT_D_MAX;
use crate::stats::SIGMA_MIN;

/// The six rate-distortion operating points used for full training runs.
pub const PAPER_LAMBDAS: [f64; 6] = [0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045];

/// Position of `lambda` in [`PAPER_LAMBDAS`], or 255.
pub fn lambda_index(lambda: f64) -> u8 {
    PAPER_LAMBDAS.iter().position(|&l| (l - lambda).abs() <= 1e-12).map_or(255, |i| i as u8)
}

/// Network hyperparameters. Serialized as the checkpoint sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Latent channels per analysis branch (and of the hyper-latent).
    pub n: usize,
    /// Fused latent channels.
    pub m: usize,
    /// Number of stride-2 stages in each analysis/synthesis transform.
    pub depth: usize,
    pub context: bool,
    /// Channel attention inside the fusion transform.
    pub attention: bool,
    pub lambda: f64,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    /// `false` ablates the depth branch: its latent is replaced by zeros.
    #[serde(default = "default_true")]
    pub point_branch: bool,
}

fn default_sigma_min() -> f64 {
    SIGMA_MIN
}

fn default_d_max() -> f64 {
    DEFAULT_D_MAX
}

fn default_true() -> bool {
    true
}

impl CodecConfig {
    /// Full-size channel counts (192 / 288).
    pub fn paper(lambda: f64) -> Self {
        Self::with_channels(192, 288, lambda)
    }

    pub fn with_channels(n: usize, m: usize, lambda: f64) -> Self {
        Self {
            n,
            m,
            depth: 4,
            context: false,
            attention: true,
            lambda,
            sigma_min: SIGMA_MIN,
            d_max: DEFAULT_D_MAX,
            point_branch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.n == 0 || self.m == 0 {
            return bad(format!("channel counts must be positive (n = {}, m = {})", self.n, self.m));
        }
        if self.depth == 0 || self.depth > 8 {
            return bad(format!("depth must be in 1..=8, got {}", self.depth));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.sigma_min >= SIGMA_MIN) {
            return bad(format!("sigma_min {} is below the supported bound {SIGMA_MIN}", self.sigma_min));
        }
        if !(self.d_max > 0.0) {
            return bad(format!("d_max must be positive, got {}", self.d_max));
        }
        Ok(())
    }

    /// Spatial downsampling factor of the main latent.
    pub fn factor(&self) -> usize {
        1 << self.depth
    }

    /// Hidden width of the channel-attention bottleneck (ratio 4).
    pub fn bottleneck(&self) -> usize {
        (self.m / 4).max(1)
    }

    pub fn latent_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let f = self.factor();
        if height == 0 || width == 0 || height % f != 0 || width % f != 0 {
            return Err(NetError::Geometry(format!("{height}×{width} is not a positive multiple of {f}")));
        }
        Ok((height / f, width / f))
    }

    /// Hyper-latent size for a main latent of `h × w` (two stride-2 convs,
    /// padding 1, so any size ≥ 1 works).
    pub fn hyper_size(h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(2).div_ceil(2), w.div_ceil(2).div_ceil(2))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_operating_point() {
        assert_eq!(PAPER_LAMBDAS[0], 0.0016);
        assert_eq!(lambda_index(0.0016), 0);
        assert_eq!(lambda_index(0.045), 5);
        assert_eq!(lambda_index(0.02), 255);
    }

    #[test]
    fn sidecar_keys() {
        let json = CodecConfig::with_channels(16, 24, 0.015).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["n", "m", "depth", "context", "attention", "lambda", "sigma_min", "d_max"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(CodecConfig::from_json(&json).unwrap(), CodecConfig::with_channels(16, 24, 0.015));
    }

    #[test]
    fn geometry() {
        let c = CodecConfig::with_channels(8, 12, 0.01);
        assert_eq!(c.latent_size(64, 32).unwrap(), (4, 2));
        assert!(c.latent_size(40, 32).is_err());
        assert_eq!(CodecConfig::hyper_size(4, 4), (1, 1));
        assert_eq!(CodecConfig::hyper_size(2, 2), (1, 1));
        assert_eq!(CodecConfig::hyper_size(16, 64), (4, 16));
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = CodecConfig::with_channels(8, 12, 0.01);
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        c.lambda = 0.01;
        c.sigma_min = 0.05;
        assert!(c.validate().is_err());
    }
}
