//! Standard-normal helpers shared by the likelihood and the rate gradient.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

/// Smallest probability a quantization bin may be assigned (2⁻¹⁶).
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / 65536.0;

/// Lower bound applied to every predicted scale.
pub const SIGMA_MIN: f64 = 0.11;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// σ from an unconstrained network output: `max(softplus(raw), SIGMA_MIN)`.
pub fn sigma_from_raw(raw: f64) -> f64 {
    (raw.max(0.0) + (-raw.abs()).exp().ln_1p()).max(SIGMA_MIN)
}

/// Φ(x), evaluated through `erfc` so the lower tail keeps full precision.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Mass of the unit-width bin centred `offset` away from the mean of a
/// Gaussian with scale `sigma`: Φ((offset+½)/σ) − Φ((offset−½)/σ).
///
/// Evaluated on the left half-line (the distribution is symmetric) so that
/// far-tail bins do not cancel catastrophically.
#[inline]
pub fn bin_mass(offset: f64, sigma: f64) -> f64 {
    let a = offset.abs();
    normal_cdf((0.5 - a) / sigma) - normal_cdf((-0.5 - a) / sigma)
}

/// Bits and partial derivatives of `−log2(max(bin_mass, floor))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerm {
    pub prob: f64,
    pub bits: f64,
    /// ∂bits/∂offset (offset = ŷ − μ).
    pub d_offset: f64,
    pub d_sigma: f64,
}

pub fn rate_term(offset: f64, sigma: f64) -> RateTerm {
    let p = bin_mass(offset, sigma);
    if p <= LIKELIHOOD_FLOOR {
        return RateTerm { prob: LIKELIHOOD_FLOOR, bits: 16.0, d_offset: 0.0, d_sigma: 0.0 };
    }
    let upper = (offset + 0.5) / sigma;
    let lower = (offset - 0.5) / sigma;
    let (pu, pl) = (normal_pdf(upper), normal_pdf(lower));
    let dp_doffset = (pu - pl) / sigma;
    let dp_dsigma = -(pu * upper - pl * lower) / sigma;
    let dbits_dp = -1.0 / (p * LN_2);
    RateTerm { prob: p, bits: -p.log2(), d_offset: dbits_dp * dp_doffset, d_sigma: dbits_dp * dp_dsigma }
}
