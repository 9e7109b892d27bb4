use super::{ms_ssim, psnr, MetricsError, RdPoint, Result};
use crate::codec::{decode, encode};
use crate::net::Codec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SampleEval {
    pub bytes: usize,
    /// From the bitstream length.
    pub bpp: f64,
    /// From the entropy model, reported alongside.
    pub estimated_bpp: f64,
    pub psnr: f64,
    pub msssim: Option<f64>,
    pub decoded: Tensor<f32>,
}

/// Encodes and decodes one `4×H×W` sample and scores the decoded image.
pub fn evaluate_sample<T: Scalar>(model: &Codec<T>, sample: &Tensor<T>) -> Result<SampleEval> {
    let (img, _) = Codec::split_sample(sample)?;
    let (_, h, w) = img.chw().map_err(|e| MetricsError::Invalid(e.to_string()))?;
    let enc = encode(model, sample)?;
    let dec = decode(model, &enc.bytes)?;
    let original: Tensor<f32> = img.cast();
    let pixels = (h * w) as f64;
    Ok(SampleEval {
        bytes: enc.bytes.len(),
        bpp: 8.0 * enc.bytes.len() as f64 / pixels,
        estimated_bpp: (enc.estimated_y_bits + enc.estimated_z_bits) / pixels,
        psnr: psnr(&original, &dec.image)?,
        msssim: ms_ssim(&original, &dec.image).ok(),
        decoded: dec.image,
    })
}

/// Mean bpp and quality over a test set. MS-SSIM is kept only when every
/// sample is large enough for it.
pub fn evaluate_model<T: Scalar>(model: &Codec<T>, samples: &[Tensor<T>]) -> Result<(RdPoint, Vec<SampleEval>)> {
    if samples.is_empty() {
        return Err(MetricsError::Invalid("empty test set".into()));
    }
    let evals = samples.iter().map(|s| evaluate_sample(model, s)).collect::<Result<Vec<_>>>()?;
    let n = evals.len() as f64;
    let msssim = evals.iter().map(|e| e.msssim).sum::<Option<f64>>().map(|s| s / n);
    let point = RdPoint {
        bpp: evals.iter().map(|e| e.bpp).sum::<f64>() / n,
        psnr: evals.iter().map(|e| e.psnr).sum::<f64>() / n,
        msssim,
    };
    Ok((point, evals))
}

/// Fused vs image-only results at one λ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateRow {
    pub lambda: f64,
    pub bpp_fused: f64,
    pub bpp_img: f64,
    pub psnr_fused: f64,
    pub psnr_img: f64,
}

impl RateRow {
    pub fn bpp_delta(&self) -> f64 {
        self.bpp_fused - self.bpp_img
    }

    pub fn psnr_delta(&self) -> f64 {
        self.psnr_fused - self.psnr_img
    }

    pub const CSV_HEADER: &'static str = "lambda,bpp_fused,bpp_img,psnr_fused,psnr_img,bpp_delta,psnr_delta";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.lambda,
            self.bpp_fused,
            self.bpp_img,
            self.psnr_fused,
            self.psnr_img,
            self.bpp_delta(),
            self.psnr_delta()
        )
    }
}

/// Pairs `(λ, point)` results of the two configurations by λ.
pub fn rate_comparison(fused: &[(f64, RdPoint)], image_only: &[(f64, RdPoint)]) -> Result<Vec<RateRow>> {
    if fused.len() != image_only.len() {
        return Err(MetricsError::Invalid(format!("{} fused vs {} image-only results", fused.len(), image_only.len())));
    }
    fused
        .iter()
        .map(|&(lambda, f)| {
            let (_, i) = image_only
                .iter()
                .find(|(l, _)| *l == lambda)
                .ok_or_else(|| MetricsError::Invalid(format!("no image-only result at λ = {lambda}")))?;
            Ok(RateRow { lambda, bpp_fused: f.bpp, bpp_img: i.bpp, psnr_fused: f.psnr, psnr_img: i.psnr })
        })
        .collect()
}
