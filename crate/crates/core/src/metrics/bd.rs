use nalgebra::{DMatrix, DVector};

use super::{MetricsError, RdCurve, Result};

/// Bjøntegaard deltas of a test curve against a reference curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BdResult {
    /// Mean quality gain, in quality units.
    pub bd_quality: f64,
    /// Mean rate change at equal quality, in percent.
    pub bd_rate_percent: f64,
}

/// Least-squares cubic `c0 + c1·x + c2·x² + c3·x³`.
fn fit_cubic(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    let a = DMatrix::from_fn(x.len(), 4, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-14).map_err(|e| MetricsError::Fit(e.to_string()))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

/// `∫ p` over `[lo, hi]` from the antiderivative.
fn integrate(p: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |x: f64| p[0] * x + p[1] * x * x / 2.0 + p[2] * x.powi(3) / 3.0 + p[3] * x.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

fn overlap(a: &[f64], b: &[f64], what: &'static str) -> Result<(f64, f64)> {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min(a).max(min(b)), max(a).min(max(b)));
    if !(hi > lo) {
        return Err(MetricsError::NoOverlap(what));
    }
    Ok((lo, hi))
}

fn prepare(curve: &RdCurve, quality: &dyn Fn(&super::RdPoint) -> Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if curve.points.len() < 4 {
        return Err(MetricsError::TooFewPoints { name: curve.method.clone(), points: curve.points.len() });
    }
    let mut log_r = Vec::with_capacity(curve.points.len());
    let mut q = Vec::with_capacity(curve.points.len());
    for p in &curve.points {
        let v = quality(p).ok_or_else(|| MetricsError::Invalid(format!("curve `{}` lacks a quality value", curve.method)))?;
        if !(p.bpp > 0.0) || !v.is_finite() {
            return Err(MetricsError::Invalid(format!("curve `{}` has a non-finite point", curve.method)));
        }
        log_r.push(p.bpp.log10());
        q.push(v);
    }
    if q.windows(2).any(|w| w[1] <= w[0]) {
        log::warn!("curve `{}` is not monotone in quality; BD result may be unreliable", curve.method);
    }
    Ok((log_r, q))
}

/// Mean vertical gap between the two quality-vs-log-rate cubics.
pub fn bd_quality(reference: &RdCurve, test: &RdCurve, quality: impl Fn(&super::RdPoint) -> Option<f64>) -> Result<f64> {
    let (r1, q1) = prepare(reference, &quality)?;
    let (r2, q2) = prepare(test, &quality)?;
    let (lo, hi) = overlap(&r1, &r2, "rate")?;
    let (p1, p2) = (fit_cubic(&r1, &q1)?, fit_cubic(&r2, &q2)?);
    Ok((integrate(&p2, lo, hi) - integrate(&p1, lo, hi)) / (hi - lo))
}

/// Mean rate change at equal quality, in percent.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve, quality: impl Fn(&super::RdPoint) -> Option<f64>) -> Result<f64> {
    let (r1, q1) = prepare(reference, &quality)?;
    let (r2, q2) = prepare(test, &quality)?;
    let (lo, hi) = overlap(&q1, &q2, "quality")?;
    let (p1, p2) = (fit_cubic(&q1, &r1)?, fit_cubic(&q2, &r2)?);
    let avg = (integrate(&p2, lo, hi) - integrate(&p1, lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// BD-PSNR and BD-rate on the PSNR axis.
pub fn bd_metrics(reference: &RdCurve, test: &RdCurve) -> Result<BdResult> {
    Ok(BdResult {
        bd_quality: bd_quality(reference, test, |p| Some(p.psnr))?,
        bd_rate_percent: bd_rate(reference, test, |p| Some(p.psnr))?,
    })
}
