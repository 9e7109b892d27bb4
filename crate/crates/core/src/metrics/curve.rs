use std::fmt::Write as _;

use super::{MetricsError, Result};

/// One operating point. `bpp` comes from real bitstream bytes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RdPoint {
    pub bpp: f64,
    /// dB; `+∞` for lossless reconstructions.
    pub psnr: f64,
    /// `None` when the images are too small for five scales.
    pub msssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    pub method: String,
    pub points: Vec<RdPoint>,
}

pub const CSV_HEADER: &str = "bpp,psnr,msssim";

impl RdCurve {
    /// Sorts by bpp and rejects duplicates or non-positive rates.
    pub fn new(method: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        let method = method.into();
        if points.iter().any(|p| !(p.bpp > 0.0) || !p.bpp.is_finite()) {
            return Err(MetricsError::Invalid(format!("curve `{method}` has a non-positive bpp")));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(MetricsError::Invalid(format!("curve `{method}` has repeated bpp values")));
        }
        Ok(Self { method, points })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for p in &self.points {
            let ms = p.msssim.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{},{},{}", p.bpp, p.psnr, ms).unwrap();
        }
        s
    }

    pub fn from_csv(method: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(MetricsError::Parse { line: 1, msg: format!("expected header `{CSV_HEADER}`") }),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            let err = |msg: String| MetricsError::Parse { line: i + 1, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            let msssim = if cols[2].is_empty() { None } else { Some(num(cols[2])?) };
            points.push(RdPoint { bpp: num(cols[0])?, psnr: num(cols[1])?, msssim });
        }
        Self::new(method, points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_missing_header() {
        assert!(RdCurve::from_csv("x", "0.1,30,0.9\n").is_err());
    }

    #[test]
    fn infinite_psnr_survives_round_trip() {
        let c = RdCurve::new("x", vec![RdPoint { bpp: 1.0, psnr: f64::INFINITY, msssim: None }]).unwrap();
        assert_eq!(RdCurve::from_csv("x", &c.to_csv()).unwrap(), c);
    }
}
