use std::fmt::Write as _;

use super::{bd_quality, bd_rate, MetricsError, RdCurve, Result};

/// One table row: BD-PSNR (dB), BD-rate on PSNR (%), BD-SSIM, BD-rate on MS-SSIM (%).
/// `None` marks a cell that could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub values: [Option<f64>; 4],
}

impl MethodRow {
    pub fn baseline(method: impl Into<String>) -> Self {
        Self { method: method.into(), values: [Some(0.0); 4] }
    }

    pub fn cells(&self) -> [String; 4] {
        self.values.map(|v| v.map(format_bd).unwrap_or_else(|| "n/a".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<MethodRow>,
}

const COLUMNS: [&str; 4] = ["BD-PSNR (dB)", "BD-rate (%)", "BD-SSIM", "BD-rate (%)"];

/// Three decimals with trailing zeros dropped: `-23.630` → `-23.63`, `0.000` → `0`.
pub fn format_bd(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl Report {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let first = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max("Method".len());
        let widths: Vec<usize> =
            (0..4).map(|i| self.rows.iter().map(|r| r.cells()[i].len()).max().unwrap_or(0).max(COLUMNS[i].len())).collect();
        let mut s = String::new();
        let line = |s: &mut String, name: &str, cells: &[String]| {
            write!(s, "{name:<first$}").unwrap();
            for (c, w) in cells.iter().zip(&widths) {
                write!(s, "  {c:>w$}").unwrap();
            }
            s.push('\n');
        };
        let head: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
        line(&mut s, "Method", &head);
        for r in &self.rows {
            line(&mut s, &r.method, &r.cells());
        }
        s
    }

    /// Parses the CSV written by [`Report::to_csv`]; `n/a` cells become `None`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
            let err = |msg: String| MetricsError::Parse { line: i + 1, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(err(format!("expected 5 columns, found {}", cols.len())));
            }
            let mut values = [None; 4];
            for (v, c) in values.iter_mut().zip(&cols[1..]) {
                if *c != "n/a" {
                    *v = Some(c.parse::<f64>().map_err(|e| err(format!("`{c}`: {e}")))?);
                }
            }
            rows.push(MethodRow { method: cols[0].to_string(), values });
        }
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,bd_psnr_db,bd_rate_psnr_pct,bd_ssim,bd_rate_msssim_pct\n");
        for r in &self.rows {
            writeln!(s, "{},{}", r.method, r.cells().join(",")).unwrap();
        }
        s
    }
}

/// BD value, or `None` with a warning when the curves cannot support one
/// (too few points, no overlap).
fn cell(what: &str, method: &str, r: Result<f64>) -> Option<f64> {
    r.map_err(|e| log::warn!("{method}: {what} unavailable: {e}")).ok()
}

/// Rows for `reference` (all zeros) and every test curve against it.
/// MS-SSIM columns stay empty when either curve lacks MS-SSIM values.
pub fn emit_report(reference: &RdCurve, tests: &[RdCurve]) -> Report {
    let mut rows = vec![MethodRow::baseline(&reference.method)];
    let has_ssim = |c: &RdCurve| c.points.iter().all(|p| p.msssim.is_some());
    for t in tests {
        let m = &t.method;
        let psnr = |p: &super::RdPoint| Some(p.psnr);
        let mut values = [
            cell("BD-PSNR", m, bd_quality(reference, t, psnr)),
            cell("BD-rate", m, bd_rate(reference, t, psnr)),
            None,
            None,
        ];
        if has_ssim(reference) && has_ssim(t) {
            values[2] = cell("BD-SSIM", m, bd_quality(reference, t, |p| p.msssim));
            values[3] = cell("BD-rate (MS-SSIM)", m, bd_rate(reference, t, |p| p.msssim));
        } else {
            log::warn!("{m}: no MS-SSIM values; SSIM columns left empty");
        }
        rows.push(MethodRow { method: m.clone(), values });
    }
    Report { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_like_the_published_table() {
        assert_eq!(format_bd(-23.63), "-23.63");
        assert_eq!(format_bd(1.73), "1.73");
        assert_eq!(format_bd(0.0), "0");
        assert_eq!(format_bd(-0.0001), "0");
        assert_eq!(format_bd(1.0), "1");
        assert_eq!(format_bd(-54.518), "-54.518");
    }

    #[test]
    fn csv_round_trip() {
        let r = Report { rows: vec![MethodRow::baseline("a"), MethodRow { method: "b".into(), values: [Some(1.5), None, Some(-0.25), Some(3.0)] }] };
        assert_eq!(Report::from_csv(&r.to_csv()).unwrap(), r);
    }
}
