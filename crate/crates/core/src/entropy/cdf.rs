//! Discretized Gaussian tables.
//!
//! A table covers the integers `c−t ..= c+t` around `c = round(μ)` plus one
//! escape symbol. An escaped value is followed by its residual `v − c` as a
//! raw 16-bit two's-complement word, coded with a flat distribution.

use super::phi::phi_fixed;
use super::{EntropyError, RangeDecoder, RangeEncoder, Result};
use crate::stats::SIGMA_MIN;

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
pub const DEFAULT_TAIL: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    center: i32,
    tail: u32,
    /// `2t + 3` entries from 0 to `PROB_TOTAL`; the last bin is the escape.
    cum: Vec<u32>,
}

impl CdfTable {
    pub fn center(&self) -> i32 {
        self.center
    }

    pub fn tail(&self) -> u32 {
        self.tail
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    /// Per-bin counts, escape last.
    pub fn counts(&self) -> Vec<u32> {
        self.cum.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn escape_index(&self) -> usize {
        2 * self.tail as usize + 1
    }

    /// Count assigned to integer `k` (0 when `k` needs the escape).
    pub fn count_of(&self, k: i32) -> u32 {
        match self.index_of(k) {
            Some(i) => self.cum[i + 1] - self.cum[i],
            None => 0,
        }
    }

    fn index_of(&self, k: i32) -> Option<usize> {
        let d = k as i64 - self.center as i64;
        (d.unsigned_abs() <= self.tail as u64).then(|| (d + self.tail as i64) as usize)
    }

    /// Exact code length of `k` under this table, escape included.
    pub fn ideal_bits(&self, k: i32) -> f64 {
        let count = match self.index_of(k) {
            Some(i) => self.cum[i + 1] - self.cum[i],
            None => return PROB_BITS as f64 - (self.counts()[self.escape_index()] as f64).log2() + PROB_BITS as f64,
        };
        PROB_BITS as f64 - (count as f64).log2()
    }
}

/// Builds the table for `N(mu, sigma²)` with `t` bins on each side of the
/// center. Counts are renormalized to `2^16` by largest remainder after
/// reserving one count per bin, so every symbol stays codable.
pub fn build_cdf(mu: f64, sigma: f64, t: u32) -> Result<CdfTable> {
    if !(sigma >= SIGMA_MIN * (1.0 - 1e-6)) {
        return Err(EntropyError::SigmaTooSmall(sigma));
    }
    if !mu.is_finite() || !sigma.is_finite() || t == 0 || t > 1 << 12 || mu.abs() > (1 << 30) as f64 {
        return Err(EntropyError::BadParams(format!("mu {mu}, sigma {sigma}, t {t}")));
    }
    let center = mu.round() as i32;
    let bins = 2 * t as usize + 2;
    let mut mass = Vec::with_capacity(bins);
    let mut inside = 0.0;
    for i in 0..bins - 1 {
        let k = center as f64 + i as f64 - t as f64;
        let m = (phi_fixed((k - mu + 0.5) / sigma) - phi_fixed((k - mu - 0.5) / sigma)).max(0.0);
        inside += m;
        mass.push(m);
    }
    mass.push((1.0 - inside).max(0.0));
    let total: f64 = mass.iter().sum();
    let spare = (PROB_TOTAL as usize - bins) as f64;
    let mut counts: Vec<u32> = Vec::with_capacity(bins);
    let mut rema: Vec<(f64, usize)> = Vec::with_capacity(bins);
    let mut assigned = 0u32;
    for (i, &m) in mass.iter().enumerate() {
        let share = m / total * spare;
        let fl = share.floor();
        counts.push(1 + fl as u32);
        assigned += 1 + fl as u32;
        rema.push((share - fl, i));
    }
    // Largest remainder first; ties to the lower index.
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = PROB_TOTAL - assigned;
    for &(_, i) in rema.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    let mut cum = Vec::with_capacity(bins + 1);
    cum.push(0);
    let mut acc = 0;
    for c in counts {
        acc += c;
        cum.push(acc);
    }
    debug_assert_eq!(acc, PROB_TOTAL);
    Ok(CdfTable { center, tail: t, cum })
}

pub fn encode_value(enc: &mut RangeEncoder, table: &CdfTable, value: i32) -> Result<()> {
    match table.index_of(value) {
        Some(i) => enc.encode(table.cum[i], table.cum[i + 1] - table.cum[i]),
        None => {
            let residual = value as i64 - table.center as i64;
            let raw = i16::try_from(residual).map_err(|_| EntropyError::OutOfRange { value: value as i64, residual })?;
            let e = table.escape_index();
            enc.encode(table.cum[e], table.cum[e + 1] - table.cum[e]);
            enc.encode(raw as u16 as u32, 1);
        }
    }
    Ok(())
}

pub fn decode_value(dec: &mut RangeDecoder<'_>, table: &CdfTable) -> Result<i32> {
    let v = dec.peek()?;
    // Last index whose cumulative count is ≤ v.
    let i = table.cum.partition_point(|&c| c <= v) - 1;
    dec.consume(table.cum[i], table.cum[i + 1] - table.cum[i])?;
    if i == table.escape_index() {
        let raw = dec.peek()?;
        dec.consume(raw, 1)?;
        let residual = raw as u16 as i16 as i64;
        if residual.unsigned_abs() <= table.tail as u64 {
            return Err(EntropyError::Corrupt(format!("escaped residual {residual} lies inside the table support")));
        }
        return Ok((table.center as i64 + residual) as i32);
    }
    Ok(table.center + i as i32 - table.tail as i32)
}
