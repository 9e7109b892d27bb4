//! Carry-less range coder (Subbotin) with a 64-bit state.
//!
//! Bytes leave the top of `low` once its top byte can no longer change;
//! when the range straddles a byte boundary while being small, it is cut
//! down so no carry can ever propagate. Frequencies use a fixed 16-bit
//! total.
//!
//! The flush writes the shortest byte string whose every continuation lies
//! inside the final interval, so no complete stream is a prefix of another.
//! The decoder mirrors the encoder state exactly: at the end it knows the
//! flush the encoder must have written and rejects streams that were cut
//! or extended.

use super::{cdf::PROB_BITS, EntropyError, Result};
use super::{decode_value, encode_value, CdfTable};

const TOP: u64 = 1 << 56;
const BOT: u64 = 1 << 48;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

/// Shortest `n` and left-aligned `n`-byte value `v` with
/// `[v, v + 2^(64−8n)) ⊆ [low, low + range)`.
fn flush_prefix(low: u64, range: u64) -> (usize, u64) {
    let hi = low as u128 + range as u128;
    for n in 1..8 {
        let unit: u128 = 1 << (64 - 8 * n as u32);
        let v = (low as u128).div_ceil(unit) * unit;
        if v + unit <= hi {
            return (n, v as u64);
        }
    }
    (8, low)
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u64::MAX, out: Vec::new() }
    }

    /// Encodes the sub-interval `[cum, cum + freq)` of a `2^PROB_BITS` total.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && (cum + freq) as u64 <= 1 << PROB_BITS);
        let r = self.range >> PROB_BITS;
        self.low += r * cum as u64;
        self.range = r * freq as u64;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 56) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn finish(mut self) -> Vec<u8> {
        let (n, v) = flush_prefix(self.low, self.range);
        self.out.extend_from_slice(&v.to_be_bytes()[..n]);
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    low: u64,
    range: u64,
    code: u64,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self { low: 0, range: u64::MAX, code: 0, data, pos: 0 };
        for _ in 0..8 {
            d.code = (d.code << 8) | d.next_byte() as u64;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative frequency of the next symbol.
    pub fn peek(&self) -> Result<u32> {
        let r = self.range >> PROB_BITS;
        let v = self.code.wrapping_sub(self.low) / r;
        if self.code < self.low || v >= 1 << PROB_BITS {
            return Err(EntropyError::Corrupt(format!("code point outside the coding interval at byte {}", self.pos)));
        }
        Ok(v as u32)
    }

    /// Consumes the symbol occupying `[cum, cum + freq)`.
    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        let r = self.range >> PROB_BITS;
        self.low += r * cum as u64;
        self.range = r * freq as u64;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = (self.code << 8) | self.next_byte() as u64;
            self.low <<= 8;
            self.range <<= 8;
            if self.pos > self.data.len() + 8 {
                return Err(EntropyError::Corrupt("read past the end of the stream".into()));
            }
        }
        Ok(())
    }

    /// Checks that the stream ends exactly where the encoder's flush would.
    pub fn finish(self) -> Result<()> {
        let emitted = self.pos - 8;
        let (n, v) = flush_prefix(self.low, self.range);
        if emitted + n != self.data.len() || self.code != v {
            return Err(EntropyError::Corrupt(format!(
                "stream holds {} bytes but the decoded symbols account for {}",
                self.data.len(),
                emitted + n
            )));
        }
        Ok(())
    }
}

/// Codes `symbols[i]` with `tables[i]`.
pub fn range_encode(symbols: &[i32], tables: &[CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(EntropyError::LengthMismatch { symbols: symbols.len(), tables: tables.len() });
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        encode_value(&mut enc, t, s)?;
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], tables: &[CdfTable]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes);
    let out = tables.iter().map(|t| decode_value(&mut dec, t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
