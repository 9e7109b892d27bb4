//! Entropy coding: discretized Gaussian CDFs, a carry-less range coder and
//! the PCNI bitstream container.

mod cdf;
mod container;
mod phi;
mod range;

pub use cdf::{build_cdf, decode_value, encode_value, CdfTable, DEFAULT_TAIL, PROB_BITS, PROB_TOTAL};
pub use container::{Bitstream, Header, PCNI_MAGIC, PCNI_VERSION};
pub use phi::{erf_fixed, phi_fixed};
pub use range::{range_decode, range_encode, RangeDecoder, RangeEncoder};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EntropyError {
    #[error("sigma {0} is below the lower bound")]
    SigmaTooSmall(f64),
    #[error("invalid distribution parameters: {0}")]
    BadParams(String),
    #[error("value {value} cannot be coded: residual {residual} exceeds the 16-bit escape range")]
    OutOfRange { value: i64, residual: i64 },
    #[error("symbol count {symbols} does not match table count {tables}")]
    LengthMismatch { symbols: usize, tables: usize },
    #[error("bitstream truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("bitstream format error: {0}")]
    Format(String),
    #[error("config hash mismatch: stream was written by {stream:#010x}, loaded model is {model:#010x}")]
    HashMismatch { stream: u32, model: u32 },
}

pub type Result<T, E = EntropyError> = std::result::Result<T, E>;
