//! PCNI bitstream container.
//!
//! ```text
//! offset size field
//!      0    4 magic "PCNI"
//!      4    1 version (1)
//!      5    4 config hash, u32 LE
//!      9    1 λ index into the standard operating points, 255 = other
//!     10    2 image height, u16 LE
//!     12    2 image width, u16 LE
//!     14    4 z payload length in bytes, u32 LE
//!     18    … z payload, then y payload to the end of the file
//! ```

use super::{EntropyError, Result};

pub const PCNI_MAGIC: [u8; 4] = *b"PCNI";
pub const PCNI_VERSION: u8 = 1;
const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub config_hash: u32,
    pub lambda_index: u8,
    pub height: u16,
    pub width: u16,
    pub z_len: u32,
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(EntropyError::Format(format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len())));
        }
        if bytes[..4] != PCNI_MAGIC {
            return Err(EntropyError::Format(format!("bad magic {:02x?}, expected \"PCNI\"", &bytes[..4])));
        }
        let version = bytes[4];
        if version != PCNI_VERSION {
            return Err(EntropyError::Format(format!("unsupported version {version}")));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
        Ok(Self {
            version,
            config_hash: u32_at(5),
            lambda_index: bytes[9],
            height: u16_at(10),
            width: u16_at(12),
            z_len: u32_at(14),
        })
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&PCNI_MAGIC);
        out.push(self.version);
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.push(self.lambda_index);
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.z_len.to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub z: Vec<u8>,
    pub y: Vec<u8>,
}

impl Bitstream {
    pub fn new(config_hash: u32, lambda_index: u8, height: u16, width: u16, z: Vec<u8>, y: Vec<u8>) -> Self {
        let header = Header { version: PCNI_VERSION, config_hash, lambda_index, height, width, z_len: z.len() as u32 };
        Self { header, z, y }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.z.len() + self.y.len());
        let header = Header { z_len: self.z.len() as u32, ..self.header };
        header.write(&mut out);
        out.extend_from_slice(&self.z);
        out.extend_from_slice(&self.y);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let header = Header::parse(bytes)?;
        let z_end = HEADER_LEN
            .checked_add(header.z_len as usize)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| EntropyError::Format(format!("z length {} exceeds the {}-byte stream", header.z_len, bytes.len())))?;
        Ok(Self { header, z: bytes[HEADER_LEN..z_end].to_vec(), y: bytes[z_end..].to_vec() })
    }

    /// Deserializes only if the header was written by a model with `hash`.
    pub fn deserialize_for(bytes: &[u8], hash: u32) -> Result<Self> {
        let header = Header::parse(bytes)?;
        if header.config_hash != hash {
            return Err(EntropyError::HashMismatch { stream: header.config_hash, model: hash });
        }
        Self::deserialize(bytes)
    }

    pub fn total_bytes(&self) -> usize {
        HEADER_LEN + self.z.len() + self.y.len()
    }
}
