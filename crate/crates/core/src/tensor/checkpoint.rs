//! `PCNW` named-array container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic    4 bytes   "PCNW"
//! version  u16       currently 1
//! count    u32       number of arrays
//! count × {
//!     name_len  u16
//!     name      name_len bytes of UTF-8
//!     rank      u8
//!     dims      rank × u32
//!     values    product(dims) × f32
//! }
//! ```

use std::io::{Read, Write};

use super::Tensor;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCNW";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PCNW file (magic {0:?})")]
    Magic([u8; 4]),
    #[error("unsupported PCNW version {0}")]
    Version(u16),
    #[error("array name is not UTF-8")]
    Name,
    #[error("array `{0}` is too large for the container")]
    TooLarge(String),
}

pub fn write_checkpoint<'a, T: Scalar, W: Write>(
    mut out: W,
    arrays: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Result<(), CheckpointError> {
    let arrays: Vec<_> = arrays.into_iter().collect();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, t) in arrays {
        let name_len = u16::try_from(name.len()).map_err(|_| CheckpointError::TooLarge(name.into()))?;
        let rank = u8::try_from(t.rank()).map_err(|_| CheckpointError::TooLarge(name.into()))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| CheckpointError::TooLarge(name.into()))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * t.numel());
        for &v in t.data() {
            buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], CheckpointError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Vec<(String, Tensor<T>)>, CheckpointError> {
    let magic = read_exact::<4>(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic(magic));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?);
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::Name)?;
        let [rank] = read_exact::<1>(&mut r)?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(4).map(|c| T::from_f32_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
        let t = Tensor::new(shape, data).map_err(|_| CheckpointError::TooLarge(name.clone()))?;
        out.push((name, t));
    }
    Ok(out)
}
