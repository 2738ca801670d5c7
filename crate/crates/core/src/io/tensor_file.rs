//! Binary tensor file.
//!
//! | offset | size | field                                |
//! |--------|------|--------------------------------------|
//! | 0      | 4    | magic `EHGT`                         |
//! | 4      | 4    | version, `u32` LE, currently 1       |
//! | 8      | 12   | `m`, `n`, `t`, `u32` LE each         |
//! | 20     | 8    | sample rate in Hz, `f64` LE          |
//! | 28     | 8mnt | entries, `f64` LE, electrode row `i` fastest, then column `j`, then time `k` |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Tensor;

pub const MAGIC: [u8; 4] = *b"EHGT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

pub fn encode_tensor(x: &Tensor, fs_hz: f64) -> Result<Vec<u8>> {
    let dims = x.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * x.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::arg(format!("dimension {d} does not fit in 32 bits")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&fs_hz.to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().expect("4 bytes"))
}

/// Inverse of [`encode_tensor`]. `path` only labels errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<(Tensor, f64)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format(path, format!("bad magic {:?} at byte offset 0", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version} at byte offset 4")));
    }
    let dims = [u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize, u32_at(bytes, 16) as usize];
    let fs_hz = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::format(path, format!("dimensions {dims:?} overflow")))?;
    let expected = count
        .checked_mul(8)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, format!("dimensions {dims:?} overflow")))?;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("length mismatch: expected {expected} bytes for dims {dims:?}, found {}", bytes.len()),
        ));
    }
    let data =
        bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    // Non-finite payloads are rejected by the constructor; keep the byte offset.
    let x = Tensor::from_vec(dims, data)
        .map_err(|e| Error::format(path, format!("payload at byte offset {HEADER_LEN}: {e}")))?;
    Ok((x, fs_hz))
}

pub fn write_tensor(path: &Path, x: &Tensor, fs_hz: f64) -> Result<()> {
    super::write_atomic(path, &encode_tensor(x, fs_hz)?)
}

pub fn read_tensor(path: &Path) -> Result<(Tensor, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let x = Tensor::from_fn([1, 2, 1], |_, j, _| j as f64 + 0.5);
        let b = encode_tensor(&x, 10.0).unwrap();
        assert_eq!(&b[..4], b"EHGT");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[20..28], &10.0f64.to_le_bytes());
        assert_eq!(&b[28..36], &0.5f64.to_le_bytes());
        assert_eq!(b.len(), 28 + 16);
    }

    #[test]
    fn corrupt_files() {
        let p = Path::new("t.ehgt");
        let x = Tensor::from_fn([2, 2, 3], |i, j, k| (i + j + k) as f64);
        let mut b = encode_tensor(&x, 4.0).unwrap();
        let msg = decode_tensor(&b[..b.len() - 3], p).unwrap_err().to_string();
        assert!(msg.contains("expected 124") && msg.contains("found 121"), "{msg}");
        b[4] = 2;
        assert!(decode_tensor(&b, p).unwrap_err().to_string().contains("unsupported version 2"));
        b[0] = b'X';
        assert!(matches!(decode_tensor(&b, p), Err(Error::Format { .. })));
        assert!(decode_tensor(&b[..10], p).is_err());
    }
}
