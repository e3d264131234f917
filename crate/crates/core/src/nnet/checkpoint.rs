//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SSEG"  u32 version  u32 tensor_count
//! per tensor: u32 name_len, name (UTF-8), u32 rank, rank × u64 dims,
//!             product(dims) × f64 payload
//! ```

use std::path::Path;

use super::{ModelParams, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSEG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes `params` in name order.
pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.scalar_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::parse(self.context, format!("truncated at byte {} while reading {what}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parses a checkpoint; `context` names the source in errors.
pub fn decode_checkpoint(bytes: &[u8], context: &str) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0, context };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::parse(context, "not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(context, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut params = ModelParams::new();
    for k in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::parse(context, format!("tensor {k} name is not UTF-8")))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::parse(context, format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::parse(context, format!("tensor {name} is too large")))?;
        let payload = r.take(n * 8, &format!("payload of {name}"))?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if params.get(&name).is_some() {
            return Err(Error::parse(context, format!("duplicate tensor {name}")));
        }
        params.insert(name, Tensor::new(shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(context, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ModelParams::merge(5, 3);
        p.insert("odd", Tensor::new(vec![2], vec![f64::MIN_POSITIVE, -0.0]));
        let back = decode_checkpoint(&encode_checkpoint(&p), "mem").unwrap();
        assert_eq!(back.len(), p.len());
        for ((na, a), (nb, b)) in p.iter().zip(back.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn header_layout() {
        let mut p = ModelParams::new();
        p.insert("ab", Tensor::row(&[1.5]));
        let b = encode_checkpoint(&p);
        assert_eq!(&b[..4], b"SSEG");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(&b[16..18], b"ab");
        assert_eq!(u32::from_le_bytes(b[18..22].try_into().unwrap()), 2);
        assert_eq!(b.len(), 22 + 16 + 8);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let b = encode_checkpoint(&ModelParams::merge(0, 2));
        assert!(decode_checkpoint(&b[..b.len() - 3], "t").is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad, "t").is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra, "t").is_err());
        let mut ver = b;
        ver[4] = 9;
        assert!(decode_checkpoint(&ver, "t").is_err());
    }
}
