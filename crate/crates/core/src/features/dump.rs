//! Binary descriptor dump: `ELPVDESC`, version, d, n, then LE f32 rows.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::Descriptors;

const MAGIC: &[u8; 8] = b"ELPVDESC";
const VERSION: u32 = 1;

pub fn write_descriptor_dump<W: Write>(out: &mut W, d: &Descriptors) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(d.dim() as u32).to_le_bytes())?;
    out.write_all(&(d.rows() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(d.as_slice().len() * 4);
    for v in d.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_descriptor_dump<R: Read>(input: &mut R) -> Result<Descriptors> {
    let bad = |m: &str| Error::Container(format!("descriptor dump: {m}"));
    let mut head = [0u8; 24];
    input.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[..8] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let rows = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let count = dim.checked_mul(rows).ok_or_else(|| bad("size overflow"))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|_| bad("unreadable payload"))?;
    if bytes.len() != count * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", count * 4, bytes.len())));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Descriptors::new(dim, data).map_err(|_| bad("zero dimension"))
}
