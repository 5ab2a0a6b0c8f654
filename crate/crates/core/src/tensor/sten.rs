//! "STEN v1" binary tensor files.
//!
//! Layout: magic `b"STEN"`, one version byte (`1`), four little-endian `u32`
//! extents `N, C, H, W`, then `N·C·H·W` little-endian IEEE-754 `f32` values in
//! row-major NCHW order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dims, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"STEN";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 16;

pub fn write<W: Write>(t: &Tensor, mut out: W) -> Result<()> {
    let d = t.dims();
    out.write_all(&MAGIC)?;
    out.write_all(&[VERSION])?;
    for e in [d.n, d.c, d.h, d.w] {
        let e = u32::try_from(e)
            .map_err(|_| Error::InvalidShape(format!("extent {e} exceeds u32")))?;
        out.write_all(&e.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.data().len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read<R: Read>(mut input: R) -> Result<Tensor> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header).map_err(truncated)?;
    if header[..4] != MAGIC {
        return Err(Error::Format("missing STEN magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported STEN version {}", header[4])));
    }
    let ext = |i: usize| {
        let b = &header[5 + 4 * i..9 + 4 * i];
        u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize
    };
    let dims = Dims::new(ext(0), ext(1), ext(2), ext(3));
    let count = dims
        .n
        .checked_mul(dims.c)
        .and_then(|v| v.checked_mul(dims.h))
        .and_then(|v| v.checked_mul(dims.w))
        .ok_or_else(|| Error::Format("extents overflow".into()))?;
    let mut raw = vec![0u8; count * 4];
    input.read_exact(&mut raw).map_err(truncated)?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(dims, data)
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated STEN data".into())
    } else {
        Error::Io(e)
    }
}

pub fn to_bytes(t: &Tensor) -> Vec<u8> {
    let mut v = Vec::with_capacity(HEADER_LEN + t.data().len() * 4);
    write(t, &mut v).expect("writing to a Vec cannot fail");
    v
}

pub fn from_bytes(bytes: &[u8]) -> Result<Tensor> {
    read(bytes)
}

pub fn save(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(t, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    read(BufReader::new(File::open(path)?))
}
