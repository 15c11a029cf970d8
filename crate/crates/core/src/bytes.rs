//! Little-endian binary read/write helpers shared by the on-disk formats.
//!
//! Truncated files surface as format errors (the caller attaches the path),
//! while genuine I/O failures pass through untouched.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub(crate) fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format("file is truncated")
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_full(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_full(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_full(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

/// Check a 4-byte magic header; `what` names the expected file kind in the
/// error message.
pub(crate) fn expect_magic(r: &mut impl Read, magic: &[u8; 4], what: &str) -> Result<()> {
    let mut got = [0u8; 4];
    read_full(r, &mut got)?;
    if &got != magic {
        return Err(Error::format(format!(
            "not a {what} file: expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    Ok(())
}

/// Check the format version right after the magic.
pub(crate) fn expect_version(r: &mut impl Read, supported: u32, what: &str) -> Result<()> {
    let v = read_u32(r)?;
    if v != supported {
        return Err(Error::format(format!(
            "unsupported {what} version {v} (this build reads version {supported})"
        )));
    }
    Ok(())
}

/// A `usize` count read from disk, validated against an upper bound to avoid
/// absurd allocations from corrupt headers.
pub(crate) fn checked_count(v: u64, limit: u64, what: &str) -> Result<usize> {
    if v > limit {
        return Err(Error::format(format!("implausible {what} count {v} (limit {limit})")));
    }
    Ok(v as usize)
}
