//! Little-endian helpers shared by the binary containers.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R, what: &'static str) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    if n > 1 << 20 {
        return Err(Error::format(what, format!("string length {n} is implausible")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::format(what, "string is not utf-8"))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_f64::<LE>(*x)?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

/// Checks the magic bytes and returns the version that follows them.
pub(crate) fn read_header<R: Read>(r: &mut R, magic: &[u8; 8], what: &'static str) -> Result<u32> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::format(what, "bad magic bytes"));
    }
    Ok(r.read_u32::<LE>()?)
}

pub(crate) fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], version: u32) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LE>(version)?;
    Ok(())
}
