//! Binary checkpoint container.
//!
//! ```text
//! magic       8 bytes  "AEQCKPT\0"
//! version     u32      currently 1
//! arch        str      u32 length + utf-8
//! metadata    u32 count, then (key str, value str) pairs
//! params      u32 count, then per tensor: u32 rank + rank × u64 dims
//! values      all tensors' f64 values in order
//! adam        u8 flag; when 1: lr, beta1, beta2, eps (f64), step (u64),
//!             first moments, then second moments, same layout as values
//! ```
//! All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{AdamState, ValueGrid};
use crate::binio::{read_f64s, read_header, read_str, write_f64s, write_header, write_str};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AEQCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const WHAT: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: String,
    /// Free-form key/value pairs kept in insertion order.
    pub metadata: Vec<(String, String)>,
    pub params: Vec<ValueGrid>,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        write_str(w, &self.arch)?;
        w.write_u32::<LE>(self.metadata.len() as u32)?;
        for (k, v) in &self.metadata {
            write_str(w, k)?;
            write_str(w, v)?;
        }
        w.write_u32::<LE>(self.params.len() as u32)?;
        for p in &self.params {
            w.write_u32::<LE>(p.shape().len() as u32)?;
            for d in p.shape() {
                w.write_u64::<LE>(*d as u64)?;
            }
        }
        for p in &self.params {
            write_f64s(w, &p.values)?;
        }
        match &self.adam {
            None => w.write_u8(0)?,
            Some(a) => {
                w.write_u8(1)?;
                write_f64s(w, &[a.lr, a.beta1, a.beta2, a.eps])?;
                w.write_u64::<LE>(a.step_count)?;
                // never-stepped optimizers are stored with zero moments
                for moments in [&a.first_moment, &a.second_moment] {
                    for (i, p) in self.params.iter().enumerate() {
                        match moments.get(i) {
                            Some(m) if m.len() == p.len() => write_f64s(w, m)?,
                            None if moments.is_empty() => write_f64s(w, &vec![0.0; p.len()])?,
                            _ => return Err(Error::Shape("optimizer state does not match parameters".into())),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = read_header(r, CHECKPOINT_MAGIC, WHAT)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let arch = read_str(r, WHAT)?;
        let n_meta = r.read_u32::<LE>()?;
        let mut metadata = Vec::new();
        for _ in 0..n_meta {
            metadata.push((read_str(r, WHAT)?, read_str(r, WHAT)?));
        }
        let n_params = r.read_u32::<LE>()? as usize;
        let mut shapes = Vec::with_capacity(n_params.min(1024));
        for _ in 0..n_params {
            let rank = r.read_u32::<LE>()? as usize;
            if rank > 8 {
                return Err(Error::format(WHAT, format!("tensor rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.read_u64::<LE>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()?;
            shapes.push(shape);
        }
        let sizes: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
        if sizes.iter().sum::<usize>() > 1 << 28 {
            return Err(Error::format(WHAT, "parameter count is implausible"));
        }
        let mut params = Vec::with_capacity(n_params);
        for (shape, n) in shapes.into_iter().zip(&sizes) {
            params.push(ValueGrid::new(shape, read_f64s(r, *n)?)?);
        }
        let adam = match r.read_u8()? {
            0 => None,
            1 => {
                let h = read_f64s(r, 4)?;
                let step_count = r.read_u64::<LE>()?;
                let mut read_moments =
                    || sizes.iter().map(|n| read_f64s(r, *n)).collect::<Result<Vec<_>>>();
                let first_moment = read_moments()?;
                let second_moment = read_moments()?;
                Some(AdamState {
                    lr: h[0],
                    beta1: h[1],
                    beta2: h[2],
                    eps: h[3],
                    step_count,
                    first_moment,
                    second_moment,
                })
            }
            f => return Err(Error::format(WHAT, format!("optimizer flag {f}"))),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format(WHAT, "trailing bytes"));
        }
        Ok(Checkpoint {
            arch,
            metadata,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
