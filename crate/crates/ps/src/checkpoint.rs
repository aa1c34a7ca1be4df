//! Checkpoint file layout (little-endian):
//!
//! ```text
//! magic   8 bytes  "G4RCKPT\0"
//! version u32      1
//! dim     u32
//! count   u64
//! count x (key u64, dim x f32)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{PsError, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"G4RCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dim: usize,
    pub records: Vec<(u64, Vec<f32>)>,
}

pub fn write_checkpoint<'a, I>(path: &Path, dim: usize, records: I) -> Result<()>
where
    I: IntoIterator<Item = (u64, &'a [f32])>,
{
    let records: Vec<_> = records.into_iter().collect();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (key, v) in records {
        if v.len() != dim {
            return Err(PsError::DimMismatch { expected: dim, got: v.len() });
        }
        w.write_all(&key.to_le_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(PsError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(PsError::Truncated(format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(PsError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let rec_len = 8 + 4 * dim;
    let body = &bytes[HEADER_LEN..];
    let expected = (count as u128) * rec_len as u128;
    if (body.len() as u128) < expected {
        return Err(PsError::Truncated(format!("{count} records need {expected} bytes, found {}", body.len())));
    }
    if body.len() as u128 != expected {
        return Err(PsError::Truncated(format!("{} trailing bytes after {count} records", body.len() as u128 - expected)));
    }
    let records = body
        .chunks_exact(rec_len)
        .map(|rec| {
            let key = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let v = rec[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            (key, v)
        })
        .collect();
    Ok(Checkpoint { dim, records })
}
