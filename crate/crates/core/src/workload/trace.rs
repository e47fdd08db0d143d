//! Binary trace files: an 8-byte magic followed by 16-byte little-endian
//! records `(tick: u64, vaddr: u56 | flags: u8 << 56)`. Flag bit 0 marks a
//! write.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::MAX_VADDR;
use crate::model::AccessEvent;

pub const TRACE_MAGIC: &[u8; 8] = b"TSIMTRC1";
const RECORD_BYTES: usize = 16;
const FLAG_WRITE: u64 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace file ends mid-record ({trailing} trailing bytes)")]
    TruncatedFile { trailing: usize },
    #[error("not a trace file (bad magic)")]
    BadMagic,
    #[error("address {0:#x} does not fit in 56 bits")]
    AddressTooWide(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_trace_to<W: Write>(mut out: W, events: &[AccessEvent]) -> Result<(), TraceError> {
    out.write_all(TRACE_MAGIC)?;
    for ev in events {
        if ev.vaddr.0 > MAX_VADDR {
            return Err(TraceError::AddressTooWide(ev.vaddr.0));
        }
        let flags = if ev.is_write { FLAG_WRITE } else { 0 };
        out.write_all(&ev.tick.to_le_bytes())?;
        out.write_all(&(ev.vaddr.0 | flags << 56).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_from<R: Read>(mut input: R) -> Result<Vec<AccessEvent>, TraceError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < TRACE_MAGIC.len() || &buf[..8] != TRACE_MAGIC {
        return Err(TraceError::BadMagic);
    }
    let body = &buf[8..];
    let trailing = body.len() % RECORD_BYTES;
    if trailing != 0 {
        return Err(TraceError::TruncatedFile { trailing });
    }
    Ok(body
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let tick = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
            let word = u64::from_le_bytes(rec[8..].try_into().expect("8 bytes"));
            AccessEvent::new(tick, word & MAX_VADDR, (word >> 56) & FLAG_WRITE != 0)
        })
        .collect())
}

pub fn write_trace(path: impl AsRef<Path>, events: &[AccessEvent]) -> Result<(), TraceError> {
    write_trace_to(BufWriter::new(File::create(path)?), events)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<AccessEvent>, TraceError> {
    read_trace_from(BufReader::new(File::open(path)?))
}
