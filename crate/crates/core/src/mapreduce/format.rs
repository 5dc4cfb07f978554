//! Binary exchange format for local abstractions.
//!
//! Little-endian layout: magic `QSYN`, version `u16` (1), 32-byte model
//! fingerprint, worker index `u32`, worker count `u32`, triple count `u64`,
//! then each triple as three `u64` flat indices in ascending order.

use thiserror::Error;

use crate::abstraction::{AbstractTransitionSet, Triple};

pub const MAGIC: &[u8; 4] = b"QSYN";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 32 + 4 + 4 + 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("input truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after the last triple")]
    TrailingBytes(usize),
    #[error("triples are not strictly ascending at position {0}")]
    Unsorted(u64),
}

/// The transitions one worker computed for its share of the states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalAbstraction {
    pub worker: u32,
    pub workers: u32,
    pub fingerprint: [u8; 32],
    pub transitions: AbstractTransitionSet,
}

impl LocalAbstraction {
    pub fn triple_count(&self) -> u64 {
        self.transitions.len() as u64
    }
}

pub fn serialize_local(local: &LocalAbstraction) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 24 * local.transitions.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&local.fingerprint);
    out.extend_from_slice(&local.worker.to_le_bytes());
    out.extend_from_slice(&local.workers.to_le_bytes());
    out.extend_from_slice(&local.triple_count().to_le_bytes());
    for t in &local.transitions {
        out.extend_from_slice(&t.state.to_le_bytes());
        out.extend_from_slice(&t.action.to_le_bytes());
        out.extend_from_slice(&t.next.to_le_bytes());
    }
    out
}

fn take<const N: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; N], FormatError> {
    let end = *at + N;
    if end > bytes.len() {
        return Err(FormatError::Truncated {
            needed: end,
            have: bytes.len(),
        });
    }
    let mut buf = [0u8; N];
    buf.copy_from_slice(&bytes[*at..end]);
    *at = end;
    Ok(buf)
}

pub fn deserialize_local(bytes: &[u8]) -> Result<LocalAbstraction, FormatError> {
    let mut at = 0;
    if take::<4>(bytes, &mut at)? != *MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = u16::from_le_bytes(take(bytes, &mut at)?);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let fingerprint = take::<32>(bytes, &mut at)?;
    let worker = u32::from_le_bytes(take(bytes, &mut at)?);
    let workers = u32::from_le_bytes(take(bytes, &mut at)?);
    let count = u64::from_le_bytes(take(bytes, &mut at)?);
    let needed = (count as usize)
        .checked_mul(24)
        .and_then(|n| n.checked_add(at))
        .ok_or(FormatError::Truncated {
            needed: usize::MAX,
            have: bytes.len(),
        })?;
    if needed > bytes.len() {
        return Err(FormatError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if needed < bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - needed));
    }
    let mut triples = Vec::with_capacity(count as usize);
    for k in 0..count {
        let t = Triple::new(
            u64::from_le_bytes(take(bytes, &mut at)?),
            u64::from_le_bytes(take(bytes, &mut at)?),
            u64::from_le_bytes(take(bytes, &mut at)?),
        );
        if triples.last().is_some_and(|p: &Triple| *p >= t) {
            return Err(FormatError::Unsorted(k));
        }
        triples.push(t);
    }
    Ok(LocalAbstraction {
        worker,
        workers,
        fingerprint,
        transitions: triples.into_iter().collect(),
    })
}
