//! Controller dumps.
//!
//! Binary layout, little-endian: magic `QCTL`, version `u16` (1), 32-byte
//! model fingerprint, outcome `u8` (0 Sol, 1 NoSol, 2 Unk), state count
//! `u64`, action count `u64`, entry count `u64`, then one
//! `(state u64, action u64, J u32)` entry per enabled pair in ascending
//! order. The text form lists the same entries one per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use thiserror::Error;

use super::{Controller, Outcome};

pub const CONTROLLER_MAGIC: &[u8; 4] = b"QCTL";
const VERSION: u16 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DumpError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown outcome code {0}")]
    BadOutcome(u8),
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("entry {0} is out of order or disagrees with an earlier J")]
    Inconsistent(u64),
}

pub fn controller_to_bytes(controller: &Controller, fingerprint: &[u8; 32]) -> Vec<u8> {
    let pairs = controller.pairs();
    let mut out = Vec::with_capacity(4 + 2 + 32 + 1 + 24 + 20 * pairs.len());
    out.extend_from_slice(CONTROLLER_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(fingerprint);
    out.push(controller.outcome.code());
    out.extend_from_slice(&controller.states.to_le_bytes());
    out.extend_from_slice(&controller.actions.to_le_bytes());
    out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for (s, a) in pairs {
        out.extend_from_slice(&s.to_le_bytes());
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&controller.j[&s].to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DumpError> {
        let end = self.at + N;
        let slice = self.bytes.get(self.at..end).ok_or(DumpError::Truncated)?;
        self.at = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, DumpError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}

/// Decodes a binary dump into the controller and its model fingerprint.
pub fn controller_from_bytes(bytes: &[u8]) -> Result<(Controller, [u8; 32]), DumpError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take::<4>()? != *CONTROLLER_MAGIC {
        return Err(DumpError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let fingerprint = r.take::<32>()?;
    let [code] = r.take::<1>()?;
    let outcome = Outcome::from_code(code).ok_or(DumpError::BadOutcome(code))?;
    let states = r.u64()?;
    let actions = r.u64()?;
    let count = r.u64()?;
    let mut enabled: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut j = BTreeMap::new();
    let mut last = None;
    for k in 0..count {
        let s = r.u64()?;
        let a = r.u64()?;
        let level = u32::from_le_bytes(r.take()?);
        if last.is_some_and(|p| p >= (s, a)) || *j.entry(s).or_insert(level) != level {
            return Err(DumpError::Inconsistent(k));
        }
        last = Some((s, a));
        enabled.entry(s).or_default().insert(a);
    }
    if r.at != bytes.len() {
        return Err(DumpError::TrailingBytes(bytes.len() - r.at));
    }
    Ok((
        Controller {
            states,
            actions,
            enabled,
            j,
            outcome,
        },
        fingerprint,
    ))
}

pub fn controller_to_text(controller: &Controller) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "outcome {}", controller.outcome);
    let _ = writeln!(out, "states {} actions {}", controller.states, controller.actions);
    let _ = writeln!(out, "# state action J");
    for (s, a) in controller.pairs() {
        let _ = writeln!(out, "{s} {a} {}", controller.j[&s]);
    }
    out
}
