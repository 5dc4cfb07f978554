//! Model loading and small parsers shared by the commands.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use num::Zero;
use qsynth_core::benchmarks::{build_buck, build_buck_with_levels, build_pendulum, build_pendulum_with_levels, BuckParams, PendulumParams};
use qsynth_core::model::{parse_model, Model};
use qsynth_core::quantizer::levels_from_bits;
use qsynth_core::rational::{self, Rational};

use crate::args::{Builtin, ModelArgs};

/// Bad command line input; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `n`, `-n/d` or a decimal such as `0.25`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let value = match body.split_once('/') {
        Some((n, d)) => {
            let n = rational::parse_decimal(n);
            let d = rational::parse_decimal(d).filter(|d| !d.is_zero());
            n.zip(d).map(|(n, d)| n / d)
        }
        None => rational::parse_decimal(body),
    };
    let value = value.ok_or_else(|| usage(format!("`{text}` is not a number")))?;
    Ok(if neg { -value } else { value })
}

pub fn parse_levels(text: &str) -> Result<BTreeMap<String, u64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        let (name, n) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("expected `name=levels`, found `{part}`")))?;
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| usage(format!("`{n}` is not a level count")))?;
        out.insert(name.trim().to_string(), n);
    }
    Ok(out)
}

pub fn parse_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| p.trim().parse().map_err(|_| usage(format!("`{p}` is not a count"))))
        .collect()
}

pub struct Loaded {
    pub model: Model,
    /// Quantization bits, when the levels were given that way.
    pub bits: Option<u32>,
}

pub fn load_model(args: &ModelArgs) -> Result<Loaded> {
    let levels = args.levels.as_deref().map(parse_levels).transpose()?;
    let model = match (&args.model, args.builtin) {
        (Some(path), _) => {
            let model = read_model(path)?;
            match (args.bits, &levels) {
                (Some(b), _) => model.with_levels(&levels_from_bits(&model.plant, b))?,
                (None, Some(l)) => model.with_levels(l)?,
                (None, None) => model,
            }
        }
        (None, Some(Builtin::Pendulum)) => {
            let mut p = PendulumParams::default();
            if let Some(f) = &args.force {
                p.force = parse_rational(f)?;
            }
            match &levels {
                Some(l) => build_pendulum_with_levels(&p, l)?.0,
                None => build_pendulum(&p, args.bits.unwrap_or(8))?.0,
            }
        }
        (None, Some(Builtin::Buck)) => {
            let p = BuckParams::new(args.inputs);
            match &levels {
                Some(l) => build_buck_with_levels(&p, l)?.0,
                None => build_buck(&p, args.bits.unwrap_or(8))?.0,
            }
        }
        (None, None) => return Err(usage("one of --model or --builtin is required")),
    };
    let bits = args.bits.or_else(|| {
        let levels = model.quantization.levels_by_name(&model.plant);
        levels
            .values()
            .all(|n| n.is_power_of_two())
            .then(|| levels.values().map(|n| n.trailing_zeros()).sum())
    });
    Ok(Loaded { model, bits })
}

pub fn read_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
    parse_model(&text).with_context(|| format!("in model {}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// ε from the command line, or the quantization step.
pub fn epsilon(model: &Model, text: Option<&str>) -> Result<Rational> {
    match text {
        Some(t) => {
            let e = parse_rational(t)?;
            if e < Rational::zero() {
                return Err(usage("--epsilon must not be negative"));
            }
            Ok(e)
        }
        None => Ok(model.quantization.step()),
    }
}
