//! Control software generation: a determinized lookup table, its JSON form,
//! and self-contained C source.
//!
//! Action codes are flat input indices starting at 1; `-1` marks states
//! outside the controlled region.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, VarKind};
use crate::quantizer::{Dim, QuantizeError, Space};
use crate::rational;
use crate::synth::Controller;

pub const OUTSIDE: i64 = -1;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("controller covers {controller} states but the quantization has {quantization}")]
    SizeMismatch { controller: u64, quantization: u64 },
    #[error("state space of {0} cells is too large for a dense table")]
    TooLarge(u64),
    #[error("malformed table: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

/// Quantization data of one variable as it appears in generated artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarInfo {
    pub name: String,
    pub kind: String,
    pub lo: f64,
    pub hi: f64,
    pub levels: u64,
    /// Cell width; zero for identity-quantized variables.
    pub delta: f64,
}

impl VarInfo {
    fn from_dim(d: &Dim) -> VarInfo {
        VarInfo {
            name: d.name.clone(),
            kind: d.kind.keyword().to_string(),
            lo: rational::to_f64(&d.lo),
            hi: rational::to_f64(&d.hi),
            levels: d.levels,
            delta: rational::to_f64(&d.delta),
        }
    }

    fn identity(&self) -> bool {
        self.kind != VarKind::Real.keyword()
    }

    /// Same formula as the quantizer's floating-point code.
    pub fn code(&self, v: f64) -> Option<u64> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        if self.identity() {
            return Some((v - self.lo).round() as u64);
        }
        let z = ((v - self.lo) / self.delta).floor();
        Some((z.max(0.0) as u64).min(self.levels - 1))
    }

    /// Centre of the cell with the given code.
    pub fn centre(&self, code: u64) -> f64 {
        if self.identity() {
            return self.lo + code as f64;
        }
        let lo = self.lo + code as f64 * self.delta;
        let hi = if code + 1 == self.levels { self.hi } else { self.lo + (code + 1) as f64 * self.delta };
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub state: u64,
    pub action: u64,
    #[serde(rename = "J")]
    pub j: u32,
}

/// A deterministic controller over the quantized state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTable {
    pub vars: Vec<VarInfo>,
    pub inputs: Vec<VarInfo>,
    /// One entry per controlled state, ascending by state.
    pub entries: Vec<Entry>,
    /// Hex SHA-256 of the canonical model text.
    #[serde(default)]
    pub fingerprint: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Keeps the lowest enabled action code of every controlled state.
pub fn determinize(controller: &Controller, model: &Model) -> Result<ControlTable, CodegenError> {
    let q = &model.quantization;
    if controller.states != q.state_count() {
        return Err(CodegenError::SizeMismatch {
            controller: controller.states,
            quantization: q.state_count(),
        });
    }
    let entries = controller
        .enabled
        .iter()
        .filter_map(|(&s, acts)| {
            acts.first().map(|&a| Entry {
                state: s,
                action: a,
                j: controller.j[&s],
            })
        })
        .collect();
    Ok(ControlTable {
        vars: q.states().dims.iter().map(VarInfo::from_dim).collect(),
        inputs: q.inputs().dims.iter().map(VarInfo::from_dim).collect(),
        entries,
        fingerprint: hex(&model.fingerprint()),
    })
}

impl ControlTable {
    pub fn state_count(&self) -> u64 {
        self.vars.iter().map(|v| v.levels).product()
    }

    pub fn action_count(&self) -> u64 {
        self.inputs.iter().map(|v| v.levels).product()
    }

    /// Flat state index of a concrete state, or `None` outside the region.
    pub fn state_index(&self, x: &[f64]) -> Option<u64> {
        if x.len() != self.vars.len() {
            return None;
        }
        let mut idx = 0u64;
        for (v, &xi) in self.vars.iter().zip(x) {
            idx = idx * v.levels + v.code(xi)?;
        }
        Some(idx + 1)
    }

    pub fn action_for_state(&self, state: u64) -> i64 {
        self.entries
            .binary_search_by_key(&state, |e| e.state)
            .map(|k| self.entries[k].action as i64)
            .unwrap_or(OUTSIDE)
    }

    /// Action code for a concrete state; `-1` outside the region or the
    /// controlled set.
    pub fn lookup(&self, x: &[f64]) -> i64 {
        self.state_index(x).map_or(OUTSIDE, |s| self.action_for_state(s))
    }

    /// Lookup through an explicit quantizer, as a cross-check of [`lookup`].
    ///
    /// [`lookup`]: ControlTable::lookup
    pub fn lookup_with(&self, space: &Space, x: &[f64]) -> i64 {
        space.quantize_f64(x).map_or(OUTSIDE, |s| self.action_for_state(s))
    }

    /// Representative input values (cell centres) of an action code.
    pub fn action_values(&self, action: u64) -> Vec<f64> {
        let mut rest = action - 1;
        let mut codes = vec![0; self.inputs.len()];
        for (k, v) in self.inputs.iter().enumerate().rev() {
            codes[k] = rest % v.levels;
            rest /= v.levels;
        }
        self.inputs.iter().zip(codes).map(|(v, c)| v.centre(c)).collect()
    }

    pub fn dense(&self) -> Result<Vec<i64>, CodegenError> {
        let n = self.state_count();
        if n > 1 << 28 {
            return Err(CodegenError::TooLarge(n));
        }
        let mut out = vec![OUTSIDE; n as usize];
        for e in &self.entries {
            out[e.state as usize - 1] = e.action as i64;
        }
        Ok(out)
    }
}

/// Canonical JSON text; fields in fixed order, no insignificant whitespace.
pub fn emit_json(table: &ControlTable) -> String {
    let mut s = serde_json::to_string(table).expect("table serializes");
    s.push('\n');
    s
}

pub fn read_json(text: &str) -> Result<ControlTable, CodegenError> {
    let mut t: ControlTable = serde_json::from_str(text)?;
    t.entries.sort_by_key(|e| e.state);
    Ok(t)
}

fn c_double(x: f64) -> String {
    format!("{x:?}")
}

fn c_ident(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Header declaring the generated entry points.
pub fn emit_c_header(table: &ControlTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "/* Generated quantized controller. Model fingerprint {}. */", table.fingerprint);
    let _ = writeln!(s, "#ifndef QSYNTH_CONTROLLER_H");
    let _ = writeln!(s, "#define QSYNTH_CONTROLLER_H\n");
    let _ = writeln!(s, "#define QSYNTH_STATE_DIM {}", table.vars.len());
    let _ = writeln!(s, "#define QSYNTH_INPUT_DIM {}", table.inputs.len());
    let _ = writeln!(s, "#define QSYNTH_STATE_COUNT {}", table.state_count());
    let _ = writeln!(s, "#define QSYNTH_ACTION_COUNT {}\n", table.action_count());
    let _ = writeln!(s, "/* State vector order: {}. */", table.vars.iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(s, "/* Returns the action code (1-based flat input index) for state x, or -1");
    let _ = writeln!(s, "   when x lies outside the controlled region. */");
    let _ = writeln!(s, "int qsynth_control(const double *x);\n");
    let _ = writeln!(s, "/* Writes the input values of an action code to u; returns 0, or -1 for a");
    let _ = writeln!(s, "   code out of range. */");
    let _ = writeln!(s, "int qsynth_action_values(int action, double *u);\n");
    let _ = writeln!(s, "#endif");
    s
}

/// Self-contained C source implementing the table; `header` is the name the
/// source includes.
pub fn emit_c_source(table: &ControlTable, header: &str) -> Result<String, CodegenError> {
    let dense = table.dense()?;
    let actions = table.action_count();
    let cell_type = if actions <= 127 {
        "signed char"
    } else if actions <= 32767 {
        "short"
    } else {
        "int"
    };
    let mut s = String::new();
    let _ = writeln!(s, "/* Generated quantized controller. Model fingerprint {}. */", table.fingerprint);
    let _ = writeln!(s, "#include <math.h>");
    let _ = writeln!(s, "#include \"{header}\"\n");
    let _ = writeln!(s, "static const {cell_type} qsynth_table[{}] = {{", dense.len().max(1));
    for chunk in dense.chunks(20) {
        let row: Vec<String> = chunk.iter().map(i64::to_string).collect();
        let _ = writeln!(s, "    {},", row.join(", "));
    }
    if dense.is_empty() {
        let _ = writeln!(s, "    -1,");
    }
    let _ = writeln!(s, "}};\n");

    let _ = writeln!(s, "int qsynth_control(const double *x)\n{{");
    let _ = writeln!(s, "    long idx = 0;");
    let _ = writeln!(s, "    double v;");
    let _ = writeln!(s, "    long z;");
    for (k, v) in table.vars.iter().enumerate() {
        let _ = writeln!(s, "    /* {} */", c_ident(&v.name));
        let _ = writeln!(s, "    v = x[{k}];");
        let _ = writeln!(s, "    if (!(v >= {} && v <= {})) return -1;", c_double(v.lo), c_double(v.hi));
        if v.identity() {
            let _ = writeln!(s, "    z = (long)round(v - {});", c_double(v.lo));
        } else {
            let _ = writeln!(s, "    z = (long)floor((v - {}) / {});", c_double(v.lo), c_double(v.delta));
            let _ = writeln!(s, "    if (z < 0) z = 0;");
            let _ = writeln!(s, "    if (z > {}) z = {};", v.levels - 1, v.levels - 1);
        }
        let _ = writeln!(s, "    idx = idx * {} + z;", v.levels);
    }
    let _ = writeln!(s, "    return qsynth_table[idx];\n}}\n");

    let _ = writeln!(s, "int qsynth_action_values(int action, double *u)\n{{");
    if table.inputs.is_empty() {
        let _ = writeln!(s, "    (void)u;");
    } else {
        let _ = writeln!(s, "    long rest;");
    }
    let _ = writeln!(s, "    if (action < 1 || action > {actions}) return -1;");
    if !table.inputs.is_empty() {
        let _ = writeln!(s, "    rest = action - 1;");
        for (k, v) in table.inputs.iter().enumerate().rev() {
            let code = format!("(rest % {})", v.levels);
            if v.identity() {
                let _ = writeln!(s, "    u[{k}] = {} + {code};", c_double(v.lo));
            } else {
                let _ = writeln!(
                    s,
                    "    u[{k}] = {} + ({code} + 0.5) * {};",
                    c_double(v.lo),
                    c_double(v.delta)
                );
            }
            let _ = writeln!(s, "    rest /= {};", v.levels);
        }
    }
    let _ = writeln!(s, "    return 0;\n}}");
    Ok(s)
}
