//! Builders for the inverted pendulum and the multi-input buck DC-DC
//! converter.
//!
//! Each builder writes the model in the text format and parses it back, so
//! the text returned alongside the model is exactly what was built.

use std::collections::BTreeMap;
use std::fmt::Write;

use num::{Signed, Zero};
use thiserror::Error;

use crate::model::{parse_model, Model, ModelError};
use crate::quantizer::levels_from_bits;
use crate::rational::{self, int, ratio, Rational};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sine envelope on interval {index} fails at x = {x}: {lower} <= {sin} <= {upper} does not hold")]
    Envelope {
        index: usize,
        x: f64,
        lower: f64,
        sin: f64,
        upper: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Grid on which derived envelope coefficients are rounded outward.
pub const ENVELOPE_GRID: i64 = 1_000_000_000_000;

/// `slope · x + offset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Line {
    pub slope: Rational,
    pub offset: Rational,
}

impl Line {
    pub fn new(slope: Rational, offset: Rational) -> Line {
        Line { slope, offset }
    }

    pub fn eval(&self, x: f64) -> f64 {
        rational::to_f64(&self.slope) * x + rational::to_f64(&self.offset)
    }
}

/// The four quarter-period intervals `I₁..I₄` of `[−π, π]`.
pub fn sine_interval(index: usize) -> (Rational, Rational) {
    let pi = rational::pi();
    let half = &pi / int(2);
    match index {
        1 => (-pi, -half),
        2 => (-half, Rational::zero()),
        3 => (Rational::zero(), half),
        4 => (half, pi),
        _ => panic!("sine interval index {index} outside 1..=4"),
    }
}

/// The envelope given for `I₁`.
pub fn published_envelope_1() -> (Line, Line) {
    (
        Line::new(ratio(-707, 1000), ratio(-2373, 1000)),
        Line::new(ratio(-637, 1000), int(-2)),
    )
}

/// Lower and upper lines bracketing `sin` on `I_index`.
///
/// On `I₁` the published pair is used. Elsewhere one line is the chord and
/// the other the parallel line tangent to `sin`; which is which depends on
/// the sign of the curvature. Coefficients are rounded outward to the
/// `1e−12` grid.
pub fn derive_sin_envelope(index: usize) -> (Line, Line) {
    if index == 1 {
        return published_envelope_1();
    }
    let (a, b) = sine_interval(index);
    let (a, b) = (rational::to_f64(&a), rational::to_f64(&b));
    let slope = rational::nearest_on_grid((b.sin() - a.sin()) / (b - a), ENVELOPE_GRID);
    let s = rational::to_f64(&slope);
    let gap = |x: f64| x.sin() - s * x;
    let ends = [gap(a), gap(b)];
    // Where the tangent slope equals `s`, if inside the interval.
    let touch = [s.acos(), -s.acos()]
        .into_iter()
        .filter(|x| *x >= a && *x <= b)
        .map(gap)
        .collect::<Vec<_>>();
    let all: Vec<f64> = ends.iter().chain(&touch).copied().collect();
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin = 1.0 / ENVELOPE_GRID as f64;
    let lower = Line::new(slope.clone(), rational::round_to_grid(min - margin, ENVELOPE_GRID, false));
    let upper = Line::new(slope, rational::round_to_grid(max + margin, ENVELOPE_GRID, true));
    (lower, upper)
}

/// Checks `lower ≤ sin ≤ upper` at `samples` evenly spaced points of
/// `I_index`, allowing a violation of at most `margin`.
pub fn validate_envelope(index: usize, lower: &Line, upper: &Line, samples: usize, margin: f64) -> Result<(), BenchmarkError> {
    let (a, b) = sine_interval(index);
    let (a, b) = (rational::to_f64(&a), rational::to_f64(&b));
    for k in 0..samples {
        let x = a + (b - a) * k as f64 / (samples - 1).max(1) as f64;
        let (lo, s, hi) = (lower.eval(x), x.sin(), upper.eval(x));
        if s - lo < -margin || hi - s < -margin {
            return Err(BenchmarkError::Envelope {
                index,
                x,
                lower: lo,
                sin: s,
                upper: hi,
            });
        }
    }
    Ok(())
}

fn num(r: &Rational) -> String {
    rational::format(r)
}

/// Linear expression text, e.g. `x + 1/100*y - 3`.
fn lin(terms: &[(Rational, &str)], constant: &Rational) -> String {
    let mut out = String::new();
    for (k, name) in terms.iter().filter(|(k, _)| !k.is_zero()) {
        let mag = k.abs();
        let body = if mag == int(1) { name.to_string() } else { format!("{}*{name}", num(&mag)) };
        match (out.is_empty(), k.is_negative()) {
            (true, false) => out.push_str(&body),
            (true, true) => out.push_str(&format!("-{body}")),
            (false, false) => out.push_str(&format!(" + {body}")),
            (false, true) => out.push_str(&format!(" - {body}")),
        }
    }
    if !constant.is_zero() || out.is_empty() {
        let mag = num(&constant.abs());
        match (out.is_empty(), constant.is_negative()) {
            (true, false) => out.push_str(&mag),
            (true, true) => out.push_str(&format!("-{mag}")),
            (false, false) => out.push_str(&format!(" + {mag}")),
            (false, true) => out.push_str(&format!(" - {mag}")),
        }
    }
    out
}

fn levels_text(levels: &BTreeMap<String, u64>, name: &str) -> String {
    levels.get(name).map(|n| format!(" levels {n}")).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendulumParams {
    /// Force intensity.
    pub force: Rational,
    /// Sampling time.
    pub sampling: Rational,
    pub g_over_l: Rational,
    pub inv_ml2: Rational,
    /// Half width of the box goal around the upright rest state.
    pub goal_radius: Rational,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            force: ratio(1, 2),
            sampling: ratio(1, 100),
            g_over_l: int(1),
            inv_ml2: int(1),
            goal_radius: ratio(1, 10),
        }
    }
}

impl PendulumParams {
    fn check(&self) -> Result<(), BenchmarkError> {
        for (name, v) in [
            ("force", &self.force),
            ("sampling time", &self.sampling),
            ("g/l", &self.g_over_l),
            ("1/(m l^2)", &self.inv_ml2),
            ("goal radius", &self.goal_radius),
        ] {
            if !v.is_positive() {
                return Err(BenchmarkError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Admissible bound of the angle: `1.1π`.
pub fn pendulum_angle_bound() -> Rational {
    rational::pi() * ratio(11, 10)
}

/// Model text of the linearized pendulum with the given level counts.
pub fn pendulum_text(params: &PendulumParams, levels: &BTreeMap<String, u64>) -> Result<String, BenchmarkError> {
    params.check()?;
    let pi = rational::pi();
    let two_pi = &pi * int(2);
    let a1 = pendulum_angle_bound();
    let t = &params.sampling;
    let mut s = String::new();
    let _ = writeln!(s, "# Inverted pendulum, sine replaced by piecewise linear envelopes.");
    let _ = writeln!(s, "state x1 real [{}, {}]{};", num(&-a1.clone()), num(&a1), levels_text(levels, "x1"));
    let _ = writeln!(s, "state x2 real [-4, 4]{};", levels_text(levels, "x2"));
    let _ = writeln!(s, "input u int [-1, 1];");
    let _ = writeln!(s, "aux y_alpha real [{}, {}];", num(&-pi.clone()), num(&pi));
    let _ = writeln!(s, "aux y_sin real [-2, 2];");
    let _ = writeln!(s, "aux y_k int [-2, 2];");
    let _ = writeln!(s, "aux y_q int [-2, 2];");
    for i in 1..=4 {
        let _ = writeln!(s, "aux y{i} bool;");
    }
    let _ = writeln!(s, "trans {{");
    let _ = writeln!(
        s,
        "  x1' = {};",
        lin(&[(int(1), "x1"), (two_pi.clone(), "y_q"), (t.clone(), "x2")], &Rational::zero())
    );
    let _ = writeln!(
        s,
        "  x2' = {};",
        lin(
            &[
                (int(1), "x2"),
                (t * &params.g_over_l, "y_sin"),
                (t * &params.inv_ml2 * &params.force, "u"),
            ],
            &Rational::zero()
        )
    );
    for i in 1..=4 {
        let (lo, hi) = derive_sin_envelope(i);
        let _ = writeln!(s, "  y{i} -> y_sin >= {};", lin(&[(lo.slope.clone(), "y_alpha")], &lo.offset));
        let _ = writeln!(s, "  y{i} -> y_sin <= {};", lin(&[(hi.slope.clone(), "y_alpha")], &hi.offset));
    }
    for i in 1..=4 {
        let (a, b) = sine_interval(i);
        let _ = writeln!(s, "  y{i} -> y_alpha >= {};", num(&a));
        let _ = writeln!(s, "  y{i} -> y_alpha <= {};", num(&b));
    }
    let _ = writeln!(s, "  y1 + y2 + y3 + y4 >= 1;");
    let _ = writeln!(s, "  x1 = {};", lin(&[(two_pi, "y_k"), (int(1), "y_alpha")], &Rational::zero()));
    let _ = writeln!(s, "  {} <= x1' <= {};", num(&-pi.clone()), num(&pi));
    let _ = writeln!(s, "}}");
    let r = num(&params.goal_radius);
    let _ = writeln!(s, "goal {{\n  -{r} <= x1 <= {r};\n  -{r} <= x2 <= {r};\n}}");
    Ok(s)
}

/// Level counts for `bits` bits split evenly over the real state variables.
fn bits_to_levels(text_without_levels: &str, bits: u32) -> Result<BTreeMap<String, u64>, BenchmarkError> {
    let probe = parse_model_plant_only(text_without_levels)?;
    Ok(levels_from_bits(&probe, bits))
}

fn parse_model_plant_only(text: &str) -> Result<crate::model::Dtlhs, BenchmarkError> {
    // Levels are irrelevant for the plant; give every real state one level.
    let mut ones = BTreeMap::new();
    for line in text.lines() {
        let mut words = line.split_whitespace();
        if let (Some("state"), Some(name), Some("real")) = (words.next(), words.next(), words.next()) {
            ones.insert(name.to_string(), 1);
        }
    }
    Ok(crate::model::parse_model_with_levels(text, &ones)?.plant)
}

pub fn build_pendulum(params: &PendulumParams, bits: u32) -> Result<(Model, String), BenchmarkError> {
    let levels = bits_to_levels(&pendulum_text(params, &BTreeMap::new())?, bits)?;
    build_pendulum_with_levels(params, &levels)
}

pub fn build_pendulum_with_levels(params: &PendulumParams, levels: &BTreeMap<String, u64>) -> Result<(Model, String), BenchmarkError> {
    let text = pendulum_text(params, levels)?;
    Ok((parse_model(&text)?, text))
}

/// One exact discrete step of the nonlinear pendulum.
pub fn step_nonlinear_pendulum(x: [f64; 2], u: f64, params: &PendulumParams) -> [f64; 2] {
    let t = rational::to_f64(&params.sampling);
    let gl = rational::to_f64(&params.g_over_l);
    let k = rational::to_f64(&params.inv_ml2) * rational::to_f64(&params.force);
    [x[0] + t * x[1], x[1] + t * gl * x[0].sin() + t * k * u]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuckParams {
    pub inputs: u32,
    pub inductance: Rational,
    pub r_l: Rational,
    pub r_c: Rational,
    pub load: Rational,
    pub capacitance: Rational,
    /// `V_i = i · voltage_step`.
    pub voltage_step: Rational,
    pub sampling: Rational,
    pub r_on: Rational,
    pub r_off: Rational,
    /// Goal box `(i_L range, v_O range)`.
    pub goal: ((Rational, Rational), (Rational, Rational)),
}

impl BuckParams {
    pub fn new(inputs: u32) -> BuckParams {
        BuckParams {
            inputs,
            inductance: ratio(2, 10_000),
            r_l: ratio(1, 10),
            r_c: ratio(1, 10),
            load: int(5),
            capacitance: ratio(5, 100_000),
            voltage_step: int(10),
            sampling: ratio(1, 1_000_000),
            r_on: ratio(1, 10),
            r_off: int(100_000),
            goal: ((int(0), int(2)), (ratio(49, 10), ratio(51, 10))),
        }
    }

    fn check(&self) -> Result<(), BenchmarkError> {
        if self.inputs == 0 {
            return Err(BenchmarkError::InvalidParameter("at least one input is required".into()));
        }
        for (name, v) in [
            ("L", &self.inductance),
            ("r_L", &self.r_l),
            ("r_C", &self.r_c),
            ("R", &self.load),
            ("C", &self.capacitance),
            ("voltage step", &self.voltage_step),
            ("T", &self.sampling),
            ("R_on", &self.r_on),
            ("R_off", &self.r_off),
        ] {
            if !v.is_positive() {
                return Err(BenchmarkError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Continuous-time coefficients `a_{i,j}`, row-major.
    pub fn coefficients(&self) -> [[Rational; 3]; 2] {
        let (l, rl, rc, r, c) = (&self.inductance, &self.r_l, &self.r_c, &self.load, &self.capacitance);
        let one = int(1);
        let a11 = -(rl / l);
        let a12 = -(&one / l);
        let a13 = -(&one / l);
        let a21 = r / (rc + r) * (-(rc * rl / l) + &one / c);
        let a22 = -(&one) / (rc + r) * (rc * r / l + &one / c);
        let a23 = -(&one / l) * (rc * r / (rc + r));
        [[a11, a12, a13], [a21, a22, a23]]
    }
}

/// Model text of the `n`-input buck converter.
pub fn buck_text(params: &BuckParams, levels: &BTreeMap<String, u64>) -> Result<String, BenchmarkError> {
    params.check()?;
    let n = params.inputs;
    let vn = &params.voltage_step * int(i64::from(n));
    let vmax = &vn + int(5);
    let imax = int(5);
    let volt = format!("[{}, {}]", num(&-vmax.clone()), num(&vmax));
    let amp = format!("[{}, {}]", num(&-imax.clone()), num(&imax));
    let a = params.coefficients();
    let t = &params.sampling;
    let one = int(1);
    let mut s = String::new();
    let _ = writeln!(s, "# Multi-input buck DC-DC converter with {n} inputs.");
    let _ = writeln!(s, "state i_L real [-4, 4]{};", levels_text(levels, "i_L"));
    let _ = writeln!(s, "state v_O real [-1, 7]{};", levels_text(levels, "v_O"));
    for j in 1..=n {
        let _ = writeln!(s, "input u_{j} bool;");
    }
    let _ = writeln!(s, "aux v_D real {volt};");
    for i in 1..n {
        let _ = writeln!(s, "aux v_D_{i} real {volt};");
    }
    let _ = writeln!(s, "aux i_D real {amp};");
    for j in 1..=n {
        let _ = writeln!(s, "aux I_u_{j} real {amp};");
    }
    for j in 1..=n {
        let _ = writeln!(s, "aux v_u_{j} real {volt};");
    }
    for i in 0..n {
        let _ = writeln!(s, "aux q_{i} bool;");
    }
    let _ = writeln!(s, "trans {{");
    let _ = writeln!(
        s,
        "  i_L' = {};",
        lin(
            &[(&one + t * &a[0][0], "i_L"), (t * &a[0][1], "v_O"), (t * &a[0][2], "v_D")],
            &Rational::zero()
        )
    );
    let _ = writeln!(
        s,
        "  v_O' = {};",
        lin(
            &[(t * &a[1][0], "i_L"), (&one + t * &a[1][1], "v_O"), (t * &a[1][2], "v_D")],
            &Rational::zero()
        )
    );
    let (ron, roff) = (&params.r_on, &params.r_off);
    let _ = writeln!(s, "  q_0 -> v_D = {};", lin(&[(ron.clone(), "i_D")], &Rational::zero()));
    let _ = writeln!(s, "  q_0 -> i_D >= 0;");
    let _ = writeln!(s, "  !q_0 -> v_D = {};", lin(&[(roff.clone(), "i_D")], &Rational::zero()));
    let _ = writeln!(s, "  !q_0 -> v_D <= 0;");
    for i in 1..n {
        let (v, c) = (format!("v_D_{i}"), format!("I_u_{i}"));
        let _ = writeln!(s, "  q_{i} -> {v} = {};", lin(&[(ron.clone(), &c)], &Rational::zero()));
        let _ = writeln!(s, "  q_{i} -> {c} >= 0;");
        let _ = writeln!(s, "  !q_{i} -> {v} = {};", lin(&[(roff.clone(), &c)], &Rational::zero()));
        let _ = writeln!(s, "  !q_{i} -> {v} <= 0;");
    }
    for j in 1..=n {
        let (v, c) = (format!("v_u_{j}"), format!("I_u_{j}"));
        let _ = writeln!(s, "  u_{j} -> {v} = {};", lin(&[(ron.clone(), &c)], &Rational::zero()));
        let _ = writeln!(s, "  !u_{j} -> {v} = {};", lin(&[(roff.clone(), &c)], &Rational::zero()));
    }
    let currents: Vec<String> = (1..=n).map(|j| format!("I_u_{j}")).collect();
    let mut balance: Vec<(Rational, &str)> = vec![(one.clone(), "i_D")];
    balance.extend(currents.iter().map(|c| (one.clone(), c.as_str())));
    let _ = writeln!(s, "  i_L = {};", lin(&balance, &Rational::zero()));
    for i in 1..n {
        let vi = &params.voltage_step * int(i64::from(i));
        let (vu, vd) = (format!("v_u_{i}"), format!("v_D_{i}"));
        let _ = writeln!(s, "  v_D = {};", lin(&[(one.clone(), &vu), (one.clone(), &vd)], &-vi));
    }
    let _ = writeln!(s, "  v_D = {};", lin(&[(one.clone(), &format!("v_u_{n}"))], &-vn.clone()));
    let _ = writeln!(s, "}}");
    let ((il_lo, il_hi), (vo_lo, vo_hi)) = &params.goal;
    let _ = writeln!(
        s,
        "goal {{\n  {} <= i_L <= {};\n  {} <= v_O <= {};\n}}",
        num(il_lo),
        num(il_hi),
        num(vo_lo),
        num(vo_hi)
    );
    Ok(s)
}

pub fn build_buck(params: &BuckParams, bits: u32) -> Result<(Model, String), BenchmarkError> {
    let levels = bits_to_levels(&buck_text(params, &BTreeMap::new())?, bits)?;
    build_buck_with_levels(params, &levels)
}

pub fn build_buck_with_levels(params: &BuckParams, levels: &BTreeMap<String, u64>) -> Result<(Model, String), BenchmarkError> {
    let text = buck_text(params, levels)?;
    Ok((parse_model(&text)?, text))
}
