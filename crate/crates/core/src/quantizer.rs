//! Uniform quantization of state and input variables.
//!
//! Real variables are cut into `n` closed cells of width `Δ = (β − α)/n`;
//! integer and boolean variables use the identity quantization (one code per
//! value). Abstract points have a mixed-radix flat index starting at 1 with
//! the first declared variable most significant.

use std::collections::BTreeMap;

use num::{ToPrimitive, Zero};
use thiserror::Error;

use crate::model::{Dtlhs, VarId, VarKind, VarRole};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("value {value} of `{name}` is outside its admissible region [{lo}, {hi}]")]
    OutOfRegion { name: String, value: String, lo: String, hi: String },
    #[error("code {code} of `{name}` is outside 0..{levels}")]
    CodeOutOfRange { name: String, code: u64, levels: u64 },
    #[error("flat index {index} is outside 1..={count}")]
    IndexOutOfRange { index: u64, count: u64 },
    #[error("real variable `{name}` needs a level count")]
    MissingLevels { name: String },
    #[error("level count for `{name}` must be at least 1")]
    ZeroLevels { name: String },
    #[error("`{name}` is discrete and uses identity quantization with {expected} levels, not {given}")]
    DiscreteLevels { name: String, expected: u64, given: u64 },
    #[error("abstract space is too large")]
    TooLarge,
    #[error("expected {expected} values, got {given}")]
    Arity { expected: usize, given: usize },
}

/// Quantization data for one variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dim {
    pub var: VarId,
    pub name: String,
    pub kind: VarKind,
    pub lo: Rational,
    pub hi: Rational,
    pub levels: u64,
    /// Cell width; zero for identity-quantized variables.
    pub delta: Rational,
}

impl Dim {
    fn new(var: VarId, plant: &Dtlhs, given: Option<u64>) -> Result<Dim, QuantizeError> {
        let v = plant.var(var);
        let (levels, delta) = if v.kind == VarKind::Real {
            let n = given.ok_or_else(|| QuantizeError::MissingLevels { name: v.name.clone() })?;
            if n == 0 {
                return Err(QuantizeError::ZeroLevels { name: v.name.clone() });
            }
            (n, (&v.hi - &v.lo) / rational::int(n as i64))
        } else {
            let lo = v.lo.ceil();
            let hi = v.hi.floor();
            let count = (hi - &lo).to_integer().to_u64().ok_or(QuantizeError::TooLarge)? + 1;
            if let Some(n) = given {
                if n != count {
                    return Err(QuantizeError::DiscreteLevels {
                        name: v.name.clone(),
                        expected: count,
                        given: n,
                    });
                }
            }
            (count, Rational::zero())
        };
        Ok(Dim {
            var,
            name: v.name.clone(),
            kind: v.kind,
            lo: if v.kind == VarKind::Real { v.lo.clone() } else { v.lo.ceil() },
            hi: if v.kind == VarKind::Real { v.hi.clone() } else { v.hi.floor() },
            levels,
            delta,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.kind != VarKind::Real
    }

    /// `γ(v) = min(n − 1, ⌊(v − α)/Δ⌋)`.
    pub fn code(&self, value: &Rational) -> Result<u64, QuantizeError> {
        if *value < self.lo || *value > self.hi {
            return Err(QuantizeError::OutOfRegion {
                name: self.name.clone(),
                value: rational::format(value),
                lo: rational::format(&self.lo),
                hi: rational::format(&self.hi),
            });
        }
        if self.is_identity() {
            return Ok(rational::floor_to_i64(&(value - &self.lo)) as u64);
        }
        let z = rational::floor_to_i64(&((value - &self.lo) / &self.delta)) as u64;
        Ok(z.min(self.levels - 1))
    }

    /// Floating-point version of [`Dim::code`]; the same formula the generated
    /// controllers use.
    pub fn code_f64(&self, value: f64) -> Result<u64, QuantizeError> {
        let lo = rational::to_f64(&self.lo);
        let hi = rational::to_f64(&self.hi);
        if !(value >= lo && value <= hi) {
            return Err(QuantizeError::OutOfRegion {
                name: self.name.clone(),
                value: value.to_string(),
                lo: rational::format(&self.lo),
                hi: rational::format(&self.hi),
            });
        }
        if self.is_identity() {
            return Ok((value - lo).round() as u64);
        }
        let z = ((value - lo) / rational::to_f64(&self.delta)).floor();
        Ok((z.max(0.0) as u64).min(self.levels - 1))
    }

    /// Closed cell `[α + zΔ, α + (z+1)Δ]`, or the point `{α + z}` for identity dims.
    pub fn cell(&self, code: u64) -> Result<(Rational, Rational), QuantizeError> {
        if code >= self.levels {
            return Err(QuantizeError::CodeOutOfRange {
                name: self.name.clone(),
                code,
                levels: self.levels,
            });
        }
        let z = rational::int(code as i64);
        if self.is_identity() {
            let p = &self.lo + z;
            return Ok((p.clone(), p));
        }
        let lo = &self.lo + &z * &self.delta;
        let hi = if code + 1 == self.levels {
            self.hi.clone()
        } else {
            &self.lo + (z + rational::int(1)) * &self.delta
        };
        Ok((lo, hi))
    }

    pub fn cell_f64(&self, code: u64) -> Result<(f64, f64), QuantizeError> {
        let (lo, hi) = self.cell(code)?;
        Ok((rational::to_f64(&lo), rational::to_f64(&hi)))
    }
}

/// An ordered list of quantized variables forming one abstract space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Space {
    pub dims: Vec<Dim>,
    count: u64,
}

impl Space {
    fn new(dims: Vec<Dim>) -> Result<Space, QuantizeError> {
        let mut count: u64 = 1;
        for d in &dims {
            count = count.checked_mul(d.levels).ok_or(QuantizeError::TooLarge)?;
        }
        Ok(Space { dims, count })
    }

    /// Number of abstract points `Π n_w`.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn radices(&self) -> Vec<u64> {
        self.dims.iter().map(|d| d.levels).collect()
    }

    /// Mixed-radix flat index of a code tuple, starting at 1.
    pub fn encode(&self, codes: &[u64]) -> Result<u64, QuantizeError> {
        if codes.len() != self.dims.len() {
            return Err(QuantizeError::Arity {
                expected: self.dims.len(),
                given: codes.len(),
            });
        }
        let mut idx = 0u64;
        for (d, &c) in self.dims.iter().zip(codes) {
            if c >= d.levels {
                return Err(QuantizeError::CodeOutOfRange {
                    name: d.name.clone(),
                    code: c,
                    levels: d.levels,
                });
            }
            idx = idx * d.levels + c;
        }
        Ok(idx + 1)
    }

    pub fn decode(&self, index: u64) -> Result<Vec<u64>, QuantizeError> {
        if index == 0 || index > self.count {
            return Err(QuantizeError::IndexOutOfRange {
                index,
                count: self.count,
            });
        }
        let mut rest = index - 1;
        let mut codes = vec![0; self.dims.len()];
        for (k, d) in self.dims.iter().enumerate().rev() {
            codes[k] = rest % d.levels;
            rest /= d.levels;
        }
        Ok(codes)
    }

    /// Flat indices `1..=count` in ascending order.
    pub fn indices(&self) -> impl Iterator<Item = u64> {
        1..=self.count
    }

    pub fn quantize(&self, values: &[Rational]) -> Result<u64, QuantizeError> {
        self.check_arity(values.len())?;
        let codes = self
            .dims
            .iter()
            .zip(values)
            .map(|(d, v)| d.code(v))
            .collect::<Result<Vec<_>, _>>()?;
        self.encode(&codes)
    }

    pub fn quantize_f64(&self, values: &[f64]) -> Result<u64, QuantizeError> {
        self.check_arity(values.len())?;
        let codes = self
            .dims
            .iter()
            .zip(values)
            .map(|(d, v)| d.code_f64(*v))
            .collect::<Result<Vec<_>, _>>()?;
        self.encode(&codes)
    }

    fn check_arity(&self, n: usize) -> Result<(), QuantizeError> {
        if n != self.dims.len() {
            return Err(QuantizeError::Arity {
                expected: self.dims.len(),
                given: n,
            });
        }
        Ok(())
    }

    /// Per-variable closed intervals of the cell with the given flat index.
    pub fn cell(&self, index: u64) -> Result<Vec<(Rational, Rational)>, QuantizeError> {
        let codes = self.decode(index)?;
        self.dims.iter().zip(codes).map(|(d, c)| d.cell(c)).collect()
    }

    pub fn cell_f64(&self, index: u64) -> Result<Vec<(f64, f64)>, QuantizeError> {
        let codes = self.decode(index)?;
        self.dims.iter().zip(codes).map(|(d, c)| d.cell_f64(c)).collect()
    }

    /// A representative concrete point (the cell centre) of a flat index.
    pub fn representative(&self, index: u64) -> Result<Vec<Rational>, QuantizeError> {
        Ok(self
            .cell(index)?
            .into_iter()
            .map(|(lo, hi)| (lo + hi) / rational::int(2))
            .collect())
    }
}

/// Quantization of the state variables `X` and input variables `U` of a plant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantization {
    states: Space,
    inputs: Space,
}

impl Quantization {
    /// Builds the quantization from level counts keyed by variable name.
    /// Real state and input variables need an entry; discrete ones may omit it.
    pub fn new(plant: &Dtlhs, levels: &BTreeMap<String, u64>) -> Result<Quantization, QuantizeError> {
        let dims_for = |ids: Vec<VarId>| -> Result<Vec<Dim>, QuantizeError> {
            ids.into_iter()
                .map(|v| Dim::new(v, plant, levels.get(&plant.var(v).name).copied()))
                .collect()
        };
        Ok(Quantization {
            states: Space::new(dims_for(plant.states())?)?,
            inputs: Space::new(dims_for(plant.inputs())?)?,
        })
    }

    pub fn states(&self) -> &Space {
        &self.states
    }

    pub fn inputs(&self) -> &Space {
        &self.inputs
    }

    pub fn state_count(&self) -> u64 {
        self.states.count()
    }

    pub fn action_count(&self) -> u64 {
        self.inputs.count()
    }

    /// `∥Γ∥`: the largest cell width over real quantized variables.
    pub fn step(&self) -> Rational {
        self.states
            .dims
            .iter()
            .chain(&self.inputs.dims)
            .filter(|d| !d.is_identity())
            .map(|d| d.delta.clone())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Level counts of real quantized variables keyed by name.
    pub fn levels_by_name(&self, _plant: &Dtlhs) -> BTreeMap<String, u64> {
        self.states
            .dims
            .iter()
            .chain(&self.inputs.dims)
            .filter(|d| !d.is_identity())
            .map(|d| (d.name.clone(), d.levels))
            .collect()
    }
}

/// Splits a bit budget over the real state variables: each gets `2^⌊b/k⌋`
/// levels, with the remaining bits going to the first declared variables.
pub fn levels_from_bits(plant: &Dtlhs, bits: u32) -> BTreeMap<String, u64> {
    let reals: Vec<_> = plant
        .vars()
        .iter()
        .filter(|v| v.role == VarRole::State && v.kind == VarKind::Real)
        .collect();
    let mut out = BTreeMap::new();
    if reals.is_empty() {
        return out;
    }
    let k = reals.len() as u32;
    for (i, v) in reals.iter().enumerate() {
        let b = bits / k + u32::from((i as u32) < bits % k);
        out.insert(v.name.clone(), 1u64 << b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GuardedConstraint, GuardedPredicate, LinearExpr, Symbol, Variable};
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn plant() -> Dtlhs {
        let vars = vec![
            Variable::new("x", VarKind::Real, VarRole::State, int(-1), ratio(5, 2)),
            Variable::new("u", VarKind::Integer, VarRole::Input, int(-1), int(1)),
        ];
        let n = GuardedPredicate::new(vec![GuardedConstraint::plain(crate::model::Constraint::eq(
            LinearExpr::symbol(Symbol::Next(VarId(0))),
            int(0),
        ))]);
        Dtlhs::new(vars, n).unwrap()
    }

    fn seven() -> Quantization {
        Quantization::new(&plant(), &BTreeMap::from([("x".to_string(), 7)])).unwrap()
    }

    #[test]
    fn codes_follow_the_floor_rule() {
        let q = seven();
        let d = &q.states().dims[0];
        assert_eq!(d.code(&int(-1)).unwrap(), 0);
        assert_eq!(d.code(&ratio(3, 4)).unwrap(), 3);
        assert_eq!(d.code(&ratio(5, 2)).unwrap(), 6);
        assert!(matches!(d.code(&int(3)), Err(QuantizeError::OutOfRegion { .. })));
        assert_eq!(d.code_f64(0.75).unwrap(), 3);
        assert_eq!(d.code_f64(2.5).unwrap(), 6);
    }

    #[test]
    fn cells_are_closed_and_tile_the_region() {
        let q = seven();
        let d = &q.states().dims[0];
        assert_eq!(d.cell(0).unwrap(), (int(-1), ratio(-1, 2)));
        assert_eq!(d.cell(6).unwrap(), (int(2), ratio(5, 2)));
        assert!(d.cell(7).is_err());
        let u = &q.inputs().dims[0];
        assert_eq!(u.levels, 3);
        assert_eq!(u.cell(0).unwrap(), (int(-1), int(-1)));
        assert_eq!(u.cell(2).unwrap(), (int(1), int(1)));
    }

    #[test]
    fn step_is_the_largest_real_width() {
        assert_eq!(seven().step(), ratio(1, 2));
        let vars = vec![
            Variable::new("a", VarKind::Real, VarRole::State, int(0), int(1)),
            Variable::new("b", VarKind::Real, VarRole::State, int(0), int(1)),
        ];
        let n = GuardedPredicate::new(vec![GuardedConstraint::plain(crate::model::Constraint::eq(
            LinearExpr::symbol(Symbol::Next(VarId(0))),
            int(0),
        ))]);
        let p = Dtlhs::new(vars, n).unwrap();
        let q = Quantization::new(&p, &BTreeMap::from([("a".into(), 2), ("b".into(), 4)])).unwrap();
        assert_eq!(q.step(), ratio(1, 2));
        let q = Quantization::new(&p, &BTreeMap::from([("a".into(), 1), ("b".into(), 4)])).unwrap();
        assert_eq!(q.step(), int(1));
    }

    #[test]
    fn mixed_radix_flat_index() {
        let dims = |n| Dim {
            var: VarId(0),
            name: "v".into(),
            kind: VarKind::Real,
            lo: int(0),
            hi: int(1),
            levels: n,
            delta: ratio(1, n as i64),
        };
        let s = Space::new(vec![dims(4), dims(4)]).unwrap();
        assert_eq!(s.count(), 16);
        assert_eq!(s.encode(&[0, 0]).unwrap(), 1);
        assert_eq!(s.encode(&[3, 3]).unwrap(), 16);
        assert_eq!(s.encode(&[1, 2]).unwrap(), 7);
        for i in s.indices() {
            assert_eq!(s.encode(&s.decode(i).unwrap()).unwrap(), i);
        }
        assert!(s.decode(0).is_err());
        assert!(s.decode(17).is_err());
    }

    #[test]
    fn bits_split_over_real_states() {
        let vars = vec![
            Variable::new("a", VarKind::Real, VarRole::State, int(0), int(1)),
            Variable::new("b", VarKind::Real, VarRole::State, int(0), int(1)),
            Variable::boolean("u", VarRole::Input),
        ];
        let n = GuardedPredicate::new(vec![GuardedConstraint::plain(crate::model::Constraint::eq(
            LinearExpr::symbol(Symbol::Next(VarId(0))),
            int(0),
        ))]);
        let p = Dtlhs::new(vars, n).unwrap();
        let l = levels_from_bits(&p, 8);
        assert_eq!(l["a"], 16);
        assert_eq!(l["b"], 16);
        let l = levels_from_bits(&p, 9);
        assert_eq!(l["a"], 32);
        assert_eq!(l["b"], 16);
    }

    proptest! {
        #[test]
        fn value_lies_in_its_cell(num in -1000i64..=2500, levels in 1u64..40) {
            let q = Quantization::new(&plant(), &BTreeMap::from([("x".to_string(), levels)])).unwrap();
            let d = &q.states().dims[0];
            let v = ratio(num, 1000);
            let c = d.code(&v).unwrap();
            let (lo, hi) = d.cell(c).unwrap();
            prop_assert!(lo <= v && v <= hi);
            let f = d.code_f64(rational::to_f64(&v)).unwrap();
            prop_assert!(f.abs_diff(c) <= 1);
        }

        #[test]
        fn quantization_is_monotone(a in -1000i64..=2500, b in -1000i64..=2500, levels in 1u64..40) {
            let q = Quantization::new(&plant(), &BTreeMap::from([("x".to_string(), levels)])).unwrap();
            let d = &q.states().dims[0];
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(d.code(&ratio(lo, 1000)).unwrap() <= d.code(&ratio(hi, 1000)).unwrap());
        }

        #[test]
        fn halving_levels_doubles_step(levels in 1u64..64) {
            let fine = Quantization::new(&plant(), &BTreeMap::from([("x".to_string(), 2 * levels)])).unwrap();
            let coarse = Quantization::new(&plant(), &BTreeMap::from([("x".to_string(), levels)])).unwrap();
            prop_assert_eq!(coarse.step(), fine.step() * int(2));
        }
    }

    #[test]
    fn quantization_is_onto() {
        let q = seven();
        let d = &q.states().dims[0];
        let mut seen = std::collections::BTreeSet::new();
        for k in 0..=3500 {
            seen.insert(d.code(&(int(-1) + ratio(k, 1000))).unwrap());
        }
        assert_eq!(seen.len(), 7);
    }
}
