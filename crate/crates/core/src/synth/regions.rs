//! Abstract goal and initial regions.
//!
//! The goal is under-approximated: a cell belongs to it when the whole cell
//! lies in the ε-ball of the goal predicate, inflated in the real state
//! coordinates only. The initial region is over-approximated: a cell belongs
//! to it when it meets the initial predicate. Box-shaped predicates are
//! decided exactly on rationals; other predicates by LP feasibility, using
//! the fact that a convex set contains a box iff it contains its vertices.

use std::collections::BTreeSet;

use num::{Signed, Zero};

use super::SynthError;
use crate::milp::{translate, CompiledMilp, MilpVar, Query, SolveOptions, VariableSet};
use crate::model::{GuardedPredicate, Model, Symbol, VarKind};
use crate::rational::{self, Rational};

/// Tolerance for point membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A predicate over the state variables prepared for membership queries.
#[derive(Clone, Debug)]
pub struct StateRegion {
    real: Vec<bool>,
    boxed: Option<Vec<(Rational, Rational)>>,
    compiled: CompiledMilp,
}

impl StateRegion {
    pub fn new(model: &Model, pred: &GuardedPredicate) -> Result<StateRegion, SynthError> {
        let plant = &model.plant;
        let mut vars = VariableSet::new();
        let mut real = Vec::new();
        for v in plant.states() {
            let x = plant.var(v);
            real.push(x.kind == VarKind::Real);
            vars.insert(
                Symbol::Current(v),
                MilpVar {
                    name: x.name.clone(),
                    lo: x.lo.clone(),
                    hi: x.hi.clone(),
                    integer: x.kind != VarKind::Real,
                },
            );
        }
        let compiled = CompiledMilp::compile(&translate(pred, &vars)?);
        Ok(StateRegion {
            real,
            boxed: box_form(model, pred),
            compiled,
        })
    }

    /// Per-variable bounds when the predicate is a conjunction of bounds.
    /// An empty interval marks an unsatisfiable predicate.
    pub fn box_form(&self) -> Option<&[(Rational, Rational)]> {
        self.boxed.as_deref()
    }

    fn feasible(&self, bounds: &[(f64, f64)]) -> Result<bool, SynthError> {
        let mut q = Query::new();
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            q = q.bound(k, lo, hi);
        }
        Ok(self.compiled.solve(&q, &SolveOptions::default())?.is_feasible())
    }

    /// Whether `point` lies in the ε-ball of the region.
    pub fn ball_contains_point(&self, point: &[f64], eps: f64) -> Result<bool, SynthError> {
        let r = |k: usize| if self.real[k] { eps } else { 0.0 };
        if let Some(b) = &self.boxed {
            return Ok(b.iter().enumerate().all(|(k, (lo, hi))| {
                lo <= hi
                    && point[k] >= rational::to_f64(lo) - r(k) - MEMBERSHIP_TOL
                    && point[k] <= rational::to_f64(hi) + r(k) + MEMBERSHIP_TOL
            }));
        }
        let bounds: Vec<(f64, f64)> = point
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - r(k) - MEMBERSHIP_TOL, v + r(k) + MEMBERSHIP_TOL))
            .collect();
        self.feasible(&bounds)
    }

    /// Whether the closed box `cell` lies in the ε-ball of the region.
    pub fn ball_contains_cell(&self, cell: &[(Rational, Rational)], eps: &Rational) -> Result<bool, SynthError> {
        if let Some(b) = &self.boxed {
            return Ok(b.iter().zip(cell).enumerate().all(|(k, ((glo, ghi), (clo, chi)))| {
                let r = if self.real[k] { eps.clone() } else { Rational::zero() };
                glo <= ghi && *clo >= glo - &r && *chi <= ghi + &r
            }));
        }
        let eps = rational::to_f64(eps);
        let reals: Vec<usize> = (0..cell.len()).filter(|&k| self.real[k] && cell[k].0 != cell[k].1).collect();
        for mask in 0u64..(1u64 << reals.len()) {
            let mut vertex: Vec<f64> = cell.iter().map(|(lo, _)| rational::to_f64(lo)).collect();
            for (bit, &k) in reals.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    vertex[k] = rational::to_f64(&cell[k].1);
                }
            }
            if !self.ball_contains_point(&vertex, eps)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Whether the closed box `cell` meets the region.
    pub fn meets_cell(&self, cell: &[(Rational, Rational)]) -> Result<bool, SynthError> {
        if let Some(b) = &self.boxed {
            return Ok(b
                .iter()
                .zip(cell)
                .all(|((glo, ghi), (clo, chi))| glo <= ghi && clo <= ghi && glo <= chi));
        }
        let bounds: Vec<(f64, f64)> = cell
            .iter()
            .map(|(lo, hi)| (rational::to_f64(lo), rational::to_f64(hi)))
            .collect();
        self.feasible(&bounds)
    }
}

fn box_form(model: &Model, pred: &GuardedPredicate) -> Option<Vec<(Rational, Rational)>> {
    let plant = &model.plant;
    let states = plant.states();
    let mut b: Vec<(Rational, Rational)> = states
        .iter()
        .map(|&v| (plant.var(v).lo.clone(), plant.var(v).hi.clone()))
        .collect();
    for c in &pred.canonicalize().conjuncts {
        if c.guard.is_some() {
            return None;
        }
        let terms = c.body.lhs.terms();
        match terms {
            [] => {
                if c.body.rhs.is_negative() {
                    for d in &mut b {
                        *d = (rational::int(1), rational::int(0));
                    }
                }
            }
            [(Symbol::Current(v), k)] => {
                let pos = states.iter().position(|s| s == v)?;
                let limit = &c.body.rhs / k;
                let d = &mut b[pos];
                if k.is_positive() {
                    if limit < d.1 {
                        d.1 = limit;
                    }
                } else if limit > d.0 {
                    d.0 = limit;
                }
            }
            _ => return None,
        }
    }
    // Discrete coordinates only take integer values.
    for (d, v) in b.iter_mut().zip(&states) {
        if plant.var(*v).kind != VarKind::Real {
            *d = (d.0.ceil(), d.1.floor());
        }
    }
    Some(b)
}

/// Abstract states whose cell lies in the `epsilon`-ball of the goal.
pub fn abstract_goal(model: &Model, epsilon: &Rational) -> Result<BTreeSet<u64>, SynthError> {
    let region = StateRegion::new(model, &model.goal)?;
    let space = model.quantization.states();
    let mut out = BTreeSet::new();
    for s in space.indices() {
        if region.ball_contains_cell(&space.cell(s)?, epsilon)? {
            out.insert(s);
        }
    }
    if out.is_empty() {
        return Err(SynthError::EmptyGoal);
    }
    Ok(out)
}

/// Abstract states whose cell meets the initial predicate; all states when
/// the model has none.
pub fn abstract_init(model: &Model) -> Result<BTreeSet<u64>, SynthError> {
    let space = model.quantization.states();
    let Some(init) = &model.init else {
        return Ok(space.indices().collect());
    };
    let region = StateRegion::new(model, init)?;
    let mut out = BTreeSet::new();
    for s in space.indices() {
        if region.meets_cell(&space.cell(s)?)? {
            out.insert(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::rational::ratio;

    const EX33: &str = "\
state x real [-1, 5/2] levels 7;
input u bool;
trans {
  !u -> x' = x + (5/4 - x)/10;
  u -> x' = x + (x - 7/4)/10;
}
goal { x = 0; }
";

    fn plane(goal: &str, init: &str) -> Model {
        parse_model(&format!(
            "state a real [0, 4] levels 4;\nstate b real [0, 4] levels 4;\ninput u bool;\n\
             trans {{ a' = a; b' = b; }}\ngoal {{ {goal} }}\n{init}"
        ))
        .unwrap()
    }

    #[test]
    fn point_goal_keeps_the_two_adjacent_cells() {
        let m = parse_model(EX33).unwrap();
        // cells of width 1/2 from -1: codes 1 and 2 are [-1/2, 0] and [0, 1/2]
        let g = abstract_goal(&m, &ratio(1, 2)).unwrap();
        assert_eq!(g, BTreeSet::from([2, 3]));
    }

    #[test]
    fn tiny_epsilon_empties_the_goal() {
        let m = parse_model(EX33).unwrap();
        assert!(matches!(abstract_goal(&m, &ratio(1, 4)), Err(SynthError::EmptyGoal)));
    }

    #[test]
    fn missing_init_means_every_state() {
        let m = parse_model(EX33).unwrap();
        assert_eq!(abstract_init(&m).unwrap().len(), 7);
    }

    #[test]
    fn init_cells_meet_the_predicate() {
        let m = plane("a <= 1; b <= 1;", "init { a >= 3; b <= 1/2; }");
        // a codes 2,3 (cells [2,3], [3,4]), b code 0
        let i = abstract_init(&m).unwrap();
        assert_eq!(i, BTreeSet::from([9, 13]));
    }

    #[test]
    fn box_and_vertex_methods_agree_on_boxes() {
        let m = plane("1 <= a; a <= 2; b <= 1;", "");
        let boxed = StateRegion::new(&m, &m.goal).unwrap();
        let mut general = boxed.clone();
        general.boxed = None;
        let space = m.quantization.states();
        for eps in [ratio(0, 1), ratio(1, 2), ratio(1, 1)] {
            for s in space.indices() {
                let cell = space.cell(s).unwrap();
                assert_eq!(
                    boxed.ball_contains_cell(&cell, &eps).unwrap(),
                    general.ball_contains_cell(&cell, &eps).unwrap(),
                    "cell {s} eps {eps}"
                );
                assert_eq!(boxed.meets_cell(&cell).unwrap(), general.meets_cell(&cell).unwrap());
            }
        }
    }

    #[test]
    fn slanted_goal_uses_vertices() {
        let m = plane("a + b <= 1;", "");
        let r = StateRegion::new(&m, &m.goal).unwrap();
        assert!(r.box_form().is_none());
        let g = abstract_goal(&m, &ratio(1, 1)).unwrap();
        // B_1 of {a + b <= 1} is {a + b <= 3}: only cell [0,1]x[0,1] fits,
        // plus [1,2]x[0,1] and [0,1]x[1,2] whose far vertex has a + b = 3.
        assert_eq!(g, BTreeSet::from([1, 2, 5]));
        assert!(r.ball_contains_point(&[1.5, 1.5], 1.0).unwrap());
        assert!(!r.ball_contains_point(&[2.0, 1.6], 1.0).unwrap());
    }

    #[test]
    fn ball_membership_of_points() {
        let m = parse_model(EX33).unwrap();
        let r = StateRegion::new(&m, &m.goal).unwrap();
        assert!(r.ball_contains_point(&[0.5], 0.5).unwrap());
        assert!(r.ball_contains_point(&[-0.5], 0.5).unwrap());
        assert!(!r.ball_contains_point(&[0.51], 0.5).unwrap());
    }
}
