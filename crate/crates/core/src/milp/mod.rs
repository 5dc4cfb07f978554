//! Mixed integer linear programs: big-M translation of guarded predicates and
//! an LP-based branch-and-bound solver.
//!
//! A [`MilpProblem`] is exact (rational). Solving converts it once into a
//! [`CompiledMilp`] in floating point; queries against a compiled problem may
//! tighten variable bounds, add rows and pick an objective without touching
//! the shared part, so one compiled problem serves many queries.

mod branch;
mod simplex;

use std::collections::BTreeMap;
use std::fmt::Write;

use num::{Signed, Zero};
use thiserror::Error;

use crate::model::{Dtlhs, GuardedPredicate, Relation, Symbol, VarId, VarKind};
use crate::rational::{self, Rational};

pub use branch::SolveOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("no bounds known for `{0}`")]
    UnboundedVariable(String),
    #[error("numerical instability: {0}")]
    NumericalInstability(String),
    #[error("branch and bound exceeded the node limit of {limit}")]
    NodeLimit { limit: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MilpVar {
    pub name: String,
    pub lo: Rational,
    pub hi: Rational,
    pub integer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowRelation {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MilpRow {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: RowRelation,
    pub rhs: Rational,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Objective {
    pub coeffs: Vec<(usize, Rational)>,
    pub sense: Sense,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MilpProblem {
    pub vars: Vec<MilpVar>,
    pub rows: Vec<MilpRow>,
    pub objective: Option<Objective>,
}

/// Result of a solve. For pure feasibility problems `value` is zero.
#[derive(Clone, Debug, PartialEq)]
pub enum MilpOutcome {
    Infeasible,
    Optimal { value: f64, witness: Vec<f64> },
}

impl MilpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, MilpOutcome::Optimal { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MilpOutcome::Optimal { value, .. } => Some(*value),
            MilpOutcome::Infeasible => None,
        }
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            MilpOutcome::Optimal { witness, .. } => Some(witness),
            MilpOutcome::Infeasible => None,
        }
    }
}

impl MilpProblem {
    pub fn add_var(&mut self, name: impl Into<String>, lo: Rational, hi: Rational, integer: bool) -> usize {
        self.vars.push(MilpVar {
            name: name.into(),
            lo,
            hi,
            integer,
        });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, Rational)>, relation: RowRelation, rhs: Rational) {
        self.rows.push(MilpRow { coeffs, relation, rhs });
    }

    /// The same problem with every integrality requirement dropped.
    pub fn relaxation(&self) -> MilpProblem {
        let mut p = self.clone();
        for v in &mut p.vars {
            v.integer = false;
        }
        p
    }

    /// Deterministic LP-format text, one row per line.
    pub fn lp_format(&self) -> String {
        let name = |j: usize| self.vars[j].name.clone();
        let lin = |coeffs: &[(usize, Rational)]| {
            if coeffs.is_empty() {
                return "0".to_string();
            }
            coeffs
                .iter()
                .map(|(j, k)| format!("{} {}", rational::format(k), name(*j)))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let mut out = String::new();
        match &self.objective {
            None => out.push_str("feasibility;\n"),
            Some(o) => {
                let sense = if o.sense == Sense::Min { "min" } else { "max" };
                let _ = writeln!(out, "{sense}: {};", lin(&o.coeffs));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            let rel = if r.relation == RowRelation::Le { "<=" } else { "=" };
            let _ = writeln!(out, "r{i}: {} {rel} {};", lin(&r.coeffs), rational::format(&r.rhs));
        }
        for v in &self.vars {
            let _ = writeln!(
                out,
                "bound: {} <= {} <= {};",
                rational::format(&v.lo),
                v.name,
                rational::format(&v.hi)
            );
        }
        let ints: Vec<_> = self.vars.iter().filter(|v| v.integer).map(|v| v.name.clone()).collect();
        if !ints.is_empty() {
            let _ = writeln!(out, "int {};", ints.join(", "));
        }
        out
    }
}

/// The bounded MILP variables a predicate may be translated over, keyed by
/// symbol. Index order is insertion order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct VariableSet {
    vars: Vec<MilpVar>,
    symbols: Vec<Symbol>,
    index: BTreeMap<Symbol, usize>,
}

impl VariableSet {
    pub fn new() -> Self {
        VariableSet::default()
    }

    pub fn insert(&mut self, sym: Symbol, var: MilpVar) -> usize {
        if let Some(&i) = self.index.get(&sym) {
            self.vars[i] = var;
            return i;
        }
        self.vars.push(var);
        self.symbols.push(sym);
        self.index.insert(sym, self.vars.len() - 1);
        self.vars.len() - 1
    }

    /// Every plant variable with its admissible bounds, followed by the
    /// next-state copies with the given bounds.
    pub fn for_plant(plant: &Dtlhs, next_bounds: &BTreeMap<VarId, (Rational, Rational)>) -> VariableSet {
        let mut set = VariableSet::new();
        for (i, v) in plant.vars().iter().enumerate() {
            set.insert(
                Symbol::Current(VarId(i)),
                MilpVar {
                    name: v.name.clone(),
                    lo: v.lo.clone(),
                    hi: v.hi.clone(),
                    integer: v.kind != VarKind::Real,
                },
            );
        }
        for (v, (lo, hi)) in next_bounds {
            let x = plant.var(*v);
            set.insert(
                Symbol::Next(*v),
                MilpVar {
                    name: format!("{}'", x.name),
                    lo: lo.clone(),
                    hi: hi.clone(),
                    integer: x.kind != VarKind::Real,
                },
            );
        }
        set
    }

    pub fn index(&self, sym: Symbol) -> Option<usize> {
        self.index.get(&sym).copied()
    }

    pub fn symbol(&self, i: usize) -> Symbol {
        self.symbols[i]
    }

    pub fn vars(&self) -> &[MilpVar] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

fn sym_label(sym: Symbol) -> String {
    match sym {
        Symbol::Current(v) => format!("#{}", v.0),
        Symbol::Next(v) => format!("#{}'", v.0),
    }
}

/// Big-M translation of a guarded predicate.
///
/// A guarded row `y -> L <= b` becomes `L + M·y <= b + M`, and `!y -> L <= b`
/// becomes `L - M·y <= b`, where `M = max(L) - b` over the variable bounds,
/// clamped at zero. Unguarded `<=` rows pass through; unguarded `=` rows are
/// kept as equality rows.
pub fn translate(pred: &GuardedPredicate, vars: &VariableSet) -> Result<MilpProblem, MilpError> {
    let mut problem = MilpProblem {
        vars: vars.vars().to_vec(),
        rows: Vec::new(),
        objective: None,
    };
    let idx = |s: Symbol| vars.index(s).ok_or_else(|| MilpError::UnboundedVariable(sym_label(s)));
    for c in &pred.conjuncts {
        let bodies = if c.guard.is_none() && c.body.relation == Relation::Eq {
            vec![(c.body.clone(), RowRelation::Eq)]
        } else {
            c.body.canonical().into_iter().map(|b| (b, RowRelation::Le)).collect()
        };
        for (body, relation) in bodies {
            let mut coeffs = Vec::with_capacity(body.lhs.terms().len() + 1);
            let mut max = Rational::zero();
            for (s, k) in body.lhs.terms() {
                let j = idx(*s)?;
                let v = &vars.vars()[j];
                max += if k.is_positive() { k * &v.hi } else { k * &v.lo };
                coeffs.push((j, k.clone()));
            }
            let mut rhs = body.rhs.clone();
            if let Some(g) = c.guard {
                let gj = idx(Symbol::Current(g.var))?;
                let m = (&max - &rhs).max(Rational::zero());
                if !m.is_zero() {
                    if g.positive {
                        coeffs.push((gj, m.clone()));
                        rhs += m;
                    } else {
                        coeffs.push((gj, -m));
                    }
                }
            }
            problem.rows.push(MilpRow { coeffs, relation, rhs });
        }
    }
    Ok(problem)
}

/// Floating-point form of a problem ready for repeated queries.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledMilp {
    lo: Vec<f64>,
    hi: Vec<f64>,
    integer: Vec<bool>,
    rows: Vec<simplex::Row>,
    empty: bool,
}

/// Extra data for one solve against a [`CompiledMilp`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Query {
    /// `(variable, lo, hi)`; intersected with the compiled bounds.
    pub bounds: Vec<(usize, f64, f64)>,
    /// Additional `Σ a_j x_j <= rhs` rows.
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
    pub objective: Option<(Vec<(usize, f64)>, Sense)>,
}

impl Query {
    pub fn new() -> Self {
        Query::default()
    }

    pub fn bound(mut self, var: usize, lo: f64, hi: f64) -> Self {
        self.bounds.push((var, lo, hi));
        self
    }

    pub fn row(mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        self.rows.push((coeffs, rhs));
        self
    }

    pub fn minimize(mut self, coeffs: Vec<(usize, f64)>) -> Self {
        self.objective = Some((coeffs, Sense::Min));
        self
    }

    pub fn maximize(mut self, coeffs: Vec<(usize, f64)>) -> Self {
        self.objective = Some((coeffs, Sense::Max));
        self
    }
}

fn scaled_row(coeffs: &[(usize, f64)], eq: bool, rhs: f64) -> Option<simplex::Row> {
    let scale = coeffs.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    Some(simplex::Row {
        coeffs: coeffs.iter().filter(|(_, a)| *a != 0.0).map(|(j, a)| (*j, a / scale)).collect(),
        eq,
        rhs: rhs / scale,
    })
}

impl CompiledMilp {
    /// Converts to floating point. Rows over a single variable are folded
    /// into its bounds exactly; the remaining rows are scaled so their largest
    /// coefficient has magnitude one.
    pub fn compile(problem: &MilpProblem) -> CompiledMilp {
        let mut lo: Vec<Rational> = problem.vars.iter().map(|v| v.lo.clone()).collect();
        let mut hi: Vec<Rational> = problem.vars.iter().map(|v| v.hi.clone()).collect();
        let mut rows = Vec::new();
        let mut empty = false;
        for r in &problem.rows {
            let mut merged: BTreeMap<usize, Rational> = BTreeMap::new();
            for (j, k) in &r.coeffs {
                *merged.entry(*j).or_insert_with(Rational::zero) += k;
            }
            merged.retain(|_, k| !k.is_zero());
            match merged.len() {
                0 => {
                    let ok = match r.relation {
                        RowRelation::Le => !r.rhs.is_negative(),
                        RowRelation::Eq => r.rhs.is_zero(),
                    };
                    empty |= !ok;
                }
                1 => {
                    let (j, k) = merged.into_iter().next().expect("one entry");
                    let b = &r.rhs / &k;
                    let (upper, lower) = match r.relation {
                        RowRelation::Eq => (true, true),
                        RowRelation::Le => (k.is_positive(), k.is_negative()),
                    };
                    if upper && b < hi[j] {
                        hi[j] = b.clone();
                    }
                    if lower && b > lo[j] {
                        lo[j] = b;
                    }
                }
                _ => {
                    let coeffs: Vec<(usize, f64)> = merged.iter().map(|(j, k)| (*j, rational::to_f64(k))).collect();
                    if let Some(row) = scaled_row(&coeffs, r.relation == RowRelation::Eq, rational::to_f64(&r.rhs)) {
                        rows.push(row);
                    }
                }
            }
        }
        let integer: Vec<bool> = problem.vars.iter().map(|v| v.integer).collect();
        for j in 0..lo.len() {
            if integer[j] {
                lo[j] = lo[j].ceil();
                hi[j] = hi[j].floor();
            }
            empty |= lo[j] > hi[j];
        }
        CompiledMilp {
            lo: lo.iter().map(rational::to_f64).collect(),
            hi: hi.iter().map(rational::to_f64).collect(),
            integer,
            rows,
            empty,
        }
    }

    pub fn var_count(&self) -> usize {
        self.lo.len()
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    pub fn solve(&self, query: &Query, opts: &SolveOptions) -> Result<MilpOutcome, MilpError> {
        self.solve_with(query, opts, false)
    }

    /// Solves ignoring integrality.
    pub fn solve_relaxation(&self, query: &Query) -> Result<MilpOutcome, MilpError> {
        self.solve_with(query, &SolveOptions::default(), true)
    }

    fn solve_with(&self, query: &Query, opts: &SolveOptions, relaxed: bool) -> Result<MilpOutcome, MilpError> {
        if self.empty {
            return Ok(MilpOutcome::Infeasible);
        }
        let n = self.lo.len();
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for &(j, l, h) in &query.bounds {
            if j >= n {
                return Err(MilpError::Invalid(format!("query bound on variable {j} of {n}")));
            }
            lo[j] = lo[j].max(l);
            hi[j] = hi[j].min(h);
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(MilpOutcome::Infeasible);
        }
        let mut rows = self.rows.clone();
        for (coeffs, rhs) in &query.rows {
            if coeffs.iter().any(|(j, _)| *j >= n) {
                return Err(MilpError::Invalid("query row refers to an unknown variable".into()));
            }
            match scaled_row(coeffs, false, *rhs) {
                Some(r) => rows.push(r),
                None if *rhs < 0.0 => return Ok(MilpOutcome::Infeasible),
                None => {}
            }
        }
        let mut cost = vec![0.0; n];
        let mut sign = 1.0;
        if let Some((coeffs, sense)) = &query.objective {
            if *sense == Sense::Max {
                sign = -1.0;
            }
            for (j, a) in coeffs {
                if *j >= n {
                    return Err(MilpError::Invalid("objective refers to an unknown variable".into()));
                }
                cost[*j] += sign * a;
            }
        }
        let first_feasible = query.objective.is_none();
        let result = if relaxed {
            match simplex::solve(&rows, &lo, &hi, &cost)? {
                simplex::LpResult::Optimal { x, value } => Some((x, value)),
                simplex::LpResult::Infeasible => None,
            }
        } else {
            branch::solve(&rows, &lo, &hi, &self.integer, &cost, opts, first_feasible)?
        };
        Ok(match result {
            None => MilpOutcome::Infeasible,
            Some((witness, value)) => MilpOutcome::Optimal {
                value: sign * value,
                witness,
            },
        })
    }
}

fn objective_query(problem: &MilpProblem) -> Query {
    let mut q = Query::new();
    if let Some(o) = &problem.objective {
        let coeffs = o.coeffs.iter().map(|(j, k)| (*j, rational::to_f64(k))).collect();
        q.objective = Some((coeffs, o.sense));
    }
    q
}

/// Solves the LP relaxation of a problem.
pub fn solve_lp(problem: &MilpProblem) -> Result<MilpOutcome, MilpError> {
    CompiledMilp::compile(&problem.relaxation()).solve_relaxation(&objective_query(problem))
}

pub fn solve_milp(problem: &MilpProblem) -> Result<MilpOutcome, MilpError> {
    solve_milp_with(problem, &SolveOptions::default())
}

pub fn solve_milp_with(problem: &MilpProblem, opts: &SolveOptions) -> Result<MilpOutcome, MilpError> {
    CompiledMilp::compile(problem).solve(&objective_query(problem), opts)
}

/// Satisfiability of `pred ∧ extra` over the bounds in `vars`.
pub fn check_feasible(pred: &GuardedPredicate, vars: &VariableSet, extra: &[MilpRow]) -> Result<bool, MilpError> {
    let mut problem = translate(pred, vars)?;
    problem.rows.extend_from_slice(extra);
    Ok(solve_milp(&problem)?.is_feasible())
}

#[cfg(test)]
mod tests;
