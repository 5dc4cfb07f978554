//! Plant models: variables, linear expressions, guarded predicates and the
//! discrete time linear hybrid system (DTLHS) that ties them together.
//!
//! A [`Dtlhs`] owns a table of declared variables. Predicates refer to them
//! through [`Symbol`]s, which distinguish the present-state value of a
//! variable from its next-state (primed) copy. Only state variables have a
//! primed copy.
//!
//! Everything in this module uses exact rationals; floating point enters only
//! when a predicate is handed to the MILP solver.

mod expr;
mod parser;
mod printer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{Signed, Zero};
use thiserror::Error;

use crate::quantizer::{QuantizeError, Quantization};
use crate::rational::{self, Rational};

pub use expr::LinearExpr;
pub use parser::{parse_model, parse_model_with_levels};
pub use printer::print_model;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("undeclared variable `{name}` at {line}:{column}")]
    UndeclaredVariable {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("variable `{name}` declared more than once")]
    DuplicateDeclaration { name: String },
    #[error("variable `{name}` has no bounds")]
    UnboundedVariable { name: String },
    #[error("variable `{name}` has empty bounds")]
    EmptyBounds { name: String },
    #[error("boolean variable `{name}` must have bounds inside [0, 1]")]
    BooleanBounds { name: String },
    #[error("guard `{name}` is not a boolean variable")]
    NonBooleanGuard { name: String },
    #[error("`{name}'` refers to a variable that is not a state variable")]
    PrimedNonState { name: String },
    #[error("symbol {0} refers to no declared variable")]
    UnknownSymbol(String),
    #[error("no value assigned to `{0}`")]
    MissingAssignment(String),
    #[error("no pairing for primed variable `{0}'`")]
    MissingPairing(String),
    #[error("predicate must not be empty")]
    EmptyPredicate,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Quantization(#[from] QuantizeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    Real,
    Integer,
    Boolean,
}

impl VarKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarKind::Real)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Real => "real",
            VarKind::Integer => "int",
            VarKind::Boolean => "bool",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarRole {
    State,
    Input,
    Auxiliary,
}

impl VarRole {
    pub fn keyword(self) -> &'static str {
        match self {
            VarRole::State => "state",
            VarRole::Input => "input",
            VarRole::Auxiliary => "aux",
        }
    }
}

/// A declared variable together with its admissible region `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub role: VarRole,
    pub lo: Rational,
    pub hi: Rational,
}

impl Variable {
    pub fn new(name: impl Into<String>, kind: VarKind, role: VarRole, lo: Rational, hi: Rational) -> Self {
        Variable {
            name: name.into(),
            kind,
            role,
            lo,
            hi,
        }
    }

    pub fn boolean(name: impl Into<String>, role: VarRole) -> Self {
        Variable::new(name, VarKind::Boolean, role, rational::int(0), rational::int(1))
    }
}

/// Reference to either the present value or the next-state copy of a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Current(VarId),
    Next(VarId),
}

impl Symbol {
    pub fn var(self) -> VarId {
        match self {
            Symbol::Current(v) | Symbol::Next(v) => v,
        }
    }

    pub fn is_next(self) -> bool {
        matches!(self, Symbol::Next(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

/// `lhs relation rhs` with every constant folded into `rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub lhs: LinearExpr,
    pub relation: Relation,
    pub rhs: Rational,
}

impl Constraint {
    /// Builds `left relation right`, moving variables left and constants right.
    pub fn new(left: LinearExpr, relation: Relation, right: LinearExpr) -> Self {
        let mut lhs = left.sub(&right);
        let rhs = -lhs.constant.clone();
        lhs.constant = Rational::zero();
        Constraint { lhs, relation, rhs }
    }

    pub fn le(lhs: LinearExpr, rhs: Rational) -> Self {
        Constraint::new(lhs, Relation::Le, LinearExpr::constant(rhs))
    }

    pub fn ge(lhs: LinearExpr, rhs: Rational) -> Self {
        Constraint::new(lhs, Relation::Ge, LinearExpr::constant(rhs))
    }

    pub fn eq(lhs: LinearExpr, rhs: Rational) -> Self {
        Constraint::new(lhs, Relation::Eq, LinearExpr::constant(rhs))
    }

    /// Splits into equivalent `<=` constraints (one or two).
    pub fn canonical(&self) -> Vec<Constraint> {
        let le = |lhs: LinearExpr, rhs: Rational| Constraint {
            lhs,
            relation: Relation::Le,
            rhs,
        };
        match self.relation {
            Relation::Le => vec![self.clone()],
            Relation::Ge => vec![le(self.lhs.scale(&-Rational::from_integer(1.into())), -self.rhs.clone())],
            Relation::Eq => vec![
                le(self.lhs.clone(), self.rhs.clone()),
                le(self.lhs.scale(&-Rational::from_integer(1.into())), -self.rhs.clone()),
            ],
        }
    }

    pub fn holds(&self, value: &Rational) -> bool {
        match self.relation {
            Relation::Le => *value <= self.rhs,
            Relation::Ge => *value >= self.rhs,
            Relation::Eq => *value == self.rhs,
        }
    }

    pub fn holds_f64(&self, value: f64, tol: f64) -> bool {
        let rhs = rational::to_f64(&self.rhs);
        match self.relation {
            Relation::Le => value <= rhs + tol,
            Relation::Ge => value >= rhs - tol,
            Relation::Eq => (value - rhs).abs() <= tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Guard {
    pub var: VarId,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GuardedConstraint {
    pub guard: Option<Guard>,
    pub body: Constraint,
}

impl GuardedConstraint {
    pub fn plain(body: Constraint) -> Self {
        GuardedConstraint { guard: None, body }
    }

    pub fn when(var: VarId, body: Constraint) -> Self {
        GuardedConstraint {
            guard: Some(Guard { var, positive: true }),
            body,
        }
    }

    pub fn unless(var: VarId, body: Constraint) -> Self {
        GuardedConstraint {
            guard: Some(Guard { var, positive: false }),
            body,
        }
    }

    fn guard_active(&self, value: &Rational) -> bool {
        match self.guard {
            None => true,
            Some(g) => {
                let on = !value.is_zero();
                on == g.positive
            }
        }
    }
}

/// Conjunction of (optionally guarded) linear constraints.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GuardedPredicate {
    pub conjuncts: Vec<GuardedConstraint>,
}

pub type Assignment = BTreeMap<Symbol, Rational>;

impl GuardedPredicate {
    pub fn new(conjuncts: Vec<GuardedConstraint>) -> Self {
        GuardedPredicate { conjuncts }
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        for c in &self.conjuncts {
            if let Some(g) = c.guard {
                out.insert(Symbol::Current(g.var));
            }
            out.extend(c.body.lhs.terms().iter().map(|(s, _)| *s));
        }
        out
    }

    pub fn mentions_next(&self) -> bool {
        self.symbols().iter().any(|s| s.is_next())
    }

    /// Every `>=` and `=` body rewritten as `<=` constraints, guards kept.
    pub fn canonicalize(&self) -> GuardedPredicate {
        let conjuncts = self
            .conjuncts
            .iter()
            .flat_map(|c| {
                c.body.canonical().into_iter().map(move |body| GuardedConstraint {
                    guard: c.guard,
                    body,
                })
            })
            .collect();
        GuardedPredicate { conjuncts }
    }

    /// Truth value under a total assignment; a guarded conjunct holds when its
    /// guard literal is false or its body holds.
    pub fn evaluate(&self, assignment: &Assignment, names: &dyn Fn(Symbol) -> String) -> Result<bool, ModelError> {
        let lookup = |s: Symbol| assignment.get(&s).ok_or_else(|| ModelError::MissingAssignment(names(s)));
        let mut all = true;
        for c in &self.conjuncts {
            if let Some(g) = c.guard {
                let gv = lookup(Symbol::Current(g.var))?;
                if !c.guard_active(gv) {
                    continue;
                }
            }
            let mut value = Rational::zero();
            for (s, coeff) in c.body.lhs.terms() {
                value += coeff * lookup(*s)?;
            }
            if !c.body.holds(&value) {
                all = false;
            }
        }
        Ok(all)
    }

    /// Floating-point evaluation with an absolute tolerance on every row.
    pub fn evaluate_f64(&self, value_of: &dyn Fn(Symbol) -> f64, tol: f64) -> bool {
        self.conjuncts.iter().all(|c| {
            if let Some(g) = c.guard {
                let on = value_of(Symbol::Current(g.var)) > 0.5;
                if on != g.positive {
                    return true;
                }
            }
            let lhs: f64 = c
                .body
                .lhs
                .terms()
                .iter()
                .map(|(s, k)| rational::to_f64(k) * value_of(*s))
                .sum();
            c.body.holds_f64(lhs, tol)
        })
    }

    /// Replaces every primed symbol `v'` by the present-state symbol of
    /// `pairing[v]`, keeping the conjunct structure.
    pub fn substitute_primed(&self, pairing: &BTreeMap<VarId, VarId>, names: &dyn Fn(Symbol) -> String) -> Result<GuardedPredicate, ModelError> {
        let mut conjuncts = Vec::with_capacity(self.conjuncts.len());
        for c in &self.conjuncts {
            let mut lhs = LinearExpr::zero();
            for (s, k) in c.body.lhs.terms() {
                let target = match s {
                    Symbol::Current(_) => *s,
                    Symbol::Next(v) => Symbol::Current(
                        *pairing.get(v).ok_or_else(|| ModelError::MissingPairing(names(Symbol::Current(*v))))?,
                    ),
                };
                lhs.add_term(target, k.clone());
            }
            conjuncts.push(GuardedConstraint {
                guard: c.guard,
                body: Constraint {
                    lhs,
                    relation: c.body.relation,
                    rhs: c.body.rhs.clone(),
                },
            });
        }
        Ok(GuardedPredicate { conjuncts })
    }
}

/// Discrete time linear hybrid system `(X, U, Y, N)`.
///
/// Variables keep their declaration order; `X`, `U` and `Y` are the state,
/// input and auxiliary subsequences. The transition relation `N` may mention
/// next-state copies of state variables only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dtlhs {
    vars: Vec<Variable>,
    transition: GuardedPredicate,
}

impl Dtlhs {
    pub fn new(vars: Vec<Variable>, transition: GuardedPredicate) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateDeclaration { name: v.name.clone() });
            }
            if v.lo > v.hi {
                return Err(ModelError::EmptyBounds { name: v.name.clone() });
            }
            if v.kind == VarKind::Boolean && !rational::is_unit_interval(&v.lo, &v.hi) {
                return Err(ModelError::BooleanBounds { name: v.name.clone() });
            }
            if v.kind == VarKind::Integer && (!v.lo.is_integer() || !v.hi.is_integer()) {
                return Err(ModelError::Invalid(format!("integer variable `{}` needs integer bounds", v.name)));
            }
        }
        let plant = Dtlhs { vars, transition };
        plant.check_predicate(&plant.transition, true)?;
        if plant.transition.conjuncts.is_empty() {
            return Err(ModelError::EmptyPredicate);
        }
        Ok(plant)
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn transition(&self) -> &GuardedPredicate {
        &self.transition
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    fn ids_with(&self, role: VarRole) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role == role)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn states(&self) -> Vec<VarId> {
        self.ids_with(VarRole::State)
    }

    pub fn inputs(&self) -> Vec<VarId> {
        self.ids_with(VarRole::Input)
    }

    pub fn auxiliaries(&self) -> Vec<VarId> {
        self.ids_with(VarRole::Auxiliary)
    }

    pub fn symbol_name(&self, s: Symbol) -> String {
        match s {
            Symbol::Current(v) => self.vars.get(v.0).map(|x| x.name.clone()).unwrap_or_else(|| format!("#{}", v.0)),
            Symbol::Next(v) => format!(
                "{}'",
                self.vars.get(v.0).map(|x| x.name.clone()).unwrap_or_else(|| format!("#{}", v.0))
            ),
        }
    }

    /// Checks that a predicate refers only to declared variables; primed
    /// symbols are allowed only when `allow_next` holds.
    pub fn check_predicate(&self, pred: &GuardedPredicate, allow_next: bool) -> Result<(), ModelError> {
        for c in &pred.conjuncts {
            if let Some(g) = c.guard {
                let v = self.vars.get(g.var.0).ok_or_else(|| ModelError::UnknownSymbol(format!("#{}", g.var.0)))?;
                if v.kind != VarKind::Boolean {
                    return Err(ModelError::NonBooleanGuard { name: v.name.clone() });
                }
            }
            for (s, _) in c.body.lhs.terms() {
                let v = self
                    .vars
                    .get(s.var().0)
                    .ok_or_else(|| ModelError::UnknownSymbol(format!("#{}", s.var().0)))?;
                if s.is_next() && (!allow_next || v.role != VarRole::State) {
                    return Err(ModelError::PrimedNonState { name: v.name.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, pred: &GuardedPredicate, assignment: &Assignment) -> Result<bool, ModelError> {
        pred.evaluate(assignment, &|s| self.symbol_name(s))
    }

    /// Interval hull of a linear expression over the declared bounds; next-state
    /// symbols use `next_bounds` and are unbounded when absent.
    pub fn expr_range(&self, expr: &LinearExpr, next_bounds: &BTreeMap<VarId, (Rational, Rational)>) -> Option<(Rational, Rational)> {
        let mut lo = expr.constant.clone();
        let mut hi = expr.constant.clone();
        for (s, k) in expr.terms() {
            let (vlo, vhi) = match s {
                Symbol::Current(v) => (self.vars[v.0].lo.clone(), self.vars[v.0].hi.clone()),
                Symbol::Next(v) => next_bounds.get(v)?.clone(),
            };
            if k.is_positive() {
                lo += k * &vlo;
                hi += k * &vhi;
            } else {
                lo += k * &vhi;
                hi += k * &vlo;
            }
        }
        Some((lo, hi))
    }

    /// Sound bounds for the next-state copies, implied by `N`.
    ///
    /// Each `<=`/`=` conjunct that contains `v'` bounds it by interval
    /// arithmetic over the other symbols. Unguarded conjuncts always apply;
    /// bounds from conjuncts guarded by `g` and by `!g` are combined by their
    /// hull, since one of the two literals always holds. Propagation is
    /// repeated so bounds can flow between next-state variables.
    pub fn next_state_bounds(&self) -> Result<BTreeMap<VarId, (Rational, Rational)>, ModelError> {
        let canon = self.transition.canonicalize();
        let mut bounds: BTreeMap<VarId, (Option<Rational>, Option<Rational>)> =
            self.states().into_iter().map(|v| (v, (None, None))).collect();

        for _round in 0..4 {
            let known: BTreeMap<VarId, (Rational, Rational)> = bounds
                .iter()
                .filter_map(|(v, (lo, hi))| Some((*v, (lo.clone()?, hi.clone()?))))
                .collect();
            let mut changed = false;
            for v in self.states() {
                let target = Symbol::Next(v);
                // (guard) -> (lower, upper) implied by conjuncts under that guard.
                let mut by_guard: BTreeMap<Option<(VarId, bool)>, (Option<Rational>, Option<Rational>)> = BTreeMap::new();
                for c in &canon.conjuncts {
                    let Some(coeff) = c.body.lhs.coefficient(target) else { continue };
                    // coeff * v' + rest <= rhs
                    let mut rest = c.body.lhs.clone();
                    rest.remove(target);
                    let Some((rest_lo, _)) = self.expr_range(&rest, &known) else { continue };
                    let bound = (&c.body.rhs - rest_lo) / &coeff;
                    let key = c.guard.map(|g| (g.var, g.positive));
                    let slot = by_guard.entry(key).or_insert((None, None));
                    if coeff.is_positive() {
                        slot.1 = Some(match slot.1.take() {
                            Some(b) if b < bound => b,
                            _ => bound,
                        });
                    } else {
                        slot.0 = Some(match slot.0.take() {
                            Some(b) if b > bound => b,
                            _ => bound,
                        });
                    }
                }
                let mut lo: Option<Rational> = None;
                let mut hi: Option<Rational> = None;
                let tighten_lo = |cur: &mut Option<Rational>, b: Rational| {
                    if cur.as_ref().is_none_or(|c| b > *c) {
                        *cur = Some(b);
                    }
                };
                let tighten_hi = |cur: &mut Option<Rational>, b: Rational| {
                    if cur.as_ref().is_none_or(|c| b < *c) {
                        *cur = Some(b);
                    }
                };
                if let Some((l, h)) = by_guard.get(&None) {
                    if let Some(l) = l {
                        tighten_lo(&mut lo, l.clone());
                    }
                    if let Some(h) = h {
                        tighten_hi(&mut hi, h.clone());
                    }
                }
                let guard_vars: BTreeSet<VarId> = by_guard.keys().flatten().map(|(g, _)| *g).collect();
                for g in guard_vars {
                    let (Some(on), Some(off)) = (by_guard.get(&Some((g, true))), by_guard.get(&Some((g, false)))) else {
                        continue;
                    };
                    if let (Some(a), Some(b)) = (&on.0, &off.0) {
                        tighten_lo(&mut lo, a.clone().min(b.clone()));
                    }
                    if let (Some(a), Some(b)) = (&on.1, &off.1) {
                        tighten_hi(&mut hi, a.clone().max(b.clone()));
                    }
                }
                let entry = bounds.get_mut(&v).expect("state variable");
                if let Some(l) = lo {
                    if entry.0.as_ref().is_none_or(|c| l > *c) {
                        entry.0 = Some(l);
                        changed = true;
                    }
                }
                if let Some(h) = hi {
                    if entry.1.as_ref().is_none_or(|c| h < *c) {
                        entry.1 = Some(h);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut out = BTreeMap::new();
        for (v, (lo, hi)) in bounds {
            match (lo, hi) {
                (Some(lo), Some(hi)) if lo <= hi => {
                    out.insert(v, (lo, hi));
                }
                (Some(_), Some(_)) => {
                    // N is unsatisfiable; any nonempty box is sound.
                    let x = &self.vars[v.0];
                    out.insert(v, (x.lo.clone(), x.hi.clone()));
                }
                _ => {
                    return Err(ModelError::UnboundedVariable {
                        name: format!("{}'", self.vars[v.0].name),
                    })
                }
            }
        }
        Ok(out)
    }
}

/// A complete synthesis input: plant, quantization, goal and initial region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub plant: Dtlhs,
    pub quantization: Quantization,
    pub goal: GuardedPredicate,
    pub init: Option<GuardedPredicate>,
}

impl Model {
    pub fn new(plant: Dtlhs, quantization: Quantization, goal: GuardedPredicate, init: Option<GuardedPredicate>) -> Result<Self, ModelError> {
        for (what, pred) in std::iter::once(("goal", &goal)).chain(init.iter().map(|p| ("init", p))) {
            plant.check_predicate(pred, false)?;
            if pred.conjuncts.iter().any(|c| c.guard.is_some()) {
                return Err(ModelError::Invalid(format!("{what} predicate must not use guards")));
            }
            if pred
                .symbols()
                .iter()
                .any(|s| plant.var(s.var()).role != VarRole::State)
            {
                return Err(ModelError::Invalid(format!("{what} predicate may mention state variables only")));
            }
        }
        if goal.conjuncts.is_empty() {
            return Err(ModelError::Invalid("goal predicate must not be empty".into()));
        }
        Ok(Model {
            plant,
            quantization,
            goal,
            init,
        })
    }

    /// Same plant and regions with some level counts replaced.
    pub fn with_levels(&self, levels: &BTreeMap<String, u64>) -> Result<Model, ModelError> {
        let mut current = self.quantization.levels_by_name(&self.plant);
        for (k, v) in levels {
            if self.plant.lookup(k).is_none() {
                return Err(ModelError::UndeclaredVariable {
                    name: k.clone(),
                    line: 0,
                    column: 0,
                });
            }
            current.insert(k.clone(), *v);
        }
        let quantization = Quantization::new(&self.plant, &current)?;
        Ok(Model {
            quantization,
            ..self.clone()
        })
    }

    /// SHA-256 of the canonical model text.
    pub fn fingerprint(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let text = print_model(self);
        let digest = Sha256::digest(text.as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_model(self))
    }
}
