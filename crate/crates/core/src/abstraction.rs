//! Control abstraction of a quantized plant.
//!
//! For every abstract state `x̂` and abstract action `û` that keeps the plant
//! inside its admissible region, the engine adds `(x̂, û, x̂′)` whenever some
//! concrete transition goes from the cell of `x̂` to the cell of `x̂′`. Self
//! loops are added when a run might stay inside the cell forever.
//!
//! All checks are MILP queries against one compiled copy of the transition
//! relation; each query only tightens the bounds of the state, input and
//! next-state variables.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::milp::{CompiledMilp, MilpError, MilpOutcome, Query, SolveOptions, VariableSet};
use crate::model::{Model, ModelError, Symbol};
use crate::quantizer::QuantizeError;
use crate::rational;

/// Margin used to encode `x′_j > β_j` as `x′_j >= β_j + δ`.
pub const ADMISSIBILITY_MARGIN: f64 = 1e-9;
/// A state variable whose change over a cell is bounded away from zero by
/// more than this cannot keep a run in the cell forever.
pub const DRIFT_MARGIN: f64 = 1e-7;
/// Widening applied to image boxes before enumerating candidate cells.
const BOX_SLACK: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("MILP failure at state {state}, action {action}: {source}")]
    Milp {
        state: u64,
        action: u64,
        #[source]
        source: MilpError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub state: u64,
    pub action: u64,
    pub next: u64,
}

impl Triple {
    pub fn new(state: u64, action: u64, next: u64) -> Self {
        Triple { state, action, next }
    }
}

/// Set of abstract transitions, kept sorted lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbstractTransitionSet {
    triples: BTreeSet<Triple>,
}

impl AbstractTransitionSet {
    pub fn new() -> Self {
        AbstractTransitionSet::default()
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        self.triples.insert(t)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples.iter()
    }

    pub fn union_with(&mut self, other: &AbstractTransitionSet) {
        self.triples.extend(other.triples.iter().copied());
    }

    pub fn union(mut self, other: &AbstractTransitionSet) -> AbstractTransitionSet {
        self.union_with(other);
        self
    }

    /// Triples whose source is `state`, in order.
    pub fn from_state(&self, state: u64) -> impl Iterator<Item = &Triple> + '_ {
        self.triples
            .range(Triple::new(state, 0, 0)..=Triple::new(state, u64::MAX, u64::MAX))
    }

    pub fn sources(&self) -> BTreeSet<u64> {
        self.triples.iter().map(|t| t.state).collect()
    }
}

impl FromIterator<Triple> for AbstractTransitionSet {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        AbstractTransitionSet {
            triples: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a AbstractTransitionSet {
    type Item = &'a Triple;
    type IntoIter = std::collections::btree_set::Iter<'a, Triple>;

    fn into_iter(self) -> Self::IntoIter {
        self.triples.iter()
    }
}

/// Per-state-variable closed interval box over next states.
pub type ImageBox = Vec<(f64, f64)>;

/// Answers the abstraction queries for one model. Holds a private compiled
/// MILP, so each thread should build its own engine.
pub struct AbstractionEngine<'m> {
    model: &'m Model,
    vars: VariableSet,
    compiled: CompiledMilp,
    state_vars: Vec<usize>,
    next_vars: Vec<usize>,
    input_vars: Vec<usize>,
    region: Vec<(f64, f64)>,
    opts: SolveOptions,
}

impl<'m> AbstractionEngine<'m> {
    pub fn new(model: &'m Model) -> Result<Self, AbstractionError> {
        Self::with_options(model, SolveOptions::default())
    }

    pub fn with_options(model: &'m Model, opts: SolveOptions) -> Result<Self, AbstractionError> {
        let plant = &model.plant;
        let next_bounds = plant.next_state_bounds()?;
        let vars = VariableSet::for_plant(plant, &next_bounds);
        let problem = crate::milp::translate(plant.transition(), &vars).map_err(|source| AbstractionError::Milp {
            state: 0,
            action: 0,
            source,
        })?;
        let compiled = CompiledMilp::compile(&problem);
        let idx = |s: Symbol| vars.index(s).expect("plant symbol in variable set");
        let states = plant.states();
        Ok(AbstractionEngine {
            model,
            state_vars: states.iter().map(|v| idx(Symbol::Current(*v))).collect(),
            next_vars: states.iter().map(|v| idx(Symbol::Next(*v))).collect(),
            input_vars: plant.inputs().iter().map(|v| idx(Symbol::Current(*v))).collect(),
            region: states
                .iter()
                .map(|v| {
                    let x = plant.var(*v);
                    (rational::to_f64(&x.lo), rational::to_f64(&x.hi))
                })
                .collect(),
            vars,
            compiled,
            opts,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn variables(&self) -> &VariableSet {
        &self.vars
    }

    /// MILP column of the present value of each state variable.
    pub fn state_columns(&self) -> &[usize] {
        &self.state_vars
    }

    pub fn next_columns(&self) -> &[usize] {
        &self.next_vars
    }

    pub fn input_columns(&self) -> &[usize] {
        &self.input_vars
    }

    pub fn compiled(&self) -> &CompiledMilp {
        &self.compiled
    }

    /// `N ∧ x ∈ cell(x̂) ∧ u ∈ cell(û)`.
    pub fn base_query(&self, state: u64, action: u64) -> Result<Query, AbstractionError> {
        let q = &self.model.quantization;
        let mut query = Query::new();
        for (col, (lo, hi)) in self.state_vars.iter().zip(q.states().cell_f64(state)?) {
            query = query.bound(*col, lo, hi);
        }
        for (col, (lo, hi)) in self.input_vars.iter().zip(q.inputs().cell_f64(action)?) {
            query = query.bound(*col, lo, hi);
        }
        Ok(query)
    }

    fn with_next_cell(&self, mut query: Query, next: u64) -> Result<Query, AbstractionError> {
        for (col, (lo, hi)) in self.next_vars.iter().zip(self.model.quantization.states().cell_f64(next)?) {
            query = query.bound(*col, lo, hi);
        }
        Ok(query)
    }

    pub fn solve(&self, state: u64, action: u64, query: &Query) -> Result<MilpOutcome, AbstractionError> {
        self.compiled
            .solve(query, &self.opts)
            .map_err(|source| AbstractionError::Milp { state, action, source })
    }

    fn feasible(&self, state: u64, action: u64, query: &Query) -> Result<bool, AbstractionError> {
        Ok(self.solve(state, action, query)?.is_feasible())
    }

    /// True iff no concrete transition from `cell(x̂)` under `cell(û)` leaves
    /// the admissible region of the state variables.
    pub fn q_admissible(&self, state: u64, action: u64) -> Result<bool, AbstractionError> {
        let base = self.base_query(state, action)?;
        for (k, col) in self.next_vars.iter().enumerate() {
            let (alpha, beta) = self.region[k];
            let above = base.clone().bound(*col, beta + ADMISSIBILITY_MARGIN, f64::INFINITY);
            if self.feasible(state, action, &above)? {
                return Ok(false);
            }
            let below = base.clone().bound(*col, f64::NEG_INFINITY, alpha - ADMISSIBILITY_MARGIN);
            if self.feasible(state, action, &below)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Some concrete transition starts and ends in `cell(x̂)`.
    pub fn intra_cell_transition(&self, state: u64, action: u64) -> Result<bool, AbstractionError> {
        let q = self.with_next_cell(self.base_query(state, action)?, state)?;
        self.feasible(state, action, &q)
    }

    /// Whether `(x̂, û, x̂)` belongs to the abstraction.
    ///
    /// A self loop is kept when an intra-cell transition exists and no state
    /// variable changes with a uniform sign over all intra-cell transitions.
    /// When `x′_j − x_j` is bounded away from zero, every run that stays in
    /// the bounded cell must leave it after finitely many steps, so the loop
    /// is not needed.
    pub fn self_loop(&self, state: u64, action: u64) -> Result<bool, AbstractionError> {
        let q = self.with_next_cell(self.base_query(state, action)?, state)?;
        if !self.feasible(state, action, &q)? {
            return Ok(false);
        }
        for (x, xn) in self.state_vars.iter().zip(&self.next_vars) {
            let drift = vec![(*xn, 1.0), (*x, -1.0)];
            let lo = self.solve(state, action, &q.clone().minimize(drift.clone()))?;
            if lo.value().is_some_and(|v| v > DRIFT_MARGIN) {
                return Ok(false);
            }
            let hi = self.solve(state, action, &q.clone().maximize(drift))?;
            if hi.value().is_some_and(|v| v < -DRIFT_MARGIN) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Interval hull of the next states reachable from `cell(x̂)` under
    /// `cell(û)`, or `None` if there are none.
    pub fn over_img(&self, state: u64, action: u64) -> Result<Option<ImageBox>, AbstractionError> {
        let base = self.base_query(state, action)?;
        let mut out = Vec::with_capacity(self.next_vars.len());
        for col in &self.next_vars {
            let lo = self.solve(state, action, &base.clone().minimize(vec![(*col, 1.0)]))?;
            let Some(lo) = lo.value() else { return Ok(None) };
            let hi = self.solve(state, action, &base.clone().maximize(vec![(*col, 1.0)]))?;
            let Some(hi) = hi.value() else { return Ok(None) };
            out.push((lo, hi));
        }
        Ok(Some(out))
    }

    pub fn exists_trans(&self, state: u64, action: u64, next: u64) -> Result<bool, AbstractionError> {
        let q = self.with_next_cell(self.base_query(state, action)?, next)?;
        self.feasible(state, action, &q)
    }

    /// [`Self::exists_trans`] that answers false without solving when
    /// `cell(x̂′)` misses the image box.
    pub fn exists_trans_within(&self, state: u64, action: u64, next: u64, image: &ImageBox) -> Result<bool, AbstractionError> {
        let cell = self.model.quantization.states().cell_f64(next)?;
        let disjoint = cell
            .iter()
            .zip(image)
            .any(|((clo, chi), (ilo, ihi))| *chi < ilo - BOX_SLACK || *clo > ihi + BOX_SLACK);
        if disjoint {
            return Ok(false);
        }
        self.exists_trans(state, action, next)
    }

    /// Flat indices of the cells meeting `image` (widened slightly and
    /// clipped to the admissible region), ascending.
    pub fn cells_meeting(&self, image: &ImageBox) -> Vec<u64> {
        let space = self.model.quantization.states();
        let mut ranges = Vec::with_capacity(space.dims.len());
        for (k, d) in space.dims.iter().enumerate() {
            let (alpha, beta) = self.region[k];
            let lo = (image[k].0 - BOX_SLACK).max(alpha);
            let hi = (image[k].1 + BOX_SLACK).min(beta);
            if lo > hi {
                return Vec::new();
            }
            let (zlo, zhi) = if d.is_identity() {
                ((lo - alpha).ceil() as u64, (hi - alpha).floor() as u64)
            } else {
                let delta = rational::to_f64(&d.delta);
                let zlo = ((lo - alpha) / delta - 1e-9).floor().max(0.0) as u64;
                let zhi = ((hi - alpha) / delta + 1e-9).floor().max(0.0) as u64;
                (zlo.min(d.levels - 1), zhi.min(d.levels - 1))
            };
            if zlo > zhi {
                return Vec::new();
            }
            ranges.push((zlo, zhi));
        }
        let mut out = Vec::new();
        let mut codes: Vec<u64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(space.encode(&codes).expect("codes in range"));
            let mut k = codes.len();
            loop {
                if k == 0 {
                    out.sort_unstable();
                    return out;
                }
                k -= 1;
                if codes[k] < ranges[k].1 {
                    codes[k] += 1;
                    break;
                }
                codes[k] = ranges[k].0;
            }
        }
    }

    /// Adds every transition leaving `x̂` to `set`.
    pub fn min_ctr_abs_aux(&self, state: u64, set: &mut AbstractTransitionSet) -> Result<(), AbstractionError> {
        for action in self.model.quantization.inputs().indices() {
            if !self.q_admissible(state, action)? {
                continue;
            }
            if self.self_loop(state, action)? {
                set.insert(Triple::new(state, action, state));
            }
            let Some(image) = self.over_img(state, action)? else {
                continue;
            };
            for next in self.cells_meeting(&image) {
                if next != state && self.exists_trans_within(state, action, next, &image)? {
                    set.insert(Triple::new(state, action, next));
                }
            }
        }
        Ok(())
    }

    /// The whole abstraction, computed serially over all abstract states.
    pub fn min_ctr_abs(&self) -> Result<AbstractTransitionSet, AbstractionError> {
        let mut set = AbstractTransitionSet::new();
        for state in self.model.quantization.states().indices() {
            self.min_ctr_abs_aux(state, &mut set)?;
        }
        Ok(set)
    }
}

/// Serial abstraction of a model.
pub fn min_ctr_abs(model: &Model) -> Result<AbstractTransitionSet, AbstractionError> {
    AbstractionEngine::new(model)?.min_ctr_abs()
}
