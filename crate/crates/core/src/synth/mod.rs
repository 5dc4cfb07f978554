//! Strong-solution synthesis on a finite transition system.
//!
//! The solver computes the least fixpoint `D₀ = ∅`,
//! `D_{k+1} = D_k ∪ {s | ∃a. ∅ ≠ Img(s,a) ⊆ G ∪ D_k}` level by level and
//! returns the most general optimal controller: every state in the fixpoint
//! enables exactly the actions that reach `G ∪ D_{J(s)−1}`.

mod dump;
mod lts;
mod regions;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::abstraction::AbstractTransitionSet;
use crate::milp::MilpError;
use crate::model::Model;
use crate::quantizer::QuantizeError;
use crate::rational::Rational;

pub use dump::{controller_from_bytes, controller_to_bytes, controller_to_text, DumpError, CONTROLLER_MAGIC};
pub use lts::{parse_lts, Lts, LtsError};
pub use regions::{abstract_goal, abstract_init, StateRegion, MEMBERSHIP_TOL};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("state index {0} outside 1..={1}")]
    StateOutOfRange(u64, u64),
    #[error("action index {0} outside 1..={1}")]
    ActionOutOfRange(u64, u64),
    #[error("empty abstract goal")]
    EmptyGoal,
    #[error("goal or initial region: {0}")]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    ExplicitLts,
    AbstractionOfDtlhs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Sol,
    NoSol,
    Unk,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Sol => 0,
            Outcome::NoSol => 1,
            Outcome::Unk => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Outcome> {
        match code {
            0 => Some(Outcome::Sol),
            1 => Some(Outcome::NoSol),
            2 => Some(Outcome::Unk),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Sol => "Sol",
            Outcome::NoSol => "NoSol",
            Outcome::Unk => "Unk",
        })
    }
}

/// A control problem over states `1..=states` and actions `1..=actions`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteControlProblem {
    states: u64,
    actions: u64,
    transitions: AbstractTransitionSet,
    init: BTreeSet<u64>,
    goal: BTreeSet<u64>,
    provenance: Provenance,
}

impl FiniteControlProblem {
    pub fn new(
        states: u64,
        actions: u64,
        transitions: AbstractTransitionSet,
        init: BTreeSet<u64>,
        goal: BTreeSet<u64>,
        provenance: Provenance,
    ) -> Result<Self, SynthError> {
        let check = |s: u64| {
            if s == 0 || s > states {
                Err(SynthError::StateOutOfRange(s, states))
            } else {
                Ok(())
            }
        };
        for t in &transitions {
            check(t.state)?;
            check(t.next)?;
            if t.action == 0 || t.action > actions {
                return Err(SynthError::ActionOutOfRange(t.action, actions));
            }
        }
        for &s in init.iter().chain(&goal) {
            check(s)?;
        }
        if goal.is_empty() {
            return Err(SynthError::EmptyGoal);
        }
        Ok(FiniteControlProblem {
            states,
            actions,
            transitions,
            init,
            goal,
            provenance,
        })
    }

    /// The problem induced by an abstraction of `model`, with the goal
    /// relaxed by `epsilon` and the initial region over-approximated.
    pub fn from_abstraction(model: &Model, transitions: AbstractTransitionSet, epsilon: &Rational) -> Result<Self, SynthError> {
        let goal = abstract_goal(model, epsilon)?;
        let init = abstract_init(model)?;
        let q = &model.quantization;
        FiniteControlProblem::new(
            q.state_count(),
            q.action_count(),
            transitions,
            init,
            goal,
            Provenance::AbstractionOfDtlhs,
        )
    }

    pub fn state_count(&self) -> u64 {
        self.states
    }

    pub fn action_count(&self) -> u64 {
        self.actions
    }

    pub fn transitions(&self) -> &AbstractTransitionSet {
        &self.transitions
    }

    pub fn init(&self) -> &BTreeSet<u64> {
        &self.init
    }

    pub fn goal(&self) -> &BTreeSet<u64> {
        &self.goal
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_goal(mut self, goal: BTreeSet<u64>) -> Result<Self, SynthError> {
        for &s in &goal {
            if s == 0 || s > self.states {
                return Err(SynthError::StateOutOfRange(s, self.states));
            }
        }
        if goal.is_empty() {
            return Err(SynthError::EmptyGoal);
        }
        self.goal = goal;
        Ok(self)
    }

    /// Successor sets keyed by `(state, action)`, only for nonempty images.
    pub fn images(&self) -> BTreeMap<(u64, u64), Vec<u64>> {
        let mut out: BTreeMap<(u64, u64), Vec<u64>> = BTreeMap::new();
        for t in &self.transitions {
            out.entry((t.state, t.action)).or_default().push(t.next);
        }
        out
    }
}

/// A controller: enabled actions and worst-case distance for each state of
/// its domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Controller {
    pub states: u64,
    pub actions: u64,
    pub enabled: BTreeMap<u64, BTreeSet<u64>>,
    pub j: BTreeMap<u64, u32>,
    pub outcome: Outcome,
}

impl Controller {
    pub fn dom(&self) -> BTreeSet<u64> {
        self.enabled.keys().copied().collect()
    }

    pub fn is_enabled(&self, state: u64, action: u64) -> bool {
        self.enabled.get(&state).is_some_and(|a| a.contains(&action))
    }

    /// All enabled pairs in ascending order.
    pub fn pairs(&self) -> Vec<(u64, u64)> {
        self.enabled
            .iter()
            .flat_map(|(&s, acts)| acts.iter().map(move |&a| (s, a)))
            .collect()
    }

    pub fn max_j(&self) -> u32 {
        self.j.values().copied().max().unwrap_or(0)
    }
}

/// Solves the problem for the most general optimal strong controller.
pub fn strong_solve(problem: &FiniteControlProblem) -> Controller {
    let images = problem.images();
    let goal = &problem.goal;
    // Number of distinct successors of (s, a) outside G ∪ D.
    let mut pending: BTreeMap<(u64, u64), usize> = images
        .iter()
        .map(|(&key, next)| (key, next.iter().filter(|n| !goal.contains(n)).count()))
        .collect();
    let mut preds: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for (&key, next) in &images {
        for &n in next {
            if !goal.contains(&n) {
                preds.entry(n).or_default().push(key);
            }
        }
    }
    let mut ready: BTreeSet<(u64, u64)> = pending.iter().filter(|(_, &c)| c == 0).map(|(&k, _)| k).collect();
    let mut enabled: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut j: BTreeMap<u64, u32> = BTreeMap::new();
    let mut level = 0u32;
    while !ready.is_empty() {
        level += 1;
        let mut entered = Vec::new();
        for (s, a) in std::mem::take(&mut ready) {
            if j.get(&s).is_some_and(|&l| l < level) {
                continue;
            }
            if j.insert(s, level).is_none() {
                entered.push(s);
            }
            enabled.entry(s).or_default().insert(a);
        }
        for s in entered {
            if goal.contains(&s) {
                continue;
            }
            for key in preds.get(&s).map(Vec::as_slice).unwrap_or(&[]) {
                let c = pending.get_mut(key).expect("predecessor has an image");
                *c -= 1;
                if *c == 0 && !j.contains_key(&key.0) {
                    ready.insert(*key);
                }
            }
        }
    }
    let covered = problem.init.iter().all(|s| enabled.contains_key(s));
    let outcome = match (covered, problem.provenance) {
        (true, _) => Outcome::Sol,
        (false, Provenance::ExplicitLts) => Outcome::NoSol,
        (false, Provenance::AbstractionOfDtlhs) => Outcome::Unk,
    };
    Controller {
        states: problem.states,
        actions: problem.actions,
        enabled,
        j,
        outcome,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// The enabled action has no successor.
    EmptyImage,
    /// A run reaches a non-goal state outside the domain.
    Escape,
    /// A run revisits a state without passing through the goal.
    Loop,
    /// Every run reaches the goal, but some take more than `J(s)` steps.
    SlowerThanJ { bound: u32, actual: u32 },
}

/// A path `s₀ a₀ s₁ a₁ … s_n` witnessing a violation at its first state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub steps: Vec<(u64, u64)>,
    pub last: u64,
    pub violation: Violation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub verified: bool,
    /// Worst-case steps to the goal over the domain, when verified.
    pub max_steps: u32,
    pub counterexample: Option<Counterexample>,
}

/// Exhaustively checks that from every state of the controller's domain
/// every run of the closed loop reaches the goal, in at least one and at
/// most `J(s)` steps.
pub fn verify_controller(problem: &FiniteControlProblem, controller: &Controller) -> VerificationReport {
    let images = problem.images();
    let goal = &problem.goal;
    let empty: Vec<u64> = Vec::new();
    let img = |s: u64, a: u64| images.get(&(s, a)).unwrap_or(&empty);
    // Worst-case distance of the closed loop, by the same level iteration.
    let mut worst: BTreeMap<u64, u32> = BTreeMap::new();
    let mut level = 0u32;
    loop {
        level += 1;
        let next: Vec<u64> = controller
            .enabled
            .iter()
            .filter(|(s, _)| !worst.contains_key(s))
            .filter(|(&s, acts)| {
                acts.iter().all(|&a| {
                    let succ = img(s, a);
                    !succ.is_empty() && succ.iter().all(|n| goal.contains(n) || worst.contains_key(n))
                })
            })
            .map(|(&s, _)| s)
            .collect();
        if next.is_empty() {
            break;
        }
        for s in next {
            worst.insert(s, level);
        }
    }
    let rank = |n: u64| if goal.contains(&n) { Some(0) } else { worst.get(&n).copied() };

    for &s in controller.enabled.keys() {
        if worst.contains_key(&s) {
            continue;
        }
        let mut steps = Vec::new();
        let mut seen = BTreeSet::new();
        let mut cur = s;
        let violation = loop {
            seen.insert(cur);
            let Some(acts) = controller.enabled.get(&cur) else {
                break Violation::Escape;
            };
            let bad = acts.iter().find_map(|&a| {
                let succ = img(cur, a);
                if succ.is_empty() {
                    return Some((a, None));
                }
                succ.iter().find(|&&n| rank(n).is_none()).map(|&n| (a, Some(n)))
            });
            let (a, next) = bad.expect("unverified state has a failing action");
            match next {
                None => {
                    steps.push((cur, a));
                    break Violation::EmptyImage;
                }
                Some(n) => {
                    steps.push((cur, a));
                    cur = n;
                    if seen.contains(&n) {
                        break Violation::Loop;
                    }
                }
            }
        };
        return VerificationReport {
            verified: false,
            max_steps: 0,
            counterexample: Some(Counterexample {
                steps,
                last: cur,
                violation,
            }),
        };
    }

    for (&s, &w) in &worst {
        let bound = controller.j.get(&s).copied().unwrap_or(0);
        if w > bound {
            // Follow a slowest successor down to the goal.
            let mut steps = Vec::new();
            let mut cur = s;
            loop {
                let (a, n) = controller.enabled[&cur]
                    .iter()
                    .flat_map(|&a| img(cur, a).iter().map(move |&n| (a, n)))
                    .max_by_key(|&(_, n)| rank(n).unwrap_or(0))
                    .expect("verified state has successors");
                steps.push((cur, a));
                cur = n;
                if goal.contains(&cur) {
                    break;
                }
            }
            return VerificationReport {
                verified: false,
                max_steps: 0,
                counterexample: Some(Counterexample {
                    steps,
                    last: cur,
                    violation: Violation::SlowerThanJ { bound, actual: w },
                }),
            };
        }
    }
    VerificationReport {
        verified: true,
        max_steps: worst.values().copied().max().unwrap_or(0),
        counterexample: None,
    }
}

/// Transitions of the closed loop under `controller`.
pub fn closed_loop(problem: &FiniteControlProblem, controller: &Controller) -> AbstractTransitionSet {
    problem
        .transitions
        .iter()
        .filter(|t| controller.is_enabled(t.state, t.action))
        .copied()
        .collect()
}

#[cfg(test)]
mod tests;
