//! Closed-loop simulation of a concrete plant under a control table.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abstraction::{AbstractionEngine, AbstractionError};
use crate::benchmarks::{step_nonlinear_pendulum, PendulumParams};
use crate::codegen::{ControlTable, OUTSIDE};
use crate::milp::{MilpError, Query, SolveOptions};
use crate::model::Model;
use crate::quantizer::QuantizeError;
use crate::rational;
use crate::synth::{StateRegion, SynthError};

/// Slack used when pinning the previous lexicographic optimum.
const LEX_TOL: f64 = 1e-9;
/// Tolerance on the admissible region.
pub const REGION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no successor exists from {state:?} under input {input:?}")]
    Stuck { state: Vec<f64>, input: Vec<f64> },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
}

/// One step of a concrete plant.
pub trait Stepper {
    fn step(&mut self, state: &[f64], input: &[f64]) -> Result<Vec<f64>, SimError>;

    /// Seed of the resolver, when it is randomized.
    fn seed(&self) -> Option<u64> {
        None
    }
}

/// How the MILP stepper picks among the admissible successors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolver {
    /// Minimizes the next-state components in declaration order.
    LexMin,
    /// Maximizes a random direction, which lands on an extreme successor.
    RandomVertex { seed: u64 },
}

/// Steps a plant given by its transition relation.
pub struct DtlhsStepper<'m> {
    engine: AbstractionEngine<'m>,
    resolver: Resolver,
    rng: ChaCha8Rng,
    opts: SolveOptions,
}

impl<'m> DtlhsStepper<'m> {
    pub fn new(model: &'m Model, resolver: Resolver) -> Result<Self, SimError> {
        let seed = match resolver {
            Resolver::RandomVertex { seed } => seed,
            Resolver::LexMin => 0,
        };
        Ok(DtlhsStepper {
            engine: AbstractionEngine::new(model)?,
            resolver,
            rng: ChaCha8Rng::seed_from_u64(seed),
            opts: SolveOptions::default(),
        })
    }

    fn pinned(&self, state: &[f64], input: &[f64]) -> Result<Query, SimError> {
        let (sc, ic) = (self.engine.state_columns(), self.engine.input_columns());
        if state.len() != sc.len() {
            return Err(SimError::Dimension {
                expected: sc.len(),
                got: state.len(),
            });
        }
        if input.len() != ic.len() {
            return Err(SimError::Dimension {
                expected: ic.len(),
                got: input.len(),
            });
        }
        let mut q = Query::new();
        for (&c, &v) in sc.iter().zip(state).chain(ic.iter().zip(input)) {
            q = q.bound(c, v, v);
        }
        Ok(q)
    }

    /// Whether some auxiliary assignment links `state`, `input` and a
    /// successor within `tol` of `next`.
    pub fn admits(&self, state: &[f64], input: &[f64], next: &[f64], tol: f64) -> Result<bool, SimError> {
        let mut q = self.pinned(state, input)?;
        let cols = self.engine.next_columns();
        if next.len() != cols.len() {
            return Err(SimError::Dimension {
                expected: cols.len(),
                got: next.len(),
            });
        }
        for (&c, &v) in cols.iter().zip(next) {
            q = q.bound(c, v - tol, v + tol);
        }
        Ok(self.engine.compiled().solve(&q, &self.opts)?.is_feasible())
    }

    fn stuck(state: &[f64], input: &[f64]) -> SimError {
        SimError::Stuck {
            state: state.to_vec(),
            input: input.to_vec(),
        }
    }
}

impl Stepper for DtlhsStepper<'_> {
    fn step(&mut self, state: &[f64], input: &[f64]) -> Result<Vec<f64>, SimError> {
        let mut q = self.pinned(state, input)?;
        let next = self.engine.next_columns().to_vec();
        let compiled = self.engine.compiled();
        match self.resolver {
            Resolver::LexMin => {
                let mut witness = None;
                for &c in &next {
                    let out = compiled.solve(&q.clone().minimize(vec![(c, 1.0)]), &self.opts)?;
                    let w = out.witness().ok_or_else(|| Self::stuck(state, input))?.to_vec();
                    q = q.bound(c, w[c] - LEX_TOL, w[c] + LEX_TOL);
                    witness = Some(w);
                }
                let w = match witness {
                    Some(w) => w,
                    None => compiled
                        .solve(&q, &self.opts)?
                        .witness()
                        .ok_or_else(|| Self::stuck(state, input))?
                        .to_vec(),
                };
                Ok(next.iter().map(|&c| w[c]).collect())
            }
            Resolver::RandomVertex { .. } => {
                let dir: Vec<(usize, f64)> = next.iter().map(|&c| (c, self.rng.gen_range(-1.0..=1.0))).collect();
                let out = compiled.solve(&q.maximize(dir), &self.opts)?;
                let w = out.witness().ok_or_else(|| Self::stuck(state, input))?;
                Ok(next.iter().map(|&c| w[c]).collect())
            }
        }
    }

    fn seed(&self) -> Option<u64> {
        match self.resolver {
            Resolver::RandomVertex { seed } => Some(seed),
            Resolver::LexMin => None,
        }
    }
}

/// One exact Dtlhs step with the lexicographic resolver.
pub fn step_dtlhs(model: &Model, state: &[f64], input: &[f64]) -> Result<Vec<f64>, SimError> {
    DtlhsStepper::new(model, Resolver::LexMin)?.step(state, input)
}

/// The nonlinear pendulum, with the angle wrapped into `[−π, π]` as in the
/// linearized model.
pub struct PendulumStepper {
    pub params: PendulumParams,
}

impl Stepper for PendulumStepper {
    fn step(&mut self, state: &[f64], input: &[f64]) -> Result<Vec<f64>, SimError> {
        if state.len() != 2 || input.len() != 1 {
            return Err(SimError::Dimension {
                expected: 2,
                got: state.len(),
            });
        }
        let [a, w] = step_nonlinear_pendulum([state[0], state[1]], input[0], &self.params);
        Ok(vec![wrap_angle(a), w])
    }
}

/// Maps an angle into `[−π, π]` using the model's value of π.
pub fn wrap_angle(a: f64) -> f64 {
    let pi = rational::to_f64(&rational::pi());
    if a > pi {
        a - 2.0 * pi
    } else if a < -pi {
        a + 2.0 * pi
    } else {
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedGoal(usize),
    StepLimit,
    LeftAdmissible,
    OutsideControlled,
    /// The plant has no successor for the applied input.
    Stuck,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// Visited states with the action applied there; the final state carries
    /// [`OUTSIDE`] when no action was applied.
    pub steps: Vec<(Vec<f64>, i64)>,
    pub termination: Termination,
    pub seed: Option<u64>,
}

impl Trace {
    pub fn reached_goal(&self) -> Option<usize> {
        match self.termination {
            Termination::ReachedGoal(k) => Some(k),
            _ => None,
        }
    }

    /// Number of steps that moved the state to a different cell of `table`.
    pub fn cell_changes(&self, table: &ControlTable) -> usize {
        self.steps
            .windows(2)
            .filter(|w| table.state_index(&w[0].0) != table.state_index(&w[1].0))
            .count()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.steps.last().expect("a trace has at least one state").0
    }

    /// CSV with header `step,<vars>,action`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("step");
        for n in names {
            let _ = write!(out, ",{n}");
        }
        out.push_str(",action\n");
        for (k, (x, a)) in self.steps.iter().enumerate() {
            let _ = write!(out, "{k}");
            for v in x {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{a}");
        }
        out
    }
}

/// Admissible region and goal used to classify states during a run.
pub struct LoopSpec<'a> {
    pub region: Vec<(f64, f64)>,
    pub goal: &'a StateRegion,
    pub epsilon: f64,
    pub max_steps: usize,
}

impl<'a> LoopSpec<'a> {
    pub fn new(model: &Model, goal: &'a StateRegion, epsilon: f64, max_steps: usize) -> Self {
        let plant = &model.plant;
        let region = plant
            .states()
            .iter()
            .map(|&v| {
                let x = plant.var(v);
                (rational::to_f64(&x.lo), rational::to_f64(&x.hi))
            })
            .collect();
        LoopSpec {
            region,
            goal,
            epsilon,
            max_steps,
        }
    }

    fn admissible(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.region)
            .all(|(v, (lo, hi))| *v >= lo - REGION_TOL && *v <= hi + REGION_TOL)
    }
}

/// Quantize, look up, apply, step; until the goal ball is entered at some
/// step `k ≥ 1` or the run ends for another reason.
pub fn run_closed_loop(stepper: &mut dyn Stepper, table: &ControlTable, spec: &LoopSpec, x0: &[f64]) -> Result<Trace, SimError> {
    let mut x = x0.to_vec();
    let mut steps = Vec::new();
    let finish = |mut steps: Vec<(Vec<f64>, i64)>, x: Vec<f64>, termination, seed| {
        steps.push((x, OUTSIDE));
        Ok(Trace { steps, termination, seed })
    };
    for k in 0.. {
        if !spec.admissible(&x) {
            return finish(steps, x, Termination::LeftAdmissible, stepper.seed());
        }
        if k > 0 && spec.goal.ball_contains_point(&x, spec.epsilon)? {
            return finish(steps, x, Termination::ReachedGoal(k), stepper.seed());
        }
        if k == spec.max_steps {
            return finish(steps, x, Termination::StepLimit, stepper.seed());
        }
        let a = table.lookup(&x);
        if a == OUTSIDE {
            return finish(steps, x, Termination::OutsideControlled, stepper.seed());
        }
        let u = table.action_values(a as u64);
        let next = match stepper.step(&x, &u) {
            Ok(next) => next,
            Err(SimError::Stuck { .. }) => {
                steps.push((x, a));
                return Ok(Trace {
                    steps,
                    termination: Termination::Stuck,
                    seed: stepper.seed(),
                });
            }
            Err(e) => return Err(e),
        };
        steps.push((x, a));
        x = next;
    }
    unreachable!("the loop returns")
}

/// Outcome counts over many runs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Summary {
    pub runs: usize,
    pub reached: usize,
    pub step_limit: usize,
    pub left: usize,
    pub outside: usize,
    pub stuck: usize,
    /// Runs from a controlled state that needed more than `J` cell changes.
    pub late: usize,
}

impl Summary {
    /// Adds a run whose initial state had level `j` (`None` outside the
    /// controlled set) and which changed cell `changes` times.
    pub fn add(&mut self, trace: &Trace, j: Option<u32>, changes: usize) {
        self.runs += 1;
        match trace.termination {
            Termination::ReachedGoal(_) => {
                self.reached += 1;
                if j.is_some_and(|j| changes > j as usize) {
                    self.late += 1;
                }
            }
            Termination::StepLimit => self.step_limit += 1,
            Termination::LeftAdmissible => self.left += 1,
            Termination::OutsideControlled => self.outside += 1,
            Termination::Stuck => self.stuck += 1,
        }
    }
}
