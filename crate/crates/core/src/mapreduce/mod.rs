//! Parallel abstraction by static round-robin partitioning of the abstract
//! states, followed by a union of the workers' local results.
//!
//! Two modes share the same map and reduce steps. In-process mode runs one
//! thread per worker, with worker 1 computed by the calling thread. Multi-
//! process mode launches worker processes that exchange their results through
//! files in a spool directory; see [`spool`].

mod format;
pub mod spool;

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{AbstractTransitionSet, AbstractionEngine, AbstractionError};
use crate::model::{Model, ModelError};

pub use format::{deserialize_local, serialize_local, FormatError, LocalAbstraction, MAGIC, VERSION};
pub use spool::MultiProcessConfig;

#[derive(Debug, Error)]
pub enum MapReduceError {
    #[error("invalid partition parameters: {0}")]
    InvalidParameters(String),
    #[error("worker {index}: {source}")]
    Worker {
        index: u32,
        #[source]
        source: AbstractionError,
    },
    #[error("worker {index} failed: {message}")]
    WorkerFailed { index: u32, message: String },
    #[error("local abstraction of worker {index} has a different model fingerprint")]
    FingerprintMismatch { index: u32 },
    #[error("no local abstraction from worker {index}")]
    MissingWorker { index: u32 },
    #[error("worker {index} reported more than once")]
    DuplicateWorker { index: u32 },
    #[error("worker {index} reported a state outside its partition")]
    ForeignState { index: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

/// Flat indices `j` of `1..=states` with `1 + ((j − 1) mod p) = i`, ascending.
pub fn partition_states(i: u32, p: u32, states: u64) -> Result<Vec<u64>, MapReduceError> {
    if p == 0 || i == 0 || i > p {
        return Err(MapReduceError::InvalidParameters(format!("worker {i} of {p}")));
    }
    Ok((u64::from(i)..=states).step_by(p as usize).collect())
}

pub fn owner(state: u64, p: u32) -> u32 {
    1 + ((state - 1) % u64::from(p)) as u32
}

/// Time accounting for one worker; all durations in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerTiming {
    pub index: u32,
    pub states: usize,
    /// Time spent computing local transitions.
    pub compute: f64,
    /// Time spent writing the local abstraction.
    pub io: f64,
    /// Time between this worker finishing and the last worker finishing.
    pub wait: f64,
    /// Whether the worker ran in the master's thread of control.
    pub on_master: bool,
    /// Compute time of each assigned state, in partition order.
    pub per_state: Vec<f64>,
    #[serde(skip)]
    pub(crate) finished: Option<SystemTime>,
}

impl WorkerTiming {
    fn new(index: u32) -> Self {
        WorkerTiming {
            index,
            states: 0,
            compute: 0.0,
            io: 0.0,
            wait: 0.0,
            on_master: false,
            per_state: Vec::new(),
            finished: None,
        }
    }

    /// The slowest state of this worker and its time.
    pub fn hardest_state(&self) -> Option<(usize, f64)> {
        self.per_state
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Timing of a parallel run, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub workers: Vec<WorkerTiming>,
    /// Master wall clock from start to reduced result.
    pub wall: f64,
    /// Time the master spent reading local abstractions.
    pub master_io: f64,
    pub reduce: f64,
}

impl TimingReport {
    /// Communication time: synchronization wait plus all I/O.
    pub fn communication(&self) -> f64 {
        self.workers.iter().map(|w| w.wait + w.io).sum::<f64>() + self.master_io
    }

    pub fn io(&self) -> f64 {
        self.workers.iter().map(|w| w.io).sum::<f64>() + self.master_io
    }

    pub fn busy(&self) -> Vec<f64> {
        self.workers.iter().map(|w| w.compute).collect()
    }

    /// Largest busy time over the mean; 1 means perfect balance.
    pub fn imbalance(&self) -> f64 {
        let busy = self.busy();
        if busy.is_empty() {
            return 1.0;
        }
        let mean = busy.iter().sum::<f64>() / busy.len() as f64;
        let max = busy.iter().copied().fold(0.0, f64::max);
        if mean > 0.0 {
            max / mean
        } else {
            1.0
        }
    }

    /// For each worker, the number of its states whose compute time falls in
    /// each of `bins` equal-width bins spanning zero to the slowest state.
    pub fn busy_histogram(&self, bins: usize) -> Vec<Vec<usize>> {
        let bins = bins.max(1);
        let top = self
            .workers
            .iter()
            .flat_map(|w| w.per_state.iter().copied())
            .fold(0.0, f64::max);
        self.workers
            .iter()
            .map(|w| {
                let mut h = vec![0; bins];
                for t in &w.per_state {
                    let b = if top > 0.0 { ((t / top) * bins as f64) as usize } else { 0 };
                    h[b.min(bins - 1)] += 1;
                }
                h
            })
            .collect()
    }

    fn settle_waits(&mut self) {
        let last = self.workers.iter().filter_map(|w| w.finished).max();
        if let Some(last) = last {
            for w in &mut self.workers {
                if let Some(f) = w.finished {
                    w.wait = last.duration_since(f).unwrap_or(Duration::ZERO).as_secs_f64();
                }
            }
        }
    }
}

/// Computes worker `i`'s share of the abstraction.
pub fn worker_run(model: &Model, i: u32, p: u32) -> Result<(LocalAbstraction, WorkerTiming), MapReduceError> {
    let states = partition_states(i, p, model.quantization.state_count())?;
    let engine = AbstractionEngine::new(model).map_err(|source| MapReduceError::Worker { index: i, source })?;
    let mut transitions = AbstractTransitionSet::new();
    let mut timing = WorkerTiming::new(i);
    timing.states = states.len();
    timing.per_state.reserve(states.len());
    let start = Instant::now();
    for s in states {
        let t0 = Instant::now();
        engine
            .min_ctr_abs_aux(s, &mut transitions)
            .map_err(|source| MapReduceError::Worker { index: i, source })?;
        timing.per_state.push(t0.elapsed().as_secs_f64());
    }
    timing.compute = start.elapsed().as_secs_f64();
    timing.finished = Some(SystemTime::now());
    Ok((
        LocalAbstraction {
            worker: i,
            workers: p,
            fingerprint: model.fingerprint(),
            transitions,
        },
        timing,
    ))
}

/// Union of local abstractions after checking that they come from the same
/// model and cover workers `1..=p` exactly once.
pub fn reduce(locals: &[LocalAbstraction], fingerprint: Option<[u8; 32]>) -> Result<AbstractTransitionSet, MapReduceError> {
    let Some(first) = locals.first() else {
        return Err(MapReduceError::InvalidParameters("no local abstractions".into()));
    };
    let p = first.workers;
    let expected = fingerprint.unwrap_or(first.fingerprint);
    let mut seen = vec![false; p as usize];
    for l in locals {
        if l.workers != p || l.worker == 0 || l.worker > p {
            return Err(MapReduceError::InvalidParameters(format!(
                "worker {} of {} mixed with worker count {p}",
                l.worker, l.workers
            )));
        }
        if l.fingerprint != expected {
            return Err(MapReduceError::FingerprintMismatch { index: l.worker });
        }
        if std::mem::replace(&mut seen[l.worker as usize - 1], true) {
            return Err(MapReduceError::DuplicateWorker { index: l.worker });
        }
        if l.transitions.iter().any(|t| owner(t.state, p) != l.worker) {
            return Err(MapReduceError::ForeignState { index: l.worker });
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(MapReduceError::MissingWorker {
            index: missing as u32 + 1,
        });
    }
    let mut out = AbstractTransitionSet::new();
    for l in locals {
        out.union_with(&l.transitions);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum Mode {
    InProcess,
    MultiProcess(MultiProcessConfig),
}

#[derive(Clone, Debug)]
pub struct ParallelRun {
    pub transitions: AbstractTransitionSet,
    pub report: TimingReport,
}

/// Computes the abstraction with `p` workers.
pub fn run_parallel(model: &Model, p: u32, mode: &Mode) -> Result<ParallelRun, MapReduceError> {
    if p == 0 {
        return Err(MapReduceError::InvalidParameters("worker count must be at least 1".into()));
    }
    match mode {
        Mode::InProcess => run_in_process(model, p),
        Mode::MultiProcess(cfg) => spool::run_multi_process(model, p, cfg),
    }
}

fn run_in_process(model: &Model, p: u32) -> Result<ParallelRun, MapReduceError> {
    let start = Instant::now();
    let master = std::thread::current().id();
    let results: Vec<Result<(LocalAbstraction, WorkerTiming), MapReduceError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (2..=p)
            .map(|i| scope.spawn(move || worker_run(model, i, p)))
            .collect();
        let mut first = worker_run(model, 1, p);
        if let Ok((_, t)) = &mut first {
            t.on_master = std::thread::current().id() == master;
        }
        let mut all = vec![first];
        for (k, h) in handles.into_iter().enumerate() {
            all.push(h.join().unwrap_or_else(|_| {
                Err(MapReduceError::WorkerFailed {
                    index: k as u32 + 2,
                    message: "worker thread panicked".into(),
                })
            }));
        }
        all
    });
    let mut locals = Vec::with_capacity(p as usize);
    let mut workers = Vec::with_capacity(p as usize);
    for r in results {
        let (l, t) = r?;
        locals.push(l);
        workers.push(t);
    }
    let t0 = Instant::now();
    let transitions = reduce(&locals, Some(model.fingerprint()))?;
    let mut report = TimingReport {
        workers,
        wall: 0.0,
        master_io: 0.0,
        reduce: t0.elapsed().as_secs_f64(),
    };
    report.settle_waits();
    report.wall = start.elapsed().as_secs_f64();
    Ok(ParallelRun { transitions, report })
}

pub(crate) fn unix_nanos(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_nanos()
}

pub(crate) fn from_unix_nanos(n: u128) -> SystemTime {
    UNIX_EPOCH + Duration::from_nanos(n.min(u64::MAX as u128) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{min_ctr_abs, Triple};
    use crate::model::parse_model;
    use proptest::prelude::*;

    const EX33: &str = "\
state x real [-1, 5/2] levels 7;
input u bool;
trans {
  !u -> x' = x + (5/4 - x)/10;
  u -> x' = x + (x - 7/4)/10;
}
goal { x = 0; }
";

    #[test]
    fn round_robin_partition() {
        assert_eq!(partition_states(1, 3, 8).unwrap(), vec![1, 4, 7]);
        assert_eq!(partition_states(1, 1, 5).unwrap(), vec![1, 2, 3, 4, 5]);
        for i in 1..=5 {
            assert_eq!(partition_states(i, 5, 5).unwrap(), vec![u64::from(i)]);
        }
        assert!(partition_states(7, 8, 5).unwrap().is_empty());
        assert!(partition_states(0, 3, 8).is_err());
        assert!(partition_states(4, 3, 8).is_err());
        assert!(partition_states(1, 0, 8).is_err());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_covering_and_balanced(p in 1u32..20, n in 0u64..200) {
            let parts: Vec<Vec<u64>> = (1..=p).map(|i| partition_states(i, p, n).unwrap()).collect();
            let mut all: Vec<u64> = parts.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (1..=n).collect::<Vec<_>>());
            let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            for (k, part) in parts.iter().enumerate() {
                prop_assert!(part.iter().all(|&s| owner(s, p) == k as u32 + 1));
            }
        }
    }

    #[test]
    fn workers_split_the_serial_result() {
        let m = parse_model(EX33).unwrap();
        let serial = min_ctr_abs(&m).unwrap();
        let (a, _) = worker_run(&m, 1, 2).unwrap();
        let (b, _) = worker_run(&m, 2, 2).unwrap();
        assert!(a.transitions.sources().is_disjoint(&b.transitions.sources()));
        assert_eq!(reduce(&[b.clone(), a.clone()], None).unwrap(), serial);
        assert_eq!(reduce(&[a.clone(), b.clone()], Some(m.fingerprint())).unwrap(), serial);
        let (one, _) = worker_run(&m, 1, 1).unwrap();
        assert_eq!(one.transitions, serial);
    }

    #[test]
    fn spare_workers_return_nothing() {
        let m = parse_model(EX33).unwrap();
        let (l, t) = worker_run(&m, 9, 9).unwrap();
        assert!(l.transitions.is_empty());
        assert_eq!(t.states, 0);
    }

    #[test]
    fn reduce_checks_its_inputs() {
        let m = parse_model(EX33).unwrap();
        let (a, _) = worker_run(&m, 1, 2).unwrap();
        let (b, _) = worker_run(&m, 2, 2).unwrap();
        assert!(matches!(reduce(&[a.clone()], None), Err(MapReduceError::MissingWorker { index: 2 })));
        assert!(matches!(
            reduce(&[a.clone(), a.clone()], None),
            Err(MapReduceError::DuplicateWorker { index: 1 })
        ));
        let mut c = b.clone();
        c.fingerprint[0] ^= 1;
        assert!(matches!(
            reduce(&[a.clone(), c], None),
            Err(MapReduceError::FingerprintMismatch { index: 2 })
        ));
        let mut d = b;
        d.transitions.insert(Triple::new(1, 1, 1));
        assert!(matches!(reduce(&[a, d], None), Err(MapReduceError::ForeignState { index: 2 })));
        let single = worker_run(&m, 1, 1).unwrap().0;
        assert_eq!(reduce(std::slice::from_ref(&single), None).unwrap(), single.transitions);
    }

    #[test]
    fn in_process_runs_match_serial() {
        let m = parse_model(EX33).unwrap();
        let serial = min_ctr_abs(&m).unwrap();
        for p in [1, 2, 3, 7, 10] {
            let run = run_parallel(&m, p, &Mode::InProcess).unwrap();
            assert_eq!(run.transitions, serial, "p = {p}");
            assert_eq!(run.report.workers.len(), p as usize);
            assert!(run.report.workers[0].on_master);
            assert!(run.report.workers[1..].iter().all(|w| !w.on_master));
            assert_eq!(run.report.busy_histogram(4).len(), p as usize);
        }
        assert!(run_parallel(&m, 0, &Mode::InProcess).is_err());
    }
}
