//! File-exchange protocol for multi-process runs.
//!
//! The master writes the model to `<job>/model.qsm` and launches workers
//! `2..=p` as `<program> <args..> worker --job <job> --index i --workers p`,
//! computing worker 1 itself. Each worker writes `local_<i>_of_<p>.qsa`,
//! flushes it, then writes `local_<i>_of_<p>.done` holding its timing as
//! JSON. The master gathers once every marker is present.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};

use super::{
    deserialize_local, from_unix_nanos, reduce, serialize_local, unix_nanos, worker_run, LocalAbstraction,
    MapReduceError, ParallelRun, TimingReport, WorkerTiming,
};
use crate::model::{parse_model, print_model, Model};

pub const MODEL_FILE: &str = "model.qsm";

#[derive(Clone, Debug)]
pub struct MultiProcessConfig {
    /// Executable that understands the `worker` subcommand.
    pub program: PathBuf,
    /// Arguments placed before `worker`.
    pub args: Vec<String>,
    /// Directory under which a fresh job directory is created.
    pub spool: PathBuf,
    pub poll: Duration,
    /// Give up waiting for markers after this long.
    pub timeout: Option<Duration>,
    /// Leave the job directory in place after a successful run.
    pub keep: bool,
}

impl MultiProcessConfig {
    pub fn new(program: impl Into<PathBuf>, spool: impl Into<PathBuf>) -> Self {
        MultiProcessConfig {
            program: program.into(),
            args: Vec::new(),
            spool: spool.into(),
            poll: Duration::from_millis(5),
            timeout: None,
            keep: false,
        }
    }
}

/// Contents of a completion marker.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Marker {
    states: usize,
    compute_ns: u128,
    io_ns: u128,
    finished_unix_ns: u128,
    per_state_ns: Vec<u64>,
}

pub fn local_path(job: &Path, i: u32, p: u32) -> PathBuf {
    job.join(format!("local_{i}_of_{p}.qsa"))
}

pub fn done_path(job: &Path, i: u32, p: u32) -> PathBuf {
    job.join(format!("local_{i}_of_{p}.done"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MapReduceError + '_ {
    move |source| MapReduceError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), MapReduceError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

/// Creates a fresh job directory holding the model text.
pub fn prepare_job(model: &Model, spool: &Path) -> Result<PathBuf, MapReduceError> {
    fs::create_dir_all(spool).map_err(io_err(spool))?;
    let stamp = unix_nanos(SystemTime::now());
    let mut n = 0u32;
    let job = loop {
        let candidate = spool.join(format!("job-{}-{stamp}-{n}", std::process::id()));
        match fs::create_dir(&candidate) {
            Ok(()) => break candidate,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(io_err(&candidate)(e)),
        }
    };
    let path = job.join(MODEL_FILE);
    write_synced(&path, print_model(model).as_bytes())?;
    Ok(job)
}

fn load_job_model(job: &Path) -> Result<Model, MapReduceError> {
    let path = job.join(MODEL_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(parse_model(&text)?)
}

fn publish(job: &Path, local: &LocalAbstraction, timing: &mut WorkerTiming) -> Result<(), MapReduceError> {
    let (i, p) = (local.worker, local.workers);
    let t0 = Instant::now();
    write_synced(&local_path(job, i, p), &serialize_local(local))?;
    timing.io = t0.elapsed().as_secs_f64();
    let finished = SystemTime::now();
    timing.finished = Some(finished);
    let marker = Marker {
        states: timing.states,
        compute_ns: (timing.compute * 1e9) as u128,
        io_ns: (timing.io * 1e9) as u128,
        finished_unix_ns: unix_nanos(finished),
        per_state_ns: timing.per_state.iter().map(|s| (s * 1e9) as u64).collect(),
    };
    let json = serde_json::to_vec(&marker).expect("marker serializes");
    write_synced(&done_path(job, i, p), &json)
}

/// Worker side: computes share `i` of `p` of the model in `job` and publishes it.
pub fn run_worker_job(job: &Path, i: u32, p: u32) -> Result<(), MapReduceError> {
    let model = load_job_model(job)?;
    let (local, mut timing) = worker_run(&model, i, p)?;
    publish(job, &local, &mut timing)
}

fn read_marker(path: &Path, i: u32) -> Result<WorkerTiming, MapReduceError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let m: Marker = serde_json::from_slice(&bytes).map_err(|e| MapReduceError::WorkerFailed {
        index: i,
        message: format!("unreadable completion marker {}: {e}", path.display()),
    })?;
    Ok(WorkerTiming {
        index: i,
        states: m.states,
        compute: m.compute_ns as f64 * 1e-9,
        io: m.io_ns as f64 * 1e-9,
        wait: 0.0,
        on_master: false,
        per_state: m.per_state_ns.iter().map(|&n| n as f64 * 1e-9).collect(),
        finished: Some(from_unix_nanos(m.finished_unix_ns)),
    })
}

/// Reads every published local abstraction of `job`; returns them with the
/// workers' timings and the master's read time.
pub fn collect(job: &Path, p: u32) -> Result<(Vec<LocalAbstraction>, Vec<WorkerTiming>, f64), MapReduceError> {
    let t0 = Instant::now();
    let mut locals = Vec::with_capacity(p as usize);
    let mut timings = Vec::with_capacity(p as usize);
    for i in 1..=p {
        let done = done_path(job, i, p);
        if !done.exists() {
            return Err(MapReduceError::MissingWorker { index: i });
        }
        timings.push(read_marker(&done, i)?);
        let path = local_path(job, i, p);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let local = deserialize_local(&bytes).map_err(|source| MapReduceError::Format {
            path: path.display().to_string(),
            source,
        })?;
        if local.worker != i || local.workers != p {
            return Err(MapReduceError::WorkerFailed {
                index: i,
                message: format!("{} holds worker {} of {}", path.display(), local.worker, local.workers),
            });
        }
        locals.push(local);
    }
    Ok((locals, timings, t0.elapsed().as_secs_f64()))
}

struct Children(Vec<(u32, Child)>);

impl Drop for Children {
    fn drop(&mut self) {
        for (_, c) in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn wait_for_markers(job: &Path, p: u32, children: &mut Children, cfg: &MultiProcessConfig) -> Result<(), MapReduceError> {
    let start = Instant::now();
    loop {
        let pending: Vec<u32> = (1..=p).filter(|&i| !done_path(job, i, p).exists()).collect();
        if pending.is_empty() {
            return Ok(());
        }
        for (i, child) in &mut children.0 {
            let status = child.try_wait().map_err(|e| MapReduceError::WorkerFailed {
                index: *i,
                message: e.to_string(),
            })?;
            if let Some(status) = status {
                // The marker may land between the scan above and the exit.
                if !status.success() || !done_path(job, *i, p).exists() {
                    let mut message = format!("exited with {status}");
                    if let Some(mut err) = child.stderr.take() {
                        let mut text = String::new();
                        let _ = std::io::Read::read_to_string(&mut err, &mut text);
                        let text = text.trim();
                        if !text.is_empty() {
                            message = format!("{message}: {text}");
                        }
                    }
                    return Err(MapReduceError::WorkerFailed { index: *i, message });
                }
            }
        }
        if let Some(limit) = cfg.timeout {
            if start.elapsed() > limit {
                return Err(MapReduceError::WorkerFailed {
                    index: pending[0],
                    message: format!("no completion marker after {:.1} s", limit.as_secs_f64()),
                });
            }
        }
        std::thread::sleep(cfg.poll);
    }
}

pub(super) fn run_multi_process(model: &Model, p: u32, cfg: &MultiProcessConfig) -> Result<ParallelRun, MapReduceError> {
    let start = Instant::now();
    let job = prepare_job(model, &cfg.spool)?;
    let result = orchestrate(model, p, cfg, &job, start);
    if result.is_err() || !cfg.keep {
        let _ = fs::remove_dir_all(&job);
    }
    result
}

fn orchestrate(model: &Model, p: u32, cfg: &MultiProcessConfig, job: &Path, start: Instant) -> Result<ParallelRun, MapReduceError> {
    let mut children = Children(Vec::new());
    for i in 2..=p {
        let child = Command::new(&cfg.program)
            .args(&cfg.args)
            .arg("worker")
            .arg("--job")
            .arg(job)
            .arg("--index")
            .arg(i.to_string())
            .arg("--workers")
            .arg(p.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| MapReduceError::WorkerFailed {
                index: i,
                message: format!("cannot launch {}: {e}", cfg.program.display()),
            })?;
        children.0.push((i, child));
    }
    let (local, mut timing) = worker_run(model, 1, p)?;
    publish(job, &local, &mut timing)?;
    wait_for_markers(job, p, &mut children, cfg)?;
    for (i, c) in &mut children.0 {
        let status = c.wait().map_err(|e| MapReduceError::WorkerFailed {
            index: *i,
            message: e.to_string(),
        })?;
        if !status.success() {
            return Err(MapReduceError::WorkerFailed {
                index: *i,
                message: format!("exited with {status}"),
            });
        }
    }
    children.0.clear();
    let (locals, mut workers, master_io) = collect(job, p)?;
    workers[0].on_master = true;
    let t0 = Instant::now();
    let transitions = reduce(&locals, Some(model.fingerprint()))?;
    let mut report = TimingReport {
        workers,
        wall: 0.0,
        master_io,
        reduce: t0.elapsed().as_secs_f64(),
    };
    report.settle_waits();
    report.wall = start.elapsed().as_secs_f64();
    Ok(ParallelRun { transitions, report })
}
