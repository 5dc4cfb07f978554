use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use qsynth_core::abstraction::AbstractTransitionSet;
use qsynth_core::benchmarks::PendulumParams;
use qsynth_core::codegen::{determinize, emit_c_header, emit_c_source, emit_json, read_json, ControlTable};
use qsynth_core::mapreduce::{self, deserialize_local, serialize_local, LocalAbstraction, Mode, MultiProcessConfig, ParallelRun};
use qsynth_core::model::Model;
use qsynth_core::rational;
use qsynth_core::simulator::{run_closed_loop, DtlhsStepper, LoopSpec, PendulumStepper, Resolver, Stepper, Summary};
use qsynth_core::synth::{
    controller_from_bytes, controller_to_bytes, controller_to_text, parse_lts, strong_solve, verify_controller, Controller,
    FiniteControlProblem, Outcome, StateRegion,
};

use crate::args::*;
use crate::load::{self, epsilon, hex, load_model, usage, write};

pub const ABSTRACTION_FILE: &str = "abstraction.qsa";
pub const CONTROLLER_FILE: &str = "controller.qctl";

/// Exit status of a command.
pub enum Status {
    Done,
    Outcome(Outcome),
}

fn mode(parallel_mode: ModeArg, spool: &Option<PathBuf>, out: &Path) -> Result<Mode> {
    Ok(match parallel_mode {
        ModeArg::Inproc => Mode::InProcess,
        ModeArg::Multiproc => {
            let exe = std::env::current_exe().context("cannot locate the qsynth executable")?;
            let spool = spool.clone().unwrap_or_else(|| out.join("spool"));
            std::fs::create_dir_all(&spool).with_context(|| format!("cannot create {}", spool.display()))?;
            Mode::MultiProcess(MultiProcessConfig::new(exe, spool))
        }
    })
}

fn run_abstraction(model: &Model, p: u32, m: &Mode) -> Result<ParallelRun> {
    if p == 0 {
        return Err(usage("worker count must be at least 1"));
    }
    Ok(mapreduce::run_parallel(model, p, m)?)
}

fn abstraction_bytes(model: &Model, transitions: &AbstractTransitionSet) -> Vec<u8> {
    serialize_local(&LocalAbstraction {
        worker: 1,
        workers: 1,
        fingerprint: model.fingerprint(),
        transitions: transitions.clone(),
    })
}

pub fn cmd_abstract(a: &AbstractArgs) -> Result<Status> {
    let loaded = load_model(&a.model)?;
    let model = &loaded.model;
    let m = mode(a.parallel.mode, &a.parallel.spool, &a.out)?;
    let run = run_abstraction(model, a.parallel.workers, &m)?;
    write(&a.out.join(ABSTRACTION_FILE), abstraction_bytes(model, &run.transitions))?;
    let r = &run.report;
    let timing = json!({
        "fingerprint": hex(&model.fingerprint()),
        "bits": loaded.bits,
        "workers": a.parallel.workers,
        "mode": format!("{:?}", a.parallel.mode).to_lowercase(),
        "triples": run.transitions.len(),
        "communication": r.communication(),
        "busy": r.busy(),
        "imbalance": r.imbalance(),
        "report": r,
    });
    write(&a.out.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
    let q = &model.quantization;
    println!(
        "abstraction: {} triples over {} states and {} actions",
        run.transitions.len(),
        q.state_count(),
        q.action_count()
    );
    println!(
        "workers {} wall {:.3}s communication {:.3}s imbalance {:.2}",
        a.parallel.workers,
        r.wall,
        r.communication(),
        r.imbalance()
    );
    for (w, busy) in r.workers.iter().zip(r.busy()) {
        let hardest = w
            .hardest_state()
            .map(|(s, t)| format!(", hardest state {s} {t:.4}s"))
            .unwrap_or_default();
        println!("  worker {}: {} states, busy {busy:.3}s{hardest}", w.index, w.states);
    }
    Ok(Status::Done)
}

fn lts_text(ctrl: &Controller, label: impl Fn(u64) -> i64, action: impl Fn(u64) -> i64) -> String {
    let mut out = format!("outcome {}\n# state action J\n", ctrl.outcome);
    for (s, a) in ctrl.pairs() {
        let _ = writeln!(out, "{} {} {}", label(s), action(a), ctrl.j[&s]);
    }
    out
}

fn write_controller(out: &Path, ctrl: &Controller, fingerprint: &[u8; 32]) -> Result<()> {
    write(&out.join(CONTROLLER_FILE), controller_to_bytes(ctrl, fingerprint))?;
    write(&out.join("controller.txt"), controller_to_text(ctrl))
}

fn check_verified(problem: &FiniteControlProblem, ctrl: &Controller) -> Result<u32> {
    let report = verify_controller(problem, ctrl);
    if !report.verified {
        bail!("synthesized controller failed verification: {:?}", report.counterexample);
    }
    Ok(report.max_steps)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Status> {
    if let Some(path) = &a.lts {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let lts = parse_lts(&text).with_context(|| format!("in {}", path.display()))?;
        let problem = lts.problem()?;
        let ctrl = strong_solve(&problem);
        check_verified(&problem, &ctrl)?;
        let fingerprint: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        write_controller(&a.out, &ctrl, &fingerprint)?;
        let labelled = lts_text(&ctrl, |s| lts.state_label(s), |x| lts.action_label(x));
        write(&a.out.join("controller.lts.txt"), &labelled)?;
        println!("outcome {}: {} of {} states controlled", ctrl.outcome, ctrl.dom().len(), lts.states.len());
        print!("{}", labelled.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
        return Ok(Status::Outcome(ctrl.outcome));
    }
    let loaded = load_model(&a.model)?;
    let model = &loaded.model;
    let eps = epsilon(model, a.epsilon.as_deref())?;
    let transitions = match &a.abstraction {
        Some(path) => {
            let local = deserialize_local(&load::read_bytes(path)?).with_context(|| format!("in {}", path.display()))?;
            if local.fingerprint != model.fingerprint() {
                bail!("{} was computed for a different model", path.display());
            }
            local.transitions
        }
        None => {
            let m = mode(a.parallel.mode, &a.parallel.spool, &a.out)?;
            run_abstraction(model, a.parallel.workers, &m)?.transitions
        }
    };
    let problem = FiniteControlProblem::from_abstraction(model, transitions, &eps)?;
    let start = Instant::now();
    let ctrl = strong_solve(&problem);
    let cpu_k = start.elapsed().as_secs_f64();
    let max_steps = check_verified(&problem, &ctrl)?;
    let fingerprint = model.fingerprint();
    write_controller(&a.out, &ctrl, &fingerprint)?;
    let dom = ctrl.dom();
    let covered = problem.init().iter().filter(|s| dom.contains(s)).count();
    let summary = json!({
        "fingerprint": hex(&fingerprint),
        "outcome": ctrl.outcome.to_string(),
        "epsilon": rational::format(&eps),
        "states": problem.state_count(),
        "actions": problem.action_count(),
        "goal": problem.goal().len(),
        "init": problem.init().len(),
        "init_covered": covered,
        "dom": dom.len(),
        "max_j": ctrl.max_j(),
        "worst_case_steps": max_steps,
        "cpu_k": cpu_k,
    });
    write(&a.out.join("synth.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "outcome {}: {} of {} states controlled, {} of {} initial states covered, max J {}",
        ctrl.outcome,
        dom.len(),
        problem.state_count(),
        covered,
        problem.init().len(),
        ctrl.max_j()
    );
    Ok(Status::Outcome(ctrl.outcome))
}

pub fn cmd_codegen(a: &CodegenArgs) -> Result<Status> {
    let model = load_model(&a.model)?.model;
    let bytes = load::read_bytes(&a.controller)?;
    let (ctrl, fingerprint) = controller_from_bytes(&bytes).with_context(|| format!("in {}", a.controller.display()))?;
    if fingerprint != model.fingerprint() {
        bail!("{} was synthesized for a different model", a.controller.display());
    }
    let table = determinize(&ctrl, &model)?;
    let header = format!("{}.h", a.name);
    write(&a.out.join(format!("{}.json", a.name)), emit_json(&table))?;
    write(&a.out.join(&header), emit_c_header(&table))?;
    write(&a.out.join(format!("{}.c", a.name)), emit_c_source(&table, &header)?)?;
    println!(
        "{} controlled states of {}, {} actions; wrote {}.{{json,h,c}}",
        table.entries.len(),
        table.state_count(),
        table.action_count(),
        a.out.join(&a.name).display()
    );
    Ok(Status::Done)
}

fn draw_start(rng: &mut ChaCha8Rng, model: &Model, table: &ControlTable, in_domain: bool) -> Result<Vec<f64>> {
    let space = model.quantization.states();
    let boxes = if in_domain {
        if table.entries.is_empty() {
            bail!("the control table is empty");
        }
        let e = table.entries[rng.gen_range(0..table.entries.len())];
        space.cell_f64(e.state)?
    } else {
        let plant = &model.plant;
        plant
            .states()
            .iter()
            .map(|&v| {
                let x = plant.var(v);
                (rational::to_f64(&x.lo), rational::to_f64(&x.hi))
            })
            .collect()
    };
    Ok(space
        .dims
        .iter()
        .zip(boxes)
        .map(|(d, (lo, hi))| {
            if d.is_identity() {
                rng.gen_range(lo.ceil() as i64..=hi.floor() as i64) as f64
            } else {
                rng.gen_range(lo..=hi)
            }
        })
        .collect())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Status> {
    let model = load_model(&a.model)?.model;
    let text = std::fs::read_to_string(&a.table).with_context(|| format!("cannot read {}", a.table.display()))?;
    let table = read_json(&text).with_context(|| format!("in {}", a.table.display()))?;
    if table.fingerprint != hex(&model.fingerprint()) {
        bail!("{} was generated for a different model", a.table.display());
    }
    let eps = rational::to_f64(&epsilon(&model, a.epsilon.as_deref())?);
    let goal = StateRegion::new(&model, &model.goal)?;
    let spec = LoopSpec::new(&model, &goal, eps, a.max_steps);
    let mut stepper: Box<dyn Stepper> = match a.plant {
        PlantArg::Dtlhs => {
            let resolver = match a.resolver {
                ResolverArg::Lexmin => Resolver::LexMin,
                ResolverArg::Random => Resolver::RandomVertex { seed: a.seed },
            };
            Box::new(DtlhsStepper::new(&model, resolver)?)
        }
        PlantArg::Nonlinear => {
            if a.model.builtin != Some(Builtin::Pendulum) {
                return Err(usage("--plant nonlinear requires --builtin pendulum"));
            }
            let mut params = PendulumParams::default();
            if let Some(f) = &a.model.force {
                params.force = load::parse_rational(f)?;
            }
            Box::new(PendulumStepper { params })
        }
    };
    let names: Vec<String> = model.plant.states().iter().map(|&v| model.plant.var(v).name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut summary = Summary::default();
    let mut in_dom = 0;
    let mut runs = Vec::new();
    for k in 0..a.runs {
        let x0 = draw_start(&mut rng, &model, &table, a.in_domain)?;
        let j = table.state_index(&x0).and_then(|s| {
            table
                .entries
                .binary_search_by_key(&s, |e| e.state)
                .ok()
                .map(|i| table.entries[i].j)
        });
        in_dom += usize::from(j.is_some());
        let trace = run_closed_loop(stepper.as_mut(), &table, &spec, &x0)?;
        let changes = trace.cell_changes(&table);
        summary.add(&trace, j, changes);
        write(&a.out.join("traces").join(format!("run_{k:04}.csv")), trace.to_csv(&names))?;
        runs.push(json!({
            "start": x0,
            "J": j,
            "termination": format!("{:?}", trace.termination),
            "steps": trace.steps.len() - 1,
            "cell_changes": changes,
        }));
    }
    let coverage = table.entries.len() as f64 / table.state_count() as f64;
    let report = json!({
        "fingerprint": table.fingerprint,
        "seed": a.seed,
        "epsilon": eps,
        "runs": summary.runs,
        "in_domain": in_dom,
        "reached": summary.reached,
        "late": summary.late,
        "step_limit": summary.step_limit,
        "left_admissible": summary.left,
        "outside_controlled": summary.outside,
        "stuck": summary.stuck,
        "dom_coverage": coverage,
        "details": runs,
    });
    write(&a.out.join("simulation.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "runs {} in-domain {} reached {} late {} outside {} left {} step-limit {} stuck {} (dom coverage {:.1}%)",
        summary.runs,
        in_dom,
        summary.reached,
        summary.late,
        summary.outside,
        summary.left,
        summary.step_limit,
        summary.stuck,
        100.0 * coverage
    );
    Ok(Status::Done)
}

/// Header of the timing table.
pub const REPORT_HEADER: &str = "b,CPU Ctrabs,p,CT,IO,Speedup,Efficiency,CPU K";

pub fn cmd_report(a: &ReportArgs) -> Result<Status> {
    let loaded = load_model(&a.model)?;
    let model = &loaded.model;
    let mut ps = load::parse_list(&a.workers_list)?;
    if ps.is_empty() {
        return Err(usage("--workers-list is empty"));
    }
    let m = mode(a.mode, &a.spool, &a.out)?;
    let serial_listed = ps.contains(&1);
    if !serial_listed {
        ps.insert(0, 1);
    }
    let mut runs = Vec::new();
    for &p in &ps {
        runs.push((p, run_abstraction(model, p, &m)?));
    }
    let eps = epsilon(model, a.epsilon.as_deref())?;
    let problem = FiniteControlProblem::from_abstraction(model, runs[0].1.transitions.clone(), &eps)?;
    let start = Instant::now();
    let ctrl = strong_solve(&problem);
    let cpu_k = start.elapsed().as_secs_f64();
    let serial = runs[0].1.report.wall;
    let b = loaded.bits.map(|b| b.to_string()).unwrap_or_else(|| "-".into());
    let mut csv = format!("{REPORT_HEADER}\n");
    let mut busy = String::from("p,worker,states,compute,io,wait,busy\n");
    for (p, run) in &runs {
        for (w, t) in run.report.workers.iter().zip(run.report.busy()) {
            let _ = writeln!(busy, "{p},{},{},{:.6},{:.6},{:.6},{t:.6}", w.index, w.states, w.compute, w.io, w.wait);
        }
        if *p == 1 && !serial_listed {
            continue;
        }
        let r = &run.report;
        let ct = r.workers.iter().map(|w| w.compute).sum::<f64>() / r.workers.len() as f64;
        let speedup = serial / r.wall;
        let _ = writeln!(
            csv,
            "{b},{:.3e},{p},{ct:.3e},{:.3e},{speedup:.2},{:.1},{cpu_k:.3e}",
            r.wall,
            r.communication(),
            100.0 * speedup / *p as f64
        );
    }
    write(&a.out.join("report.csv"), &csv)?;
    write(&a.out.join("busy.csv"), &busy)?;
    print!("{csv}");
    println!("outcome {}", ctrl.outcome);
    Ok(Status::Done)
}

pub fn cmd_worker(a: &WorkerArgs) -> Result<Status> {
    mapreduce::spool::run_worker_job(&a.job, a.index, a.workers)?;
    Ok(Status::Done)
}
