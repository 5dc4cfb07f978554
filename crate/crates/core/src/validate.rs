//! Independent checks of a computed abstraction against the plant.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::{AbstractTransitionSet, AbstractionEngine, ImageBox, Triple};
use crate::model::Model;
use crate::rational;
use crate::simulator::{DtlhsStepper, Resolver, SimError, Stepper};

/// Slack allowed when checking that a sampled successor lies in an image box.
pub const IMAGE_TOL: f64 = 1e-7;

/// Triples of `set` for which no concrete witness exists.
pub fn recheck_triples(engine: &AbstractionEngine, set: &AbstractTransitionSet) -> Result<Vec<Triple>, SimError> {
    let mut bad = Vec::new();
    for t in set.iter() {
        let ok = if t.state == t.next {
            engine.self_loop(t.state, t.action)?
        } else {
            engine.exists_trans(t.state, t.action, t.next)?
        };
        if !ok {
            bad.push(*t);
        }
    }
    Ok(bad)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleReport {
    pub samples: usize,
    /// Samples from an admissible pair that changed cell.
    pub checked: usize,
    /// Cell-changing transitions missing from the abstraction.
    pub missing: Vec<(Vec<f64>, u64, Vec<f64>)>,
    /// Successors outside the image box of their pair.
    pub outside_image: Vec<(Vec<f64>, u64, Vec<f64>)>,
    /// Successors of admissible pairs that left the admissible region.
    pub escaped: Vec<(Vec<f64>, u64, Vec<f64>)>,
    /// Samples with no successor at all.
    pub stuck: usize,
}

impl SampleReport {
    pub fn violations(&self) -> usize {
        self.missing.len() + self.outside_image.len() + self.escaped.len()
    }
}

/// A uniformly random concrete state of the admissible region.
pub fn random_state(model: &Model, rng: &mut impl Rng) -> Vec<f64> {
    let space = model.quantization.states();
    space
        .dims
        .iter()
        .map(|d| {
            let (lo, hi) = (rational::to_f64(&d.lo), rational::to_f64(&d.hi));
            if d.is_identity() {
                rng.gen_range(lo.ceil() as i64..=hi.floor() as i64) as f64
            } else {
                rng.gen_range(lo..=hi)
            }
        })
        .collect()
}

/// A random action code with a random input value from its cell.
pub fn random_input(model: &Model, rng: &mut impl Rng) -> Result<(u64, Vec<f64>), SimError> {
    let space = model.quantization.inputs();
    let action = rng.gen_range(1..=space.count());
    let cell = space.cell_f64(action)?;
    let u = space
        .dims
        .iter()
        .zip(cell)
        .map(|(d, (lo, hi))| if d.is_identity() || lo == hi { lo } else { rng.gen_range(lo..=hi) })
        .collect();
    Ok((action, u))
}

/// Samples concrete transitions with `stepper` and checks that every
/// cell-changing transition from an admissible pair is in `set`, and that
/// every successor lies in the image box of its pair.
pub fn sample_transitions(
    engine: &AbstractionEngine,
    set: &AbstractTransitionSet,
    stepper: &mut dyn Stepper,
    samples: usize,
    seed: u64,
) -> Result<SampleReport, SimError> {
    let model = engine.model();
    let space = model.quantization.states();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut admissible: BTreeMap<(u64, u64), bool> = BTreeMap::new();
    let mut images: BTreeMap<(u64, u64), Option<ImageBox>> = BTreeMap::new();
    let mut report = SampleReport {
        samples,
        ..SampleReport::default()
    };
    for _ in 0..samples {
        let x = random_state(model, &mut rng);
        let (a, u) = random_input(model, &mut rng)?;
        let s = space.quantize_f64(&x)?;
        let ok = match admissible.get(&(s, a)) {
            Some(v) => *v,
            None => {
                let v = engine.q_admissible(s, a)?;
                admissible.insert((s, a), v);
                v
            }
        };
        if !ok {
            continue;
        }
        let xn = match stepper.step(&x, &u) {
            Ok(xn) => xn,
            Err(SimError::Stuck { .. }) => {
                report.stuck += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let image = match images.get(&(s, a)) {
            Some(i) => i.clone(),
            None => {
                let i = engine.over_img(s, a)?;
                images.insert((s, a), i.clone());
                i
            }
        };
        let inside = image.as_ref().is_some_and(|b| {
            b.iter()
                .zip(&xn)
                .all(|((lo, hi), v)| *v >= lo - IMAGE_TOL && *v <= hi + IMAGE_TOL)
        });
        if !inside {
            report.outside_image.push((x.clone(), a, xn.clone()));
        }
        let Ok(n) = space.quantize_f64(&xn) else {
            report.escaped.push((x, a, xn));
            continue;
        };
        if n == s {
            continue;
        }
        report.checked += 1;
        if !set.contains(&Triple::new(s, a, n)) {
            report.missing.push((x, a, xn));
        }
    }
    Ok(report)
}

/// Checks that the relation of `model` admits the successor computed by
/// `exact` for random states and actions; returns the rejected samples.
pub fn check_overapproximation(
    model: &Model,
    exact: &mut dyn Stepper,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, SimError> {
    let relation = DtlhsStepper::new(model, Resolver::LexMin)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = Vec::new();
    for _ in 0..samples {
        let x = random_state(model, &mut rng);
        let (_, u) = random_input(model, &mut rng)?;
        let xn = exact.step(&x, &u)?;
        if !relation.admits(&x, &u, &xn, tol)? {
            rejected.push((x, u, xn));
        }
    }
    Ok(rejected)
}
