//! Best-bound branch and bound over the simplex relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::simplex::{self, LpResult, Row};
use super::MilpError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Maximum number of branch-and-bound nodes before giving up.
    pub node_limit: usize,
    pub int_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_limit: 100_000,
            int_tol: 1e-9,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// The heap pops the greatest node: lowest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

fn branching_variable(x: &[f64], integer: &[bool], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in x.iter().enumerate() {
        if !integer[j] {
            continue;
        }
        let frac = v - v.floor();
        let score = frac.min(1.0 - frac);
        if score > tol && best.is_none_or(|(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// Rounds integer variables and, if that moved anything, re-solves the LP
/// with the integers fixed so the continuous part is consistent.
fn polish(rows: &[Row], lo: &[f64], hi: &[f64], integer: &[bool], cost: &[f64], x: &[f64]) -> Result<Option<(Vec<f64>, f64)>, MilpError> {
    let mut rounded = x.to_vec();
    let mut moved = false;
    for j in 0..x.len() {
        if integer[j] {
            let r = x[j].round();
            if r != x[j] {
                moved = true;
            }
            rounded[j] = r;
        }
    }
    if !moved {
        let value = cost.iter().zip(x).map(|(c, v)| c * v).sum();
        return Ok(Some((rounded, value)));
    }
    let mut flo = lo.to_vec();
    let mut fhi = hi.to_vec();
    for j in 0..x.len() {
        if integer[j] {
            flo[j] = rounded[j];
            fhi[j] = rounded[j];
        }
    }
    match simplex::solve(rows, &flo, &fhi, cost)? {
        LpResult::Optimal { x, value } => Ok(Some((x, value))),
        LpResult::Infeasible => Ok(None),
    }
}

/// Minimizes `cost · x` over the mixed lattice. With `first_feasible` the
/// search stops at the first integer-feasible point.
pub(crate) fn solve(
    rows: &[Row],
    lo: &[f64],
    hi: &[f64],
    integer: &[bool],
    cost: &[f64],
    opts: &SolveOptions,
    first_feasible: bool,
) -> Result<Option<(Vec<f64>, f64)>, MilpError> {
    let mut lo = lo.to_vec();
    let mut hi = hi.to_vec();
    for j in 0..lo.len() {
        if integer[j] {
            lo[j] = (lo[j] - opts.int_tol).ceil();
            hi[j] = (hi[j] + opts.int_tol).floor();
        }
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut nodes = 0usize;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;

    let mut consider = |lo: Vec<f64>,
                        hi: Vec<f64>,
                        depth: usize,
                        heap: &mut BinaryHeap<Node>,
                        incumbent: &mut Option<(Vec<f64>, f64)>|
     -> Result<(), MilpError> {
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(MilpError::NodeLimit { limit: opts.node_limit });
        }
        let LpResult::Optimal { x, value } = simplex::solve(rows, &lo, &hi, cost)? else {
            return Ok(());
        };
        if let Some((_, best)) = incumbent {
            if value >= *best - 1e-9 * (1.0 + best.abs()) {
                return Ok(());
            }
        }
        if branching_variable(&x, integer, opts.int_tol).is_none() {
            if let Some((w, v)) = polish(rows, &lo, &hi, integer, cost, &x)? {
                if incumbent.as_ref().is_none_or(|(_, best)| v < *best) {
                    *incumbent = Some((w, v));
                }
            }
            return Ok(());
        }
        seq += 1;
        heap.push(Node {
            bound: value,
            depth,
            seq,
            lo,
            hi,
            x,
        });
        Ok(())
    };

    consider(lo, hi, 0, &mut heap, &mut incumbent)?;
    while let Some(node) = heap.pop() {
        if first_feasible && incumbent.is_some() {
            break;
        }
        if let Some((_, best)) = &incumbent {
            if node.bound >= *best - 1e-9 * (1.0 + best.abs()) {
                continue;
            }
        }
        let j = branching_variable(&node.x, integer, opts.int_tol).expect("queued nodes are fractional");
        let v = node.x[j];
        let mut down_hi = node.hi.clone();
        down_hi[j] = v.floor();
        consider(node.lo.clone(), down_hi, node.depth + 1, &mut heap, &mut incumbent)?;
        if first_feasible && incumbent.is_some() {
            break;
        }
        let mut up_lo = node.lo;
        up_lo[j] = v.ceil();
        consider(up_lo, node.hi, node.depth + 1, &mut heap, &mut incumbent)?;
    }
    Ok(incumbent)
}
