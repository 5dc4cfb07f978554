//! Dense bounded-variable primal simplex.
//!
//! Every row gets a slack (`[0, ∞)` for `<=`, `[0, 0]` for `=`) and an
//! artificial column. Phase one minimizes the sum of artificials, phase two
//! the caller's cost. Pricing is Dantzig's rule until a run of degenerate
//! pivots is seen, after which Bland's rule is used for the rest of the solve.

use super::MilpError;

pub(crate) const PIVOT_TOL: f64 = 1e-9;
pub(crate) const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REFRESH_EVERY: usize = 40;

/// One constraint row `Σ a_j x_j (<= | =) rhs`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub eq: bool,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpResult {
    Infeasible,
    Optimal { x: Vec<f64>, value: f64 },
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<Option<usize>>,
    sign: Vec<f64>,
    d: Vec<f64>,
    bland: bool,
    degenerate: usize,
    pivots: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn slack(&self, i: usize) -> usize {
        self.n + i
    }

    fn art(&self, i: usize) -> usize {
        self.n + self.m + i
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn build(rows: &[Row], lo: &[f64], hi: &[f64]) -> Tableau {
        let m = rows.len();
        let n = lo.len();
        let width = n + 2 * m;
        let mut t = vec![0.0; m * width];
        let mut vlo = Vec::with_capacity(width);
        let mut vhi = Vec::with_capacity(width);
        vlo.extend_from_slice(lo);
        vhi.extend_from_slice(hi);
        for r in rows {
            vlo.push(0.0);
            vhi.push(if r.eq { 0.0 } else { f64::INFINITY });
        }
        for _ in 0..m {
            vlo.push(0.0);
            vhi.push(f64::INFINITY);
        }
        let mut x = vec![0.0; width];
        for j in 0..n {
            x[j] = if lo[j].is_finite() {
                lo[j]
            } else if hi[j].is_finite() {
                hi[j]
            } else {
                0.0
            };
        }
        let mut basis = vec![0; m];
        let mut pos = vec![None; width];
        let mut sign = vec![1.0; m];
        for (i, r) in rows.iter().enumerate() {
            let activity: f64 = r.coeffs.iter().map(|(j, a)| a * x[*j]).sum();
            let resid = r.rhs - activity;
            let row = &mut t[i * width..(i + 1) * width];
            for (j, a) in &r.coeffs {
                row[*j] += a;
            }
            row[n + i] = 1.0;
            if !r.eq && resid >= 0.0 {
                row[n + m + i] = 1.0;
                basis[i] = n + i;
                x[n + i] = resid;
            } else {
                let s = if resid >= 0.0 { 1.0 } else { -1.0 };
                sign[i] = s;
                row[n + m + i] = s;
                if s < 0.0 {
                    for v in row.iter_mut() {
                        *v = -*v;
                    }
                }
                basis[i] = n + m + i;
                x[n + m + i] = resid.abs();
            }
            pos[basis[i]] = Some(i);
        }
        // Artificials not in the initial basis are fixed at zero.
        for i in 0..m {
            if basis[i] != n + m + i {
                vhi[n + m + i] = 0.0;
            }
        }
        let max_iterations = 200 * (width + m) + 5_000;
        Tableau {
            m,
            n,
            width,
            t,
            lo: vlo,
            hi: vhi,
            x,
            basis,
            pos,
            sign,
            d: vec![0.0; width],
            bland: false,
            degenerate: 0,
            pivots: 0,
            iterations: 0,
            max_iterations,
        }
    }

    fn price(&mut self, cost: &[f64]) {
        for j in 0..self.width {
            let mut dj = cost[j];
            for i in 0..self.m {
                dj -= cost[self.basis[i]] * self.at(i, j);
            }
            self.d[j] = dj;
        }
    }

    /// Recomputes basic values from the nonbasic ones using the inverse basis
    /// stored in the artificial columns.
    fn refresh(&mut self, rows: &[Row]) {
        let mut resid = vec![0.0; self.m];
        for (k, r) in rows.iter().enumerate() {
            let mut v = r.rhs;
            for (j, a) in &r.coeffs {
                if self.pos[*j].is_none() {
                    v -= a * self.x[*j];
                }
            }
            let s = self.slack(k);
            if self.pos[s].is_none() {
                v -= self.x[s];
            }
            let a = self.art(k);
            if self.pos[a].is_none() {
                v -= self.sign[k] * self.x[a];
            }
            resid[k] = v;
        }
        for i in 0..self.m {
            let mut v = 0.0;
            for (k, rk) in resid.iter().enumerate() {
                v += self.at(i, self.art(k)) * self.sign[k] * rk;
            }
            let b = self.basis[i];
            self.x[b] = v;
        }
    }

    fn eligible(&self, j: usize) -> Option<f64> {
        if self.pos[j].is_some() || self.hi[j] - self.lo[j] <= 0.0 {
            return None;
        }
        let dj = self.d[j];
        let at_lower = self.x[j] <= self.lo[j];
        let at_upper = self.x[j] >= self.hi[j];
        if dj < -OPT_TOL && !at_upper {
            Some(1.0)
        } else if dj > OPT_TOL && !at_lower {
            Some(-1.0)
        } else {
            None
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.width {
            if let Some(dir) = self.eligible(j) {
                if self.bland {
                    return Some((j, dir));
                }
                let score = self.d[j].abs();
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((j, dir, score));
                }
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Runs the simplex loop for `cost`; returns false if the direction is
    /// unbounded.
    fn optimize(&mut self, cost: &[f64], rows: &[Row]) -> Result<bool, MilpError> {
        self.price(cost);
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(MilpError::NumericalInstability(format!(
                    "simplex iteration limit {} reached",
                    self.max_iterations
                )));
            }
            let Some((e, dir)) = self.choose_entering() else {
                return Ok(true);
            };
            // Ratio test. The entering variable can move by its own range.
            let mut step = self.hi[e] - self.lo[e];
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_alpha = 0.0f64;
            for i in 0..self.m {
                let alpha = self.at(i, e);
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let change = -dir * alpha;
                let (limit, bound) = if change < 0.0 {
                    ((self.x[b] - self.lo[b]) / -change, self.lo[b])
                } else {
                    ((self.hi[b] - self.x[b]) / change, self.hi[b])
                };
                if !limit.is_finite() {
                    continue;
                }
                let limit = limit.max(0.0);
                let better = if limit < step - FEAS_TOL {
                    true
                } else if limit <= step + FEAS_TOL {
                    match leave {
                        None => false,
                        Some((bi, _)) if self.bland => b < self.basis[bi],
                        Some(_) => alpha.abs() > leave_alpha.abs(),
                    }
                } else {
                    false
                };
                if better {
                    step = step.min(limit);
                    leave = Some((i, bound));
                    leave_alpha = alpha;
                }
            }
            if step.is_infinite() {
                return Ok(false);
            }
            if step <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            // Move along the edge.
            self.x[e] += dir * step;
            for i in 0..self.m {
                let alpha = self.at(i, e);
                if alpha != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * alpha * step;
                }
            }
            match leave {
                None => {
                    // Bound flip of the entering variable.
                    self.x[e] = if dir > 0.0 { self.hi[e] } else { self.lo[e] };
                }
                Some((r, bound)) => {
                    let b = self.basis[r];
                    self.pivot(r, e);
                    self.x[b] = bound;
                    if self.pivots % REFRESH_EVERY == 0 {
                        self.refresh(rows);
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.at(r, e);
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.at(i, e);
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[e] = 0.0;
        }
        let f = self.d[e];
        if f != 0.0 {
            for (v, pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.d[e] = 0.0;
        }
        let old = self.basis[r];
        self.pos[old] = None;
        self.basis[r] = e;
        self.pos[e] = Some(r);
        self.pivots += 1;
    }
}

/// Minimizes `cost · x` subject to `rows` and `lo <= x <= hi`.
pub(crate) fn solve(rows: &[Row], lo: &[f64], hi: &[f64], cost: &[f64]) -> Result<LpResult, MilpError> {
    let n = lo.len();
    for j in 0..n {
        if lo[j] > hi[j] + FEAS_TOL {
            return Ok(LpResult::Infeasible);
        }
    }
    let hi: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| h.max(*l)).collect();
    let mut tab = Tableau::build(rows, lo, &hi);
    let m = tab.m;

    let mut phase1 = vec![0.0; tab.width];
    let mut any_art = false;
    for i in 0..m {
        if tab.basis[i] == tab.art(i) {
            phase1[tab.art(i)] = 1.0;
            any_art = true;
        }
    }
    if any_art {
        tab.optimize(&phase1, rows)?;
        tab.refresh(rows);
        let bnorm = rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let infeas: f64 = (0..m).map(|i| tab.x[tab.art(i)].max(0.0)).sum();
        if infeas > FEAS_TOL * (1.0 + bnorm) {
            return Ok(LpResult::Infeasible);
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            let b = tab.basis[i];
            if b < tab.n + m {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..tab.n + m {
                let a = tab.at(i, j).abs();
                if tab.pos[j].is_none() && a > 1e-7 && best.is_none_or(|(_, s)| a > s) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                tab.pivot(i, j);
                tab.x[b] = 0.0;
            }
        }
        for i in 0..m {
            let a = tab.art(i);
            tab.hi[a] = 0.0;
            if tab.pos[a].is_none() {
                tab.x[a] = 0.0;
            }
        }
        tab.refresh(rows);
    }

    let mut phase2 = vec![0.0; tab.width];
    phase2[..n].copy_from_slice(cost);
    tab.bland = false;
    tab.degenerate = 0;
    if !tab.optimize(&phase2, rows)? {
        return Err(MilpError::NumericalInstability("unbounded direction in a bounded problem".into()));
    }
    tab.refresh(rows);

    let mut x: Vec<f64> = tab.x[..n].to_vec();
    for j in 0..n {
        if x[j] < lo[j] {
            if x[j] < lo[j] - 1e-7 {
                return Err(MilpError::NumericalInstability(format!("variable {j} below its bound by {}", lo[j] - x[j])));
            }
            x[j] = lo[j];
        }
        if x[j] > hi[j] {
            if x[j] > hi[j] + 1e-7 {
                return Err(MilpError::NumericalInstability(format!("variable {j} above its bound by {}", x[j] - hi[j])));
            }
            x[j] = hi[j];
        }
    }
    for (k, r) in rows.iter().enumerate() {
        let act: f64 = r.coeffs.iter().map(|(j, a)| a * x[*j]).sum();
        let viol = if r.eq { (act - r.rhs).abs() } else { act - r.rhs };
        if viol > 1e-6 * (1.0 + r.rhs.abs()) {
            return Err(MilpError::NumericalInstability(format!("row {k} violated by {viol:e}")));
        }
    }
    let value = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpResult::Optimal { x, value })
}
