//! Bounded-variable revised primal simplex.
//!
//! Every row `i` gets a logical variable `r_i` with `A x - r = 0`, so the row
//! sense becomes a bound on `r_i` and the all-logical basis is always
//! available. Phase 1 minimises the sum of bound violations of the basic
//! variables; phase 2 continues from the feasible basis. The basis inverse is
//! kept as a sparse LU plus a product-form eta file, refactorized every
//! `refactor_interval` pivots.

use super::lu::{factorize, LuFactors};
use super::{LinearProgram, LpOptions, LpSolution, LpStatus, Objective, Residuals, RowSense};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
enum VarState {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

struct Eta<T> {
    pos: usize,
    pivot: T,
    entries: Vec<(usize, T)>,
}

/// Equilibrated copy of the problem in internal (minimisation) form.
struct Scaled<T> {
    n: usize,
    m: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<T>,
    cost: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
    row_scale: Vec<T>,
    col_scale: Vec<T>,
    cost_scale: T,
}

fn pow2_round<T: Scalar>(x: T) -> T {
    if !(x.is_finite() && x > T::zero()) {
        return T::one();
    }
    T::lit(2.0).powi(x.log2().round().to_i32().unwrap_or(0))
}

impl<T: Scalar> Scaled<T> {
    fn new(lp: &LinearProgram<T>, scale: bool) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();

        let mut trip: Vec<(usize, usize, T)> = lp.triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        trip.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(trip.len());
        for (c, r, v) in trip {
            match merged.last_mut() {
                Some(last) if last.0 == c && last.1 == r => last.2 += v,
                _ => merged.push((c, r, v)),
            }
        }
        merged.retain(|e| e.2 != T::zero());

        let mut row_scale = vec![T::one(); m];
        let mut col_scale = vec![T::one(); n];
        let passes = if scale { 6 } else { 0 };
        for _pass in 0..passes {
            let mut rmin = vec![T::infinity(); m];
            let mut rmax = vec![T::zero(); m];
            for &(c, r, v) in &merged {
                let a = (v * col_scale[c]).abs();
                rmin[r] = rmin[r].min(a);
                rmax[r] = rmax[r].max(a);
            }
            for i in 0..m {
                if rmax[i] > T::zero() {
                    row_scale[i] = T::one() / (rmin[i] * rmax[i]).sqrt();
                }
            }
            let mut cmin = vec![T::infinity(); n];
            let mut cmax = vec![T::zero(); n];
            for &(c, r, v) in &merged {
                let a = (v * row_scale[r]).abs();
                cmin[c] = cmin[c].min(a);
                cmax[c] = cmax[c].max(a);
            }
            for j in 0..n {
                if cmax[j] > T::zero() {
                    col_scale[j] = T::one() / (cmin[j] * cmax[j]).sqrt();
                }
            }
        }
        // clamped so that tolerances on the scaled problem stay meaningful
        let cap = T::lit(1024.0);
        row_scale.iter_mut().for_each(|s| *s = pow2_round(*s).max(cap.recip()).min(cap));
        col_scale.iter_mut().for_each(|s| *s = pow2_round(*s).max(cap.recip()).min(cap));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(merged.len());
        let mut vals = Vec::with_capacity(merged.len());
        for &(c, r, v) in &merged {
            col_ptr[c + 1] += 1;
            row_idx.push(r);
            vals.push(v * row_scale[r] * col_scale[c]);
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }

        let sign = match lp.sense {
            Objective::Minimize => T::one(),
            Objective::Maximize => -T::one(),
        };
        let cmax = (0..n).fold(T::zero(), |acc, j| acc.max((lp.objective[j] * col_scale[j]).abs()));
        let cost_scale = pow2_round(cmax);
        let mut cost = vec![T::zero(); n + m];
        for j in 0..n {
            cost[j] = sign * lp.objective[j] * col_scale[j] / cost_scale;
        }

        let mut lo = vec![T::zero(); n + m];
        let mut hi = vec![T::zero(); n + m];
        for j in 0..n {
            lo[j] = lp.lower[j] / col_scale[j];
            hi[j] = lp.upper[j] / col_scale[j];
        }
        for i in 0..m {
            let b = lp.rhs[i] * row_scale[i];
            let (l, h) = match lp.row_senses[i] {
                RowSense::Le => (T::neg_infinity(), b),
                RowSense::Ge => (b, T::infinity()),
                RowSense::Eq => (b, b),
            };
            lo[n + i] = l;
            hi[n + i] = h;
        }

        Self { n, m, col_ptr, row_idx, vals, cost, lo, hi, row_scale, col_scale, cost_scale }
    }

    #[inline]
    fn for_each_in_col(&self, j: usize, mut f: impl FnMut(usize, T)) {
        if j < self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                f(self.row_idx[k], self.vals[k]);
            }
        } else {
            f(j - self.n, -T::one());
        }
    }

    #[inline]
    fn dot_col(&self, j: usize, y: &[T]) -> T {
        if j < self.n {
            let mut s = T::zero();
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                s += self.vals[k] * y[self.row_idx[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }
}

/// Triangular crash: moves free and half-bounded structural columns into the
/// basis in place of row logicals, keeping the basis triangular.
fn crash<T: Scalar>(p: &Scaled<T>, head: &mut [usize]) {
    let class = |j: usize| match (p.lo[j].is_finite(), p.hi[j].is_finite()) {
        (false, false) => 0,
        (true, true) => 2,
        _ => 1,
    };
    let mut order: Vec<usize> = (0..p.n).filter(|&j| class(j) < 2 && p.col_ptr[j + 1] > p.col_ptr[j]).collect();
    order.sort_by_key(|&j| (class(j), p.col_ptr[j + 1] - p.col_ptr[j], j));
    let mut avail = vec![true; p.m];
    for j in order {
        let mut best: Option<(usize, T)> = None;
        let mut colmax = T::zero();
        for k in p.col_ptr[j]..p.col_ptr[j + 1] {
            colmax = colmax.max(p.vals[k].abs());
        }
        for k in p.col_ptr[j]..p.col_ptr[j + 1] {
            let (r, a) = (p.row_idx[k], p.vals[k].abs());
            if avail[r] && a >= T::lit(0.1) * colmax && best.is_none_or(|(_, b)| a > b) {
                best = Some((r, a));
            }
        }
        if let Some((r, _)) = best {
            head[r] = j;
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                avail[p.row_idx[k]] = false;
            }
        }
    }
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded { entering: usize, dir: bool },
    IterationLimit,
}

struct Solver<'a, T> {
    p: &'a Scaled<T>,
    opts: &'a LpOptions<T>,
    x: Vec<T>,
    state: Vec<VarState>,
    head: Vec<usize>,
    lu: LuFactors<T>,
    etas: Vec<Eta<T>>,
    iterations: usize,
    degenerate_run: usize,
    bland: bool,
    price_start: usize,
    row_buf: Vec<T>,
}

impl<'a, T: Scalar> Solver<'a, T> {
    fn new(p: &'a Scaled<T>, opts: &'a LpOptions<T>) -> Result<Self> {
        let total = p.n + p.m;
        let mut x = vec![T::zero(); total];
        let mut state = vec![VarState::Free; total];
        for j in 0..p.n {
            if p.lo[j].is_finite() {
                x[j] = p.lo[j];
                state[j] = VarState::Lower;
            } else if p.hi[j].is_finite() {
                x[j] = p.hi[j];
                state[j] = VarState::Upper;
            }
        }
        let mut head: Vec<usize> = (0..p.m).map(|i| p.n + i).collect();
        crash(p, &mut head);
        for (pos, &j) in head.iter().enumerate() {
            state[j] = VarState::Basic(pos);
        }
        for i in 0..p.m {
            let r = p.n + i;
            if !matches!(state[r], VarState::Basic(_)) {
                if p.lo[r].is_finite() {
                    x[r] = p.lo[r];
                    state[r] = VarState::Lower;
                } else {
                    x[r] = p.hi[r];
                    state[r] = VarState::Upper;
                }
            }
        }
        let identity: Vec<Vec<(usize, T)>> = (0..p.m).map(|i| vec![(i, -T::one())]).collect();
        let lu = factorize(p.m, &identity, T::lit(0.1), T::zero())
            .map_err(|_| Error::NumericalFailure("initial basis".into()))?;
        let mut s = Self {
            p,
            opts,
            x,
            state,
            head,
            lu,
            etas: Vec::new(),
            iterations: 0,
            degenerate_run: 0,
            bland: false,
            price_start: 0,
            row_buf: vec![T::zero(); p.m],
        };
        s.refactor()?;
        Ok(s)
    }

    fn refactor(&mut self) -> Result<()> {
        for _attempt in 0..4 {
            let cols: Vec<Vec<(usize, T)>> = self
                .head
                .iter()
                .map(|&j| {
                    let mut c = Vec::new();
                    self.p.for_each_in_col(j, |r, v| c.push((r, v)));
                    c
                })
                .collect();
            match factorize(self.p.m, &cols, T::lit(0.1), self.opts.pivot_tol * T::lit(1e-3)) {
                Ok(lu) => {
                    self.lu = lu;
                    self.etas.clear();
                    self.recompute_basics();
                    return Ok(());
                }
                Err(sing) => {
                    // swap the unpivoted columns for the logicals of the unpivoted rows
                    for (&pos, &row) in sing.cols.iter().zip(&sing.rows) {
                        let logical = self.p.n + row;
                        if matches!(self.state[logical], VarState::Basic(_)) {
                            continue;
                        }
                        let old = self.head[pos];
                        self.make_nonbasic_near(old);
                        self.head[pos] = logical;
                        self.state[logical] = VarState::Basic(pos);
                    }
                }
            }
        }
        Err(Error::NumericalFailure("basis stays singular after repair".into()))
    }

    fn make_nonbasic_near(&mut self, j: usize) {
        let (lo, hi, v) = (self.p.lo[j], self.p.hi[j], self.x[j]);
        if lo.is_finite() && (!hi.is_finite() || (v - lo).abs() <= (hi - v).abs()) {
            self.x[j] = lo;
            self.state[j] = VarState::Lower;
        } else if hi.is_finite() {
            self.x[j] = hi;
            self.state[j] = VarState::Upper;
        } else {
            self.state[j] = VarState::Free;
        }
    }

    /// `out = B^{-1} b` with `b` indexed by row (clobbered).
    fn ftran(&self, b: &mut [T], out: &mut [T]) {
        self.lu.ftran(b, out);
        for eta in &self.etas {
            let xp = out[eta.pos] / eta.pivot;
            out[eta.pos] = xp;
            if xp != T::zero() {
                for &(i, a) in &eta.entries {
                    out[i] -= a * xp;
                }
            }
        }
    }

    /// `y' = c' B^{-1}` with `c` indexed by basis position (clobbered).
    fn btran(&self, c: &mut [T], y: &mut [T]) {
        for eta in self.etas.iter().rev() {
            let mut v = c[eta.pos];
            for &(i, a) in &eta.entries {
                v -= a * c[i];
            }
            c[eta.pos] = v / eta.pivot;
        }
        self.lu.btran(c, y);
    }

    fn recompute_basics(&mut self) {
        let m = self.p.m;
        let mut rhs = vec![T::zero(); m];
        for j in 0..self.p.n + m {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v != T::zero() {
                self.p.for_each_in_col(j, |r, a| rhs[r] -= a * v);
            }
        }
        let mut xb = vec![T::zero(); m];
        self.ftran(&mut rhs, &mut xb);
        for (pos, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[pos];
        }
    }

    fn column_ftran(&mut self, j: usize) -> Vec<T> {
        let m = self.p.m;
        let mut b = std::mem::take(&mut self.row_buf);
        b.iter_mut().for_each(|v| *v = T::zero());
        self.p.for_each_in_col(j, |r, v| b[r] = v);
        let mut alpha = vec![T::zero(); m];
        self.ftran(&mut b, &mut alpha);
        self.row_buf = b;
        alpha
    }

    fn phase_costs(&self, phase1: bool) -> Vec<T> {
        let tol = self.opts.feasibility_tol;
        self.head
            .iter()
            .map(|&j| {
                if phase1 {
                    if self.x[j] < self.p.lo[j] - tol {
                        -T::one()
                    } else if self.x[j] > self.p.hi[j] + tol {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    self.p.cost[j]
                }
            })
            .collect()
    }

    fn duals(&self, phase1: bool) -> Vec<T> {
        let mut cb = self.phase_costs(phase1);
        let mut y = vec![T::zero(); self.p.m];
        self.btran(&mut cb, &mut y);
        y
    }

    /// Fills `cb` with the phase-1 costs when some basic variable is out of
    /// bounds, else with the true costs; returns whether phase 1 applies.
    fn current_costs(&self, cb: &mut [T]) -> bool {
        let tol = self.opts.feasibility_tol;
        let mut infeasible = false;
        for (c, &j) in cb.iter_mut().zip(&self.head) {
            let v = self.x[j];
            *c = if v < self.p.lo[j] - tol {
                infeasible = true;
                -T::one()
            } else if v > self.p.hi[j] + tol {
                infeasible = true;
                T::one()
            } else {
                T::zero()
            };
        }
        if !infeasible {
            for (c, &j) in cb.iter_mut().zip(&self.head) {
                *c = self.p.cost[j];
            }
        }
        infeasible
    }

    #[inline]
    fn reduced_cost(&self, j: usize, y: &[T], phase1: bool) -> T {
        let c = if phase1 { T::zero() } else { self.p.cost[j] };
        c - self.p.dot_col(j, y)
    }

    #[inline]
    fn eligible(&self, j: usize, d: T) -> bool {
        let tol = self.opts.optimality_tol;
        match self.state[j] {
            VarState::Basic(_) => false,
            VarState::Lower => d < -tol && self.p.hi[j] > self.p.lo[j],
            VarState::Upper => d > tol && self.p.hi[j] > self.p.lo[j],
            VarState::Free => d.abs() > tol,
        }
    }

    /// Dantzig pricing over rotating segments, or Bland's rule when cycling
    /// is suspected.
    fn price(&mut self, y: &[T], phase1: bool) -> Option<(usize, T)> {
        let total = self.p.n + self.p.m;
        if self.bland {
            return (0..total).find_map(|j| {
                let d = self.reduced_cost(j, y, phase1);
                self.eligible(j, d).then_some((j, d))
            });
        }
        let seg = if total > 4000 { total.div_ceil(8) } else { total };
        let nseg = total.div_ceil(seg);
        for s in 0..nseg {
            let k = (self.price_start + s) % nseg;
            let range = k * seg..((k + 1) * seg).min(total);
            let mut best: Option<(usize, T)> = None;
            for j in range {
                if matches!(self.state[j], VarState::Basic(_)) {
                    continue;
                }
                let d = self.reduced_cost(j, y, phase1);
                if self.eligible(j, d) && best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                    best = Some((j, d));
                }
            }
            if best.is_some() {
                self.price_start = k;
                return best;
            }
        }
        None
    }

    fn run(&mut self) -> Result<Outcome> {
        let mut fresh = true;
        let mut cb = vec![T::zero(); self.p.m];
        let mut y = vec![T::zero(); self.p.m];
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Ok(Outcome::IterationLimit);
            }
            let phase1 = self.current_costs(&mut cb);
            self.btran(&mut cb, &mut y);
            let Some((q, dq)) = self.price(&y, phase1) else {
                if !fresh {
                    self.refactor()?;
                    fresh = true;
                    continue;
                }
                return Ok(if phase1 { Outcome::Infeasible } else { Outcome::Optimal });
            };

            let increasing = dq < T::zero();
            let alpha = self.column_ftran(q);
            let step = self.ratio_test(q, increasing, &alpha, phase1);
            let Some((theta, leave)) = step else {
                if phase1 {
                    if !fresh {
                        self.refactor()?;
                        fresh = true;
                        continue;
                    }
                    return Err(Error::NumericalFailure("phase 1 direction without blocking variable".into()));
                }
                return Ok(Outcome::Unbounded { entering: q, dir: increasing });
            };

            self.iterations += 1;
            fresh = false;
            if theta <= T::tiny() {
                self.degenerate_run += 1;
                if self.degenerate_run >= self.opts.degenerate_limit {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }

            let signed = if increasing { theta } else { -theta };
            if signed != T::zero() {
                self.x[q] += signed;
                for (pos, &j) in self.head.iter().enumerate() {
                    if alpha[pos] != T::zero() {
                        self.x[j] -= signed * alpha[pos];
                    }
                }
            }

            match leave {
                None => {
                    // bound flip of the entering variable
                    if increasing {
                        self.x[q] = self.p.hi[q];
                        self.state[q] = VarState::Upper;
                    } else {
                        self.x[q] = self.p.lo[q];
                        self.state[q] = VarState::Lower;
                    }
                }
                Some((pos, to_upper)) => {
                    let out = self.head[pos];
                    if to_upper {
                        self.x[out] = self.p.hi[out];
                        self.state[out] = VarState::Upper;
                    } else {
                        self.x[out] = self.p.lo[out];
                        self.state[out] = VarState::Lower;
                    }
                    self.head[pos] = q;
                    self.state[q] = VarState::Basic(pos);
                    let entries = alpha
                        .iter()
                        .enumerate()
                        .filter(|&(i, &a)| i != pos && a != T::zero())
                        .map(|(i, &a)| (i, a))
                        .collect();
                    self.etas.push(Eta { pos, pivot: alpha[pos], entries });

                    if self.etas.len() >= self.opts.refactor_interval {
                        self.refactor()?;
                    }
                }
            }
        }
    }

    /// Two-pass (Harris) ratio test. Returns the step length and the leaving
    /// basis position with the bound it leaves at, or `None` for the leaving
    /// part when the entering variable flips to its opposite bound.
    #[allow(clippy::type_complexity)]
    fn ratio_test(&self, q: usize, increasing: bool, alpha: &[T], phase1: bool) -> Option<(T, Option<(usize, bool)>)> {
        let tol = self.opts.feasibility_tol;
        let piv = self.opts.pivot_tol;

        // rate of change, distance to the blocking bound and whether that bound is the upper one
        let candidate = |pos: usize, a: T| -> Option<(T, T, bool)> {
            if a.abs() <= piv {
                return None;
            }
            let j = self.head[pos];
            let v = self.x[j];
            let (lo, hi) = (self.p.lo[j], self.p.hi[j]);
            let rate = if increasing { -a } else { a };
            let (target, upper) = if rate < T::zero() {
                if phase1 && v > hi + tol {
                    (hi, true)
                } else if v >= lo - tol {
                    (lo, false)
                } else {
                    return None;
                }
            } else if phase1 && v < lo - tol {
                (lo, false)
            } else if v <= hi + tol {
                (hi, true)
            } else {
                return None;
            };
            if !target.is_finite() {
                return None;
            }
            let dist = if rate > T::zero() { target - v } else { v - target };
            Some((rate.abs(), dist.max(T::zero()), upper))
        };

        let range = self.p.hi[q] - self.p.lo[q];
        let mut theta_max = if range.is_finite() { range } else { T::infinity() };
        let mut min_exact = T::infinity();
        for (pos, &a) in alpha.iter().enumerate() {
            if let Some((rate, dist, _)) = candidate(pos, a) {
                theta_max = theta_max.min((dist + tol) / rate);
                min_exact = min_exact.min(dist / rate);
            }
        }
        if !theta_max.is_finite() {
            return None;
        }
        if range.is_finite() && range <= theta_max && min_exact >= range {
            return Some((range, None));
        }

        let mut best: Option<(usize, T, T, bool)> = None;
        for (pos, &a) in alpha.iter().enumerate() {
            let Some((rate, dist, upper)) = candidate(pos, a) else { continue };
            if dist / rate > theta_max {
                continue;
            }
            let better = match best {
                None => true,
                Some((bpos, brate, _, _)) => rate > brate || (rate == brate && self.head[pos] < self.head[bpos]),
            };
            if better {
                best = Some((pos, rate, dist, upper));
            }
        }
        match best {
            Some((pos, rate, dist, upper)) => Some((dist / rate, Some((pos, upper)))),
            None if range.is_finite() => Some((range, None)),
            None => None,
        }
    }
}

/// Solves `lp` with the bounded-variable revised simplex method.
///
/// Deterministic: identical input yields identical pivots and output.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>, opts: &LpOptions<T>) -> Result<LpSolution<T>> {
    lp.validate()?;
    let sol = solve_scaled(lp, opts, true)?;
    // badly scaled data can hide violations below the scaled tolerance
    if sol.status == LpStatus::Optimal && sol.residuals.primal > opts.feasibility_tol * T::lit(1e3) {
        return solve_scaled(lp, opts, false);
    }
    Ok(sol)
}

fn solve_scaled<T: Scalar>(lp: &LinearProgram<T>, opts: &LpOptions<T>, scale: bool) -> Result<LpSolution<T>> {
    let p = Scaled::new(lp, scale);
    let mut s = Solver::new(&p, opts)?;
    let outcome = s.run()?;
    let n = p.n;
    let m = p.m;

    let x: Vec<T> = (0..n).map(|j| s.x[j] * p.col_scale[j]).collect();
    let sign = match lp.sense {
        Objective::Minimize => T::one(),
        Objective::Maximize => -T::one(),
    };

    let mut farkas = None;
    let mut ray = None;
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::IterationLimit => LpStatus::IterationLimit,
        Outcome::Infeasible => {
            let y = s.duals(true);
            farkas = Some((0..m).map(|i| y[i] * p.row_scale[i]).collect());
            LpStatus::Infeasible
        }
        Outcome::Unbounded { entering, dir } => {
            let alpha = s.column_ftran(entering);
            let unit = if dir { T::one() } else { -T::one() };
            let mut r = vec![T::zero(); n];
            if entering < n {
                r[entering] = unit * p.col_scale[entering];
            }
            for (pos, &j) in s.head.iter().enumerate() {
                if j < n {
                    r[j] = -unit * alpha[pos] * p.col_scale[j];
                }
            }
            ray = Some(r);
            LpStatus::Unbounded
        }
    };

    // internal duals in user units: y_int = R y' * cost_scale
    let y_scaled = s.duals(false);
    let y_int: Vec<T> = (0..m).map(|i| y_scaled[i] * p.row_scale[i] * p.cost_scale).collect();
    let mut aty = vec![T::zero(); n];
    for &(r, c, v) in &lp.triplets {
        aty[c] += v * y_int[r];
    }
    let d_int: Vec<T> = (0..n).map(|j| sign * lp.objective[j] - aty[j]).collect();

    let activity = lp.row_activity(&x);
    let objective = lp.objective_value(&x);
    let cmax = lp.objective.iter().fold(T::zero(), |a, c| a.max(c.abs()));
    let dual_zero = opts.optimality_tol * (T::one() + cmax);

    // Lagrangian bound sum_j min_{z in box} d_j z over structurals and logicals
    let mut g = T::zero();
    let mut dual_res = T::zero();
    let mut comp = T::zero();
    let mut term = |d: T, lo: T, hi: T, v: T| {
        if d.abs() <= dual_zero {
            return;
        }
        let bound = if d > T::zero() { lo } else { hi };
        if bound.is_finite() {
            g += d * bound;
            comp = comp.max(d.abs() * (v - bound).abs());
        } else {
            dual_res = dual_res.max(d.abs() / (T::one() + cmax));
        }
    };
    for j in 0..n {
        term(d_int[j], lp.lower[j], lp.upper[j], x[j]);
    }
    for i in 0..m {
        let (lo, hi) = match lp.row_senses[i] {
            RowSense::Le => (T::neg_infinity(), lp.rhs[i]),
            RowSense::Ge => (lp.rhs[i], T::infinity()),
            RowSense::Eq => (lp.rhs[i], lp.rhs[i]),
        };
        term(y_int[i], lo, hi, activity[i]);
    }

    let mut primal_res = T::zero();
    for i in 0..m {
        let b = lp.rhs[i];
        let viol = match lp.row_senses[i] {
            RowSense::Le => (activity[i] - b).max(T::zero()),
            RowSense::Ge => (b - activity[i]).max(T::zero()),
            RowSense::Eq => (activity[i] - b).abs(),
        };
        primal_res = primal_res.max(viol / (T::one() + b.abs()));
    }
    for j in 0..n {
        let lo_v = (lp.lower[j] - x[j]).max(T::zero()) / (T::one() + lp.lower[j].abs());
        let hi_v = (x[j] - lp.upper[j]).max(T::zero()) / (T::one() + lp.upper[j].abs());
        primal_res = primal_res.max(lo_v).max(hi_v);
    }

    Ok(LpSolution {
        status,
        x,
        duals: y_int.iter().map(|&v| sign * v).collect(),
        reduced_costs: d_int.iter().map(|&v| sign * v).collect(),
        objective,
        dual_objective: sign * g,
        iterations: s.iterations,
        residuals: Residuals {
            primal: primal_res,
            dual: dual_res,
            complementarity: comp / (T::one() + objective.abs()),
        },
        farkas,
        ray,
    })
}
