//! Sparse linear programming.
//!
//! [`LinearProgram`] holds a problem in triplet form with row senses and
//! variable bounds; [`solve_lp`] runs a bounded-variable revised primal
//! simplex on it and returns an [`LpSolution`] carrying duals, residuals and
//! (when infeasible) a Farkas certificate.

mod lu;
mod simplex;

use std::fmt::Write as _;

use serde::Serialize;

use crate::{Error, Result, Scalar};

pub use simplex::solve_lp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub sense: Objective,
    pub objective: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// `(row, column, value)`; duplicates are summed.
    pub triplets: Vec<(usize, usize, T)>,
    pub row_senses: Vec<RowSense>,
    pub rhs: Vec<T>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(sense: Objective) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            triplets: Vec::new(),
            row_senses: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable with the given cost and bounds (infinite bounds allowed).
    pub fn add_var(&mut self, cost: T, lower: T, upper: T) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, entries: &[(usize, T)], sense: RowSense, rhs: T) -> usize {
        let row = self.rhs.len();
        for &(col, v) in entries {
            if v != T::zero() {
                self.triplets.push((row, col, v));
            }
        }
        self.row_senses.push(sense);
        self.rhs.push(rhs);
        row
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return Err(Error::MalformedLp("no variables".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::MalformedLp("bound vectors do not match variable count".into()));
        }
        if self.row_senses.len() != self.rhs.len() {
            return Err(Error::MalformedLp("row senses do not match right-hand sides".into()));
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == T::infinity() || hi == T::neg_infinity() {
                return Err(Error::MalformedLp(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedLp("non-finite objective coefficient".into()));
        }
        if self.rhs.iter().any(|b| !b.is_finite()) {
            return Err(Error::MalformedLp("non-finite right-hand side".into()));
        }
        for &(r, c, v) in &self.triplets {
            if r >= self.num_rows() || c >= n {
                return Err(Error::MalformedLp(format!("triplet ({r}, {c}) out of range")));
            }
            if !v.is_finite() {
                return Err(Error::MalformedLp(format!("non-finite coefficient at ({r}, {c})")));
            }
        }
        Ok(())
    }

    /// `A x` for every row.
    pub fn row_activity(&self, x: &[T]) -> Vec<T> {
        let mut act = vec![T::zero(); self.num_rows()];
        for &(r, c, v) in &self.triplets {
            act[r] += v * x[c];
        }
        act
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.iter().zip(x).map(|(&c, &v)| c * v).sum()
    }

    /// Plain-text dump:
    ///
    /// ```text
    /// lp <max|min> <vars> <rows>
    /// var <j> <cost> <lower> <upper>
    /// row <i> <le|eq|ge> <rhs>
    /// a <i> <j> <value>
    /// ```
    ///
    /// Infinite bounds are written `inf` / `-inf`; numbers use 17 significant
    /// digits so the dump round-trips in double precision.
    pub fn to_text(&self) -> String {
        let num = |x: T| {
            let v = x.as_f64();
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:.16e}")
            }
        };
        let mut out = String::new();
        let sense = match self.sense {
            Objective::Maximize => "max",
            Objective::Minimize => "min",
        };
        let _ = writeln!(out, "lp {sense} {} {}", self.num_vars(), self.num_rows());
        for j in 0..self.num_vars() {
            let _ = writeln!(out, "var {j} {} {} {}", num(self.objective[j]), num(self.lower[j]), num(self.upper[j]));
        }
        for (i, (s, &b)) in self.row_senses.iter().zip(&self.rhs).enumerate() {
            let s = match s {
                RowSense::Le => "le",
                RowSense::Eq => "eq",
                RowSense::Ge => "ge",
            };
            let _ = writeln!(out, "row {i} {s} {}", num(b));
        }
        for &(r, c, v) in &self.triplets {
            let _ = writeln!(out, "a {r} {c} {}", num(v));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::MalformedLp(format!("line {}: {msg}", line + 1));
        let parse_num = |tok: Option<&str>, line: usize| -> Result<T> {
            let tok = tok.ok_or_else(|| bad(line, "missing number"))?;
            let v: f64 = match tok {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                t => t.parse().map_err(|_| bad(line, "bad number"))?,
            };
            T::from_f64(v).ok_or_else(|| bad(line, "number not representable"))
        };
        let parse_idx = |tok: Option<&str>, line: usize| -> Result<usize> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| bad(line, "bad index"))
        };

        let mut lp: Option<Self> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let tag = toks.next().unwrap_or_default();
            if tag == "lp" {
                let sense = match toks.next() {
                    Some("max") => Objective::Maximize,
                    Some("min") => Objective::Minimize,
                    _ => return Err(bad(ln, "expected max or min")),
                };
                let n = parse_idx(toks.next(), ln)?;
                let m = parse_idx(toks.next(), ln)?;
                let mut p = Self::new(sense);
                p.objective = vec![T::zero(); n];
                p.lower = vec![T::zero(); n];
                p.upper = vec![T::infinity(); n];
                p.row_senses = vec![RowSense::Eq; m];
                p.rhs = vec![T::zero(); m];
                lp = Some(p);
                continue;
            }
            let p = lp.as_mut().ok_or_else(|| bad(ln, "missing header"))?;
            match tag {
                "var" => {
                    let j = parse_idx(toks.next(), ln)?;
                    if j >= p.num_vars() {
                        return Err(bad(ln, "variable index out of range"));
                    }
                    p.objective[j] = parse_num(toks.next(), ln)?;
                    p.lower[j] = parse_num(toks.next(), ln)?;
                    p.upper[j] = parse_num(toks.next(), ln)?;
                }
                "row" => {
                    let i = parse_idx(toks.next(), ln)?;
                    if i >= p.num_rows() {
                        return Err(bad(ln, "row index out of range"));
                    }
                    p.row_senses[i] = match toks.next() {
                        Some("le") => RowSense::Le,
                        Some("eq") => RowSense::Eq,
                        Some("ge") => RowSense::Ge,
                        _ => return Err(bad(ln, "bad row sense")),
                    };
                    p.rhs[i] = parse_num(toks.next(), ln)?;
                }
                "a" => {
                    let i = parse_idx(toks.next(), ln)?;
                    let j = parse_idx(toks.next(), ln)?;
                    let v = parse_num(toks.next(), ln)?;
                    p.triplets.push((i, j, v));
                }
                _ => return Err(bad(ln, "unknown record")),
            }
        }
        let lp = lp.ok_or_else(|| Error::MalformedLp("empty dump".into()))?;
        lp.validate()?;
        Ok(lp)
    }
}

#[derive(Clone, Debug)]
pub struct LpOptions<T> {
    /// Absolute pivot tolerance.
    pub pivot_tol: T,
    /// Primal feasibility tolerance (scaled problem).
    pub feasibility_tol: T,
    /// Reduced-cost optimality tolerance (scaled problem).
    pub optimality_tol: T,
    pub max_iterations: usize,
    /// Pivots between refactorizations of the basis.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl<T: Scalar> Default for LpOptions<T> {
    fn default() -> Self {
        let double = T::epsilon() < T::lit(1e-12);
        let (piv, feas) = if double {
            (T::lit(1e-9), T::lit(1e-9))
        } else {
            (T::epsilon().sqrt() * T::lit(0.1), T::epsilon().sqrt())
        };
        Self {
            pivot_tol: piv,
            feasibility_tol: feas,
            optimality_tol: feas,
            max_iterations: 1_000_000,
            refactor_interval: 64,
            degenerate_limit: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Residuals<T> {
    /// Worst row or bound violation, relative to `1 + |bound|`.
    pub primal: T,
    /// Worst reduced cost of the wrong sign, relative to `1 + max |c|`.
    pub dual: T,
    /// Worst `|d_j| * distance-to-bound`, relative to `1 + |objective|`.
    pub complementarity: T,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    /// Row multipliers `y` with `c = A' y + d`.
    pub duals: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub objective: T,
    /// Lagrangian dual bound evaluated at `duals`.
    pub dual_objective: T,
    pub iterations: usize,
    pub residuals: Residuals<T>,
    /// Row multipliers proving infeasibility, see [`farkas_bound`].
    pub farkas: Option<Vec<T>>,
    /// Improving direction of an unbounded problem.
    pub ray: Option<Vec<T>>,
}

impl<T: Scalar> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn duality_gap(&self) -> T {
        (self.objective - self.dual_objective).abs()
    }
}

/// Evaluates `sup { y' (A x - r) : x, r within their bounds }` where `r` is the
/// row activity restricted by the row senses. A negative value certifies
/// that no feasible point exists; `None` means the supremum is infinite.
pub fn farkas_bound<T: Scalar>(lp: &LinearProgram<T>, y: &[T]) -> Option<T> {
    let mut g = vec![T::zero(); lp.num_vars()];
    for &(r, c, v) in &lp.triplets {
        g[c] += v * y[r];
    }
    let mut sup = T::zero();
    let mut add = |coef: T, lo: T, hi: T| -> bool {
        if coef > T::zero() {
            if hi == T::infinity() {
                return false;
            }
            sup += coef * hi;
        } else if coef < T::zero() {
            if lo == T::neg_infinity() {
                return false;
            }
            sup += coef * lo;
        }
        true
    };
    for j in 0..lp.num_vars() {
        if !add(g[j], lp.lower[j], lp.upper[j]) {
            return None;
        }
    }
    for (i, (&s, &b)) in lp.row_senses.iter().zip(&lp.rhs).enumerate() {
        let (lo, hi) = match s {
            RowSense::Le => (T::neg_infinity(), b),
            RowSense::Ge => (b, T::infinity()),
            RowSense::Eq => (b, b),
        };
        if !add(-y[i], lo, hi) {
            return None;
        }
    }
    Some(sup)
}
