//! The cost polytope in weight coordinates, the induced volatility set and
//! the checks that decide whether the scaling limit is a plain corridor model.
//!
//! Weights `w` form a `(d + 1) x d` matrix with `w[j][k]` in `[0, c_k]`,
//! `c_k = (kappa^+_k + kappa^-_k) / (d + 1)`. Column `k` of `beta(w)` is
//! `sum_j w[j][k] v_j'` and `Gamma(w) = sigma sigma' + sigma beta + beta' sigma'`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::SimplexBasis;
use crate::linalg::{norm, Matrix};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus, Objective, RowSense};
use crate::model::MarketSpec;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, Serialize)]
pub struct VolatilityCorridor<T> {
    basis: SimplexBasis<T>,
    sigma: Matrix<T>,
    kappa_plus: Vec<T>,
    kappa_minus: Vec<T>,
    caps: Vec<T>,
}

/// Maximiser of a linear functional over the corridor.
#[derive(Clone, Debug, Serialize)]
pub struct LinearOptimum<T> {
    pub value: T,
    pub w: Matrix<T>,
    pub beta: Matrix<T>,
    pub a: Matrix<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormBoundCheck<T> {
    pub passes: bool,
    pub worst_norm: T,
    pub bound: T,
}

/// A point where the invertibility condition fails: either `sigma' + beta` is
/// singular or `v_i beta (sigma' + beta)^{-1} v_j' <= -1`.
#[derive(Clone, Debug, Serialize)]
pub struct Witness<T> {
    pub w: Matrix<T>,
    pub beta: Matrix<T>,
    pub i: usize,
    pub j: usize,
    /// `None` when `sigma' + beta` is singular.
    pub value: Option<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvertibilityCheck<T> {
    pub passes: bool,
    /// `true` when the verdict is a proof: a violation was found, or the
    /// vertex norm bound of [`VolatilityCorridor::check_norm_bound`] holds.
    pub conclusive: bool,
    /// Most negative violation found; vertices are searched before the grid.
    pub witness: Option<Witness<T>>,
    pub vertices_checked: usize,
    pub grid_points_checked: usize,
    pub random_points_checked: usize,
    pub note: String,
}

/// Point budget of the grid phase of [`VolatilityCorridor::check_invertibility`].
pub const GRID_BUDGET: usize = 1_000_000;
const GRID_SEED: u64 = 0x5eed_2021;

impl<T: Scalar> VolatilityCorridor<T> {
    pub fn new(basis: SimplexBasis<T>, sigma: Matrix<T>, kappa_plus: Vec<T>, kappa_minus: Vec<T>) -> Result<Self> {
        let d = basis.dim();
        if sigma.rows() != d || sigma.cols() != d || kappa_plus.len() != d || kappa_minus.len() != d {
            return Err(Error::InvalidDimension(format!("corridor of dimension {d} needs d x d sigma and d costs")));
        }
        if kappa_plus.iter().chain(&kappa_minus).any(|&k| !(k.is_finite() && k >= T::zero())) {
            return Err(Error::InvalidMarket("cost coefficients must be nonnegative".into()));
        }
        let caps = (0..d).map(|k| (kappa_plus[k] + kappa_minus[k]) / T::of(d + 1)).collect();
        Ok(Self { basis, sigma, kappa_plus, kappa_minus, caps })
    }

    /// Corridor of a market with a simplex driver.
    pub fn from_market(spec: &MarketSpec<T>) -> Result<Self> {
        let basis = spec.basis().ok_or_else(|| Error::Unsupported("corridor needs a simplex driver".into()))?.clone();
        Self::new(basis, spec.sigma().clone(), spec.kappa_plus().to_vec(), spec.kappa_minus().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &SimplexBasis<T> {
        &self.basis
    }

    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    pub fn kappa_plus(&self) -> &[T] {
        &self.kappa_plus
    }

    pub fn kappa_minus(&self) -> &[T] {
        &self.kappa_minus
    }

    /// Upper bounds `c_k` of the weight box, one per column.
    pub fn caps(&self) -> &[T] {
        &self.caps
    }

    fn check_box(&self, w: &Matrix<T>, tol: T) -> Result<()> {
        let d = self.dim();
        if w.rows() != d + 1 || w.cols() != d {
            return Err(Error::InvalidDimension(format!("weights must be {}x{d}", d + 1)));
        }
        for j in 0..=d {
            for k in 0..d {
                let x = w[(j, k)];
                if !(x >= -tol && x <= self.caps[k] + tol) {
                    return Err(Error::OutsideBox(format!("w[{j}][{k}] = {x} not in [0, {}]", self.caps[k])));
                }
            }
        }
        Ok(())
    }

    fn beta_unchecked(&self, w: &Matrix<T>) -> Matrix<T> {
        // beta = V' w with V the (d+1) x d vertex matrix
        self.basis.vertices().transpose().mul(w)
    }

    /// `beta(w)`; errors when `w` leaves the box.
    pub fn beta_from_w(&self, w: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_box(w, T::zero())?;
        Ok(self.beta_unchecked(w))
    }

    /// `sigma sigma' + sigma beta + beta' sigma'`, exactly symmetric.
    pub fn gamma_from_beta(&self, beta: &Matrix<T>) -> Matrix<T> {
        let sb = self.sigma.mul(beta);
        self.sigma.mul(&self.sigma.transpose()).add(&sb).add(&sb.transpose()).symmetrized()
    }

    /// Coefficients `2 (v_j sigma' W)_k` of `w[j][k]` in `trace(W Gamma(w))`.
    fn linear_coefficients(&self, w_sym: &Matrix<T>) -> Matrix<T> {
        let st_w = self.sigma.transpose().mul(w_sym);
        self.basis.vertices().mul(&st_w).scale(T::lit(2.0))
    }

    fn optimize_linear(&self, weight: &Matrix<T>, maximize: bool) -> Result<LinearOptimum<T>> {
        let d = self.dim();
        if weight.rows() != d || weight.cols() != d {
            return Err(Error::InvalidDimension(format!("weight matrix must be {d}x{d}")));
        }
        let ws = weight.symmetrized();
        let coef = self.linear_coefficients(&ws);
        let mut w = Matrix::zeros(d + 1, d);
        for j in 0..=d {
            for k in 0..d {
                let c = coef[(j, k)];
                if (maximize && c > T::zero()) || (!maximize && c < T::zero()) {
                    w[(j, k)] = self.caps[k];
                }
            }
        }
        let beta = self.beta_unchecked(&w);
        let a = self.gamma_from_beta(&beta);
        let value = ws.mul(&a).trace();
        Ok(LinearOptimum { value, w, beta, a })
    }

    /// `sup_{a in Gamma} trace(W a)`. The objective is linear in every weight,
    /// so each weight sits at the end of its interval picked by the sign of
    /// its coefficient. Only the symmetric part of `W` matters.
    pub fn sup_linear_over_gamma(&self, weight: &Matrix<T>) -> Result<LinearOptimum<T>> {
        self.optimize_linear(weight, true)
    }

    /// `inf_{a in Gamma} trace(W a)`.
    pub fn inf_linear_over_gamma(&self, weight: &Matrix<T>) -> Result<LinearOptimum<T>> {
        self.optimize_linear(weight, false)
    }

    /// Selects `beta` in the polytope with `Gamma(beta) = a` by solving the
    /// feasibility LP in the weights, minimising their sum. Fails with
    /// [`Error::NotInGamma`] when `a` is not in the volatility set.
    pub fn psi(&self, a: &Matrix<T>) -> Result<Matrix<T>> {
        let d = self.dim();
        if a.rows() != d || a.cols() != d {
            return Err(Error::InvalidDimension(format!("a must be {d}x{d}")));
        }
        let target = a.symmetrized().sub(&self.sigma.mul(&self.sigma.transpose()));
        // sigma v_j' for each vertex
        let sv: Vec<Vec<T>> = (0..=d).map(|j| self.sigma.right_mul(self.basis.vertex(j))).collect();

        let mut lp = LinearProgram::new(Objective::Minimize);
        let var = |j: usize, k: usize| j * d + k;
        for _j in 0..=d {
            for k in 0..d {
                lp.add_var(T::one(), T::zero(), self.caps[k]);
            }
        }
        let mut row = Vec::new();
        for r in 0..d {
            for s in r..d {
                row.clear();
                for j in 0..=d {
                    // entry (r, s) picks w[j][s] (sigma v_j')_r + w[j][r] (sigma v_j')_s
                    if r == s {
                        row.push((var(j, s), T::lit(2.0) * sv[j][r]));
                    } else {
                        row.push((var(j, s), sv[j][r]));
                        row.push((var(j, r), sv[j][s]));
                    }
                }
                lp.add_row(&row, RowSense::Eq, target[(r, s)]);
            }
        }
        let sol = solve_lp(&lp, &LpOptions::default())?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::NotInGamma),
            s => return Err(Error::NotOptimal(s)),
        }
        let mut w = Matrix::zeros(d + 1, d);
        for j in 0..=d {
            for k in 0..d {
                w[(j, k)] = sol.x[var(j, k)].max(T::zero()).min(self.caps[k]);
            }
        }
        let beta = self.beta_unchecked(&w);
        let scale = T::one() + a.max_abs();
        if self.gamma_from_beta(&beta).max_abs_diff(&a.symmetrized()) > T::lit(1e-9).max(T::epsilon().sqrt()) * scale {
            return Err(Error::NotInGamma);
        }
        Ok(beta)
    }

    /// Canonical weights of `beta`: `w[i][k] = ((v_i beta)_k + t_k) / (d + 1)`
    /// with `t_k = -min_i (v_i beta)_k`. Also returns `t`.
    pub fn canonical_weights(&self, beta: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
        let d = self.dim();
        if beta.rows() != d || beta.cols() != d {
            return Err(Error::InvalidDimension(format!("beta must be {d}x{d}")));
        }
        let vb = self.basis.vertices().mul(beta);
        let m = T::of(d + 1);
        let t: Vec<T> = (0..d).map(|k| -(0..=d).map(|i| vb[(i, k)]).fold(T::infinity(), T::min)).collect();
        let mut w = Matrix::zeros(d + 1, d);
        for i in 0..=d {
            for k in 0..d {
                w[(i, k)] = (vb[(i, k)] + t[k]) / m;
            }
        }
        Ok((w, t))
    }

    /// Whether `beta` lies in the cost polytope (up to `tol` on the weights).
    pub fn contains_beta(&self, beta: &Matrix<T>, tol: T) -> Result<bool> {
        let (w, _) = self.canonical_weights(beta)?;
        Ok(self.check_box(&w, tol).is_ok())
    }

    /// Shift `Phi(beta)` with `v_i beta + Phi(beta)` inside
    /// `prod_k [-kappa^-_k, kappa^+_k]` for every vertex.
    pub fn phi(&self, beta: &Matrix<T>) -> Result<Vec<T>> {
        let (w, t) = self.canonical_weights(beta)?;
        let scale = T::one() + self.caps.iter().copied().fold(T::zero(), T::max);
        self.check_box(&w, T::tiny() * scale).map_err(|_| Error::NotInPolytope)?;
        Ok(t.iter().zip(&self.kappa_minus).map(|(&tk, &km)| tk - km).collect())
    }

    /// Sufficient condition for invertibility: every vertex `x` of
    /// `prod_k [-(kappa^+_k + kappa^-_k), kappa^+_k + kappa^-_k]` has
    /// `|x (sigma')^{-1}| < 1 / (2 sqrt d)`.
    pub fn check_norm_bound(&self) -> Result<NormBoundCheck<T>> {
        let d = self.dim();
        if d > 24 {
            return Err(Error::Unsupported(format!("vertex enumeration in dimension {d}")));
        }
        let inv = self.sigma.transpose().inverse().ok_or(Error::SingularVolatility)?;
        let width: Vec<T> = (0..d).map(|k| self.kappa_plus[k] + self.kappa_minus[k]).collect();
        let mut worst = T::zero();
        for mask in 0u32..(1 << d) {
            let x: Vec<T> = (0..d).map(|k| if mask >> k & 1 == 1 { -width[k] } else { width[k] }).collect();
            worst = worst.max(norm(&inv.left_mul(&x)));
        }
        let bound = T::one() / (T::lit(2.0) * T::of(d).sqrt());
        Ok(NormBoundCheck { passes: worst < bound, worst_norm: worst, bound })
    }

    /// `v_i beta (sigma' + beta)^{-1} v_j'`, `None` when `sigma' + beta` is singular.
    pub fn invertibility_value(&self, beta: &Matrix<T>, i: usize, j: usize) -> Option<T> {
        let m = self.invertibility_matrix(beta)?;
        let vi = self.basis.vertex(i);
        let vj = self.basis.vertex(j);
        Some(crate::linalg::dot(&m.left_mul(vi), vj))
    }

    /// `V beta (sigma' + beta)^{-1} V'`, all pairs at once.
    fn invertibility_matrix(&self, beta: &Matrix<T>) -> Option<Matrix<T>> {
        let s = self.sigma.transpose().add(beta);
        let scale = T::one() + s.max_abs();
        if s.min_singular_value() <= T::tiny() * scale {
            return None;
        }
        Some(beta.mul(&s.inverse()?))
    }

    /// Worst violation at the weights `w`, if any.
    fn violation_at(&self, w: &Matrix<T>) -> Option<Witness<T>> {
        let beta = self.beta_unchecked(w);
        let v = self.basis.vertices();
        let Some(m) = self.invertibility_matrix(&beta) else {
            return Some(Witness { w: w.clone(), beta, i: 0, j: 0, value: None });
        };
        let all = v.mul(&m).mul(&v.transpose());
        let mut worst: Option<(usize, usize, T)> = None;
        for i in 0..v.rows() {
            for j in 0..v.rows() {
                let x = all[(i, j)];
                if x <= -T::one() && worst.is_none_or(|(_, _, b)| x < b) {
                    worst = Some((i, j, x));
                }
            }
        }
        worst.map(|(i, j, x)| Witness { w: w.clone(), beta, i, j, value: Some(x) })
    }

    /// Checks `v_i beta (sigma' + beta)^{-1} v_j' > -1` (and invertibility)
    /// at every vertex of the weight box, then on a grid with
    /// `grid_per_axis` points per weight, replacing the grid by seeded random
    /// interior draws once it exceeds [`GRID_BUDGET`] points. The condition is
    /// not convex in `beta`, so a clean grid is evidence rather than proof;
    /// only a violation or a passing [`Self::check_norm_bound`] is conclusive.
    pub fn check_invertibility(&self, grid_per_axis: usize) -> Result<InvertibilityCheck<T>> {
        if grid_per_axis < 2 {
            return Err(Error::InvalidDimension("grid needs at least two points per axis".into()));
        }
        let d = self.dim();
        // weights with a zero-width interval contribute nothing to vary
        let free: Vec<(usize, usize)> =
            (0..=d).flat_map(|j| (0..d).map(move |k| (j, k))).filter(|&(_, k)| self.caps[k] > T::zero()).collect();
        let f = free.len();

        let worse = |a: Option<(usize, Witness<T>)>, b: Option<(usize, Witness<T>)>| match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                let key = |w: &Witness<T>| w.value.map_or(f64::NEG_INFINITY, |v| v.as_f64());
                let (kx, ky) = (key(&x.1), key(&y.1));
                if kx < ky || (kx == ky && x.0 <= y.0) {
                    Some(x)
                } else {
                    Some(y)
                }
            }
        };

        let weights_from = |levels: &dyn Fn(usize) -> T| {
            let mut w = Matrix::zeros(d + 1, d);
            for (t, &(j, k)) in free.iter().enumerate() {
                w[(j, k)] = levels(t) * self.caps[k];
            }
            w
        };

        let vertex_count = if f < usize::BITS as usize - 1 { 1usize << f } else { usize::MAX };
        let norm_check = self.check_norm_bound().ok();
        let mut out = InvertibilityCheck {
            passes: true,
            conclusive: false,
            witness: None,
            vertices_checked: 0,
            grid_points_checked: 0,
            random_points_checked: 0,
            note: String::new(),
        };

        // vertices
        let vertices_to_check = vertex_count.min(GRID_BUDGET);
        let found = (0..vertices_to_check)
            .into_par_iter()
            .map(|mask| {
                let w = weights_from(&|t| if mask >> t & 1 == 1 { T::one() } else { T::zero() });
                self.violation_at(&w).map(|wit| (mask, wit))
            })
            .reduce(|| None, worse);
        out.vertices_checked = vertices_to_check;
        if let Some((_, wit)) = found {
            out.passes = false;
            out.conclusive = true;
            out.witness = Some(wit);
            out.note = "violation at a vertex of the weight box".into();
            return Ok(out);
        }

        // grid or random interior draws
        let grid_total = (0..f).try_fold(1usize, |acc, _| acc.checked_mul(grid_per_axis));
        let found = match grid_total {
            Some(total) if total <= GRID_BUDGET => {
                out.grid_points_checked = total;
                let g = grid_per_axis;
                (0..total)
                    .into_par_iter()
                    .map(|idx| {
                        let w = weights_from(&|t| {
                            let digit = idx / g.pow(t as u32) % g;
                            T::of(digit) / T::of(g - 1)
                        });
                        self.violation_at(&w).map(|wit| (idx, wit))
                    })
                    .reduce(|| None, worse)
            }
            _ => {
                let draws = GRID_BUDGET.saturating_sub(vertices_to_check);
                out.random_points_checked = draws;
                let chunk = 4096;
                (0..draws.div_ceil(chunk))
                    .into_par_iter()
                    .map(|c| {
                        let mut rng = ChaCha8Rng::seed_from_u64(GRID_SEED);
                        rng.set_stream(c as u64);
                        let mut best = None;
                        for r in c * chunk..((c + 1) * chunk).min(draws) {
                            let levels: Vec<T> = (0..f).map(|_| T::lit(rng.random::<f64>())).collect();
                            let w = weights_from(&|t| levels[t]);
                            best = worse(best, self.violation_at(&w).map(|wit| (r, wit)));
                        }
                        best
                    })
                    .reduce(|| None, worse)
            }
        };
        if let Some((_, wit)) = found {
            out.passes = false;
            out.conclusive = true;
            out.witness = Some(wit);
            out.note = "violation inside the weight box".into();
            return Ok(out);
        }
        match norm_check {
            Some(l) if l.passes => {
                out.conclusive = true;
                out.note = "no violation; the vertex norm bound holds, so the condition is guaranteed".into();
            }
            _ => out.note = "no violation found (heuristic)".into(),
        }
        Ok(out)
    }
}
