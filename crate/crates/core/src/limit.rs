//! Limit prices: Black-Scholes and Margrabe closed forms, the scalar
//! volatility band, and an explicit finite-difference solver for the
//! Black-Scholes-Barenblatt equation over a volatility corridor.

use std::io::Write;

use libm::erfc;
use rayon::prelude::*;
use serde::Serialize;

use crate::corridor::VolatilityCorridor;
use crate::linalg::Matrix;
use crate::model::Payoff;
use crate::{Error, Result, Scalar};

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Zero-rate call price at maturity one with total volatility `nu`:
/// `s N(d) - K N(d - nu)` with `d = (ln s - ln K) / nu + nu / 2`.
pub fn black_scholes_call<T: Scalar>(s: T, strike: T, nu: T) -> Result<T> {
    if !(s > T::zero() && strike > T::zero()) {
        return Err(Error::InvalidMarket(format!("call needs positive spot and strike, got {s} and {strike}")));
    }
    if !(nu >= T::zero()) {
        return Err(Error::InvalidMarket(format!("negative volatility {nu}")));
    }
    if nu == T::zero() {
        return Ok((s - strike).max(T::zero()));
    }
    let (s64, k64, nu64) = (s.as_f64(), strike.as_f64(), nu.as_f64());
    let d = (s64.ln() - k64.ln()) / nu64 + 0.5 * nu64;
    Ok(T::lit(s64 * norm_cdf(d) - k64 * norm_cdf(d - nu64)))
}

/// Weight matrix of the functional `a -> a11 + a22 - a12 - a21`.
pub fn exchange_weight<T: Scalar>() -> Matrix<T> {
    Matrix::from_rows(&[vec![T::one(), -T::one()], vec![-T::one(), T::one()]])
}

/// Largest exchange variance `sup_{a in Gamma} (a11 + a22 - a12 - a21)`.
pub fn margrabe_variance<T: Scalar>(corr: &VolatilityCorridor<T>) -> Result<T> {
    if corr.dim() != 2 {
        return Err(Error::InvalidDimension(format!("exchange limit needs d = 2, got {}", corr.dim())));
    }
    Ok(corr.sup_linear_over_gamma(&exchange_weight())?.value)
}

/// Limit price of `(S^1 - S^2)^+`: `C(s1, s2, sqrt(sup variance))`.
pub fn margrabe_limit_price<T: Scalar>(corr: &VolatilityCorridor<T>, s0: &[T]) -> Result<T> {
    let var = margrabe_variance(corr)?;
    if s0.len() != 2 {
        return Err(Error::InvalidDimension("exchange limit needs two spot prices".into()));
    }
    black_scholes_call(s0[0], s0[1], var.max(T::zero()).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolatilityBand<T> {
    pub nu_min: T,
    pub nu_max: T,
}

/// Volatility range of a one-asset corridor: the variance interval
/// `[sigma^2 - sigma (k+ + k-), sigma^2 + sigma (k+ + k-)]` clipped at zero.
pub fn kusuoka_band_d1<T: Scalar>(corr: &VolatilityCorridor<T>) -> Result<VolatilityBand<T>> {
    if corr.dim() != 1 {
        return Err(Error::InvalidDimension(format!("scalar band needs d = 1, got {}", corr.dim())));
    }
    let s = corr.sigma()[(0, 0)].abs();
    let k = corr.kappa_plus()[0] + corr.kappa_minus()[0];
    let lo = (s * s - s * k).max(T::zero());
    let hi = s * s + s * k;
    Ok(VolatilityBand { nu_min: lo.sqrt(), nu_max: hi.sqrt() })
}

/// A terminal payoff priced by the supremum of expectations over the corridor.
#[derive(Clone, Debug)]
pub struct GExpectationProblem<T> {
    pub corridor: VolatilityCorridor<T>,
    pub s0: Vec<T>,
    pub payoff: Payoff<T>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BsbGrid {
    /// Log-price nodes per axis.
    pub space_nodes: usize,
    /// Requested time steps; raised to the stability bound when too few.
    pub time_steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct BsbOptions {
    pub grid: BsbGrid,
    /// Upper limit for the time steps after the stability adjustment.
    pub max_time_steps: usize,
    /// Keep the terminal and initial value surfaces for CSV export.
    pub keep_surfaces: bool,
}

impl Default for BsbOptions {
    fn default() -> Self {
        Self { grid: BsbGrid { space_nodes: 200, time_steps: 400 }, max_time_steps: 2_000_000, keep_surfaces: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BsbSolution<T> {
    pub price: T,
    pub time_steps: usize,
    pub dt: T,
    /// Grid axes in log-price, one per asset.
    pub axes: Vec<Vec<T>>,
    /// Whether some extreme point of the corridor was indefinite and got
    /// replaced by its positive semidefinite projection.
    pub psd_projected: bool,
    pub warnings: Vec<String>,
    /// Row-major over the axes, present when surfaces were requested.
    pub terminal: Option<Vec<T>>,
    pub initial: Option<Vec<T>>,
}

impl<T: Scalar> BsbSolution<T> {
    /// Writes `x_1,..,x_d,terminal,initial` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let (Some(term), Some(init)) = (&self.terminal, &self.initial) else {
            return Err(std::io::Error::other("surfaces were not kept"));
        };
        let d = self.axes.len();
        let head: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},terminal,initial", head.join(","))?;
        let m = self.axes[0].len();
        for (idx, (t, u)) in term.iter().zip(init).enumerate() {
            let mut coords = Vec::with_capacity(d);
            let mut rest = idx;
            for axis in self.axes.iter().rev() {
                coords.push(axis[rest % m].to_string());
                rest /= m;
            }
            coords.reverse();
            writeln!(out, "{},{t},{u}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Extreme points of the corridor indexed by the sign pattern of the
/// weight coefficients, already projected onto the PSD cone.
struct ExtremeTable<T> {
    /// `coef[j][k]` maps a symmetric weight `W` to `2 (v_j sigma' W)_k` via
    /// the rows of `V sigma'`.
    v_sigma_t: Matrix<T>,
    entries: Vec<Matrix<T>>,
    d: usize,
    projected: bool,
}

impl<T: Scalar> ExtremeTable<T> {
    fn new(corr: &VolatilityCorridor<T>) -> Self {
        let d = corr.dim();
        let cells = (d + 1) * d;
        let mut projected = false;
        let entries = (0..1usize << cells)
            .map(|mask| {
                let mut w = Matrix::zeros(d + 1, d);
                for j in 0..=d {
                    for k in 0..d {
                        if mask >> (j * d + k) & 1 == 1 {
                            w[(j, k)] = corr.caps()[k];
                        }
                    }
                }
                let beta = corr.basis().vertices().transpose().mul(&w);
                let a = corr.gamma_from_beta(&beta);
                let p = a.psd_projection();
                if p.max_abs_diff(&a) > T::tiny() * (T::one() + a.max_abs()) {
                    projected = true;
                }
                p
            })
            .collect();
        Self { v_sigma_t: corr.basis().vertices().mul(&corr.sigma().transpose()), entries, d, projected }
    }

    /// Maximising extreme point for the symmetric weight `w` (row-major `d x d`).
    fn argmax(&self, w: &[T]) -> &Matrix<T> {
        let d = self.d;
        let mut mask = 0usize;
        for j in 0..=d {
            let vs = self.v_sigma_t.row(j);
            for k in 0..d {
                let mut c = T::zero();
                for r in 0..d {
                    c += vs[r] * w[r * d + k];
                }
                if c > T::zero() {
                    mask |= 1 << (j * d + k);
                }
            }
        }
        &self.entries[mask]
    }
}

/// Value at time zero and spot `s0` of the backward equation
/// `u_t + sup_{a in Gamma} (1/2 sum_ij a_ij u_ij - 1/2 sum_i a_ii u_i) = 0`
/// in log-price coordinates with the payoff as terminal condition, `d` in
/// `{1, 2}`, solved by an explicit scheme on `[ln s0 - 4 nu, ln s0 + 4 nu]`
/// per axis. Boundary values are extrapolated linearly in the price.
pub fn bsb_pde_price<T: Scalar>(problem: &GExpectationProblem<T>, opts: &BsbOptions) -> Result<BsbSolution<T>> {
    let corr = &problem.corridor;
    let d = corr.dim();
    if !(d == 1 || d == 2) {
        return Err(Error::Unsupported(format!("finite-difference solver for d = {d}")));
    }
    if problem.s0.len() != d || problem.s0.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::InvalidMarket("PDE needs one positive spot per asset".into()));
    }
    if !problem.payoff.is_terminal() {
        return Err(Error::InvalidPayoff("PDE solver needs a terminal payoff".into()));
    }
    problem.payoff.validate(d)?;
    let m = opts.grid.space_nodes;
    if m < 5 || opts.grid.time_steps == 0 {
        return Err(Error::InvalidDimension("grid needs at least 5 nodes per axis and one time step".into()));
    }

    let table = ExtremeTable::new(corr);
    let mut warnings = Vec::new();
    if table.projected {
        warnings.push("corridor has indefinite extreme points; projected onto the PSD cone".to_string());
    }

    let max_var: Vec<T> = (0..d).map(|i| table.entries.iter().map(|a| a[(i, i)]).fold(T::zero(), T::max)).collect();
    let axes: Vec<Vec<T>> = (0..d)
        .map(|i| {
            let half = T::lit(4.0) * max_var[i].sqrt().max(T::lit(1e-3));
            let x0 = problem.s0[i].ln();
            (0..m).map(|k| x0 - half + T::lit(2.0) * half * T::of(k) / T::of(m - 1)).collect()
        })
        .collect();
    let h: Vec<T> = axes.iter().map(|a| a[1] - a[0]).collect();

    let rate = table
        .entries
        .iter()
        .map(|a| {
            let mut r = T::zero();
            for i in 0..d {
                r += a[(i, i)] / (h[i] * h[i]);
            }
            if d == 2 {
                r += a[(0, 1)].abs() / (h[0] * h[1]);
            }
            r
        })
        .fold(T::zero(), T::max);
    let needed = (rate.as_f64() * 1.0001).ceil().max(1.0) as usize;
    let steps = opts.grid.time_steps.max(needed);
    if steps > opts.max_time_steps {
        return Err(Error::Cfl(format!("stability needs {steps} time steps, limit {}", opts.max_time_steps)));
    }
    if steps > opts.grid.time_steps {
        warnings.push(format!("time steps raised from {} to {steps} for stability", opts.grid.time_steps));
    }
    let dt = T::one() / T::of(steps);

    let total = m.pow(d as u32);
    let coords = |idx: usize| -> Vec<T> {
        if d == 1 {
            vec![axes[0][idx]]
        } else {
            vec![axes[0][idx / m], axes[1][idx % m]]
        }
    };
    let terminal: Vec<T> = (0..total)
        .map(|idx| {
            let s: Vec<T> = coords(idx).iter().map(|x| x.exp()).collect();
            problem.payoff.evaluate_terminal(&s)
        })
        .collect::<Result<_>>()?;

    let prices: Vec<Vec<T>> = axes.iter().map(|a| a.iter().map(|x| x.exp()).collect()).collect();
    let mut u = terminal.clone();
    let mut next = vec![T::zero(); total];
    let half = T::lit(0.5);
    for _ in 0..steps {
        if d == 1 {
            let h0 = h[0];
            next[1..m - 1].par_iter_mut().enumerate().for_each(|(off, out)| {
                let k = off + 1;
                let uxx = (u[k + 1] - T::lit(2.0) * u[k] + u[k - 1]) / (h0 * h0);
                let ux = (u[k + 1] - u[k - 1]) / (T::lit(2.0) * h0);
                let wv = [half * (uxx - ux)];
                let a = table.argmax(&wv);
                *out = u[k] + dt * wv[0] * a[(0, 0)];
            });
            extrapolate(&mut next, &prices[0], 0, 1, m);
        } else {
            let (h0, h1) = (h[0], h[1]);
            next.par_chunks_mut(m).enumerate().for_each(|(r, row)| {
                if r == 0 || r == m - 1 {
                    return;
                }
                for c in 1..m - 1 {
                    let at = |dr: isize, dc: isize| u[(r as isize + dr) as usize * m + (c as isize + dc) as usize];
                    let u0 = at(0, 0);
                    let u11 = (at(1, 0) - T::lit(2.0) * u0 + at(-1, 0)) / (h0 * h0);
                    let u22 = (at(0, 1) - T::lit(2.0) * u0 + at(0, -1)) / (h1 * h1);
                    let u1 = (at(1, 0) - at(-1, 0)) / (T::lit(2.0) * h0);
                    let u2 = (at(0, 1) - at(0, -1)) / (T::lit(2.0) * h1);
                    let u12 = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (T::lit(4.0) * h0 * h1);
                    let wv = [half * (u11 - u1), half * u12, half * u12, half * (u22 - u2)];
                    let a = table.argmax(&wv);
                    let gen = wv[0] * a[(0, 0)] + T::lit(2.0) * wv[1] * a[(0, 1)] + wv[3] * a[(1, 1)];
                    row[c] = u0 + dt * gen;
                }
            });
            for r in 1..m - 1 {
                extrapolate(&mut next, &prices[1], r * m, 1, m);
            }
            for c in 0..m {
                extrapolate(&mut next, &prices[0], c, m, m);
            }
        }
        std::mem::swap(&mut u, &mut next);
    }

    let centre = (m - 1) / 2;
    let price = if m % 2 == 1 {
        if d == 1 {
            u[centre]
        } else {
            u[centre * m + centre]
        }
    } else {
        // the spot sits halfway between the two middle nodes
        if d == 1 {
            half * (u[centre] + u[centre + 1])
        } else {
            let q = T::lit(0.25);
            q * (u[centre * m + centre]
                + u[centre * m + centre + 1]
                + u[(centre + 1) * m + centre]
                + u[(centre + 1) * m + centre + 1])
        }
    };
    let (terminal, initial) = if opts.keep_surfaces { (Some(terminal), Some(u)) } else { (None, None) };
    Ok(BsbSolution { price, time_steps: steps, dt, axes, psd_projected: table.projected, warnings, terminal, initial })
}

/// Sets both end nodes of the line `start, start + stride, ...` (length `m`)
/// so that the values are linear in the price `p` near each end.
fn extrapolate<T: Scalar>(u: &mut [T], p: &[T], start: usize, stride: usize, m: usize) {
    let at = |k: usize| start + k * stride;
    let slope = (u[at(2)] - u[at(1)]) / (p[2] - p[1]);
    u[at(0)] = u[at(1)] + slope * (p[0] - p[1]);
    let slope = (u[at(m - 2)] - u[at(m - 3)]) / (p[m - 2] - p[m - 3]);
    u[at(m - 1)] = u[at(m - 2)] + slope * (p[m - 1] - p[m - 2]);
}
