//! Shadow price processes close to the tree prices that admit martingale
//! measures and reproduce a prescribed piecewise-constant volatility
//! control in the limit.
//!
//! For a control with variance target `a_l` on `(T_l, T_{l+1}]` the process
//! `A_k` equals `(xi_k beta_l + Phi(beta_l)) / sqrt n` with `beta_l = Psi(a_l)`,
//! blended linearly over `[sqrt n]` periods after each breakpoint. The shadow
//! price is `M_k = S_k (1 + A_k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corridor::VolatilityCorridor;
use crate::linalg::{dot, Matrix};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus, Objective, RowSense};
use crate::model::{MarketSpec, PathIndex, Payoff};
use crate::{Error, Result, Scalar};

/// Variance target on one interval as a function of `N` at earlier times,
/// given by multilinear interpolation on a lookup grid. Inputs outside the
/// grid are clamped to its edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRule<T> {
    /// `(time, asset)` pairs: input `r` is `N^asset` at period `[n time]`.
    pub inputs: Vec<(T, usize)>,
    /// One increasing grid per input.
    pub axes: Vec<Vec<T>>,
    /// Targets at the grid nodes, row-major with the last axis fastest.
    pub values: Vec<Matrix<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalControl<T> {
    Constant { target: Matrix<T> },
    Feedback(FeedbackRule<T>),
}

/// Piecewise-constant volatility control with breakpoints
/// `0 = T_0 < ... < T_{L+1} = 1`; `intervals[l]` acts on `(T_l, T_{l+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseVolControl<T> {
    pub breakpoints: Vec<T>,
    pub intervals: Vec<IntervalControl<T>>,
    /// Every target must exceed `epsilon I` in the positive definite order.
    pub epsilon: T,
}

impl<T: Scalar> PiecewiseVolControl<T> {
    pub fn constant(target: Matrix<T>, epsilon: T) -> Self {
        Self { breakpoints: vec![T::zero(), T::one()], intervals: vec![IntervalControl::Constant { target }], epsilon }
    }

    fn check_target(a: &Matrix<T>, corr: &VolatilityCorridor<T>, eps: T) -> Result<Matrix<T>> {
        let d = corr.dim();
        if a.rows() != d || a.cols() != d {
            return Err(Error::InvalidControl(format!("variance target must be {d}x{d}")));
        }
        if a.max_abs_diff(&a.transpose()) > T::tiny() * (T::one() + a.max_abs()) {
            return Err(Error::InvalidControl("variance target must be symmetric".into()));
        }
        let (eig, _) = a.symmetric_eigen();
        let low = eig.iter().copied().fold(T::infinity(), T::min);
        if !(low > eps) {
            return Err(Error::InvalidControl(format!("variance target has eigenvalue {low} not above epsilon {eps}")));
        }
        corr.psi(a).map_err(|e| match e {
            Error::NotInGamma => Error::InvalidControl("variance target outside the volatility set".into()),
            other => other,
        })
    }

    /// Validates against the corridor and resolves every target into its
    /// polytope element.
    fn compile(&self, corr: &VolatilityCorridor<T>) -> Result<Vec<CompiledInterval<T>>> {
        let bp = &self.breakpoints;
        if bp.len() < 2 || bp[0] != T::zero() || bp[bp.len() - 1] != T::one() || bp.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidControl("breakpoints must increase from 0 to 1".into()));
        }
        if self.intervals.len() != bp.len() - 1 {
            return Err(Error::InvalidControl(format!(
                "{} intervals for {} breakpoints",
                self.intervals.len(),
                bp.len()
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidControl("epsilon must be positive".into()));
        }
        self.intervals
            .iter()
            .enumerate()
            .map(|(l, ctrl)| match ctrl {
                IntervalControl::Constant { target } => {
                    Ok(CompiledInterval::Constant(Self::check_target(target, corr, self.epsilon)?))
                }
                IntervalControl::Feedback(rule) => {
                    let grid: usize = rule.axes.iter().map(Vec::len).product();
                    if rule.inputs.len() != rule.axes.len() || rule.values.len() != grid || rule.axes.is_empty() {
                        return Err(Error::InvalidControl(format!("interval {l}: lookup grid shape mismatch")));
                    }
                    for &(t, asset) in &rule.inputs {
                        if asset >= corr.dim() || !(t >= T::zero() && t <= bp[l]) {
                            return Err(Error::InvalidControl(format!(
                                "interval {l}: input ({t}, {asset}) must read an asset after time 0 and by T_l"
                            )));
                        }
                    }
                    if rule.axes.iter().any(|a| a.is_empty() || a.windows(2).any(|w| !(w[0] < w[1]))) {
                        return Err(Error::InvalidControl(format!("interval {l}: axes must increase")));
                    }
                    let betas = rule
                        .values
                        .iter()
                        .map(|a| Self::check_target(a, corr, self.epsilon))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(CompiledInterval::Feedback { rule: rule.clone(), betas })
                }
            })
            .collect()
    }
}

enum CompiledInterval<T> {
    Constant(Matrix<T>),
    Feedback { rule: FeedbackRule<T>, betas: Vec<Matrix<T>> },
}

/// Grid processes along one path, indexed by period `0..=k`.
#[derive(Clone, Debug, Serialize)]
pub struct KusuokaProcesses<T> {
    pub n: usize,
    pub s: Vec<Vec<T>>,
    pub a: Vec<Vec<T>>,
    pub m: Vec<Vec<T>>,
    pub big_n: Vec<Vec<T>>,
    pub x: Vec<Vec<T>>,
    /// Polytope element in force on each interval reached so far.
    pub betas: Vec<Matrix<T>>,
}

impl<T: Scalar> KusuokaProcesses<T> {
    /// `sum_{k0 < m <= k1} Delta N_m Delta N_m'`.
    pub fn quadratic_variation(&self, k0: usize, k1: usize) -> Matrix<T> {
        let d = self.s[0].len();
        let mut q = Matrix::zeros(d, d);
        for m in k0 + 1..=k1 {
            for i in 0..d {
                let di = self.big_n[m][i] - self.big_n[m - 1][i];
                for j in 0..d {
                    q[(i, j)] += di * (self.big_n[m][j] - self.big_n[m - 1][j]);
                }
            }
        }
        q
    }
}

/// Incremental construction along a path.
pub struct KusuokaBuilder<'a, T> {
    spec: &'a MarketSpec<T>,
    corr: VolatilityCorridor<T>,
    intervals: Vec<CompiledInterval<T>>,
    /// `[n T_l]` for `l = 0..=L+1`.
    starts: Vec<usize>,
    window: usize,
    root_n: T,
    state: KusuokaProcesses<T>,
    phis: Vec<Vec<T>>,
}

fn floor_index<T: Scalar>(n: usize, t: T) -> usize {
    ((n as f64) * t.as_f64() + 1e-9).floor() as usize
}

impl<'a, T: Scalar> KusuokaBuilder<'a, T> {
    pub fn new(spec: &'a MarketSpec<T>, control: &PiecewiseVolControl<T>) -> Result<Self> {
        let corr = VolatilityCorridor::from_market(spec)?;
        let intervals = control.compile(&corr)?;
        let n = spec.periods();
        let window = (n as f64).sqrt().floor() as usize;
        let starts: Vec<usize> = control.breakpoints.iter().map(|&t| floor_index(n, t)).collect();
        if starts.windows(2).any(|w| w[1] - w[0] < 2 * window) {
            return Err(Error::NTooSmall { n, window });
        }
        let d = spec.dim();
        let s0 = spec.s0().to_vec();
        let state = KusuokaProcesses {
            n,
            s: vec![s0.clone()],
            a: vec![vec![T::zero(); d]],
            m: vec![s0],
            big_n: vec![vec![T::zero(); d]],
            x: vec![vec![T::zero(); d]],
            betas: Vec::new(),
        };
        let mut b = Self { spec, corr, intervals, starts, window, root_n: T::of(n).sqrt(), state, phis: Vec::new() };
        b.resolve_interval(0)?;
        Ok(b)
    }

    pub fn depth(&self) -> usize {
        self.state.s.len() - 1
    }

    pub fn processes(&self) -> &KusuokaProcesses<T> {
        &self.state
    }

    pub fn into_processes(self) -> KusuokaProcesses<T> {
        self.state
    }

    fn resolve_interval(&mut self, l: usize) -> Result<()> {
        let beta = match &self.intervals[l] {
            CompiledInterval::Constant(b) => b.clone(),
            CompiledInterval::Feedback { rule, betas } => {
                let n = self.state.n;
                let inputs: Vec<T> =
                    rule.inputs.iter().map(|&(t, asset)| self.state.big_n[floor_index(n, t)][asset]).collect();
                interpolate_betas(rule, betas, &inputs)
            }
        };
        let phi = self.corr.phi(&beta)?;
        self.state.betas.push(beta);
        self.phis.push(phi);
        Ok(())
    }

    /// Interval containing period `k >= 1`.
    fn interval_of(&self, k: usize) -> usize {
        (0..self.intervals.len()).rev().find(|&l| k > self.starts[l]).unwrap_or(0)
    }

    fn prescription(&self, l: usize, xi: &[T]) -> Vec<T> {
        let d = xi.len();
        let beta = &self.state.betas[l];
        (0..d).map(|c| ((0..d).map(|r| xi[r] * beta[(r, c)]).sum::<T>() + self.phis[l][c]) / self.root_n).collect()
    }

    /// `(A_{k+1}, S_{k+1}, Delta N_{k+1})` if the path moves along branch `j`.
    pub fn candidate(&self, j: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let k = self.depth() + 1;
        let xi = self.spec.driver_vector(j);
        let l = self.interval_of(k);
        let r = self.window.max(1);
        let since = k - self.starts[l];
        let a = if since <= self.window {
            let lam = T::of(since) / T::of(r);
            let new = self.prescription(l, xi);
            let old = if l == 0 { vec![T::zero(); xi.len()] } else { self.prescription(l - 1, xi) };
            old.iter().zip(&new).map(|(&o, &w)| (T::one() - lam) * o + lam * w).collect()
        } else {
            self.prescription(l, xi)
        };
        let f = self.spec.step_factors(j);
        let prev_s = &self.state.s[k - 1];
        let prev_a = &self.state.a[k - 1];
        let s: Vec<T> = prev_s.iter().zip(f).map(|(&p, &g)| p * g).collect();
        let dn = (0..xi.len()).map(|i| f[i] * (T::one() + a[i]) - (T::one() + prev_a[i])).collect();
        (a, s, dn)
    }

    /// Moves along branch `j`.
    pub fn step(&mut self, j: usize) -> Result<()> {
        let k = self.depth() + 1;
        if k > self.state.n {
            return Err(Error::LeafNode(k - 1));
        }
        if j >= self.spec.branching() {
            return Err(Error::InvalidNode(format!("branch {j} of {}", self.spec.branching())));
        }
        let (a, s, dn) = self.candidate(j);
        let xi = self.spec.driver_vector(j);
        let sigma = self.spec.sigma();
        let d = xi.len();
        let m: Vec<T> = s.iter().zip(&a).map(|(&p, &x)| p * (T::one() + x)).collect();
        let big_n: Vec<T> = (0..d).map(|i| self.state.big_n[k - 1][i] + dn[i]).collect();
        let x: Vec<T> = (0..d)
            .map(|i| {
                let alpha = dot(sigma.row(i), xi) / self.root_n;
                self.state.x[k - 1][i] + alpha * (T::one() + a[i])
            })
            .collect();
        self.state.s.push(s);
        self.state.a.push(a);
        self.state.m.push(m);
        self.state.big_n.push(big_n);
        self.state.x.push(x);
        let l = self.interval_of(k);
        if k == self.starts[l + 1] && l + 1 < self.intervals.len() {
            self.resolve_interval(l + 1)?;
        }
        Ok(())
    }

    /// Increments `Delta N` of every child of the current node.
    pub fn child_increments(&self) -> Vec<Vec<T>> {
        (0..self.spec.branching()).map(|j| self.candidate(j).2).collect()
    }
}

fn interpolate_betas<T: Scalar>(rule: &FeedbackRule<T>, betas: &[Matrix<T>], inputs: &[T]) -> Matrix<T> {
    // per axis: lower node index and weight of the upper node
    let cells: Vec<(usize, T)> = rule
        .axes
        .iter()
        .zip(inputs)
        .map(|(axis, &v)| {
            if axis.len() == 1 || v <= axis[0] {
                return (0, T::zero());
            }
            if v >= axis[axis.len() - 1] {
                return (axis.len() - 2, T::one());
            }
            let i = axis.partition_point(|&g| g <= v) - 1;
            (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
        })
        .collect();
    let dims: Vec<usize> = rule.axes.iter().map(Vec::len).collect();
    let mut out = Matrix::zeros(betas[0].rows(), betas[0].cols());
    for corner in 0..1usize << dims.len() {
        let mut weight = T::one();
        let mut flat = 0;
        for (ax, (&(lo, t), &len)) in cells.iter().zip(&dims).enumerate() {
            let up = corner >> ax & 1 == 1;
            if up && len == 1 {
                weight = T::zero();
            }
            weight *= if up { t } else { T::one() - t };
            flat = flat * len + if up { lo + 1 } else { lo };
        }
        if weight != T::zero() {
            out = out.add(&betas[flat].scale(weight));
        }
    }
    out
}

/// Builds `A, M, N, X` along the path `path` (any prefix of a full path).
pub fn build_a_process<T: Scalar>(
    spec: &MarketSpec<T>,
    control: &PiecewiseVolControl<T>,
    path: &PathIndex,
) -> Result<KusuokaProcesses<T>> {
    if path.len() > spec.periods() {
        return Err(Error::InvalidNode(format!("path of length {} exceeds {} periods", path.len(), spec.periods())));
    }
    let mut b = KusuokaBuilder::new(spec, control)?;
    for &j in &path.0 {
        b.step(j)?;
    }
    Ok(b.into_processes())
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeMeasure<T> {
    pub feasible: bool,
    /// Branch probabilities, empty when no measure balances the increments.
    pub q: Vec<T>,
    /// Smallest branch probability; negative infinity when infeasible.
    pub margin: T,
}

/// Margin-maximal probabilities on the children making `Delta N` centred:
/// maximise `delta` subject to `q_j >= delta`, `sum q = 1`, `sum q_j dN_j = 0`.
pub fn max_margin_lp<T: Scalar>(increments: &[Vec<T>]) -> Result<NodeMeasure<T>> {
    let m = increments.len();
    let d = increments.first().map_or(0, Vec::len);
    // rescale so that increments are of order one
    let scale = increments.iter().flatten().fold(T::zero(), |a, &x| a.max(x.abs()));
    let scale = if scale > T::zero() { scale } else { T::one() };
    let mut lp = LinearProgram::new(Objective::Maximize);
    let q: Vec<usize> = (0..m).map(|_| lp.add_var(T::zero(), T::zero(), T::one())).collect();
    let delta = lp.add_var(T::one(), -T::one(), T::one());
    for &qj in &q {
        lp.add_row(&[(qj, T::one()), (delta, -T::one())], RowSense::Ge, T::zero());
    }
    let ones: Vec<(usize, T)> = q.iter().map(|&v| (v, T::one())).collect();
    lp.add_row(&ones, RowSense::Eq, T::one());
    for i in 0..d {
        let row: Vec<(usize, T)> = q.iter().zip(increments).map(|(&v, inc)| (v, inc[i] / scale)).collect();
        lp.add_row(&row, RowSense::Eq, T::zero());
    }
    let sol = solve_lp(&lp, &LpOptions::default())?;
    match sol.status {
        LpStatus::Optimal => {
            let margin = sol.x[delta];
            let probs: Vec<T> = q.iter().map(|&v| sol.x[v].max(T::zero())).collect();
            Ok(NodeMeasure { feasible: margin > T::tiny(), q: probs, margin })
        }
        LpStatus::Infeasible => Ok(NodeMeasure { feasible: false, q: Vec::new(), margin: T::neg_infinity() }),
        s => Err(Error::NotOptimal(s)),
    }
}

/// Centred probabilities for `d + 1` children. With affinely independent
/// increments the constraints leave a single point (the barycentric
/// coordinates of the origin), which is read off a linear solve; otherwise
/// the margin LP decides.
fn node_measure<T: Scalar>(increments: &[Vec<T>]) -> Result<NodeMeasure<T>> {
    let m = increments.len();
    let d = increments[0].len();
    if m == d + 1 {
        let scale = increments.iter().flatten().fold(T::zero(), |a, &x| a.max(x.abs()));
        if scale > T::zero() {
            let mut sys = Matrix::zeros(m, m);
            for (j, inc) in increments.iter().enumerate() {
                for i in 0..d {
                    sys[(i, j)] = inc[i] / scale;
                }
                sys[(d, j)] = T::one();
            }
            if sys.min_singular_value() > T::epsilon().sqrt() {
                let mut rhs = Matrix::zeros(m, 1);
                rhs[(d, 0)] = T::one();
                if let Some(sol) = sys.solve(&rhs) {
                    let q: Vec<T> = (0..m).map(|j| sol[(j, 0)]).collect();
                    let margin = q.iter().copied().fold(T::infinity(), T::min);
                    let feasible = margin > T::tiny();
                    return Ok(if margin >= T::zero() {
                        NodeMeasure { feasible, q, margin }
                    } else {
                        NodeMeasure { feasible: false, q: Vec::new(), margin: T::neg_infinity() }
                    });
                }
            }
        }
    }
    max_margin_lp(increments)
}

/// Martingale measure for `N` on the children of `node`.
pub fn node_mm_feasibility<T: Scalar>(
    spec: &MarketSpec<T>,
    control: &PiecewiseVolControl<T>,
    node: &PathIndex,
) -> Result<NodeMeasure<T>> {
    if node.len() >= spec.periods() {
        return Err(Error::LeafNode(node.len()));
    }
    let mut b = KusuokaBuilder::new(spec, control)?;
    for &j in &node.0 {
        b.step(j)?;
    }
    node_measure(&b.child_increments())
}

#[derive(Clone, Debug, Serialize)]
pub struct McEstimate<T> {
    pub n: usize,
    pub paths: usize,
    pub estimate: T,
    pub stderr: T,
    pub infeasible_nodes: usize,
    pub warnings: Vec<String>,
}

/// Samples a path under the per-node measures. Returns the prices along the
/// path and its processes.
fn sample_path<T: Scalar>(
    spec: &MarketSpec<T>,
    control: &PiecewiseVolControl<T>,
    rng: &mut ChaCha8Rng,
) -> Result<KusuokaProcesses<T>> {
    let mut b = KusuokaBuilder::new(spec, control)?;
    let mut path = Vec::with_capacity(spec.periods());
    for _ in 0..spec.periods() {
        let meas = node_measure(&b.child_increments())?;
        if !meas.feasible {
            return Err(Error::NoMartingaleMeasure { node: path });
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = meas.q.len() - 1;
        for (j, q) in meas.q.iter().enumerate() {
            acc += q.as_f64();
            if u < acc {
                pick = j;
                break;
            }
        }
        b.step(pick)?;
        path.push(pick);
    }
    Ok(b.into_processes())
}

/// Generator for path `index`: the seed picks the key, the index the stream.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean payoff under the constructed measure, a lower bound for the
/// superreplication price on the same tree.
pub fn mc_lower_bound<T: Scalar>(
    spec: &MarketSpec<T>,
    control: &PiecewiseVolControl<T>,
    payoff: &Payoff<T>,
    paths: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    payoff.validate(spec.dim())?;
    if paths < 2 {
        return Err(Error::InvalidControl("need at least two paths".into()));
    }
    let mut warnings = Vec::new();
    let corr = VolatilityCorridor::from_market(spec)?;
    if !corr.check_norm_bound()?.passes {
        let check = corr.check_invertibility(2)?;
        if !check.passes {
            warnings.push("invertibility condition fails on this corridor; nodes may lack a martingale measure".into());
        }
    }
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let proc = sample_path(spec, control, &mut path_rng(seed, p))?;
            Ok(payoff.evaluate(&proc.s)?.as_f64())
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / paths as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    Ok(McEstimate {
        n: spec.periods(),
        paths,
        estimate: T::lit(mean),
        stderr: T::lit((var / paths as f64).sqrt()),
        infeasible_nodes: 0,
        warnings,
    })
}

/// Quadratic variation of `N` per unit time over the last plateau of a
/// constant-control path sampled under the constructed measure, for
/// comparison with the variance target.
pub fn plateau_qv<T: Scalar>(
    spec: &MarketSpec<T>,
    control: &PiecewiseVolControl<T>,
    paths: usize,
    seed: u64,
) -> Result<Matrix<T>> {
    let n = spec.periods();
    let window = (n as f64).sqrt().floor() as usize;
    let last = control.breakpoints.len() - 2;
    let k0 = floor_index(n, control.breakpoints[last]) + window;
    let span = T::of(n - k0) / T::of(n);
    let d = spec.dim();
    let sums: Vec<Matrix<T>> = (0..paths)
        .into_par_iter()
        .map(|p| Ok(sample_path(spec, control, &mut path_rng(seed, p))?.quadratic_variation(k0, n)))
        .collect::<Result<_>>()?;
    let total = sums.iter().fold(Matrix::zeros(d, d), |acc, m| acc.add(m));
    Ok(total.scale(T::one() / (T::of(paths) * span)))
}
