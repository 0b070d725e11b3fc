//! Superreplication prices on the event tree via the primal hedging LP and
//! the dual consistent-price-system LP.

use std::time::Instant;

use serde::Serialize;

use crate::lp::{solve_lp, LinearProgram, LpOptions, LpSolution, LpStatus, Objective, RowSense};
use crate::model::{EventTree, MarketSpec, Payoff, DEFAULT_NODE_CAP};
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug)]
pub struct PricerOptions<T> {
    pub node_cap: usize,
    pub lp: LpOptions<T>,
    /// Tolerance for the price-system checks run before returning.
    pub cps_tol: T,
}

impl<T: Scalar> Default for PricerOptions<T> {
    fn default() -> Self {
        Self { node_cap: DEFAULT_NODE_CAP, lp: LpOptions::default(), cps_tol: T::lit(1e-9).max(T::epsilon().sqrt()) }
    }
}

/// Trades at one node: holdings after trading plus the buy and sell volumes
/// that produced them. Leaves liquidate to zero holdings.
#[derive(Clone, Debug, Serialize)]
pub struct HedgeNode<T> {
    pub holdings: Vec<T>,
    pub buy: Vec<T>,
    pub sell: Vec<T>,
}

/// Self-financing strategy indexed like the nodes of [`EventTree`].
#[derive(Clone, Debug, Serialize)]
pub struct HedgingStrategy<T> {
    pub initial_cash: T,
    pub nodes: Vec<HedgeNode<T>>,
}

/// Node measure `q` and measure-weighted shadow prices `y = q M`.
#[derive(Clone, Debug, Serialize)]
pub struct ConsistentPriceSystem<T> {
    pub q: Vec<T>,
    /// `y[node][asset]`.
    pub y: Vec<Vec<T>>,
}

impl<T: Scalar> ConsistentPriceSystem<T> {
    /// Shadow price `y / q` at `node`, undefined where the measure vanishes.
    pub fn shadow_price(&self, node: usize) -> Option<Vec<T>> {
        let q = self.q[node];
        (q > T::lit(1e-12)).then(|| self.y[node].iter().map(|&y| y / q).collect())
    }

    /// Leaf measure in leaf order.
    pub fn leaf_measure<'a>(&'a self, tree: &EventTree<T>) -> &'a [T] {
        &self.q[tree.leaves()]
    }

    /// Checks nonnegativity, normalisation, martingale aggregation of `q`
    /// and `y`, and the cost band at every node with `q > 1e-12`.
    pub fn validate(&self, spec: &MarketSpec<T>, tree: &EventTree<T>, tol: T) -> Result<()> {
        let d = spec.dim();
        if self.q.iter().any(|&q| q < -tol) {
            return Err(Error::PriceSystem("negative node measure".into()));
        }
        let mass: T = self.leaf_measure(tree).iter().copied().sum();
        if (mass - T::one()).abs() > tol {
            return Err(Error::PriceSystem(format!("leaf measure sums to {mass}")));
        }
        for v in tree.internal() {
            let kids = tree.children(v);
            let qsum: T = kids.clone().map(|c| self.q[c]).sum();
            if (qsum - self.q[v]).abs() > tol {
                return Err(Error::PriceSystem(format!("measure does not aggregate at node {v}")));
            }
            for i in 0..d {
                let ysum: T = kids.clone().map(|c| self.y[c][i]).sum();
                if (ysum - self.y[v][i]).abs() > tol * (T::one() + self.y[v][i].abs()) {
                    return Err(Error::PriceSystem(format!(
                        "shadow price of asset {i} is not a martingale at node {v}"
                    )));
                }
            }
        }
        for v in 0..tree.len() {
            let q = self.q[v];
            if q <= T::lit(1e-12) {
                continue;
            }
            let s = tree.prices(v);
            for i in 0..d {
                let lo = (T::one() - spec.sell_rate(i)) * s[i] * q;
                let hi = (T::one() + spec.buy_rate(i)) * s[i] * q;
                let slack = tol * (T::one() + hi.abs());
                if self.y[v][i] < lo - slack || self.y[v][i] > hi + slack {
                    return Err(Error::PriceSystem(format!("asset {i} leaves the cost band at node {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Column layout of the primal LP.
struct PrimalLayout {
    d: usize,
    x: usize,
    /// first of `d` holdings, then `d` buys, `d` sells, then cash (internal only)
    base: Vec<usize>,
}

impl PrimalLayout {
    fn holdings(&self, v: usize, i: usize) -> usize {
        self.base[v] + i
    }
    fn buy(&self, v: usize, i: usize, leaf: bool) -> usize {
        self.base[v] + if leaf { 0 } else { self.d } + i
    }
    fn sell(&self, v: usize, i: usize, leaf: bool) -> usize {
        self.base[v] + if leaf { self.d } else { 2 * self.d } + i
    }
    fn cash(&self, v: usize) -> usize {
        self.base[v] + 3 * self.d
    }
}

fn build_primal<T: Scalar>(
    spec: &MarketSpec<T>,
    tree: &EventTree<T>,
    payoffs: &[T],
) -> (LinearProgram<T>, PrimalLayout) {
    let d = spec.dim();
    let inf = T::infinity();
    let mut lp = LinearProgram::new(Objective::Minimize);
    let x = lp.add_var(T::one(), -inf, inf);
    let mut base = Vec::with_capacity(tree.len());
    for v in 0..tree.len() {
        base.push(lp.num_vars());
        if tree.is_leaf(v) {
            for _ in 0..2 * d {
                lp.add_var(T::zero(), T::zero(), inf);
            }
        } else {
            for _ in 0..d {
                lp.add_var(T::zero(), -inf, inf);
            }
            for _ in 0..2 * d {
                lp.add_var(T::zero(), T::zero(), inf);
            }
            lp.add_var(T::zero(), -inf, inf);
        }
    }
    let layout = PrimalLayout { d, x, base };
    let buy_cost: Vec<T> = (0..d).map(|i| T::one() + spec.buy_rate(i)).collect();
    let sell_gain: Vec<T> = (0..d).map(|i| T::one() - spec.sell_rate(i)).collect();

    let mut row = Vec::with_capacity(4 * d + 2);
    for v in 0..tree.len() {
        let leaf = tree.is_leaf(v);
        let parent = tree.parent(v);
        let s = tree.prices(v);
        for i in 0..d {
            row.clear();
            if !leaf {
                row.push((layout.holdings(v, i), T::one()));
            }
            if let Some(p) = parent {
                row.push((layout.holdings(p, i), -T::one()));
            }
            row.push((layout.buy(v, i, leaf), -T::one()));
            row.push((layout.sell(v, i, leaf), T::one()));
            lp.add_row(&row, RowSense::Eq, T::zero());
        }
        row.clear();
        let prev_cash = parent.map_or(layout.x, |p| layout.cash(p));
        let sign = if leaf { -T::one() } else { T::one() };
        if !leaf {
            row.push((layout.cash(v), T::one()));
        }
        row.push((prev_cash, -sign));
        for i in 0..d {
            row.push((layout.buy(v, i, leaf), sign * buy_cost[i] * s[i]));
            row.push((layout.sell(v, i, leaf), -sign * sell_gain[i] * s[i]));
        }
        if leaf {
            let k = v - tree.leaves().start;
            lp.add_row(&row, RowSense::Ge, payoffs[k]);
        } else {
            lp.add_row(&row, RowSense::Eq, T::zero());
        }
    }
    (lp, layout)
}

/// Column layout of the dual LP: `q` per node then the band offsets `theta`
/// (absent for assets whose band has zero width).
struct DualLayout {
    theta_base: Vec<Option<usize>>,
}

impl DualLayout {
    fn theta(&self, v: usize, i: usize) -> Option<usize> {
        self.theta_base[i].map(|b| b + v)
    }
    fn q(&self, v: usize) -> usize {
        v
    }
}

/// The dual LP in variables `q(v) >= 0` and `theta^i(v)` with
/// `y^i = S^i ((1 - kappa^-_i/sqrt n) q + theta^i)`, `0 <= theta^i <= width_i q`.
fn build_dual<T: Scalar>(spec: &MarketSpec<T>, tree: &EventTree<T>, payoffs: &[T]) -> (LinearProgram<T>, DualLayout) {
    let d = spec.dim();
    let nodes = tree.len();
    let leaf_start = tree.leaves().start;
    let mut lp = LinearProgram::new(Objective::Maximize);
    for v in 0..nodes {
        let c = if tree.is_leaf(v) { payoffs[v - leaf_start] } else { T::zero() };
        lp.add_var(c, T::zero(), T::infinity());
    }
    let width: Vec<T> = (0..d).map(|i| spec.buy_rate(i) + spec.sell_rate(i)).collect();
    let mut theta_base = vec![None; d];
    for i in 0..d {
        if width[i] > T::zero() {
            theta_base[i] = Some(lp.num_vars());
            for _ in 0..nodes {
                lp.add_var(T::zero(), T::zero(), T::infinity());
            }
        }
    }
    let layout = DualLayout { theta_base };
    let low: Vec<T> = (0..d).map(|i| T::one() - spec.sell_rate(i)).collect();

    lp.add_row(&[(layout.q(0), T::one())], RowSense::Eq, T::one());
    let mut row = Vec::new();
    for v in tree.internal() {
        row.clear();
        row.push((layout.q(v), T::one()));
        for c in tree.children(v) {
            row.push((layout.q(c), -T::one()));
        }
        lp.add_row(&row, RowSense::Eq, T::zero());
        for i in 0..d {
            row.clear();
            let s = tree.prices(v)[i];
            row.push((layout.q(v), s * low[i]));
            if let Some(t) = layout.theta(v, i) {
                row.push((t, s));
            }
            for c in tree.children(v) {
                let sc = tree.prices(c)[i];
                row.push((layout.q(c), -sc * low[i]));
                if let Some(t) = layout.theta(c, i) {
                    row.push((t, -sc));
                }
            }
            lp.add_row(&row, RowSense::Eq, T::zero());
        }
    }
    for i in 0..d {
        if layout.theta_base[i].is_none() {
            continue;
        }
        for v in 0..nodes {
            let t = layout.theta(v, i).unwrap();
            lp.add_row(&[(t, T::one()), (layout.q(v), -width[i])], RowSense::Le, T::zero());
        }
    }
    (lp, layout)
}

fn prepare<T: Scalar>(spec: &MarketSpec<T>, payoff: &Payoff<T>, cap: usize) -> Result<(EventTree<T>, Vec<T>)> {
    payoff.validate(spec.dim())?;
    let tree = EventTree::build(spec, cap)?;
    let payoffs = tree.leaf_payoffs(payoff)?;
    Ok((tree, payoffs))
}

/// Primal LP: minimise the initial cash `x` over self-financing strategies
/// whose liquidation value dominates the payoff at every leaf.
pub fn build_primal_lp<T: Scalar>(spec: &MarketSpec<T>, payoff: &Payoff<T>) -> Result<LinearProgram<T>> {
    let (tree, payoffs) = prepare(spec, payoff, DEFAULT_NODE_CAP)?;
    Ok(build_primal(spec, &tree, &payoffs).0)
}

/// Dual LP: maximise the expected payoff over consistent price systems.
pub fn build_dual_lp<T: Scalar>(spec: &MarketSpec<T>, payoff: &Payoff<T>) -> Result<LinearProgram<T>> {
    let (tree, payoffs) = prepare(spec, payoff, DEFAULT_NODE_CAP)?;
    Ok(build_dual(spec, &tree, &payoffs).0)
}

fn require_optimal<T: Scalar>(sol: LpSolution<T>) -> Result<LpSolution<T>> {
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        s => Err(Error::NotOptimal(s)),
    }
}

fn cps_from_dual<T: Scalar>(
    spec: &MarketSpec<T>,
    tree: &EventTree<T>,
    layout: &DualLayout,
    x: &[T],
) -> ConsistentPriceSystem<T> {
    let d = spec.dim();
    let q: Vec<T> = (0..tree.len()).map(|v| x[layout.q(v)]).collect();
    let y = (0..tree.len())
        .map(|v| {
            let s = tree.prices(v);
            (0..d)
                .map(|i| {
                    let theta = layout.theta(v, i).map_or(T::zero(), |t| x[t]);
                    s[i] * ((T::one() - spec.sell_rate(i)) * q[v] + theta)
                })
                .collect()
        })
        .collect();
    ConsistentPriceSystem { q, y }
}

/// Value of the claim from the dual LP alone, with its price system.
pub fn dual_price<T: Scalar>(
    spec: &MarketSpec<T>,
    payoff: &Payoff<T>,
    opts: &PricerOptions<T>,
) -> Result<(T, ConsistentPriceSystem<T>, usize)> {
    let (tree, payoffs) = prepare(spec, payoff, opts.node_cap)?;
    let (lp, layout) = build_dual(spec, &tree, &payoffs);
    let sol = require_optimal(solve_lp(&lp, &opts.lp)?)?;
    let cps = cps_from_dual(spec, &tree, &layout, &sol.x);
    cps.validate(spec, &tree, opts.cps_tol)?;
    Ok((sol.objective, cps, sol.iterations))
}

/// Both LPs, the hedge and price system they produce, and their gap.
#[derive(Clone, Debug, Serialize)]
pub struct SuperreplicationResult<T> {
    /// Dual optimum, the reported price.
    pub value: T,
    pub primal: T,
    pub dual: T,
    pub gap: T,
    pub primal_iterations: usize,
    pub dual_iterations: usize,
    pub wall_time_secs: f64,
    pub hedge: HedgingStrategy<T>,
    pub cps: ConsistentPriceSystem<T>,
}

/// Superreplication price of `payoff`, computed by both LPs.
pub fn superreplication_price<T: Scalar>(
    spec: &MarketSpec<T>,
    payoff: &Payoff<T>,
    opts: &PricerOptions<T>,
) -> Result<SuperreplicationResult<T>> {
    let start = Instant::now();
    let (tree, payoffs) = prepare(spec, payoff, opts.node_cap)?;
    let d = spec.dim();

    let (dual_lp, dual_layout) = build_dual(spec, &tree, &payoffs);
    let (primal_lp, layout) = build_primal(spec, &tree, &payoffs);
    let (dual, primal) = rayon::join(|| solve_lp(&dual_lp, &opts.lp), || solve_lp(&primal_lp, &opts.lp));
    let dual = require_optimal(dual?)?;
    let primal = require_optimal(primal?)?;
    let cps = cps_from_dual(spec, &tree, &dual_layout, &dual.x);
    cps.validate(spec, &tree, opts.cps_tol)?;

    let x = &primal.x;
    let nodes = (0..tree.len())
        .map(|v| {
            let leaf = tree.is_leaf(v);
            HedgeNode {
                holdings: (0..d).map(|i| if leaf { T::zero() } else { x[layout.holdings(v, i)] }).collect(),
                buy: (0..d).map(|i| x[layout.buy(v, i, leaf)]).collect(),
                sell: (0..d).map(|i| x[layout.sell(v, i, leaf)]).collect(),
            }
        })
        .collect();
    let hedge = HedgingStrategy { initial_cash: x[layout.x], nodes };

    Ok(SuperreplicationResult {
        value: dual.objective,
        primal: primal.objective,
        dual: dual.objective,
        gap: (primal.objective - dual.objective).abs(),
        primal_iterations: primal.iterations,
        dual_iterations: dual.iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
        hedge,
        cps,
    })
}

impl<T: Scalar> HedgingStrategy<T> {
    /// Terminal cash after liquidation at every leaf, replaying the trades.
    pub fn terminal_wealth(&self, spec: &MarketSpec<T>, tree: &EventTree<T>) -> Vec<T> {
        let d = spec.dim();
        let mut cash = vec![T::zero(); tree.len()];
        for v in 0..tree.len() {
            let prev = tree.parent(v).map_or(self.initial_cash, |p| cash[p]);
            let s = tree.prices(v);
            let node = &self.nodes[v];
            let mut c = prev;
            for i in 0..d {
                c -= (T::one() + spec.buy_rate(i)) * s[i] * node.buy[i];
                c += (T::one() - spec.sell_rate(i)) * s[i] * node.sell[i];
            }
            cash[v] = c;
        }
        cash[tree.leaves()].to_vec()
    }
}
