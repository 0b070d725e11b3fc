//! The n-period market, its event tree, path interpolation and payoffs.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::basis::SimplexBasis;
use crate::linalg::Matrix;
use crate::{Error, Result, Scalar};

/// Random driver of each period.
#[derive(Clone, Debug, Serialize)]
pub enum Driver<T> {
    /// `d + 1` equally likely simplex vertices.
    Simplex(SimplexBasis<T>),
    /// `2^d` equally likely sign vectors in `{-1, 1}^d`. Branch `j` has
    /// component `i` equal to `-1` exactly when bit `i` of `j` is set.
    ProductCrr,
}

/// One discrete market: dimensions, volatility, initial prices, cost
/// coefficients and driver.
///
/// Cost coefficients are unscaled; a trade in period terms pays
/// `kappa / sqrt(n)` proportionally.
#[derive(Clone, Debug, Serialize)]
pub struct MarketSpec<T> {
    d: usize,
    n: usize,
    sigma: Matrix<T>,
    s0: Vec<T>,
    kappa_plus: Vec<T>,
    kappa_minus: Vec<T>,
    driver: Driver<T>,
    #[serde(skip)]
    xi: Vec<Vec<T>>,
    #[serde(skip)]
    factors: Vec<Vec<T>>,
}

impl<T: Scalar> MarketSpec<T> {
    pub fn new(
        n: usize,
        sigma: Matrix<T>,
        s0: Vec<T>,
        kappa_plus: Vec<T>,
        kappa_minus: Vec<T>,
        driver: Driver<T>,
    ) -> Result<Self> {
        let d = s0.len();
        if d == 0 {
            return Err(Error::InvalidDimension("market needs at least one asset".into()));
        }
        if n == 0 {
            return Err(Error::InvalidMarket("n must be positive".into()));
        }
        if sigma.rows() != d || sigma.cols() != d {
            return Err(Error::InvalidDimension(format!(
                "sigma is {}x{}, expected {d}x{d}",
                sigma.rows(),
                sigma.cols()
            )));
        }
        if kappa_plus.len() != d || kappa_minus.len() != d {
            return Err(Error::InvalidDimension("cost vectors must have one entry per asset".into()));
        }
        if sigma.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMarket("non-finite volatility entry".into()));
        }
        if s0.iter().any(|&s| !(s.is_finite() && s > T::zero())) {
            return Err(Error::InvalidMarket("initial prices must be positive".into()));
        }
        if kappa_plus.iter().chain(&kappa_minus).any(|&k| !(k.is_finite() && k >= T::zero())) {
            return Err(Error::InvalidMarket("cost coefficients must be nonnegative".into()));
        }
        if sigma.min_singular_value() <= T::lit(1e-10) {
            return Err(Error::SingularVolatility);
        }

        let xi: Vec<Vec<T>> = match &driver {
            Driver::Simplex(b) => {
                if b.dim() != d {
                    return Err(Error::InvalidDimension(format!(
                        "basis has dimension {}, market has {d} assets",
                        b.dim()
                    )));
                }
                (0..b.len()).map(|j| b.vertex(j).to_vec()).collect()
            }
            Driver::ProductCrr => {
                if d >= usize::BITS as usize - 1 {
                    return Err(Error::InvalidDimension("too many assets for a product driver".into()));
                }
                let identity = Matrix::identity(d);
                if sigma.max_abs_diff(&identity) > T::zero() {
                    return Err(Error::InvalidMarket("the product driver requires sigma = I".into()));
                }
                if kappa_plus.iter().chain(&kappa_minus).any(|&k| k != T::zero()) {
                    return Err(Error::InvalidMarket("the product driver requires zero costs".into()));
                }
                (0..1usize << d)
                    .map(|j| (0..d).map(|i| if j >> i & 1 == 1 { -T::one() } else { T::one() }).collect())
                    .collect()
            }
        };

        let root_n = T::of(n).sqrt();
        let mut worst = T::zero();
        let factors: Vec<Vec<T>> = xi
            .iter()
            .map(|x| {
                let step = sigma.right_mul(x);
                step.iter()
                    .map(|&r| {
                        worst = worst.max(r.abs() / root_n);
                        T::one() + r / root_n
                    })
                    .collect()
            })
            .collect();
        // Prices may touch zero (one-period examples with unit volatility do) but not cross it.
        if worst > T::one() {
            return Err(Error::InvalidMarket(format!(
                "per-period moves of relative size {worst} produce negative prices; increase n"
            )));
        }

        Ok(Self { d, n, sigma, s0, kappa_plus, kappa_minus, driver, xi, factors })
    }

    /// Same market with `n` periods.
    pub fn with_periods(&self, n: usize) -> Result<Self> {
        Self::new(
            n,
            self.sigma.clone(),
            self.s0.clone(),
            self.kappa_plus.clone(),
            self.kappa_minus.clone(),
            self.driver.clone(),
        )
    }

    /// Same market with both cost vectors replaced.
    pub fn with_costs(&self, kappa_plus: Vec<T>, kappa_minus: Vec<T>) -> Result<Self> {
        Self::new(self.n, self.sigma.clone(), self.s0.clone(), kappa_plus, kappa_minus, self.driver.clone())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn periods(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    pub fn s0(&self) -> &[T] {
        &self.s0
    }

    pub fn kappa_plus(&self) -> &[T] {
        &self.kappa_plus
    }

    pub fn kappa_minus(&self) -> &[T] {
        &self.kappa_minus
    }

    pub fn driver(&self) -> &Driver<T> {
        &self.driver
    }

    /// Simplex basis of the driver, if it is one.
    pub fn basis(&self) -> Option<&SimplexBasis<T>> {
        match &self.driver {
            Driver::Simplex(b) => Some(b),
            Driver::ProductCrr => None,
        }
    }

    /// Number of branches per node.
    pub fn branching(&self) -> usize {
        self.xi.len()
    }

    /// Driver realisation `xi_j` of branch `j`.
    pub fn driver_vector(&self, j: usize) -> &[T] {
        &self.xi[j]
    }

    /// Gross one-period return `1 + <sigma_i, xi_j> / sqrt(n)` of every asset on branch `j`.
    pub fn step_factors(&self, j: usize) -> &[T] {
        &self.factors[j]
    }

    /// `true` when every price in the tree is strictly positive.
    pub fn prices_strictly_positive(&self) -> bool {
        self.factors.iter().flatten().all(|&f| f > T::zero())
    }

    /// Per-period buying cost rate `kappa_plus / sqrt(n)`.
    pub fn buy_rate(&self, i: usize) -> T {
        self.kappa_plus[i] / T::of(self.n).sqrt()
    }

    /// Per-period selling cost rate `kappa_minus / sqrt(n)`.
    pub fn sell_rate(&self, i: usize) -> T {
        self.kappa_minus[i] / T::of(self.n).sqrt()
    }

    /// Total node count of the tree, `None` on overflow.
    pub fn node_count(&self) -> Option<usize> {
        let m = self.branching();
        let mut total = 0usize;
        let mut level = 1usize;
        for _ in 0..=self.n {
            total = total.checked_add(level)?;
            level = level.checked_mul(m)?;
        }
        Some(total)
    }

    fn check_node(&self, node: &PathIndex) -> Result<()> {
        if node.len() > self.n {
            return Err(Error::InvalidNode(format!("depth {} exceeds n = {}", node.len(), self.n)));
        }
        if let Some(&b) = node.0.iter().find(|&&b| b >= self.branching()) {
            return Err(Error::InvalidNode(format!("branch {b} out of range 0..{}", self.branching())));
        }
        Ok(())
    }

    /// Children of `node`, one per branch label in increasing order.
    pub fn children(&self, node: &PathIndex) -> Result<Vec<PathIndex>> {
        self.check_node(node)?;
        if node.len() == self.n {
            return Err(Error::LeafNode(node.len()));
        }
        Ok((0..self.branching()).map(|j| node.child(j)).collect())
    }

    /// Asset prices at `node`.
    pub fn asset_prices(&self, node: &PathIndex) -> Result<Vec<T>> {
        self.check_node(node)?;
        let mut p = self.s0.clone();
        for &b in &node.0 {
            for (pi, &f) in p.iter_mut().zip(&self.factors[b]) {
                *pi *= f;
            }
        }
        Ok(p)
    }

    /// Prices at every depth `0..=n` along the path to `leaf`.
    pub fn path_prices(&self, leaf: &PathIndex) -> Result<Vec<Vec<T>>> {
        self.check_node(leaf)?;
        let mut out = Vec::with_capacity(leaf.len() + 1);
        let mut p = self.s0.clone();
        out.push(p.clone());
        for &b in &leaf.0 {
            for (pi, &f) in p.iter_mut().zip(&self.factors[b]) {
                *pi *= f;
            }
            out.push(p.clone());
        }
        Ok(out)
    }

    /// Piecewise-linear interpolation of the price path to `leaf` at time `t`.
    pub fn interpolate_path(&self, leaf: &PathIndex, t: T) -> Result<Vec<T>> {
        if leaf.len() != self.n {
            return Err(Error::InvalidNode(format!("leaf must have depth {}, got {}", self.n, leaf.len())));
        }
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::TimeOutOfRange(t.as_f64()));
        }
        let path = self.path_prices(leaf)?;
        Ok(interpolate(&path, t))
    }

    /// Evaluates `payoff` on the interpolated path to `leaf`.
    pub fn evaluate_payoff(&self, payoff: &Payoff<T>, leaf: &PathIndex) -> Result<T> {
        if leaf.len() != self.n {
            return Err(Error::InvalidNode(format!("leaf must have depth {}, got {}", self.n, leaf.len())));
        }
        payoff.validate(self.d)?;
        payoff.evaluate(&self.path_prices(leaf)?)
    }
}

/// Interpolates grid samples `path[0..=n]` at `t` in `[0, 1]`.
pub fn interpolate<T: Scalar>(path: &[Vec<T>], t: T) -> Vec<T> {
    let n = path.len() - 1;
    let nt = T::of(n) * t;
    let k = nt.floor().to_usize().unwrap_or(0).min(n);
    if k == n {
        return path[n].clone();
    }
    let frac = nt - T::of(k);
    path[k].iter().zip(&path[k + 1]).map(|(&a, &b)| (T::one() - frac) * a + frac * b).collect()
}

/// Node of the event tree: the sequence of branch labels (0-based) from the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathIndex(pub Vec<usize>);

impl PathIndex {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        v.push(j);
        Self(v)
    }
}

impl From<Vec<usize>> for PathIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// The whole tree materialised in level order.
///
/// The node with branch labels `b_1..b_k` sits at
/// `offset(k) + sum_i b_i m^(k-i)`, so children of a node are contiguous.
#[derive(Clone, Debug)]
pub struct EventTree<T> {
    d: usize,
    m: usize,
    n: usize,
    offsets: Vec<usize>,
    prices: Vec<T>,
}

/// Default refusal threshold for materialised trees.
pub const DEFAULT_NODE_CAP: usize = 100_000;

impl<T: Scalar> EventTree<T> {
    pub fn build(spec: &MarketSpec<T>, cap: usize) -> Result<Self> {
        let nodes = spec.node_count().unwrap_or(usize::MAX);
        if nodes > cap {
            return Err(Error::TreeTooLarge { nodes, cap });
        }
        let (d, m, n) = (spec.dim(), spec.branching(), spec.periods());
        let mut offsets = Vec::with_capacity(n + 2);
        let mut level = 1;
        offsets.push(0);
        for _ in 0..=n {
            offsets.push(offsets.last().unwrap() + level);
            level *= m;
        }
        let mut prices = vec![T::zero(); nodes * d];
        prices[..d].copy_from_slice(spec.s0());
        for k in 0..n {
            for local in 0..offsets[k + 1] - offsets[k] {
                let parent = offsets[k] + local;
                for j in 0..m {
                    let child = offsets[k + 1] + local * m + j;
                    let f = spec.step_factors(j);
                    for i in 0..d {
                        prices[child * d + i] = prices[parent * d + i] * f[i];
                    }
                }
            }
        }
        Ok(Self { d, m, n, offsets, prices })
    }

    pub fn len(&self) -> usize {
        self.offsets[self.n + 1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn branching(&self) -> usize {
        self.m
    }

    pub fn periods(&self) -> usize {
        self.n
    }

    /// Indices of the nodes at depth `k`.
    pub fn level(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.level(self.n)
    }

    pub fn internal(&self) -> Range<usize> {
        0..self.offsets[self.n]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.offsets.partition_point(|&o| o <= node) - 1
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node >= self.offsets[self.n]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        let k = self.depth(node);
        (k > 0).then(|| self.offsets[k - 1] + (node - self.offsets[k]) / self.m)
    }

    /// Indices of the children of an internal node.
    pub fn children(&self, node: usize) -> Range<usize> {
        let k = self.depth(node);
        let start = self.offsets[k + 1] + (node - self.offsets[k]) * self.m;
        start..start + self.m
    }

    pub fn prices(&self, node: usize) -> &[T] {
        &self.prices[node * self.d..(node + 1) * self.d]
    }

    pub fn path(&self, node: usize) -> PathIndex {
        let k = self.depth(node);
        let mut local = node - self.offsets[k];
        let mut labels = vec![0; k];
        for slot in labels.iter_mut().rev() {
            *slot = local % self.m;
            local /= self.m;
        }
        PathIndex(labels)
    }

    pub fn index_of(&self, node: &PathIndex) -> Option<usize> {
        if node.len() > self.n || node.0.iter().any(|&b| b >= self.m) {
            return None;
        }
        Some(self.offsets[node.len()] + node.0.iter().fold(0, |acc, &b| acc * self.m + b))
    }

    /// Grid samples `S_0..S_n` along the path to `leaf`.
    pub fn path_prices(&self, leaf: usize) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut node = Some(leaf);
        while let Some(v) = node {
            out.push(self.prices(v).to_vec());
            node = self.parent(v);
        }
        out.reverse();
        out
    }

    /// Payoff at every leaf, in leaf order.
    pub fn leaf_payoffs(&self, payoff: &Payoff<T>) -> Result<Vec<T>> {
        payoff.validate(self.d)?;
        self.leaves()
            .map(|leaf| {
                if payoff.is_terminal() {
                    payoff.evaluate_terminal(self.prices(leaf))
                } else {
                    payoff.evaluate(&self.path_prices(leaf))
                }
            })
            .collect()
    }
}

/// Piecewise-linear function of one asset's terminal price, given on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<T> {
    pub asset: usize,
    pub xs: Vec<T>,
    pub ys: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(asset: usize, xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        let g = Self { asset, xs, ys };
        g.check()?;
        Ok(g)
    }

    /// Samples `f` at every terminal price of `asset` that occurs in the tree,
    /// so the grid covers the tree exactly.
    pub fn sample_on_tree(spec: &MarketSpec<T>, asset: usize, f: impl Fn(T) -> T) -> Result<Self> {
        if asset >= spec.dim() {
            return Err(Error::InvalidPayoff(format!("asset {asset} out of range")));
        }
        let tree = EventTree::build(spec, DEFAULT_NODE_CAP)?;
        let mut xs: Vec<T> = tree.leaves().map(|l| tree.prices(l)[asset]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        if xs.len() == 1 {
            xs.push(xs[0] + T::one());
        }
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(asset, xs, ys)
    }

    fn check(&self) -> Result<()> {
        if self.xs.len() < 2 || self.xs.len() != self.ys.len() {
            return Err(Error::InvalidPayoff("grid needs at least two points and matching value count".into()));
        }
        if self.xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPayoff("grid abscissae must be strictly increasing".into()));
        }
        if self.xs.iter().chain(&self.ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPayoff("non-finite grid entry".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: T) -> Result<T> {
        let (lo, hi) = (self.xs[0], *self.xs.last().unwrap());
        if !(x >= lo && x <= hi) {
            return Err(Error::Extrapolation { x: x.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() });
        }
        let k = self.xs.partition_point(|&g| g <= x).clamp(1, self.xs.len() - 1);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let t = (x - x0) / (x1 - x0);
        Ok(self.ys[k - 1] + t * (self.ys[k] - self.ys[k - 1]))
    }
}

/// Path functionals offered as claims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff<T> {
    /// Pays a fixed amount of cash.
    Constant { value: T },
    /// `(sum_i w_i S^i_T - K)^+`.
    BasketCall { weights: Vec<T>, strike: T },
    /// `(S^1_T - S^2_T)^+`.
    Exchange,
    /// `min_i S^i_T`.
    MinOfAssets,
    /// `f(S^asset_T)` for a piecewise-linear `f`.
    TerminalFunction(GridFunction<T>),
    /// `max_t S^asset_t` over the interpolated path.
    LookbackMax { asset: usize },
    /// `(int_0^1 S^asset_t dt - K)^+` over the interpolated path.
    AsianCall { asset: usize, strike: T },
}

impl<T: Scalar> Payoff<T> {
    pub fn call(strike: T) -> Self {
        Payoff::BasketCall { weights: vec![T::one()], strike }
    }

    /// Checks the parameters against a market with `d` assets.
    pub fn validate(&self, d: usize) -> Result<()> {
        let asset_ok = |a: usize| {
            if a < d {
                Ok(())
            } else {
                Err(Error::InvalidPayoff(format!("asset index {a} out of range for {d} assets")))
            }
        };
        match self {
            Payoff::Constant { value } if !value.is_finite() => Err(Error::InvalidPayoff("non-finite constant".into())),
            Payoff::BasketCall { weights, strike } => {
                if weights.len() != d {
                    return Err(Error::InvalidPayoff(format!("{} basket weights for {d} assets", weights.len())));
                }
                if weights.iter().any(|w| !w.is_finite()) || !strike.is_finite() {
                    return Err(Error::InvalidPayoff("non-finite basket parameter".into()));
                }
                Ok(())
            }
            Payoff::Exchange if d < 2 => Err(Error::InvalidPayoff("exchange option needs two assets".into())),
            Payoff::TerminalFunction(g) => {
                g.check()?;
                asset_ok(g.asset)
            }
            Payoff::LookbackMax { asset } => asset_ok(*asset),
            Payoff::AsianCall { asset, strike } => {
                if !strike.is_finite() {
                    return Err(Error::InvalidPayoff("non-finite strike".into()));
                }
                asset_ok(*asset)
            }
            _ => Ok(()),
        }
    }

    /// Whether the payoff only reads terminal prices.
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Payoff::LookbackMax { .. } | Payoff::AsianCall { .. })
    }

    /// Evaluates a terminal-only payoff on terminal prices.
    pub fn evaluate_terminal(&self, s: &[T]) -> Result<T> {
        let zero = T::zero();
        Ok(match self {
            Payoff::Constant { value } => *value,
            Payoff::BasketCall { weights, strike } => {
                let basket: T = weights.iter().zip(s).map(|(&w, &x)| w * x).sum();
                (basket - *strike).max(zero)
            }
            Payoff::Exchange => (s[0] - s[1]).max(zero),
            Payoff::MinOfAssets => s.iter().copied().fold(T::infinity(), T::min),
            Payoff::TerminalFunction(g) => g.eval(s[g.asset])?,
            Payoff::LookbackMax { .. } | Payoff::AsianCall { .. } => {
                return Err(Error::InvalidPayoff("path-dependent payoff needs the whole path".into()))
            }
        })
    }

    /// Evaluates on grid samples `path[0..=n]` of the interpolated path.
    ///
    /// Maxima of a piecewise-linear path sit at grid points and its time
    /// average is the trapezoidal sum, so both path-dependent kinds are exact.
    pub fn evaluate(&self, path: &[Vec<T>]) -> Result<T> {
        match self {
            Payoff::LookbackMax { asset } => Ok(path.iter().map(|s| s[*asset]).fold(T::neg_infinity(), T::max)),
            Payoff::AsianCall { asset, strike } => {
                let n = path.len() - 1;
                if n == 0 {
                    return Ok((path[0][*asset] - *strike).max(T::zero()));
                }
                let half = T::lit(0.5);
                let inner: T = path[1..n].iter().map(|s| s[*asset]).sum();
                let avg = (half * (path[0][*asset] + path[n][*asset]) + inner) / T::of(n);
                Ok((avg - *strike).max(T::zero()))
            }
            _ => self.evaluate_terminal(path.last().expect("non-empty path")),
        }
    }
}
