use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use superrep::construction::{mc_lower_bound, PiecewiseVolControl};
use superrep::corridor::{InvertibilityCheck, NormBoundCheck, VolatilityCorridor};
use superrep::limit::{
    black_scholes_call, bsb_pde_price, exchange_weight, kusuoka_band_d1, margrabe_limit_price, BsbGrid, BsbOptions,
    GExpectationProblem,
};
use superrep::linalg::Matrix;
use superrep::model::{GridFunction, MarketSpec, Payoff};
use superrep::pricer::{superreplication_price, PricerOptions};

use crate::config::{self, DriverConfig, ExperimentConfig, LimitMethod, MarketConfig};
use crate::output::{num, opt, Report, Table};
use crate::{CliError, Common, Counterexample};

fn load(c: &Common) -> Result<config::Loaded, CliError> {
    let path = c.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    config::load(path)
}

fn n_list(c: &Common, fallback: &[usize]) -> Result<Vec<usize>, CliError> {
    let ns = c.n.clone().unwrap_or_else(|| fallback.to_vec());
    config::validate_n_list(&ns)?;
    Ok(ns)
}

#[derive(Serialize)]
struct PriceRow {
    n: usize,
    value: f64,
    primal: f64,
    dual: f64,
    gap: f64,
    primal_iterations: usize,
    dual_iterations: usize,
    wall_time_secs: f64,
    initial_cash: f64,
    root_holdings: Vec<f64>,
}

fn price_row(spec: &MarketSpec<f64>, payoff: &Payoff<f64>) -> Result<PriceRow, CliError> {
    let r = superreplication_price(spec, payoff, &PricerOptions::default())?;
    Ok(PriceRow {
        n: spec.periods(),
        value: r.value,
        primal: r.primal,
        dual: r.dual,
        gap: r.gap,
        primal_iterations: r.primal_iterations,
        dual_iterations: r.dual_iterations,
        wall_time_secs: r.wall_time_secs,
        initial_cash: r.hedge.initial_cash,
        root_holdings: r.hedge.nodes[0].holdings.clone(),
    })
}

fn price_table(rows: &[PriceRow]) -> Table {
    let mut t = Table::new(&["n", "value", "primal", "dual", "gap", "wall_time_secs"]);
    for r in rows {
        t.push(vec![r.n.to_string(), num(r.value), num(r.primal), num(r.dual), num(r.gap), num(r.wall_time_secs)]);
    }
    t
}

pub fn price(c: &Common) -> Result<Report, CliError> {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let ns = n_list(c, &[cfg.market.n])?;
    let rows = ns.iter().map(|&n| price_row(&cfg.market(n)?, &cfg.payoff)).collect::<Result<Vec<_>, _>>()?;
    let table = price_table(&rows);
    Ok(Report::new("price", loaded.sha256, &serde_json::json!({ "d": cfg.market.s0.len(), "rows": rows }), table))
}

#[derive(Serialize)]
struct LimitOutcome {
    method: &'static str,
    price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nu_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psd_projected: Option<bool>,
    warnings: Vec<String>,
}

impl LimitOutcome {
    fn closed(method: &'static str, price: f64) -> Self {
        Self { method, price, nu_max: None, time_steps: None, dt: None, psd_projected: None, warnings: Vec::new() }
    }
}

/// Positive single weight of a one-asset call, which turns it into a plain
/// call on `w S` with the same strike.
fn call_weight(payoff: &Payoff<f64>) -> Option<(f64, f64)> {
    match payoff {
        Payoff::BasketCall { weights, strike } if weights.len() == 1 && weights[0] > 0.0 => Some((weights[0], *strike)),
        _ => None,
    }
}

fn limit_price(cfg: &ExperimentConfig, grid: Option<usize>, surface: Option<&Path>) -> Result<LimitOutcome, CliError> {
    if let Payoff::Constant { value } = cfg.payoff {
        return Ok(LimitOutcome::closed("constant", value));
    }
    let spec = cfg.market(cfg.market.n)?;
    let corr = VolatilityCorridor::from_market(&spec)?;
    let d = spec.dim();
    let mut method = cfg.limit.method;
    if method == LimitMethod::Auto {
        method = if d == 2 && cfg.payoff == Payoff::Exchange {
            LimitMethod::Margrabe
        } else if d == 1 && call_weight(&cfg.payoff).is_some() {
            LimitMethod::BlackScholes
        } else {
            LimitMethod::Pde
        };
    }
    if surface.is_some() && method != LimitMethod::Pde {
        return Err(CliError::Config("--surface needs the PDE method".into()));
    }
    match method {
        LimitMethod::Margrabe => {
            if d != 2 || cfg.payoff != Payoff::Exchange {
                return Err(CliError::Config("the Margrabe limit needs an exchange option on two assets".into()));
            }
            Ok(LimitOutcome::closed("margrabe", margrabe_limit_price(&corr, spec.s0())?))
        }
        LimitMethod::BlackScholes => {
            let (w, strike) = match (d, call_weight(&cfg.payoff)) {
                (1, Some(ws)) => ws,
                _ => return Err(CliError::Config("the Black-Scholes limit needs a one-asset call".into())),
            };
            let nu = kusuoka_band_d1(&corr)?.nu_max;
            let mut out = LimitOutcome::closed("black_scholes", black_scholes_call(w * spec.s0()[0], strike, nu)?);
            out.nu_max = Some(nu);
            Ok(out)
        }
        LimitMethod::Pde => {
            let opts = BsbOptions {
                grid: BsbGrid { space_nodes: grid.unwrap_or(cfg.limit.space_nodes), time_steps: cfg.limit.time_steps },
                max_time_steps: cfg.limit.max_time_steps,
                keep_surfaces: surface.is_some(),
            };
            let problem = GExpectationProblem { corridor: corr, s0: spec.s0().to_vec(), payoff: cfg.payoff.clone() };
            let sol = bsb_pde_price(&problem, &opts)?;
            if let Some(path) = surface {
                let mut file =
                    std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                sol.write_csv(&mut file).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            }
            Ok(LimitOutcome {
                method: "pde",
                price: sol.price,
                nu_max: None,
                time_steps: Some(sol.time_steps),
                dt: Some(sol.dt),
                psd_projected: Some(sol.psd_projected),
                warnings: sol.warnings,
            })
        }
        LimitMethod::Auto => unreachable!("auto resolved above"),
    }
}

pub fn limit(c: &Common, surface: Option<&Path>) -> Result<Report, CliError> {
    let loaded = load(c)?;
    let out = limit_price(&loaded.config, c.grid, surface)?;
    let mut t = Table::new(&["method", "price", "time_steps", "dt"]);
    t.push(vec![
        out.method.into(),
        num(out.price),
        out.time_steps.map(|k| k.to_string()).unwrap_or_default(),
        opt(out.dt),
    ]);
    Ok(Report::new("limit", loaded.sha256, &out, t))
}

#[derive(Serialize)]
struct ConvergeRow {
    n: usize,
    value: f64,
    limit: f64,
    gap: f64,
    runtime_secs: f64,
}

/// Gaps below this are rounding noise of the LP solve.
const GAP_FLOOR: f64 = 1e-12;

#[derive(Serialize)]
struct ConvergeSummary {
    limit: LimitOutcome,
    rows: Vec<ConvergeRow>,
    /// `gap(n_max) / gap(n_min)`; absent when the first gap is at rounding level.
    trend: Option<f64>,
    gaps_shrink: bool,
}

pub fn converge(c: &Common) -> Result<Report, CliError> {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let fallback = if cfg.converge.n.is_empty() { vec![cfg.market.n] } else { cfg.converge.n.clone() };
    let ns = n_list(c, &fallback)?;
    let limit = limit_price(cfg, c.grid, None)?;
    let specs = ns.iter().map(|&n| cfg.market(n)).collect::<Result<Vec<_>, _>>()?;
    let rows = specs
        .par_iter()
        .map(|spec| {
            let t = Instant::now();
            let r = superreplication_price(spec, &cfg.payoff, &PricerOptions::default())?;
            Ok(ConvergeRow {
                n: spec.periods(),
                value: r.value,
                limit: limit.price,
                gap: (r.value - limit.price).abs(),
                runtime_secs: t.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (first, last) = (rows[0].gap, rows[rows.len() - 1].gap);
    let trend = (first > GAP_FLOOR).then(|| last / first);
    let mut t = Table::new(&["n", "value", "limit", "gap", "runtime_secs"]);
    for r in &rows {
        t.push(vec![r.n.to_string(), num(r.value), num(r.limit), num(r.gap), num(r.runtime_secs)]);
    }
    let summary = ConvergeSummary { limit, gaps_shrink: last <= first + GAP_FLOOR, trend, rows };
    Ok(Report::new("converge", loaded.sha256, &summary, t))
}

#[derive(Serialize)]
struct CheckOutcome {
    norm_bound: NormBoundCheck<f64>,
    invertibility: InvertibilityCheck<f64>,
}

fn check_table(out: &CheckOutcome) -> Table {
    let mut t = Table::new(&["check", "passes", "conclusive", "statistic", "bound"]);
    let l = &out.norm_bound;
    t.push(vec!["norm_bound".into(), l.passes.to_string(), "true".into(), num(l.worst_norm), num(l.bound)]);
    let a = &out.invertibility;
    let value = a.witness.as_ref().and_then(|w| w.value);
    t.push(vec!["invertibility".into(), a.passes.to_string(), a.conclusive.to_string(), opt(value), num(-1.0)]);
    t
}

fn run_checks(corr: &VolatilityCorridor<f64>, grid: usize) -> Result<CheckOutcome, CliError> {
    Ok(CheckOutcome { norm_bound: corr.check_norm_bound()?, invertibility: corr.check_invertibility(grid)? })
}

/// Returns the report and, when the invertibility condition fails, a
/// description of the witness.
pub fn check(c: &Common) -> Result<(Report, Option<String>), CliError> {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let corr = VolatilityCorridor::from_market(&cfg.market(cfg.market.n)?)?;
    let out = run_checks(&corr, c.grid.unwrap_or(cfg.check.grid))?;
    let failure = (!out.invertibility.passes).then(|| match &out.invertibility.witness {
        Some(w) => match w.value {
            Some(v) => format!("invertibility fails at vertices ({}, {}) with value {v}", w.i, w.j),
            None => "invertibility fails: sigma' + beta is singular at the witness".to_string(),
        },
        None => "invertibility fails".to_string(),
    });
    let table = check_table(&out);
    Ok((Report::new("check", loaded.sha256, &out, table), failure))
}

#[derive(Serialize)]
struct SimulateRow {
    n: usize,
    paths: usize,
    seed: u64,
    estimate: f64,
    stderr: f64,
    infeasible_nodes: usize,
    warnings: Vec<String>,
}

/// Midpoint of the trace maximiser and minimiser over the corridor.
fn default_target(corr: &VolatilityCorridor<f64>) -> Result<Matrix<f64>, CliError> {
    let id = Matrix::identity(corr.dim());
    let hi = corr.sup_linear_over_gamma(&id)?.a;
    let lo = corr.inf_linear_over_gamma(&id)?.a;
    Ok(hi.add(&lo).scale(0.5))
}

pub fn simulate(c: &Common) -> Result<Report, CliError> {
    let loaded = load(c)?;
    let cfg = &loaded.config;
    let ns = n_list(c, &[cfg.market.n])?;
    let paths = c.paths.unwrap_or(cfg.simulate.paths);
    let seed = c.seed.unwrap_or(cfg.simulate.seed);
    let corr = VolatilityCorridor::from_market(&cfg.market(cfg.market.n)?)?;
    let target = match &cfg.simulate.target {
        Some(rows) => Matrix::from_rows(rows),
        None => default_target(&corr)?,
    };
    let control = PiecewiseVolControl::constant(target.clone(), cfg.simulate.epsilon);
    let rows = ns
        .iter()
        .map(|&n| {
            let est = mc_lower_bound(&cfg.market(n)?, &control, &cfg.payoff, paths, seed)?;
            Ok(SimulateRow {
                n,
                paths,
                seed,
                estimate: est.estimate,
                stderr: est.stderr,
                infeasible_nodes: est.infeasible_nodes,
                warnings: est.warnings,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut t = Table::new(&["n", "paths", "seed", "estimate", "stderr", "infeasible_nodes"]);
    for r in &rows {
        t.push(vec![
            r.n.to_string(),
            r.paths.to_string(),
            r.seed.to_string(),
            num(r.estimate),
            num(r.stderr),
            r.infeasible_nodes.to_string(),
        ]);
    }
    let body = serde_json::json!({ "target": target.to_rows(), "rows": rows });
    Ok(Report::new("simulate", loaded.sha256, &body, t))
}

fn three_point_vertices() -> Vec<Vec<f64>> {
    let (r2, r6) = (2f64.sqrt(), 6f64.sqrt());
    vec![vec![0.0, r2], vec![r6 / 2.0, -r2 / 2.0], vec![-r6 / 2.0, -r2 / 2.0]]
}

fn rotated(vertices: &[Vec<f64>], degrees: f64) -> Vec<Vec<f64>> {
    let (c, s) = (degrees.to_radians().cos(), degrees.to_radians().sin());
    Matrix::from_rows(vertices).mul(&Matrix::from_rows(&[vec![c, s], vec![-s, c]])).to_rows()
}

fn two_asset_market(n: usize, vertices: Vec<Vec<f64>>, kappa_plus: Vec<f64>) -> MarketConfig {
    MarketConfig {
        n,
        sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        s0: vec![1.0, 1.0],
        kappa_plus,
        kappa_minus: vec![0.0, 0.0],
        driver: DriverConfig::Simplex { vertices: Some(vertices), vertices_file: None },
    }
}

fn canned(market: MarketConfig, payoff: Payoff<f64>) -> ExperimentConfig {
    ExperimentConfig {
        market,
        payoff,
        limit: Default::default(),
        converge: Default::default(),
        simulate: Default::default(),
        check: Default::default(),
    }
}

fn kv_table(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in pairs {
        t.push(vec![k.to_string(), v.clone()]);
    }
    t
}

pub fn counterexample(c: &Common, which: Counterexample) -> Result<Report, CliError> {
    match which {
        Counterexample::AssumptionEssential => assumption_essential(c),
        Counterexample::BasisDependence => basis_dependence(c),
        Counterexample::CrrTrivial => crr_trivial(c),
    }
}

#[derive(Serialize)]
struct EssentialRow {
    n: usize,
    value: f64,
    payoff_at_s0: f64,
    strictly_below: bool,
}

/// Corridor whose second cost coefficient breaks the invertibility
/// condition; a concave claim on the second asset then prices below its
/// value at the initial point.
fn assumption_essential(c: &Common) -> Result<Report, CliError> {
    let k = 3.0 * 2f64.sqrt() / 4.0;
    let ns = n_list(c, &[6])?;
    let mut cfg = canned(two_asset_market(ns[ns.len() - 1], three_point_vertices(), vec![0.0, k]), Payoff::Exchange);
    let spec = cfg.market(cfg.market.n)?;
    cfg.payoff = Payoff::TerminalFunction(GridFunction::sample_on_tree(&spec, 1, f64::sqrt)?);
    let corr = VolatilityCorridor::from_market(&spec)?;
    let beta = Matrix::diag(&[0.0, -0.5]);
    let witness_value = corr.invertibility_value(&beta, 0, 0);
    let a = Matrix::diag(&[1.0, 0.0]);
    let a_in_gamma = corr.psi(&a).map(|b| corr.gamma_from_beta(&b).max_abs_diff(&a) < 1e-9).unwrap_or(false);
    let checks = run_checks(&corr, c.grid.unwrap_or(5))?;
    let rows = ns
        .iter()
        .map(|&n| {
            let spec = cfg.market(n)?;
            let f = GridFunction::sample_on_tree(&spec, 1, f64::sqrt)?;
            let value = superreplication_price(&spec, &Payoff::TerminalFunction(f), &PricerOptions::default())?.value;
            let payoff_at_s0 = spec.s0()[1].sqrt();
            Ok(EssentialRow { n, value, payoff_at_s0, strictly_below: value < payoff_at_s0 })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut pairs = vec![
        ("kappa_plus_2", num(k)),
        ("witness_value_expected", num(-2.0)),
        ("witness_value", opt(witness_value)),
        ("degenerate_target_in_gamma", a_in_gamma.to_string()),
        ("norm_bound_worst", num(checks.norm_bound.worst_norm)),
        ("norm_bound_limit", num(checks.norm_bound.bound)),
    ];
    let labels: Vec<String> = rows.iter().map(|r| format!("value_n{}", r.n)).collect();
    for (label, r) in labels.iter().zip(&rows) {
        pairs.push((label.as_str(), num(r.value)));
    }
    let table = kv_table(&pairs);
    let body = serde_json::json!({
        "kappa_plus": [0.0, k],
        "beta": beta.to_rows(),
        "witness_value": { "expected": -2.0, "computed": witness_value },
        "degenerate_target": { "a": a.to_rows(), "in_gamma": a_in_gamma },
        "checks": checks,
        "claim": "sqrt(S2_T)",
        "rows": rows,
    });
    Ok(Report::new("counterexample assumption-essential", config::hash_of(&cfg), &body, table))
}

#[derive(Serialize)]
struct BasisPrice {
    vertices: Vec<Vec<f64>>,
    limit: f64,
    exchange_sup: f64,
    discrete: Vec<PriceRow>,
}

/// Same volatility and costs, two simplex bases a rotation apart: the
/// exchange option limit differs.
fn basis_dependence(c: &Common) -> Result<Report, CliError> {
    let k2 = 0.2;
    let bases = [three_point_vertices(), rotated(&three_point_vertices(), 15.0)];
    let ns = match &c.n {
        Some(_) => n_list(c, &[])?,
        None => Vec::new(),
    };
    let cfgs: Vec<ExperimentConfig> =
        bases.iter().map(|v| canned(two_asset_market(4, v.clone(), vec![0.0, k2]), Payoff::Exchange)).collect();
    let prices = cfgs
        .iter()
        .map(|cfg| {
            let corr = VolatilityCorridor::from_market(&cfg.market(4)?)?;
            let discrete = ns
                .iter()
                .map(|&n| price_row(&cfg.market(n)?, &Payoff::Exchange))
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(BasisPrice {
                vertices: cfg.market.driver_vertices(),
                limit: margrabe_limit_price(&corr, &[1.0, 1.0])?,
                exchange_sup: corr.sup_linear_over_gamma(&exchange_weight())?.value,
                discrete,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let diff = (prices[0].limit - prices[1].limit).abs();
    let table = kv_table(&[
        ("limit_reference_basis", num(prices[0].limit)),
        ("limit_rotated_basis", num(prices[1].limit)),
        ("difference", num(diff)),
    ]);
    let body = serde_json::json!({
        "kappa_plus": [0.0, k2],
        "rotation_degrees": 15.0,
        "bases": prices,
        "difference": diff,
        "differs": diff > 1e-3,
    });
    Ok(Report::new("counterexample basis-dependence", config::hash_of(&cfgs), &body, table))
}

/// Frictionless product binomial driver on two assets: the minimum of the
/// two prices superreplicates at exactly the first initial price.
fn crr_trivial(c: &Common) -> Result<Report, CliError> {
    let ns = n_list(c, &[1, 2, 3, 4, 5, 6])?;
    let mut market = two_asset_market(1, Vec::new(), vec![0.0, 0.0]);
    market.driver = DriverConfig::ProductCrr;
    let cfg = canned(market, Payoff::MinOfAssets);
    let rows = ns.iter().map(|&n| price_row(&cfg.market(n)?, &cfg.payoff)).collect::<Result<Vec<_>, CliError>>()?;
    let s1 = cfg.market.s0[0];
    let worst = rows.iter().map(|r| (r.value - s1).abs()).fold(0.0, f64::max);
    let table = price_table(&rows);
    let body = serde_json::json!({
        "expected": s1,
        "rows": rows,
        "max_deviation": worst,
        "all_equal": worst <= 1e-9,
    });
    Ok(Report::new("counterexample crr-trivial", config::hash_of(&cfg), &body, table))
}

impl MarketConfig {
    fn driver_vertices(&self) -> Vec<Vec<f64>> {
        match &self.driver {
            DriverConfig::Simplex { vertices: Some(v), .. } => v.clone(),
            _ => Vec::new(),
        }
    }
}
