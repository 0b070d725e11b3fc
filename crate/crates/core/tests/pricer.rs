use proptest::prelude::*;
use superrep::basis::SimplexBasis;
use superrep::linalg::Matrix;
use superrep::model::{Driver, EventTree, MarketSpec, Payoff, DEFAULT_NODE_CAP};
use superrep::pricer::{dual_price, superreplication_price, PricerOptions};

fn simplex(n: usize, sigma: Matrix<f64>, s0: Vec<f64>, kp: Vec<f64>, km: Vec<f64>) -> MarketSpec<f64> {
    let d = s0.len();
    MarketSpec::new(n, sigma, s0, kp, km, Driver::Simplex(SimplexBasis::canonical(d).unwrap())).unwrap()
}

/// Expectation under the uniform branch measure by explicit path recursion.
fn uniform_expectation(
    xi: &[Vec<f64>],
    sigma: &Matrix<f64>,
    n: usize,
    s: Vec<f64>,
    depth: usize,
    f: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    if depth == n {
        return f(&s);
    }
    let m = xi.len() as f64;
    xi.iter()
        .map(|x| {
            let step = sigma.right_mul(x);
            let next: Vec<f64> = s.iter().zip(&step).map(|(p, r)| p * (1.0 + r / (n as f64).sqrt())).collect();
            uniform_expectation(xi, sigma, n, next, depth + 1, f)
        })
        .sum::<f64>()
        / m
}

fn price(spec: &MarketSpec<f64>, payoff: &Payoff<f64>) -> f64 {
    let r = superreplication_price(spec, payoff, &PricerOptions::default()).unwrap();
    assert!(r.gap <= 1e-7 * (1.0 + r.value.abs()), "gap {}", r.gap);
    r.value
}

#[test]
fn constant_claim_costs_its_cash() {
    let spec = simplex(3, Matrix::identity(2), vec![1.0, 2.0], vec![0.1, 0.2], vec![0.3, 0.0]);
    assert!((price(&spec, &Payoff::Constant { value: 2.5 }) - 2.5).abs() < 1e-9);
}

#[test]
fn asset_itself_costs_its_price_without_frictions() {
    let spec =
        simplex(4, Matrix::from_rows(&[vec![0.3, 0.1], vec![0.0, 0.2]]), vec![1.3, 0.7], vec![0.0; 2], vec![0.0; 2]);
    let p = Payoff::BasketCall { weights: vec![1.0, 0.0], strike: 0.0 };
    assert!((price(&spec, &p) - 1.3).abs() < 1e-9);
}

#[test]
fn one_period_call_by_hand() {
    let spec = simplex(1, Matrix::identity(1), vec![1.0], vec![0.0], vec![0.0]);
    assert!((price(&spec, &Payoff::call(1.0)) - 0.5).abs() < 1e-12);
}

#[test]
fn product_driver_min_is_trivial() {
    for n in 1..=6 {
        let spec =
            MarketSpec::new(n, Matrix::identity(2), vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2], Driver::ProductCrr)
                .unwrap();
        let (v, _, _): (f64, _, _) = dual_price(&spec, &Payoff::MinOfAssets, &PricerOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "n={n}: {v}");
    }
}

#[test]
fn complete_model_prices_by_expectation() {
    for n in 2..=5 {
        let spec = simplex(n, Matrix::identity(2), vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2]);
        let xi: Vec<Vec<f64>> = (0..3).map(|j| spec.driver_vector(j).to_vec()).collect();
        let oracle = uniform_expectation(&xi, spec.sigma(), n, vec![1.0, 1.0], 0, &|s| s[0].min(s[1]));
        let v = price(&spec, &Payoff::MinOfAssets);
        assert!((v - oracle).abs() < 1e-9, "n={n}: {v} vs {oracle}");
        assert!(v < 0.99);
    }
}

#[test]
fn frictionless_call_matches_binomial_expectation() {
    for n in [3, 6, 9] {
        let spec = simplex(n, Matrix::diag(&[0.3]), vec![1.0], vec![0.0], vec![0.0]);
        let oracle =
            uniform_expectation(&[vec![1.0], vec![-1.0]], spec.sigma(), n, vec![1.0], 0, &|s| (s[0] - 1.0).max(0.0));
        assert!((price(&spec, &Payoff::call(1.0)) - oracle).abs() < 1e-10);
    }
}

#[test]
fn costs_raise_the_price_monotonically() {
    let base = simplex(5, Matrix::diag(&[0.3]), vec![1.0], vec![0.0], vec![0.0]);
    let mut last = price(&base, &Payoff::call(1.0));
    for k in [0.05, 0.1, 0.2, 0.4] {
        let spec = base.with_costs(vec![k], vec![0.1]).unwrap();
        let v = price(&spec, &Payoff::call(1.0));
        assert!(v >= last - 1e-12, "kappa {k}: {v} < {last}");
        last = v;
    }
}

#[test]
fn band_bounds_for_the_asset_claim() {
    let n = 4;
    let (kp, km) = (0.5, 0.5);
    let spec = simplex(n, Matrix::diag(&[0.3]), vec![1.0], vec![kp], vec![km]);
    let v = price(&spec, &Payoff::call(0.0));
    let rn = (n as f64).sqrt();
    assert!(v >= 1.0 - 1e-12);
    // buy one unit at the ask, and cover the terminal bid-ask loss from the band
    assert!(v <= (1.0 + kp / rn) / (1.0 - km / rn) + 1e-12);
}

#[test]
fn sandwich_on_calls() {
    let n = 4;
    let frictionless = simplex(n, Matrix::diag(&[0.3]), vec![1.0], vec![0.0], vec![0.0]);
    let v0 = price(&frictionless, &Payoff::call(1.0));
    let costly = frictionless.with_costs(vec![0.2], vec![0.2]).unwrap();
    let v = price(&costly, &Payoff::call(1.0));
    let factor = 1.0 + 0.2 / (n as f64).sqrt();
    // (1+k) S dominates the call pointwise, costing (1+k) s0
    assert!(v0 <= v && v <= factor * 1.0);
}

#[test]
fn scale_equivariance() {
    let lambda = 3.7;
    for payoff in [Payoff::call(1.0), Payoff::Exchange, Payoff::MinOfAssets] {
        let (s0, d) = if matches!(payoff, Payoff::BasketCall { .. }) { (vec![1.0], 1) } else { (vec![1.0, 0.8], 2) };
        let spec = simplex(3, Matrix::identity(d).scale(0.4), s0.clone(), vec![0.1; d], vec![0.2; d]);
        let scaled = simplex(
            3,
            Matrix::identity(d).scale(0.4),
            s0.iter().map(|s| s * lambda).collect(),
            vec![0.1; d],
            vec![0.2; d],
        );
        let scaled_payoff = match &payoff {
            Payoff::BasketCall { weights, strike } => {
                Payoff::BasketCall { weights: weights.clone(), strike: strike * lambda }
            }
            p => p.clone(),
        };
        let a = price(&spec, &payoff);
        let b = price(&scaled, &scaled_payoff);
        assert!((b - lambda * a).abs() < 1e-9 * (1.0 + b), "{payoff:?}: {b} vs {}", lambda * a);
    }
}

#[test]
fn hedge_superreplicates_and_cps_is_consistent() {
    let spec = simplex(4, Matrix::identity(2).scale(0.5), vec![1.0, 1.0], vec![0.2, 0.1], vec![0.1, 0.3]);
    for payoff in [Payoff::Exchange, Payoff::LookbackMax { asset: 1 }, Payoff::AsianCall { asset: 0, strike: 0.9 }] {
        let r = superreplication_price(&spec, &payoff, &PricerOptions::default()).unwrap();
        let tree = EventTree::build(&spec, DEFAULT_NODE_CAP).unwrap();
        let wealth = r.hedge.terminal_wealth(&spec, &tree);
        let claims = tree.leaf_payoffs(&payoff).unwrap();
        for (w, c) in wealth.iter().zip(&claims) {
            assert!(w >= &(c - 1e-8), "{payoff:?}: wealth {w} below claim {c}");
        }
        r.cps.validate(&spec, &tree, 1e-9).unwrap();
        let expectation: f64 = r.cps.leaf_measure(&tree).iter().zip(&claims).map(|(q, c)| q * c).sum();
        assert!((expectation - r.value).abs() < 1e-9);
    }
}

#[test]
fn node_cap_is_enforced() {
    let spec = simplex(11, Matrix::identity(2).scale(0.2), vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2]);
    assert!(superreplication_price(&spec, &Payoff::MinOfAssets, &PricerOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn duality_gap_vanishes(
        n in 1usize..5,
        vol in 0.1f64..0.5,
        kp in 0.0f64..0.6,
        km in 0.0f64..0.6,
        strike in 0.7f64..1.3,
        two in any::<bool>(),
    ) {
        let (spec, payoff) = if two {
            (simplex(n.max(2), Matrix::identity(2).scale(vol), vec![1.0, 1.1], vec![kp, km], vec![km, kp]), Payoff::Exchange)
        } else {
            (simplex(n, Matrix::diag(&[vol]), vec![1.0], vec![kp], vec![km]), Payoff::call(strike))
        };
        let r = superreplication_price(&spec, &payoff, &PricerOptions::default()).unwrap();
        prop_assert!(r.gap <= 1e-7 * (1.0 + r.value.abs()));
    }
}
