use superrep::basis::SimplexBasis;
use superrep::corridor::VolatilityCorridor;
use superrep::limit::{
    black_scholes_call, bsb_pde_price, kusuoka_band_d1, margrabe_limit_price, norm_cdf, BsbGrid, BsbOptions,
    GExpectationProblem,
};
use superrep::linalg::Matrix;
use superrep::model::Payoff;

fn scalar(sigma: f64, kp: f64, km: f64) -> VolatilityCorridor<f64> {
    VolatilityCorridor::new(SimplexBasis::canonical(1).unwrap(), Matrix::diag(&[sigma]), vec![kp], vec![km]).unwrap()
}

fn triangle(k2: f64) -> VolatilityCorridor<f64> {
    let (r2, r6) = (2f64.sqrt(), 6f64.sqrt());
    let b = SimplexBasis::from_vertices(&[vec![0.0, r2], vec![r6 / 2.0, -r2 / 2.0], vec![-r6 / 2.0, -r2 / 2.0]], 1e-12)
        .unwrap();
    VolatilityCorridor::new(b, Matrix::identity(2), vec![0.0, k2], vec![0.0, 0.0]).unwrap()
}

/// Call price by Simpson integration of the lognormal payoff above the strike.
fn integrated_call(s: f64, k: f64, nu: f64) -> f64 {
    let steps = 20_000;
    let (lo, hi) = (((k / s).ln() + 0.5 * nu * nu) / nu, 12.0);
    let h = (hi - lo) / steps as f64;
    let f = |z: f64| {
        let st = s * (nu * z - 0.5 * nu * nu).exp();
        (st - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn call_matches_integration() {
    let p: f64 = black_scholes_call(1.0, 1.0, 0.2).unwrap();
    assert!((p - 0.0796557).abs() < 1e-7);
    for &(s, k, nu) in &[(1.0, 1.0, 0.2), (1.3, 1.0, 0.5), (0.7, 1.1, 1.2)] {
        assert!((black_scholes_call(s, k, nu).unwrap() - integrated_call(s, k, nu)).abs() < 1e-9);
    }
}

#[test]
fn call_monotone_in_vol_and_convex_in_spot() {
    let nus: Vec<f64> = (0..50).map(|i| i as f64 * 0.05).collect();
    for w in nus.windows(2) {
        assert!(black_scholes_call(1.0, 1.1, w[1]).unwrap() >= black_scholes_call(1.0, 1.1, w[0]).unwrap());
    }
    let c = |s: f64| black_scholes_call(s, 1.0, 0.3).unwrap();
    for i in 1..60 {
        let s = 0.4 + i as f64 * 0.02;
        assert!(c(s + 0.02) - 2.0 * c(s) + c(s - 0.02) >= -1e-14);
    }
}

#[test]
fn band_agrees_with_corridor_optimisation() {
    let c = scalar(1.0, 0.3, 0.2);
    let b = kusuoka_band_d1(&c).unwrap();
    let one = Matrix::diag(&[1.0]);
    assert!((b.nu_max.powi(2) - c.sup_linear_over_gamma(&one).unwrap().value).abs() < 1e-14);
    assert!((b.nu_min.powi(2) - c.inf_linear_over_gamma(&one).unwrap().value).abs() < 1e-14);
}

#[test]
fn exchange_limit_depends_on_the_basis() {
    let k2 = 0.2;
    let base = margrabe_limit_price(&triangle(k2), &[1.0, 1.0]).unwrap();
    let (c, s) = (15f64.to_radians().cos(), -15f64.to_radians().sin());
    let rot = Matrix::from_rows(&[vec![c, -s], vec![s, c]]);
    let b = triangle(k2).basis().vertices().mul(&rot);
    let rotated = SimplexBasis::from_vertices(&b.to_rows(), 1e-12).unwrap();
    let corr = VolatilityCorridor::new(rotated, Matrix::identity(2), vec![0.0, k2], vec![0.0, 0.0]).unwrap();
    let other = margrabe_limit_price(&corr, &[1.0, 1.0]).unwrap();
    assert!((base - other).abs() > 1e-3, "{base} vs {other}");
}

fn pde(corr: VolatilityCorridor<f64>, s0: Vec<f64>, payoff: Payoff<f64>, nodes: usize, steps: usize) -> f64 {
    let problem = GExpectationProblem { corridor: corr, s0, payoff };
    let opts = BsbOptions { grid: BsbGrid { space_nodes: nodes, time_steps: steps }, ..Default::default() };
    bsb_pde_price(&problem, &opts).unwrap().price
}

#[test]
fn pde_singleton_corridor_is_black_scholes() {
    let p = pde(scalar(0.2, 0.0, 0.0), vec![1.0], Payoff::call(1.0), 400, 400);
    let bs = black_scholes_call(1.0, 1.0, 0.2).unwrap();
    assert!((p / bs - 1.0).abs() < 5e-3, "{p} vs {bs}");
}

#[test]
fn pde_convex_payoff_sees_the_top_of_the_band() {
    let c = scalar(0.3, 0.2, 0.2);
    let nu = kusuoka_band_d1(&c).unwrap().nu_max;
    let p = pde(c, vec![1.0], Payoff::call(1.0), 400, 400);
    let bs = black_scholes_call(1.0, 1.0, nu).unwrap();
    assert!((p / bs - 1.0).abs() < 5e-3, "{p} vs {bs}");
}

#[test]
fn pde_exchange_matches_closed_form() {
    let c = triangle(0.2);
    let want = margrabe_limit_price(&c, &[1.0, 1.0]).unwrap();
    let p = pde(c, vec![1.0, 1.0], Payoff::Exchange, 200, 400);
    assert!((p / want - 1.0).abs() < 1e-2, "{p} vs {want}");
}

#[test]
fn pde_monotone_in_costs() {
    let mut last = 0.0;
    for k in [0.0, 0.1, 0.2, 0.3] {
        let p = pde(scalar(0.3, k, k / 2.0), vec![1.0], Payoff::call(1.1), 120, 100);
        assert!(p >= last - 1e-12);
        last = p;
    }
    let mut last = 0.0;
    for k in [0.0, 0.1, 0.2] {
        let p = pde(triangle(k), vec![1.0, 1.0], Payoff::Exchange, 60, 100);
        assert!(p >= last - 1e-12);
        last = p;
    }
}

#[test]
fn pde_refinement_halves_the_change() {
    let c = scalar(0.3, 0.2, 0.2);
    let p: Vec<f64> = [(50, 100), (100, 400), (200, 1600)]
        .iter()
        .map(|&(m, t)| pde(c.clone(), vec![1.0], Payoff::call(1.0), m, t))
        .collect();
    let (d1, d2) = ((p[1] - p[0]).abs(), (p[2] - p[1]).abs());
    assert!(d2 <= 0.5 * d1, "{p:?}");
}

#[test]
fn normal_cdf_matches_reference_values() {
    // 2 N(x sqrt 2) - 1 = erf(x), reference digits from arbitrary-precision evaluation
    let erf = [(0.5, 0.520_499_877_813_046_5), (1.0, 0.842_700_792_949_714_9), (2.0, 0.995_322_265_018_952_7)];
    for (x, want) in erf {
        let got = 2.0 * norm_cdf(x * std::f64::consts::SQRT_2) - 1.0;
        assert!((got - want).abs() < 4e-16, "erf({x}): {got} vs {want}");
    }
    assert!((norm_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
}
