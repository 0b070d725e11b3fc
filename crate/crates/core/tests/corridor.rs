use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superrep::basis::SimplexBasis;
use superrep::corridor::VolatilityCorridor;
use superrep::linalg::Matrix;
use superrep::Error;

fn triangle_basis() -> SimplexBasis<f64> {
    let (r2, r6) = (2f64.sqrt(), 6f64.sqrt());
    SimplexBasis::from_vertices(&[vec![0.0, r2], vec![r6 / 2.0, -r2 / 2.0], vec![-r6 / 2.0, -r2 / 2.0]], 1e-12).unwrap()
}

fn random_corridor(rng: &mut ChaCha8Rng, d: usize) -> VolatilityCorridor<f64> {
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            sigma[(i, j)] = if i == j { rng.random_range(0.5..1.5) } else { rng.random_range(-0.3..0.3) };
        }
    }
    let kp = (0..d).map(|_| rng.random_range(0.0..0.4)).collect();
    let km = (0..d).map(|_| rng.random_range(0.0..0.4)).collect();
    VolatilityCorridor::new(SimplexBasis::canonical(d).unwrap(), sigma, kp, km).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, c: &VolatilityCorridor<f64>) -> Matrix<f64> {
    let d = c.dim();
    let mut w = Matrix::zeros(d + 1, d);
    for j in 0..=d {
        for k in 0..d {
            w[(j, k)] = rng.random::<f64>() * c.caps()[k];
        }
    }
    w
}

/// Maximum of `trace(W Gamma(w))` over all vertices of the weight box,
/// evaluated with explicit matrix products.
fn brute_force_sup(c: &VolatilityCorridor<f64>, weight: &Matrix<f64>) -> f64 {
    let d = c.dim();
    let cells = (d + 1) * d;
    let mut best = f64::NEG_INFINITY;
    for mask in 0..1usize << cells {
        let mut w = Matrix::zeros(d + 1, d);
        for cell in 0..cells {
            if mask >> cell & 1 == 1 {
                w[(cell / d, cell % d)] = c.caps()[cell % d];
            }
        }
        let mut beta = Matrix::zeros(d, d);
        for r in 0..d {
            for k in 0..d {
                beta[(r, k)] = (0..=d).map(|j| w[(j, k)] * c.basis().vertex(j)[r]).sum();
            }
        }
        let s = c.sigma();
        let a = s.mul(&s.transpose()).add(&s.mul(&beta)).add(&beta.transpose().mul(&s.transpose()));
        best = best.max(weight.mul(&a).trace());
    }
    best
}

#[test]
fn sup_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let d = 1 + trial % 2;
        let c = random_corridor(&mut rng, d);
        let mut weight = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                weight[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let got = c.sup_linear_over_gamma(&weight).unwrap();
        let want = brute_force_sup(&c, &weight);
        assert!((got.value - want).abs() < 1e-12, "trial {trial}: {} vs {want}", got.value);
        assert!((weight.mul(&got.a).trace() - got.value).abs() < 1e-12);
        let inf = c.inf_linear_over_gamma(&weight).unwrap();
        assert!((inf.value + brute_force_sup(&c, &weight.scale(-1.0))).abs() < 1e-12);
    }
}

#[test]
fn scalar_corridor_edges() {
    let (s, kp, km): (f64, f64, f64) = (0.3, 0.2, 0.2);
    let c =
        VolatilityCorridor::new(SimplexBasis::canonical(1).unwrap(), Matrix::diag(&[s]), vec![kp], vec![km]).unwrap();
    let one = Matrix::diag(&[1.0]);
    assert!((c.sup_linear_over_gamma(&one).unwrap().value - (s * s + s * (kp + km))).abs() < 1e-15);
    assert!((c.inf_linear_over_gamma(&one).unwrap().value - (s * s - s * (kp + km))).abs() < 1e-15);
}

#[test]
fn margrabe_variance_closed_form() {
    let k2 = 0.2;
    let c = VolatilityCorridor::new(triangle_basis(), Matrix::identity(2), vec![0.0, k2], vec![0.0, 0.0]).unwrap();
    let weight = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
    let got = c.sup_linear_over_gamma(&weight).unwrap().value;
    let (r2, r6) = (2f64.sqrt(), 6f64.sqrt());
    let v = [[0.0, r2], [r6 / 2.0, -r2 / 2.0], [-r6 / 2.0, -r2 / 2.0]];
    let want = 2.0 + 2.0 * k2 / 3.0 * v.iter().map(|x| (x[0] - x[1]).max(0.0)).sum::<f64>();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn outside_box_is_rejected() {
    let c = VolatilityCorridor::new(triangle_basis(), Matrix::identity(2), vec![0.1, 0.1], vec![0.0, 0.0]).unwrap();
    let mut w = Matrix::zeros(3, 2);
    w[(0, 0)] = 0.1;
    assert!(matches!(c.beta_from_w(&w), Err(Error::OutsideBox(_))));
    w[(0, 0)] = -1e-3;
    assert!(matches!(c.beta_from_w(&w), Err(Error::OutsideBox(_))));
}

#[test]
fn psi_round_trip_and_rejection() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let c = random_corridor(&mut rng, 1 + trial % 3);
        let w = random_weights(&mut rng, &c);
        let a = c.gamma_from_beta(&c.beta_from_w(&w).unwrap());
        let beta = c.psi(&a).unwrap();
        assert!(c.contains_beta(&beta, 1e-9).unwrap());
        assert!(c.gamma_from_beta(&beta).max_abs_diff(&a) < 1e-9);
    }
    let c = VolatilityCorridor::new(triangle_basis(), Matrix::identity(2), vec![0.1, 0.1], vec![0.1, 0.1]).unwrap();
    assert!(matches!(c.psi(&Matrix::identity(2).scale(3.0)), Err(Error::NotInGamma)));
}

#[test]
fn counterexample_matrix_is_in_gamma() {
    let k = 3.0 * 2f64.sqrt() / 4.0;
    let c = VolatilityCorridor::new(triangle_basis(), Matrix::identity(2), vec![0.0, k], vec![0.0, 0.0]).unwrap();
    let a = Matrix::diag(&[1.0, 0.0]);
    let beta = c.psi(&a).unwrap();
    assert!(c.gamma_from_beta(&beta).max_abs_diff(&a) < 1e-9);
}

#[test]
fn norm_bound_implies_invertibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut passing = 0;
    for _ in 0..60 {
        let wide = random_corridor(&mut rng, 2);
        let kp = wide.kappa_plus().iter().map(|k| k / 3.0).collect();
        let km = wide.kappa_minus().iter().map(|k| k / 3.0).collect();
        let c = VolatilityCorridor::new(wide.basis().clone(), wide.sigma().clone(), kp, km).unwrap();
        if c.check_norm_bound().unwrap().passes {
            passing += 1;
            let r = c.check_invertibility(4).unwrap();
            assert!(r.passes && r.conclusive);
        }
    }
    assert!(passing > 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_keeps_every_vertex_in_the_cost_box(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_corridor(&mut rng, d);
        let w = random_weights(&mut rng, &c);
        let beta = c.beta_from_w(&w).unwrap();
        let phi = c.phi(&beta).unwrap();
        for i in 0..=d {
            let vb = beta.left_mul(c.basis().vertex(i));
            for k in 0..d {
                let x = vb[k] + phi[k];
                prop_assert!(x >= -c.kappa_minus()[k] - 1e-12 && x <= c.kappa_plus()[k] + 1e-12);
            }
        }
    }

    #[test]
    fn canonical_weights_reproduce_beta(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_corridor(&mut rng, d);
        let beta = c.beta_from_w(&random_weights(&mut rng, &c)).unwrap();
        let (w, _) = c.canonical_weights(&beta).unwrap();
        let back = c.basis().vertices().transpose().mul(&w);
        prop_assert!(back.max_abs_diff(&beta) < 1e-12);
    }
}
