#![allow(clippy::needless_range_loop)]

//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use superrep::lp::{LinearProgram, Objective, RowSense};

pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for cc in c..k {
                    a[r][cc] -= f * a[c][cc];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..k).map(|i| b[i] / a[i][i]).collect())
}

pub struct Dense {
    pub sense: Objective,
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub senses: Vec<RowSense>,
    pub b: Vec<f64>,
}

/// Brute-force vertex enumeration over a bounded box: picks a subset of rows
/// to be tight, fixes the remaining degrees of freedom at box corners and
/// solves for the rest.
pub fn enumerate(p: &Dense) -> Option<f64> {
    let n = p.c.len();
    let m = p.b.len();
    let mut best: Option<f64> = None;
    let feasible = |x: &[f64]| {
        (0..n).all(|j| x[j] >= p.lo[j] - 1e-9 && x[j] <= p.hi[j] + 1e-9)
            && (0..m).all(|i| {
                let act: f64 = (0..n).map(|j| p.a[i][j] * x[j]).sum();
                match p.senses[i] {
                    RowSense::Le => act <= p.b[i] + 1e-9,
                    RowSense::Ge => act >= p.b[i] - 1e-9,
                    RowSense::Eq => (act - p.b[i]).abs() <= 1e-9,
                }
            })
    };
    for rows in 0u32..(1 << m) {
        let tight: Vec<usize> = (0..m).filter(|i| rows >> i & 1 == 1).collect();
        let k = tight.len();
        if k > n {
            continue;
        }
        for free in 0u32..(1 << n) {
            if free.count_ones() as usize != k {
                continue;
            }
            let free_vars: Vec<usize> = (0..n).filter(|j| free >> j & 1 == 1).collect();
            let fixed: Vec<usize> = (0..n).filter(|j| free >> j & 1 == 0).collect();
            for corner in 0u32..(1 << fixed.len()) {
                let mut x = vec![0.0; n];
                for (t, &j) in fixed.iter().enumerate() {
                    x[j] = if corner >> t & 1 == 1 { p.hi[j] } else { p.lo[j] };
                }
                if k > 0 {
                    let a: Vec<Vec<f64>> =
                        tight.iter().map(|&i| free_vars.iter().map(|&j| p.a[i][j]).collect()).collect();
                    let b: Vec<f64> =
                        tight.iter().map(|&i| p.b[i] - fixed.iter().map(|&j| p.a[i][j] * x[j]).sum::<f64>()).collect();
                    let Some(sol) = solve_dense(a, b) else { continue };
                    for (t, &j) in free_vars.iter().enumerate() {
                        x[j] = sol[t];
                    }
                }
                if feasible(&x) {
                    let v: f64 = (0..n).map(|j| p.c[j] * x[j]).sum();
                    best = Some(match (best, p.sense) {
                        (None, _) => v,
                        (Some(b), Objective::Minimize) => b.min(v),
                        (Some(b), Objective::Maximize) => b.max(v),
                    });
                }
            }
        }
    }
    best
}

pub fn random_dense(rng: &mut ChaCha8Rng) -> Dense {
    let n = rng.random_range(1..=8);
    let m = rng.random_range(1..=4);
    let sense = if rng.random_bool(0.5) { Objective::Minimize } else { Objective::Maximize };
    let int = |rng: &mut ChaCha8Rng, lo: i32, hi: i32| rng.random_range(lo..=hi) as f64;
    let c = (0..n).map(|_| int(rng, -5, 5)).collect();
    let lo: Vec<f64> = (0..n).map(|_| int(rng, -4, 0)).collect();
    let hi = lo.iter().map(|&l| l + int(rng, 1, 6)).collect();
    let a =
        (0..m).map(|_| (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { int(rng, -4, 4) }).collect()).collect();
    let senses = (0..m)
        .map(|_| match rng.random_range(0..5) {
            0 => RowSense::Eq,
            1 | 2 => RowSense::Ge,
            _ => RowSense::Le,
        })
        .collect();
    let b = (0..m).map(|_| int(rng, -6, 6)).collect();
    Dense { sense, c, lo, hi, a, senses, b }
}

pub fn to_lp(p: &Dense) -> LinearProgram<f64> {
    let mut lp = LinearProgram::new(p.sense);
    let vars: Vec<usize> = (0..p.c.len()).map(|j| lp.add_var(p.c[j], p.lo[j], p.hi[j])).collect();
    for i in 0..p.b.len() {
        let coefs: Vec<(usize, f64)> = vars.iter().map(|&j| (j, p.a[i][j])).filter(|e| e.1 != 0.0).collect();
        lp.add_row(&coefs, p.senses[i], p.b[i]);
    }
    lp
}
