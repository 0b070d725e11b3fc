//! Sparse LU factorization of simplex bases.
//!
//! Right-looking Markowitz elimination with threshold pivoting. Column and
//! row singletons are taken first, so the (mostly logical) bases that arise
//! on event-tree LPs factor with almost no fill.

use crate::Scalar;

const NONE: usize = usize::MAX;
/// Columns examined per Markowitz search.
const SEARCH_COLUMNS: usize = 4;

#[derive(Clone, Debug)]
struct Step<T> {
    row: usize,
    col: usize,
    diag: T,
    /// Off-diagonal entries of the pivot row (U part), by column position.
    upper: Vec<(usize, T)>,
    /// Multipliers applied to the rows eliminated at this step (L part).
    lower: Vec<(usize, T)>,
}

/// Elimination steps in pivot order, stored contiguously.
#[derive(Clone, Debug)]
pub(crate) struct LuFactors<T> {
    row: Vec<usize>,
    col: Vec<usize>,
    diag: Vec<T>,
    upper_ptr: Vec<usize>,
    upper: Vec<(usize, T)>,
    lower_ptr: Vec<usize>,
    lower: Vec<(usize, T)>,
}

impl<T: Scalar> LuFactors<T> {
    fn from_steps(steps: Vec<Step<T>>) -> Self {
        let mut f = Self {
            row: Vec::with_capacity(steps.len()),
            col: Vec::with_capacity(steps.len()),
            diag: Vec::with_capacity(steps.len()),
            upper_ptr: vec![0],
            upper: Vec::new(),
            lower_ptr: vec![0],
            lower: Vec::new(),
        };
        for s in steps {
            f.row.push(s.row);
            f.col.push(s.col);
            f.diag.push(s.diag);
            f.upper.extend(s.upper);
            f.upper_ptr.push(f.upper.len());
            f.lower.extend(s.lower);
            f.lower_ptr.push(f.lower.len());
        }
        f
    }
}

/// Rows and column positions left without a pivot.
#[derive(Clone, Debug)]
pub(crate) struct Singular {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

struct Buckets {
    lists: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(size: usize) -> Self {
        Self { lists: vec![Vec::new(); size + 2] }
    }

    fn push(&mut self, count: usize, item: usize) {
        if count < self.lists.len() {
            self.lists[count].push(item);
        }
    }
}

pub(crate) fn factorize<T: Scalar>(
    m: usize,
    cols: &[Vec<(usize, T)>],
    threshold: T,
    abs_tol: T,
) -> Result<LuFactors<T>, Singular> {
    debug_assert_eq!(cols.len(), m);
    let drop_tol = T::epsilon() * T::lit(16.0);

    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (c, col) in cols.iter().enumerate() {
        for &(r, v) in col {
            if v != T::zero() {
                rows[r].push((c, v));
                col_rows[c].push(r);
            }
        }
    }
    let mut row_count: Vec<usize> = rows.iter().map(Vec::len).collect();
    let mut col_count: Vec<usize> = col_rows.iter().map(Vec::len).collect();
    let mut row_active = vec![true; m];
    let mut col_active = vec![true; m];
    let mut col_buckets = Buckets::new(m);
    let mut row_buckets = Buckets::new(m);
    for c in 0..m {
        col_buckets.push(col_count[c], c);
    }
    for r in 0..m {
        row_buckets.push(row_count[r], r);
    }

    let mut work_pos = vec![NONE; m];
    let mut steps: Vec<Step<T>> = Vec::with_capacity(m);

    let entry = |rows: &Vec<Vec<(usize, T)>>, r: usize, c: usize| -> Option<T> {
        rows[r].iter().find(|e| e.0 == c).map(|e| e.1)
    };

    for _ in 0..m {
        let mut pivot: Option<(usize, usize)> = None;

        // column singletons
        while let Some(&c) = col_buckets.lists[1].last() {
            col_buckets.lists[1].pop();
            if !col_active[c] || col_count[c] != 1 {
                continue;
            }
            let found =
                col_rows[c].iter().copied().filter(|&r| row_active[r]).find_map(|r| entry(&rows, r, c).map(|v| (r, v)));
            if let Some((r, v)) = found {
                if v.abs() > abs_tol {
                    pivot = Some((r, c));
                    break;
                }
            }
        }

        // row singletons
        if pivot.is_none() {
            let list = &mut row_buckets.lists[1];
            let mut k = 0;
            while k < list.len() {
                let r = list[k];
                if !row_active[r] || row_count[r] != 1 {
                    list.swap_remove(k);
                    continue;
                }
                let (c, v) = rows[r][0];
                let col_max = col_rows[c]
                    .iter()
                    .filter(|&&i| row_active[i])
                    .filter_map(|&i| entry(&rows, i, c))
                    .fold(T::zero(), |acc, x| acc.max(x.abs()));
                if v.abs() > abs_tol && v.abs() >= threshold * col_max {
                    list.swap_remove(k);
                    pivot = Some((r, c));
                    break;
                }
                k += 1;
            }
        }

        // Markowitz search over the sparsest columns
        if pivot.is_none() {
            let mut best: Option<(usize, usize, usize, T)> = None;
            let mut examined = 0;
            'counts: for cnt in 2..col_buckets.lists.len() {
                let mut k = 0;
                while k < col_buckets.lists[cnt].len() {
                    let c = col_buckets.lists[cnt][k];
                    if !col_active[c] || col_count[c] != cnt {
                        col_buckets.lists[cnt].swap_remove(k);
                        continue;
                    }
                    k += 1;
                    let cands: Vec<(usize, T)> = col_rows[c]
                        .iter()
                        .copied()
                        .filter(|&r| row_active[r])
                        .filter_map(|r| entry(&rows, r, c).map(|v| (r, v)))
                        .collect();
                    let col_max = cands.iter().fold(T::zero(), |acc, e| acc.max(e.1.abs()));
                    for &(r, v) in &cands {
                        if v.abs() <= abs_tol || v.abs() < threshold * col_max {
                            continue;
                        }
                        let cost = (row_count[r] - 1) * (cnt - 1);
                        let better = match best {
                            None => true,
                            Some((bc, _, _, bv)) => cost < bc || (cost == bc && v.abs() > bv.abs()),
                        };
                        if better {
                            best = Some((cost, r, c, v));
                        }
                    }
                    examined += 1;
                    if examined >= SEARCH_COLUMNS && best.is_some() {
                        break 'counts;
                    }
                }
            }
            pivot = best.map(|(_, r, c, _)| (r, c));
        }

        let Some((r, c)) = pivot else { break };

        let prow = std::mem::take(&mut rows[r]);
        row_active[r] = false;
        col_active[c] = false;
        let mut diag = T::zero();
        let mut upper = Vec::with_capacity(prow.len().saturating_sub(1));
        for &(cc, v) in &prow {
            if cc == c {
                diag = v;
            } else {
                upper.push((cc, v));
                col_count[cc] -= 1;
                col_buckets.push(col_count[cc], cc);
            }
        }

        let mut lower = Vec::new();
        let rows_in_col = std::mem::take(&mut col_rows[c]);
        for &i in &rows_in_col {
            if !row_active[i] {
                continue;
            }
            let Some(k) = rows[i].iter().position(|e| e.0 == c) else { continue };
            let v = rows[i].swap_remove(k).1;
            let l = v / diag;
            lower.push((i, l));
            for (t, e) in rows[i].iter().enumerate() {
                work_pos[e.0] = t;
            }
            for &(cc, pv) in &upper {
                let delta = -l * pv;
                if work_pos[cc] != NONE {
                    rows[i][work_pos[cc]].1 += delta;
                } else {
                    rows[i].push((cc, delta));
                    work_pos[cc] = rows[i].len() - 1;
                    col_rows[cc].push(i);
                    col_count[cc] += 1;
                    col_buckets.push(col_count[cc], cc);
                }
            }
            for e in &rows[i] {
                work_pos[e.0] = NONE;
            }
            rows[i].retain(|e| {
                if e.1.abs() <= drop_tol {
                    col_count[e.0] -= 1;
                    col_buckets.push(col_count[e.0], e.0);
                    false
                } else {
                    true
                }
            });
            row_count[i] = rows[i].len();
            row_buckets.push(row_count[i], i);
        }

        steps.push(Step { row: r, col: c, diag, upper, lower });
    }

    if steps.len() < m {
        return Err(Singular {
            rows: (0..m).filter(|&r| row_active[r]).collect(),
            cols: (0..m).filter(|&c| col_active[c]).collect(),
        });
    }
    Ok(LuFactors::from_steps(steps))
}

impl<T: Scalar> LuFactors<T> {
    /// Solves `B x = b`. `b` is indexed by row and is overwritten; `out` is
    /// indexed by basis position.
    pub(crate) fn ftran(&self, b: &mut [T], out: &mut [T]) {
        let k = self.row.len();
        for t in 0..k {
            let br = b[self.row[t]];
            if br != T::zero() {
                for &(i, l) in &self.lower[self.lower_ptr[t]..self.lower_ptr[t + 1]] {
                    b[i] -= l * br;
                }
            }
        }
        for t in (0..k).rev() {
            let mut v = b[self.row[t]];
            for &(cc, u) in &self.upper[self.upper_ptr[t]..self.upper_ptr[t + 1]] {
                v -= u * out[cc];
            }
            out[self.col[t]] = v / self.diag[t];
        }
    }

    /// Solves `y' B = c'`. `c` is indexed by basis position and is
    /// overwritten; `y` is indexed by row.
    pub(crate) fn btran(&self, c: &mut [T], y: &mut [T]) {
        let k = self.row.len();
        for t in 0..k {
            let z = c[self.col[t]] / self.diag[t];
            y[self.row[t]] = z;
            if z != T::zero() {
                for &(cc, u) in &self.upper[self.upper_ptr[t]..self.upper_ptr[t + 1]] {
                    c[cc] -= u * z;
                }
            }
        }
        for t in (0..k).rev() {
            let mut v = y[self.row[t]];
            for &(i, l) in &self.lower[self.lower_ptr[t]..self.lower_ptr[t + 1]] {
                v -= l * y[i];
            }
            y[self.row[t]] = v;
        }
    }

    #[cfg(test)]
    pub(crate) fn nnz(&self) -> usize {
        self.row.len() + self.upper.len() + self.lower.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m).map(|c| (0..m).filter(|&r| a[r][c] != 0.0).map(|r| (r, a[r][c])).collect()).collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    #[test]
    fn solves_dense_system() {
        let a = vec![
            vec![2.0, 1.0, 0.0, 3.0],
            vec![0.0, 1.0, 4.0, 0.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![0.5, 2.0, 0.0, 1.0],
        ];
        let lu = factorize(4, &dense_cols(&a), 0.1, 1e-12).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = matvec(&a, &x_true);
        let mut x = vec![0.0; 4];
        lu.ftran(&mut b, &mut x);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-12);
        }
        // transpose solve
        let y_true = [0.3, -1.0, 2.0, 0.25];
        let mut c: Vec<f64> = (0..4).map(|j| (0..4).map(|i| y_true[i] * a[i][j]).sum()).collect();
        let mut y = vec![0.0; 4];
        lu.btran(&mut c, &mut y);
        for (p, q) in y.iter().zip(&y_true) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_singular() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let err = factorize(3, &dense_cols(&a), 0.1, 1e-12).unwrap_err();
        assert_eq!(err.rows.len(), 1);
        assert_eq!(err.cols.len(), 1);
    }

    #[test]
    fn permutation_like_has_no_fill() {
        let a = vec![vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 3.0], vec![-2.0, 0.0, 0.0]];
        let lu = factorize(3, &dense_cols(&a), 0.1, 1e-12).unwrap();
        assert_eq!(lu.nnz(), 3);
    }
}
