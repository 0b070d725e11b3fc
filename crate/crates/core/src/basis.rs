//! Regular-simplex driver vectors of the complete reference model.
//!
//! The `d + 1` vertices satisfy `<v_i, v_i> = d`, `<v_i, v_j> = -1` for
//! `i != j`, `sum_j v_j = 0` and `sum_j v_j' v_j = (d + 1) I`.

use serde::Serialize;

use crate::linalg::{dot, Matrix};
use crate::{Error, Result, Scalar};

/// Largest dimension accepted by [`SimplexBasis::canonical`].
pub const MAX_DIMENSION: usize = 1024;

/// Driver vertices stored as the rows of a `(d + 1) x d` matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimplexBasis<T> {
    d: usize,
    vertices: Matrix<T>,
}

impl<T: Scalar> SimplexBasis<T> {
    /// Deterministic canonical basis: centre the corners of the standard
    /// simplex in R^{d+1}, express them in the frame obtained by Gram-Schmidt
    /// on the projected first `d` unit vectors, and rescale to squared norm `d`.
    pub fn canonical(d: usize) -> Result<Self> {
        let m = d.checked_add(1).ok_or_else(|| Error::InvalidDimension("d + 1 overflows".into()))?;
        if d == 0 || d > MAX_DIMENSION {
            return Err(Error::InvalidDimension(format!("d = {d}, expected 1..={MAX_DIMENSION}")));
        }
        let inv_m = T::one() / T::of(m);
        let centred = |j: usize, i: usize| if i == j { T::one() - inv_m } else { -inv_m };

        let mut frame: Vec<Vec<T>> = Vec::with_capacity(d);
        for k in 0..d {
            let mut u: Vec<T> = (0..m).map(|i| centred(k, i)).collect();
            for f in &frame {
                let c = dot(&u, f);
                for (ui, &fi) in u.iter_mut().zip(f) {
                    *ui -= c * fi;
                }
            }
            let nrm = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|x| *x /= nrm);
            frame.push(u);
        }

        let scale = T::of(m).sqrt();
        let mut vertices = Matrix::zeros(m, d);
        for j in 0..m {
            let p: Vec<T> = (0..m).map(|i| centred(j, i)).collect();
            for (k, f) in frame.iter().enumerate() {
                vertices[(j, k)] = scale * dot(&p, f);
            }
        }
        Ok(Self { d, vertices })
    }

    /// Validates user-supplied vertices against the simplex identities.
    pub fn from_vertices(rows: &[Vec<T>], tol: T) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidDimension("need at least two vertices".into()));
        }
        let d = m - 1;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDimension(format!("each of the {m} vertices must have {d} coordinates")));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDimension("non-finite vertex coordinate".into()));
        }
        let basis = Self { d, vertices: Matrix::from_rows(rows) };
        let res = basis.gram_residual();
        if res > tol {
            return Err(Error::InvalidDimension(format!("vertices violate the simplex identities (residual {res})")));
        }
        let first = Matrix::from_rows(&rows[..d]);
        if first.min_singular_value() <= tol {
            return Err(Error::InvalidDimension("vertices are affinely dependent".into()));
        }
        Ok(basis)
    }

    /// Builds without validation; callers test `gram_residual` themselves.
    pub fn from_vertices_unchecked(rows: &[Vec<T>]) -> Self {
        Self { d: rows.len().saturating_sub(1), vertices: Matrix::from_rows(rows) }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.d + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertex(&self, j: usize) -> &[T] {
        self.vertices.row(j)
    }

    /// `(d + 1) x d` matrix whose rows are the vertices.
    pub fn vertices(&self) -> &Matrix<T> {
        &self.vertices
    }

    /// `(d + 1) x (d + 1)` matrix of inner products.
    pub fn gram(&self) -> Matrix<T> {
        self.vertices.mul(&self.vertices.transpose())
    }

    /// `sum_j v_j' v_j`.
    pub fn outer_sum(&self) -> Matrix<T> {
        self.vertices.transpose().mul(&self.vertices)
    }

    /// Max deviation of the Gram matrix from `(d+1) I - J` and of the vertex
    /// sum from zero.
    pub fn gram_residual(&self) -> T {
        let m = self.len();
        let g = self.gram();
        let mut worst = T::zero();
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { T::of(self.d) } else { -T::one() };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        for k in 0..self.d {
            let s: T = (0..m).map(|j| self.vertices[(j, k)]).sum();
            worst = worst.max(s.abs());
        }
        worst
    }

    /// JSON array of row vectors, 17 significant digits per entry.
    pub fn to_json(&self) -> String {
        let rows: Vec<String> = (0..self.len())
            .map(|j| {
                let entries: Vec<String> = self.vertex(j).iter().map(|x| format!("{:.16e}", x.as_f64())).collect();
                format!("[{}]", entries.join(","))
            })
            .collect();
        format!("[{}]", rows.join(","))
    }

    pub fn to_f64(&self) -> SimplexBasis<f64> {
        SimplexBasis { d: self.d, vertices: self.vertices.map(|x| x.as_f64()) }
    }
}
