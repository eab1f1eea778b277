//! Dense symmetric linear algebra: centering, Cholesky, a cyclic Jacobi
//! eigensolver, and the symmetric-definite generalized eigenproblem
//! `A u = λ B u`.
//!
//! The generalized problem is reduced with `B = L Lᵀ` to the standard problem
//! on `L⁻¹ A L⁻ᵀ`, solved with Jacobi rotations, and back-transformed with
//! `U = L⁻ᵀ V`. Because `V` is orthogonal the returned columns satisfy
//! `Uᵀ B U = I` by construction.
//!
//! Output is canonicalised so that identical inputs give identical bits:
//! eigenpairs are sorted by eigenvalue (descending), columns inside a cluster of
//! numerically equal eigenvalues are ordered lexicographically, and every
//! column is signed so its largest-magnitude entry is positive.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Tolerance for accepting a matrix as symmetric, relative to its largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A Cholesky pivot must exceed this fraction of the largest diagonal entry.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Eigenvalues closer than this (relative to the spectral radius) form a cluster.
pub const CLUSTER_REL_GAP: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Square symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    /// Validates squareness and symmetry, then stores the exact symmetric part.
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r == 0 || r != c {
            return Err(Error::InvalidDimension(format!(
                "expected a non-empty square matrix, got {r}x{c}"
            )));
        }
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..r {
            for j in (i + 1)..r {
                if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidDimension(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(a))
    }

    /// Averages `a` with its transpose. `a` must be square.
    pub(crate) fn symmetrized(mut a: Array2<f64>) -> Self {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (a[[i, j]] + a[[j, i]]);
                a[[i, j]] = m;
                a[[j, i]] = m;
            }
        }
        SymMatrix(a)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Array2::eye(n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Array2::zeros((n, n)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &SymMatrix, beta: f64) -> Result<SymMatrix> {
        check_same_dim(self, other)?;
        Ok(SymMatrix(&self.0 * alpha + &other.0 * beta))
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }
}

/// Eigenpairs of a symmetric-definite pencil, sorted by eigenvalue descending.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedEigenResult {
    pub eigenvalues: Array1<f64>,
    /// d×p, one eigenvector per column.
    pub eigenvectors: Array2<f64>,
}

/// `I − (1/n)·1·1ᵀ`.
pub fn centering_matrix(n: usize) -> Result<SymMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("centering matrix of size 0".into()));
    }
    let off = -1.0 / n as f64;
    let mut h = Array2::from_elem((n, n), off);
    for i in 0..n {
        h[[i, i]] = 1.0 + off;
    }
    Ok(SymMatrix(h))
}

/// Subtracts each row's mean, i.e. computes `X·H` without forming `H`.
pub fn center_columns(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (d, n) = x.dim();
    if d == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!(
            "cannot center an empty {d}x{n} matrix"
        )));
    }
    let mean = x.mean_axis(Axis(1)).expect("n > 0");
    let mut out = x.to_owned();
    for (mut row, m) in out.outer_iter_mut().zip(mean.iter()) {
        row -= *m;
    }
    Ok(out)
}

/// `a · aᵀ` as a symmetric matrix.
pub fn gram(a: ArrayView2<f64>) -> SymMatrix {
    SymMatrix::symmetrized(a.dot(&a.t()))
}

/// `B + eps·I`.
pub fn regularize(b: &SymMatrix, eps: f64) -> SymMatrix {
    let mut out = b.0.clone();
    for i in 0..out.nrows() {
        out[[i, i]] += eps;
    }
    SymMatrix(out)
}

/// Lower-triangular Cholesky factor. Fails when a pivot drops to
/// `PIVOT_REL_TOL` of the largest diagonal entry or below.
pub fn cholesky(b: &SymMatrix) -> Result<Array2<f64>> {
    let n = b.dim();
    let a = &b.0;
    let max_diag = a.diag().iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = PIVOT_REL_TOL * max_diag;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= l[[j, k]] * l[[j, k]];
        }
        if !(pivot > floor) || max_diag <= 0.0 {
            return Err(Error::IndefiniteConstraint { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Y = R` in place for lower-triangular `L`.
fn forward_solve(l: &Array2<f64>, rhs: &mut Array2<f64>) {
    let n = l.nrows();
    for mut col in rhs.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
}

/// Solves `Lᵀ Y = R` in place for lower-triangular `L`.
fn backward_solve_transposed(l: &Array2<f64>, rhs: &mut Array2<f64>) {
    let n = l.nrows();
    for mut col in rhs.columns_mut() {
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending with matching eigenvector columns,
/// canonicalised the same way as [`solve_generalized_eig`].
pub fn symmetric_eigen(a: &SymMatrix) -> (Array1<f64>, Array2<f64>) {
    let (w, v) = jacobi(a.as_array());
    canonicalize(w, v)
}

fn jacobi(input: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = input.nrows();
    let mut a = input.clone();
    let mut v = Array2::<f64>::eye(n);
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (Array1::zeros(n), v);
    }
    let negligible = f64::EPSILON * f64::EPSILON * norm;

    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let g = 100.0 * apq.abs();
                // Past the first sweeps, drop entries too small to move either diagonal.
                let invisible = sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs();
                if apq.abs() <= negligible || invisible {
                    a[[p, q]] = 0.0;
                    a[[q, p]] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[[p, p]] = app - t * apq;
                a[[q, q]] = aqq + t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[[r, p]];
                    let arq = a[[r, q]];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[[r, p]] = new_rp;
                    a[[p, r]] = new_rp;
                    a[[r, q]] = new_rq;
                    a[[q, r]] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = c * vrp - s * vrq;
                    v[[r, q]] = s * vrp + c * vrq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (a.diag().to_owned(), v)
}

/// Sorts descending, orders clusters, and fixes signs.
fn canonicalize(w: Array1<f64>, v: Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = w.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j].total_cmp(&w[i]).then(i.cmp(&j)));

    let radius = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let gap = CLUSTER_REL_GAP * radius;
    let keys: Vec<Vec<f64>> = (0..n).map(|k| first_nonzero_positive(v.column(k).to_vec())).collect();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (w[order[end - 1]] - w[order[end]]).abs() <= gap {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&i, &j| lex_cmp(&keys[j], &keys[i]));
        }
        start = end;
    }

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros(v.dim());
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = w[src];
        let mut col = v.column(src).to_owned();
        let mut best = 0;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(dst).assign(&col);
    }
    (values, vectors)
}

fn first_nonzero_positive(mut v: Vec<f64>) -> Vec<f64> {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-12 * scale) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Top-`p` eigenpairs of the pencil `(A, B)` with `B` positive definite.
pub fn solve_generalized_eig(a: &SymMatrix, b: &SymMatrix, p: usize) -> Result<GeneralizedEigenResult> {
    check_same_dim(a, b)?;
    let d = a.dim();
    if p == 0 || p > d {
        return Err(Error::InvalidDimension(format!(
            "requested {p} eigenpairs of a {d}x{d} pencil"
        )));
    }
    let l = cholesky(b)?;

    // C = L⁻¹ A L⁻ᵀ: solve L W = A, then L C = Wᵀ.
    let mut w = a.as_array().clone();
    forward_solve(&l, &mut w);
    let mut c = w.t().to_owned();
    forward_solve(&l, &mut c);
    let c = SymMatrix::symmetrized(c);

    let (vals, vecs) = jacobi(c.as_array());
    let mut u = vecs;
    backward_solve_transposed(&l, &mut u);
    let (vals, u) = canonicalize(vals, u);

    Ok(GeneralizedEigenResult {
        eigenvalues: vals.slice(ndarray::s![..p]).to_owned(),
        eigenvectors: u.slice(ndarray::s![.., ..p]).to_owned(),
    })
}
