//! Small dense/sparse linear-algebra helpers shared by the algebra and SDP code.

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use num::Zero;

pub type C64 = Complex64;

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<C64>,
}

impl SparseMatrix {
    /// Duplicate positions are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, C64)>) -> Self {
        trip.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col = Vec::with_capacity(trip.len());
        let mut val: Vec<C64> = Vec::with_capacity(trip.len());
        let mut rows = Vec::with_capacity(trip.len());
        for (i, j, v) in trip {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of range");
            if let (Some(&li), Some(&lj)) = (rows.last(), col.last()) {
                if li == i && lj == j {
                    *val.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            col.push(j);
            val.push(v);
        }
        let (mut c2, mut v2) = (Vec::new(), Vec::new());
        for (idx, &i) in rows.iter().enumerate() {
            if !val[idx].is_zero() {
                row_ptr[i + 1] += 1;
                c2.push(col[idx]);
                v2.push(val[idx]);
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col: c2, val: v2 }
    }

    pub fn from_real_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        Self::from_triplets(
            nrows,
            ncols,
            trip.iter().map(|&(i, j, v)| (i, j, C64::new(v, 0.0))).collect(),
        )
    }

    pub fn from_dense(a: &DMatrix<C64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if !a[(i, j)].is_zero() {
                    trip.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), trip)
    }

    pub fn from_real_dense(a: &DMatrix<f64>) -> Self {
        Self::from_dense(&a.map(|x| C64::new(x, 0.0)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col[k], self.val[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn is_real(&self) -> bool {
        self.val.iter().all(|v| v.im == 0.0)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn to_real_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v.re;
        }
        d
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect(),
        )
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut s = self.clone();
        for v in &mut s.val {
            *v *= c;
        }
        s
    }

    /// `Σ_k c_k M_k` for matrices of equal shape.
    pub fn linear_combination(mats: &[&SparseMatrix], coef: &[C64]) -> Self {
        let (r, c) = (mats[0].nrows, mats[0].ncols);
        let mut trip = Vec::new();
        for (m, &w) in mats.iter().zip(coef) {
            if w.is_zero() {
                continue;
            }
            trip.extend(m.triplets().map(|(i, j, v)| (i, j, v * w)));
        }
        Self::from_triplets(r, c, trip)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.nrows)
            .map(|i| self.row(i).fold(C64::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    /// `A^* x` without forming the adjoint.
    pub fn adjoint_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::zero(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                y[j] += v.conj() * x[i];
            }
        }
        y
    }

    pub fn mul_dense(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                for c in 0..b.ncols() {
                    out[(i, c)] += v * b[(j, c)];
                }
            }
        }
        out
    }

    pub fn mul_sparse(&self, b: &SparseMatrix) -> SparseMatrix {
        let mut trip = Vec::new();
        let mut acc = vec![C64::zero(); b.ncols];
        let mut mark = vec![false; b.ncols];
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            for (k, v) in self.row(i) {
                for (j, w) in b.row(k) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += v * w;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
                acc[j] = C64::zero();
                mark[j] = false;
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.nrows, b.ncols, trip)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.val.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Trace inner product `⟨A, B⟩ = tr(A^* B)`.
    pub fn inner(&self, other: &SparseMatrix) -> C64 {
        let mut s = C64::zero();
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            while let (Some(&(ja, va)), Some(&(jb, vb))) = (a.peek(), b.peek()) {
                match ja.cmp(&jb) {
                    std::cmp::Ordering::Less => {
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        s += va.conj() * vb;
                        a.next();
                        b.next();
                    }
                }
            }
        }
        s
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = a.clone().symmetric_eigen();
    sort_eigen(eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    sort_eigen(eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

fn sort_eigen<T: nalgebra::Scalar + Copy>(vals: Vec<f64>, vecs: DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted = idx.iter().map(|&i| vals[i]).collect();
    let cols: Vec<_> = idx.iter().map(|&i| vecs.column(i).into_owned()).collect();
    let mat = if cols.is_empty() { vecs } else { DMatrix::from_columns(&cols) };
    (sorted, mat)
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn hermitian_eigenvalues(a: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    symmetric_eigenvalues(a)[0]
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<C64> {
    a.map(|x| C64::new(x, 0.0))
}

pub fn is_real_matrix(a: &DMatrix<C64>, tol: f64) -> bool {
    a.iter().all(|v| v.im.abs() <= tol)
}

/// Real embedding `[[Re, -Im], [Im, Re]]` of a complex matrix; Hermitian
/// psd matrices map to real symmetric psd matrices and back.
pub fn real_embedding(a: &DMatrix<C64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let v = a[(i, j)];
            out[(i, j)] = v.re;
            out[(i + r, j + c)] = v.re;
            out[(i, j + c)] = -v.im;
            out[(i + r, j)] = v.im;
        }
    }
    out
}

/// Reduced row echelon form with partial pivoting. Returns the pivot
/// columns; rows below the rank are left (numerically) zero.
pub fn rref(a: &mut DMatrix<f64>, tol: f64) -> Vec<usize> {
    let (rows, cols) = a.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (mut best, mut best_val) = (r, 0.0);
        for i in r..rows {
            if a[(i, c)].abs() > best_val {
                best = i;
                best_val = a[(i, c)].abs();
            }
        }
        if best_val <= tol {
            for i in r..rows {
                a[(i, c)] = 0.0;
            }
            continue;
        }
        a.swap_rows(r, best);
        let p = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        let v = a[(r, j)];
                        a[(i, j)] -= f * v;
                    }
                    a[(i, c)] = 0.0;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Orthonormal basis of the null space of `a` (columns), by SVD.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let gram = a.transpose() * a;
    let (vals, vecs) = symmetric_eigen(&gram);
    let scale = vals.last().copied().unwrap_or(0.0).max(1.0);
    let keep: Vec<DVector<f64>> = vals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= tol * tol * scale)
        .map(|(i, _)| vecs.column(i).into_owned())
        .collect();
    if keep.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&keep)
    }
}

/// Maximum absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_c(a: &DMatrix<C64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}
