//! Dense real linear algebra kernels.
//!
//! Matrices here are small (tens of rows), so everything is row-major `Vec<f64>`
//! with straightforward loops. No domain knowledge lives in this module.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Relative tolerance used by [`pseudo_rank`] callers when none is given.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Column vector.
    pub fn from_column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (o, &bkj) in out_row.iter_mut().zip(other.row(k)) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v * xr;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Multiplies row `r` by `scale[r]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for (r, &s) in scale.iter().enumerate().take(self.rows) {
            out.row_mut(r).iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (o, &r) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(r));
        }
        out
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (o, &c) in idx.iter().enumerate() {
                out[(r, o)] = self[(r, c)];
            }
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| abs(*v)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(abs(*v)))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if abs(self[(i, j)] - self[(j, i)]) > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// `selfᵀ · diag(w) · self`.
    pub fn weighted_gram(&self, w: &[f64]) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            let wr = w[r];
            for i in 0..n {
                let ri = row[i] * wr;
                if ri == 0.0 {
                    continue;
                }
                for j in i..n {
                    g[(i, j)] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn norm_inf_vec(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(abs(*v)))
}

/// Lower-triangular Cholesky factor `A = L·Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix.
    ///
    /// A pivot that is non-positive, or negligible relative to the largest
    /// diagonal entry, is reported as [`Error::NotPositiveDefinite`]; this is
    /// how rank loss (e.g. an unobservable network) surfaces.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        if !a.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric);
        }
        let n = a.rows();
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)]));
        let floor = max_diag * 1e-14;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > floor) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = sqrt(d);
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }

    /// Solves `L·y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.l.rows();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `Lᵀ·x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        let n = self.l.rows();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.rows(),
            });
        }
        let mut x = DenseMatrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            let sol = self.solve_vec(&b.column(c));
            for (r, v) in sol.into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        Ok(x)
    }
}

/// Solves `A·X = B` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Cholesky::factor(a)?.solve(b)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of the second value.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let n = a.rows();
    let mut m = a.clone();
    // symmetrize exactly
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let total = m.data.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(x, x)].total_cmp(&m[(y, y)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    Ok((values, v.select_cols(&order)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub value: f64,
    /// Unit 2-norm.
    pub vector: Vec<f64>,
}

/// Largest generalized eigenvalue of the pair `(Q, G)` and its eigenvector,
/// i.e. the maximum of `uᵀQu / uᵀGu`.
///
/// `G` is reduced by its Cholesky factor `G = L·Lᵀ` to the ordinary symmetric
/// problem `L⁻¹·Q·L⁻ᵀ`, which is then solved by Jacobi rotations.
pub fn max_generalized_eigenpair(q: &DenseMatrix, g: &DenseMatrix) -> Result<SymEigResult> {
    if q.rows() != g.rows() || q.cols() != g.cols() || !q.is_square() {
        return Err(Error::DimensionMismatch {
            expected: g.rows(),
            got: q.rows(),
        });
    }
    let n = q.rows();
    let chol = Cholesky::factor(g)?;
    // C = L⁻¹ Q L⁻ᵀ, built column by column then symmetrized.
    let mut tmp = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut col = q.column(c);
        chol.forward(&mut col);
        for r in 0..n {
            tmp[(r, c)] = col[r];
        }
    }
    // tmp = L⁻¹Q ; C = (L⁻¹ (L⁻¹Q)ᵀ)ᵀ = L⁻¹ Q L⁻ᵀ since Q is symmetric.
    let tmp_t = tmp.transpose();
    let mut c_mat = DenseMatrix::zeros(n, n);
    for c in 0..n {
        let mut col = tmp_t.column(c);
        chol.forward(&mut col);
        for r in 0..n {
            c_mat[(r, c)] = col[r];
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c_mat[(i, j)] + c_mat[(j, i)]);
            c_mat[(i, j)] = v;
            c_mat[(j, i)] = v;
        }
    }
    let (values, vectors) = symmetric_eigen(&c_mat)?;
    let top = n - 1;
    let mut v = vectors.column(top);
    chol.backward(&mut v);
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    // Rayleigh quotient of the mapped vector is more accurate than the
    // rotated diagonal.
    let qv = q.matvec(&v)?;
    let gv = g.matvec(&v)?;
    let value = dot(&v, &qv) / dot(&v, &gv);
    let value = if value.is_finite() { value } else { values[top] };
    Ok(SymEigResult { value, vector: v })
}

/// Numerical rank under column-pivoted Householder QR: the number of
/// diagonal entries of `R` above `tol · |R₀₀|`.
pub fn pseudo_rank(a: &DenseMatrix, tol: f64) -> usize {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return 0;
    }
    let mut w = a.clone();
    let mut col_norms: Vec<f64> = (0..n)
        .map(|c| (0..m).map(|r| w[(r, c)] * w[(r, c)]).sum())
        .collect();
    let steps = m.min(n);
    let mut first = 0.0;
    let mut rank = 0;
    for k in 0..steps {
        // pivot: largest remaining column norm, recomputed exactly
        for (c, cn) in col_norms.iter_mut().enumerate().skip(k) {
            *cn = (k..m).map(|r| w[(r, c)] * w[(r, c)]).sum();
        }
        let (p, &pn) = col_norms
            .iter()
            .enumerate()
            .skip(k)
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty");
        if p != k {
            for r in 0..m {
                let t = w[(r, k)];
                w[(r, k)] = w[(r, p)];
                w[(r, p)] = t;
            }
            col_norms.swap(k, p);
        }
        let alpha = sqrt(pn);
        if k == 0 {
            first = alpha;
            if first == 0.0 {
                return 0;
            }
        }
        if alpha <= tol * first {
            break;
        }
        rank += 1;
        // Householder reflection zeroing w[k+1.., k]
        let sign = if w[(k, k)] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (k..m).map(|r| w[(r, k)]).collect();
        v[0] += sign * alpha;
        let vn2 = dot(&v, &v);
        if vn2 == 0.0 {
            continue;
        }
        for c in k..n {
            let s: f64 = (k..m).map(|r| v[r - k] * w[(r, c)]).sum::<f64>() * 2.0 / vn2;
            for r in k..m {
                w[(r, c)] -= s * v[r - k];
            }
        }
    }
    rank
}

/// Orthonormal basis of a growing row span, used for span-membership tests.
#[derive(Debug, Clone, Default)]
pub struct SpanBasis {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl SpanBasis {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Component of `v` orthogonal to the span (two Gram-Schmidt passes).
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vectors {
                let p = dot(q, &r);
                r.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
            }
        }
        r
    }

    /// Whether `v` lies in the span up to `rel_tol · ‖v‖`.
    pub fn contains(&self, v: &[f64], rel_tol: f64) -> bool {
        let nv = norm2(v);
        if nv == 0.0 {
            return true;
        }
        norm2(&self.residual(v)) <= rel_tol * nv
    }

    /// Adds `v` if it is independent; returns whether the rank grew.
    pub fn push(&mut self, v: &[f64], rel_tol: f64) -> bool {
        let nv = norm2(v);
        if nv == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let nr = norm2(&r);
        if nr <= rel_tol * nv {
            return false;
        }
        self.vectors.push(r.into_iter().map(|x| x / nr).collect());
        true
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(&self) -> Vec<Vec<f64>> {
        let mut full = self.clone();
        let mut out = Vec::new();
        for k in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[k] = 1.0;
            if full.push(&e, 1e-8) {
                out.push(full.vectors.last().expect("pushed").clone());
            }
            if full.rank() == self.dim {
                break;
            }
        }
        out
    }
}
