//! Dense column-major storage, column normalization, orthogonal projections
//! and (partial) correlation kernels.
//!
//! Every projection goes through an orthonormal basis built by pivoted
//! Gram-Schmidt with one reorthogonalization pass. Gram inverses are never
//! formed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm_sq, Scalar};

/// Column-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from row-major data, the layout CSV files use.
    pub fn from_row_major(rows: usize, cols: usize, values: &[T]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[j * rows + i] = values[i * cols + j];
            }
        }
        Ok(m)
    }

    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    actual: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable column slices, for updating columns in parallel.
    pub fn columns_mut(&mut self) -> Vec<&mut [T]> {
        if self.rows == 0 {
            return Vec::new();
        }
        self.data.chunks_mut(self.rows).collect()
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    /// New matrix made of the listed columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for &j in indices {
            data.extend_from_slice(self.col(j));
        }
        Self {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.to_f64_lossy()).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// `A v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj != T::zero() {
                axpy(vj, self.col(j), &mut out);
            }
        }
        out
    }

    /// `Aᵀ v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), v)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Predictor matrix whose columns have unit Euclidean norm.
#[derive(Clone, Debug)]
pub struct DesignMatrix<T> {
    values: Matrix<T>,
    column_norms_original: Vec<T>,
    column_means: Option<Vec<T>>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn p(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn col(&self, j: usize) -> &[T] {
        self.values.col(j)
    }

    pub fn column_norms_original(&self) -> &[T] {
        &self.column_norms_original
    }

    /// Means subtracted before normalization, when centering was requested.
    pub fn column_means(&self) -> Option<&[T]> {
        self.column_means.as_deref()
    }

    /// Sample correlation `c_{j,k} = X_jᵀ X_k`.
    pub fn correlation(&self, j: usize, k: usize) -> T {
        dot(self.col(j), self.col(k))
    }

    /// Maps coefficients fitted on the unit-norm columns back to the scale of
    /// the raw input columns.
    pub fn denormalize(&self, indices: &[usize], coefficients: &[T]) -> Vec<T> {
        indices
            .iter()
            .zip(coefficients)
            .map(|(&j, &b)| b / self.column_norms_original[j])
            .collect()
    }

    pub fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.p() {
            Err(Error::IndexOutOfRange {
                index: j,
                len: self.p(),
            })
        } else {
            Ok(())
        }
    }
}

fn check_shape<T: Scalar>(raw: &Matrix<T>) -> Result<()> {
    if raw.rows() < 2 || raw.cols() < 1 {
        return Err(Error::TooSmall {
            rows: raw.rows(),
            cols: raw.cols(),
            min_rows: 2,
            min_cols: 1,
        });
    }
    if !raw.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn scale_to_unit<T: Scalar>(mut m: Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let floor = T::of(1e-12);
    let mut norms = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let nrm = norm_sq(m.col(j)).sqrt();
        if !(nrm > floor) {
            return Err(Error::DegenerateColumn(j));
        }
        for v in m.col_mut(j) {
            *v = *v / nrm;
        }
        norms.push(nrm);
    }
    Ok((m, norms))
}

/// Rescales every column to unit Euclidean norm, keeping the original norms.
pub fn normalize_columns<T: Scalar>(raw: &Matrix<T>) -> Result<DesignMatrix<T>> {
    check_shape(raw)?;
    let (values, column_norms_original) = scale_to_unit(raw.clone())?;
    Ok(DesignMatrix {
        values,
        column_norms_original,
        column_means: None,
    })
}

/// Mean-centers each column, then rescales it to unit norm.
pub fn center_and_normalize<T: Scalar>(raw: &Matrix<T>) -> Result<DesignMatrix<T>> {
    check_shape(raw)?;
    let mut m = raw.clone();
    let n = T::of_usize(m.rows());
    let mut means = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let mean = m.col(j).iter().copied().sum::<T>() / n;
        for v in m.col_mut(j) {
            *v = *v - mean;
        }
        means.push(mean);
    }
    let (values, column_norms_original) = scale_to_unit(m)?;
    Ok(DesignMatrix {
        values,
        column_norms_original,
        column_means: Some(means),
    })
}

/// Response vector `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Response<T> {
    values: Vec<T>,
}

impl<T: Scalar> Response<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { values })
    }

    /// Response paired with a design; checks the row count.
    pub fn for_design(values: Vec<T>, x: &DesignMatrix<T>) -> Result<Self> {
        if values.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                actual: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Subtracts the mean, matching a centered design.
    pub fn centered(&self) -> Self {
        let mean = self.values.iter().copied().sum::<T>() / T::of_usize(self.values.len());
        Self {
            values: self.values.iter().map(|&v| v - mean).collect(),
        }
    }
}

/// Orthonormal basis of the span of a set of columns.
#[derive(Clone, Debug)]
pub struct ProjectionBasis<T> {
    column_indices: Vec<usize>,
    n: usize,
    basis: Vec<Vec<T>>,
}

impl<T: Scalar> ProjectionBasis<T> {
    /// The zero projection in `R^n`.
    pub fn empty(n: usize) -> Self {
        Self {
            column_indices: Vec::new(),
            n,
            basis: Vec::new(),
        }
    }

    /// Rank-revealing orthonormalization of arbitrary columns of length `n`.
    pub fn from_columns<'a, I>(n: usize, column_indices: Vec<usize>, columns: I) -> Self
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let work: Vec<Vec<T>> = columns.into_iter().map(|c| c.to_vec()).collect();
        debug_assert!(work.iter().all(|c| c.len() == n));
        Self {
            column_indices,
            n,
            basis: pivoted_gram_schmidt(work, T::rank_tolerance()),
        }
    }

    pub fn column_indices(&self) -> &[usize] {
        &self.column_indices
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis_vector(&self, i: usize) -> &[T] {
        &self.basis[i]
    }

    /// Basis as an `n × r` matrix.
    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_columns(self.n, &self.basis).expect("basis vectors have length n")
    }

    /// `Π v = B (Bᵀ v)`
    pub fn project(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![T::zero(); self.n];
        for q in &self.basis {
            axpy(dot(q, v), q, &mut out);
        }
        out
    }

    /// `(I - Π) v`, computed by sequential deflation.
    pub fn residual(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        let mut r = v.to_vec();
        for q in &self.basis {
            let c = dot(q, &r);
            axpy(-c, q, &mut r);
        }
        r
    }
}

/// Pivoted modified Gram-Schmidt. Stops once the largest remaining residual
/// norm falls below `tol` times the first (largest) pivot.
fn pivoted_gram_schmidt<T: Scalar>(mut work: Vec<Vec<T>>, tol: T) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut remaining: Vec<usize> = (0..work.len()).collect();
    let mut first_pivot: Option<T> = None;
    while !remaining.is_empty() {
        let (pos, best) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, norm_sq(&work[i]).sqrt()))
            .fold((0, T::neg_infinity()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        let lead = *first_pivot.get_or_insert(best);
        if !(best > tol * lead) || best == T::zero() {
            break;
        }
        let idx = remaining.swap_remove(pos);
        let mut q = std::mem::take(&mut work[idx]);
        // second pass against the accepted basis
        for b in &basis {
            let c = dot(b, &q);
            axpy(-c, b, &mut q);
        }
        let nrm = norm_sq(&q).sqrt();
        if !(nrm > tol * lead) {
            continue;
        }
        for v in q.iter_mut() {
            *v = *v / nrm;
        }
        for &i in &remaining {
            let c = dot(&q, &work[i]);
            axpy(-c, &q, &mut work[i]);
        }
        basis.push(q);
    }
    basis
}

/// Orthonormal basis of the span of the indexed design columns.
pub fn build_projection<T: Scalar>(
    x: &DesignMatrix<T>,
    indices: &[usize],
) -> Result<ProjectionBasis<T>> {
    if indices.len() > x.n() {
        return Err(Error::TooManyColumns {
            requested: indices.len(),
            rows: x.n(),
        });
    }
    for &j in indices {
        x.check_index(j)?;
    }
    Ok(ProjectionBasis::from_columns(
        x.n(),
        indices.to_vec(),
        indices.iter().map(|&j| x.col(j)),
    ))
}

/// `Π v`; callers form `v - Π v` themselves or use [`ProjectionBasis::residual`].
pub fn project<T: Scalar>(basis: &ProjectionBasis<T>, v: &[T]) -> Result<Vec<T>> {
    if v.len() != basis.n() {
        return Err(Error::DimensionMismatch {
            expected: basis.n(),
            actual: v.len(),
        });
    }
    Ok(basis.project(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PartialCorrelation<T> {
    pub value: T,
    pub degenerate: bool,
}

/// Correlation of `a` and `b` after both are residualized against `basis`.
/// Correlations are uncentered cosines, consistent with `c_{j,k} = X_jᵀX_k`.
pub fn partial_correlation_vectors<T: Scalar>(
    a: &[T],
    b: &[T],
    basis: &ProjectionBasis<T>,
) -> PartialCorrelation<T> {
    let ra = basis.residual(a);
    let rb = basis.residual(b);
    let na = norm_sq(&ra).sqrt();
    let nb = norm_sq(&rb).sqrt();
    let tol = T::degeneracy_tolerance();
    let scale_a = norm_sq(a).sqrt();
    let scale_b = norm_sq(b).sqrt();
    if !(na > tol * scale_a) || !(nb > tol * scale_b) {
        return PartialCorrelation {
            value: T::zero(),
            degenerate: true,
        };
    }
    let v = dot(&ra, &rb) / (na * nb);
    PartialCorrelation {
        value: v.max(-T::one()).min(T::one()),
        degenerate: false,
    }
}

/// Sample partial correlation of `X_j` and `X_k` given the columns in `cond`.
pub fn sample_partial_correlation<T: Scalar>(
    x: &DesignMatrix<T>,
    j: usize,
    k: usize,
    cond: &[usize],
) -> Result<PartialCorrelation<T>> {
    x.check_index(j)?;
    x.check_index(k)?;
    if let Some(&bad) = cond.iter().find(|&&c| c == j || c == k) {
        return Err(Error::IndexOverlap(bad));
    }
    if cond.is_empty() {
        return Ok(PartialCorrelation {
            value: x.correlation(j, k),
            degenerate: false,
        });
    }
    let basis = build_projection(x, cond)?;
    Ok(partial_correlation_vectors(x.col(j), x.col(k), &basis))
}

/// Thin QR factorization of a full-column-rank matrix, `A = Q R`.
#[derive(Clone, Debug)]
pub struct ThinQr<T> {
    q: Vec<Vec<T>>,
    /// Upper triangle stored by columns: `r[j][i]` for `i <= j`.
    r: Vec<Vec<T>>,
}

impl<T: Scalar> ThinQr<T> {
    /// Factorizes the given columns in order. Fails with `RankDeficient` when a
    /// diagonal of `R` drops below the rank tolerance relative to the largest.
    pub fn new<'a, I>(columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let tol = T::rank_tolerance();
        let mut q: Vec<Vec<T>> = Vec::new();
        let mut r: Vec<Vec<T>> = Vec::new();
        let mut largest = T::zero();
        for col in columns {
            let mut v = col.to_vec();
            let mut rc = vec![T::zero(); q.len() + 1];
            for _ in 0..2 {
                for (i, qi) in q.iter().enumerate() {
                    let c = dot(qi, &v);
                    rc[i] = rc[i] + c;
                    axpy(-c, qi, &mut v);
                }
            }
            let nrm = norm_sq(&v).sqrt();
            let scale = norm_sq(col).sqrt();
            largest = largest.max(scale);
            if !(nrm > tol * largest) {
                return Err(Error::RankDeficient);
            }
            for e in v.iter_mut() {
                *e = *e / nrm;
            }
            rc[q.len()] = nrm;
            q.push(v);
            r.push(rc);
        }
        Ok(Self { q, r })
    }

    pub fn ncols(&self) -> usize {
        self.q.len()
    }

    /// Solves `R x = b`.
    fn back_substitute(&self, b: &[T]) -> Vec<T> {
        let k = self.ncols();
        let mut x = b.to_vec();
        for j in (0..k).rev() {
            x[j] = x[j] / self.r[j][j];
            let xj = x[j];
            for i in 0..j {
                x[i] = x[i] - self.r[j][i] * xj;
            }
        }
        x
    }

    /// Solves `Rᵀ x = b`.
    fn forward_substitute(&self, b: &[T]) -> Vec<T> {
        let k = self.ncols();
        let mut x = b.to_vec();
        for j in 0..k {
            let mut s = x[j];
            for i in 0..j {
                s = s - self.r[j][i] * x[i];
            }
            x[j] = s / self.r[j][j];
        }
        x
    }

    /// Least-squares coefficients of `y` on the factorized columns.
    pub fn least_squares(&self, y: &[T]) -> Vec<T> {
        let qty: Vec<T> = self.q.iter().map(|qi| dot(qi, y)).collect();
        self.back_substitute(&qty)
    }

    /// Solves `(AᵀA) x = g` through the triangular factor.
    pub fn solve_gram(&self, g: &[T]) -> Vec<T> {
        let w = self.forward_substitute(g);
        self.back_substitute(&w)
    }
}

/// OLS coefficients of `y` regressed on `columns`, without intercept.
pub fn least_squares<T: Scalar>(columns: &[&[T]], y: &[T]) -> Result<Vec<T>> {
    if columns.is_empty() {
        return Ok(Vec::new());
    }
    for c in columns {
        if c.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                actual: c.len(),
            });
        }
    }
    Ok(ThinQr::new(columns.iter().copied())?.least_squares(y))
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.cols(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            d = d - v * v;
        }
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s = s - l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}
