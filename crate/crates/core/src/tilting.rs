//! Conditioning sets, tilted variables and tilted correlations.
//!
//! A variable is tilted by projecting it onto the orthogonal complement of
//! the variables it is strongly correlated with. The inner product of the
//! tilted variable with the response is then rescaled in one of two ways.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{DesignMatrix, Matrix, ProjectionBasis};
use crate::scalar::{dot, norm_sq, Scalar};

/// Read access to a set of equal-length, unit-norm columns.
pub trait Columns<T>: Sync {
    fn n(&self) -> usize;
    fn p(&self) -> usize;
    fn col(&self, j: usize) -> &[T];
}

impl<T: Scalar> Columns<T> for Matrix<T> {
    fn n(&self) -> usize {
        self.rows()
    }
    fn p(&self) -> usize {
        self.cols()
    }
    fn col(&self, j: usize) -> &[T] {
        Matrix::col(self, j)
    }
}

impl<T: Scalar> Columns<T> for DesignMatrix<T> {
    fn n(&self) -> usize {
        DesignMatrix::n(self)
    }
    fn p(&self) -> usize {
        DesignMatrix::p(self)
    }
    fn col(&self, j: usize) -> &[T] {
        DesignMatrix::col(self, j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rescaling {
    /// Divide by `1 - a_j`; equals the OLS coefficient on `{j} ∪ C_j`.
    R1,
    /// Divide by `sqrt((1 - a_j)(1 - a_jy))`; equals `‖y‖` times the partial
    /// correlation of `X_j` and `y` given `C_j`.
    R2,
}

/// Upper bound on the size of a conditioning set.
///
/// The bound is always at most `n - |excluded| - 2` so the projection stays
/// overdetermined; the policy may tighten it further.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningCap {
    /// Only the `n - |excluded| - 2` bound.
    Saturated,
    /// At most `floor(sqrt(n))` members.
    SqrtN,
    Fixed(usize),
}

impl Default for ConditioningCap {
    fn default() -> Self {
        ConditioningCap::SqrtN
    }
}

impl ConditioningCap {
    pub fn limit(self, n: usize, excluded: usize) -> usize {
        let hard = n.saturating_sub(excluded + 2);
        match self {
            ConditioningCap::Saturated => hard,
            ConditioningCap::SqrtN => hard.min((n as f64).sqrt().floor() as usize),
            ConditioningCap::Fixed(k) => hard.min(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditioningSet<T> {
    pub j: usize,
    /// Ascending column indices.
    pub members: Vec<usize>,
    pub threshold_used: T,
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TiltedStats<T> {
    pub j: usize,
    pub a_j: T,
    pub a_jy: T,
    pub inner: T,
    pub c_star_r1: T,
    pub c_star_r2: T,
    pub degenerate: bool,
}

impl<T: Scalar> TiltedStats<T> {
    pub fn score(&self, rescaling: Rescaling) -> T {
        match rescaling {
            Rescaling::R1 => self.c_star_r1,
            Rescaling::R2 => self.c_star_r2,
        }
    }
}

/// Members `k` with `|c_{j,k}| > pi` among columns not flagged in
/// `excluded`, keeping at most `cap` of them (largest `|c|`, ties to the
/// lower index).
pub(crate) fn conditioning_set_masked<T: Scalar, C: Columns<T>>(
    x: &C,
    j: usize,
    pi: T,
    excluded: &[bool],
    cap: usize,
) -> ConditioningSet<T> {
    let xj = x.col(j);
    let mut hits: Vec<(usize, T)> = (0..x.p())
        .filter(|&k| k != j && !excluded[k])
        .filter_map(|k| {
            let c = dot(xj, x.col(k)).abs();
            (c > pi).then_some((k, c))
        })
        .collect();
    let truncated = hits.len() > cap;
    if truncated {
        hits.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        hits.truncate(cap);
    }
    let mut members: Vec<usize> = hits.into_iter().map(|(k, _)| k).collect();
    members.sort_unstable();
    ConditioningSet {
        j,
        members,
        threshold_used: pi,
        truncated,
    }
}

fn mask(p: usize, exclude: &[usize]) -> Vec<bool> {
    let mut m = vec![false; p];
    for &k in exclude {
        m[k] = true;
    }
    m
}

/// `C_j = {k ∉ exclude, k ≠ j : |c_{j,k}| > pi}`, truncated to the
/// `n - |exclude| - 2` strongest members.
pub fn conditioning_set<T: Scalar, C: Columns<T>>(
    x: &C,
    j: usize,
    pi: T,
    exclude: &[usize],
) -> ConditioningSet<T> {
    conditioning_set_capped(x, j, pi, exclude, ConditioningCap::Saturated)
}

pub fn conditioning_set_capped<T: Scalar, C: Columns<T>>(
    x: &C,
    j: usize,
    pi: T,
    exclude: &[usize],
    cap: ConditioningCap,
) -> ConditioningSet<T> {
    debug_assert!(!exclude.contains(&j));
    let m = mask(x.p(), exclude);
    conditioning_set_masked(x, j, pi, &m, cap.limit(x.n(), exclude.len()))
}

/// Tilted statistics of column `cset.j` against `y`.
pub fn tilt<T: Scalar, C: Columns<T>>(x: &C, y: &[T], cset: &ConditioningSet<T>) -> TiltedStats<T> {
    let j = cset.j;
    let xj = x.col(j);
    if cset.members.is_empty() {
        let inner = dot(xj, y);
        return TiltedStats {
            j,
            a_j: T::zero(),
            a_jy: T::zero(),
            inner,
            c_star_r1: inner,
            c_star_r2: inner,
            degenerate: false,
        };
    }
    let basis = ProjectionBasis::from_columns(
        x.n(),
        cset.members.clone(),
        cset.members.iter().map(|&k| x.col(k)),
    );
    tilt_with_basis(j, xj, y, &basis)
}

/// `X_j* = (I - Π_j) X_j`.
pub fn tilted_variable<T: Scalar, C: Columns<T>>(x: &C, cset: &ConditioningSet<T>) -> Vec<T> {
    let basis = ProjectionBasis::from_columns(
        x.n(),
        cset.members.clone(),
        cset.members.iter().map(|&k| x.col(k)),
    );
    basis.residual(x.col(cset.j))
}

pub(crate) fn tilt_with_basis<T: Scalar>(
    j: usize,
    xj: &[T],
    y: &[T],
    basis: &ProjectionBasis<T>,
) -> TiltedStats<T> {
    let tol = T::degeneracy_tolerance();
    let x_norm_sq = norm_sq(xj);
    let tilted = basis.residual(xj);
    let inner = dot(&tilted, y);
    let proj_x = basis.project(xj);
    let a_j = norm_sq(&proj_x) / x_norm_sq;
    let one_minus_aj = norm_sq(&tilted) / x_norm_sq;

    let y_norm_sq = norm_sq(y);
    let (a_jy, one_minus_ajy) = if y_norm_sq > T::zero() {
        let proj_y = basis.project(y);
        let y_star = basis.residual(y);
        (norm_sq(&proj_y) / y_norm_sq, norm_sq(&y_star) / y_norm_sq)
    } else {
        (T::zero(), T::one())
    };

    let degenerate = one_minus_aj < tol || one_minus_ajy < tol;
    let (c_star_r1, c_star_r2) = if degenerate {
        (T::zero(), T::zero())
    } else {
        (
            inner / one_minus_aj,
            inner / (one_minus_aj * one_minus_ajy).sqrt(),
        )
    };
    TiltedStats {
        j,
        a_j,
        a_jy,
        inner,
        c_star_r1,
        c_star_r2,
        degenerate,
    }
}

/// Conditioning set and tilt for every candidate, in candidate order.
pub fn tilted_correlations_all<T: Scalar, C: Columns<T>>(
    x: &C,
    y: &[T],
    pi: T,
    candidates: &[usize],
    exclude: &[usize],
) -> Vec<TiltedStats<T>> {
    tilted_correlations_all_capped(x, y, pi, candidates, exclude, ConditioningCap::Saturated)
}

pub fn tilted_correlations_all_capped<T: Scalar, C: Columns<T>>(
    x: &C,
    y: &[T],
    pi: T,
    candidates: &[usize],
    exclude: &[usize],
    cap: ConditioningCap,
) -> Vec<TiltedStats<T>> {
    let m = mask(x.p(), exclude);
    let limit = cap.limit(x.n(), exclude.len());
    candidates
        .par_iter()
        .map(|&j| {
            let cset = conditioning_set_masked(x, j, pi, &m, limit);
            tilt(x, y, &cset)
        })
        .collect()
}
