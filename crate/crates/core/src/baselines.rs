//! Comparator selection methods.
//!
//! Forward selection and forward regression share the greedy driver and the
//! extended BIC of [`crate::tcs`]. Marginal screening and PC-simple produce
//! index sets, which are wrapped into a [`SolutionPath`] by ranking the kept
//! variables on `|X_jᵀy|`.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{build_projection, partial_correlation_vectors, DesignMatrix, Response};
use crate::scalar::{axpy, dot, norm_sq, Scalar};
use crate::tcs::{
    extended_bic, finish_path, resolve_m_max, run_path, PathStep, SelectionMode, SolutionPath,
    StopReason,
};

/// Largest active set on which PC-simple runs passes above order 0.
pub const PC_SIMPLE_MAX_ACTIVE_FOR_HIGHER_ORDER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Fs,
    Fr,
    Marginal,
    PcSimple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// `None` means `floor(n / 2)`.
    pub m_max: Option<usize>,
    pub alpha: f64,
    pub max_order: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            m_max: None,
            alpha: 0.05,
            max_order: 3,
        }
    }
}

/// Greedy on `|X_jᵀ(I - Π_A)y|` without rescaling the residualized columns.
pub fn forward_selection<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    m_max: Option<usize>,
) -> Result<SolutionPath<T>> {
    run_path(x, y, m_max, None, |st| {
        st.argmax_candidate(|j| st.marginal(j) * st.residual_norm(j))
            .map(|(j, s)| (j, SelectionMode::Marginal, s))
            .ok_or(Error::NoCandidates)
    })
}

/// Greedy on `|Z_jᵀz|` over the renormalized working design.
pub fn forward_regression<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    m_max: Option<usize>,
) -> Result<SolutionPath<T>> {
    run_path(x, y, m_max, None, |st| {
        st.argmax_candidate(|j| st.marginal(j))
            .map(|(j, s)| (j, SelectionMode::Marginal, s))
            .ok_or(Error::NoCandidates)
    })
}

/// All indices ordered by decreasing `|X_jᵀy|`, ties to the lower index.
fn marginal_ranking<T: Scalar>(x: &DesignMatrix<T>, y: &Response<T>) -> Vec<(usize, T)> {
    let mut s: Vec<(usize, T)> = (0..x.p()).map(|j| (j, dot(x.col(j), y.values()))).collect();
    s.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("finite scores")
            .then(a.0.cmp(&b.0))
    });
    s
}

/// The `k` indices with the largest `|X_jᵀy|`, in rank order.
pub fn marginal_screening<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    k: usize,
) -> Result<Vec<usize>> {
    if k < 1 || k > x.p() {
        return Err(Error::InvalidConfig(format!(
            "marginal screening needs 1 <= k <= p (got k = {k}, p = {})",
            x.p()
        )));
    }
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            actual: y.len(),
        });
    }
    Ok(marginal_ranking(x, y).into_iter().take(k).map(|(j, _)| j).collect())
}

/// Path over a fixed ordering; the final model is the BIC-minimal prefix,
/// or the first `fixed_size` entries when given.
fn ordered_path<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    order: &[(usize, T)],
    m_max: usize,
    fixed_size: Option<usize>,
) -> Result<SolutionPath<T>> {
    let (n, p) = (x.n(), x.p());
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut z = y.values().to_vec();
    let mut steps = Vec::new();
    let tol = T::degeneracy_tolerance();
    for &(j, score) in order.iter().take(m_max) {
        let mut q = x.col(j).to_vec();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &q);
                axpy(-c, b, &mut q);
            }
        }
        let nrm = norm_sq(&q).sqrt();
        if !(nrm >= tol) {
            // already spanned; skipping keeps the fit identifiable
            continue;
        }
        q.iter_mut().for_each(|v| *v = *v / nrm);
        let c = dot(&q, &z);
        axpy(-c, &q, &mut z);
        basis.push(q);
        let rss = norm_sq(&z);
        steps.push(PathStep {
            selected_index: j,
            selection_mode: SelectionMode::Marginal,
            score,
            residual_sq_norm: rss,
            bic: extended_bic(rss, steps.len() + 1, n, p),
            rss_floored: rss <= T::rss_floor(),
        });
    }
    let stop = if steps.len() == m_max {
        StopReason::MaxSize
    } else {
        StopReason::NoCandidates
    };
    match fixed_size {
        None => finish_path(x, y, steps, stop, m_max, None),
        Some(size) => {
            let mut path = finish_path(x, y, steps, stop, m_max, None)?;
            let size = size.min(path.steps.len());
            let model: Vec<usize> = path.steps[..size].iter().map(|s| s.selected_index).collect();
            path.final_coefficients = crate::tcs::fit_denormalized(x, y, &model)?;
            path.final_model = model;
            Ok(path)
        }
    }
}

/// Marginal ranking as a path, with the final model chosen by extended BIC.
pub fn marginal_path<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    m_max: Option<usize>,
) -> Result<SolutionPath<T>> {
    let m = resolve_m_max(m_max, x.n())?;
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            actual: y.len(),
        });
    }
    ordered_path(x, y, &marginal_ranking(x, y), m, None)
}

/// Fisher Z test of zero partial correlation; `true` when the null is rejected.
fn fisher_rejects(rho: f64, n: usize, cond: usize, critical: f64) -> bool {
    if n <= cond + 3 {
        return false;
    }
    let r = rho.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    ((n - cond - 3) as f64).sqrt() * r.atanh().abs() > critical
}

/// Simplified PC-simple: drop `j` once any conditioning subset of the
/// current active set of size `ℓ` leaves its partial correlation with `y`
/// insignificant. Returns the surviving indices in ascending order.
///
/// Small `alpha` means a large critical value, so more variables are dropped.
pub fn pc_simple<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    alpha: f64,
    max_order: usize,
) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if y.len() != x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            actual: y.len(),
        });
    }
    let critical = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let n = x.n();
    let mut active: Vec<usize> = (0..x.p()).collect();
    let mut order = 0;
    loop {
        if active.len() <= order {
            break;
        }
        if order > 0 && active.len() > PC_SIMPLE_MAX_ACTIVE_FOR_HIGHER_ORDER {
            break;
        }
        let prev = active.clone();
        let keep: Vec<bool> = prev
            .par_iter()
            .map(|&j| {
                let others: Vec<usize> = prev.iter().copied().filter(|&k| k != j).collect();
                others.into_iter().combinations(order).all(|d| {
                    if d.len() >= n {
                        return true;
                    }
                    let basis = match build_projection(x, &d) {
                        Ok(b) => b,
                        Err(_) => return true,
                    };
                    let pc = partial_correlation_vectors(x.col(j), y.values(), &basis);
                    fisher_rejects(pc.value.to_f64_lossy(), n, d.len(), critical)
                })
            })
            .collect();
        active = prev
            .into_iter()
            .zip(keep)
            .filter_map(|(j, k)| k.then_some(j))
            .collect();
        if order == max_order {
            break;
        }
        order += 1;
    }
    Ok(active)
}

/// PC-simple survivors as a path. The final model is the surviving set,
/// ranked by `|X_jᵀy|` and cut at `m_max` when it is larger.
pub fn pc_simple_path<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    alpha: f64,
    max_order: usize,
    m_max: Option<usize>,
) -> Result<SolutionPath<T>> {
    let m = resolve_m_max(m_max, x.n())?;
    let kept = pc_simple(x, y, alpha, max_order)?;
    let order: Vec<(usize, T)> = marginal_ranking(x, y)
        .into_iter()
        .filter(|(j, _)| kept.binary_search(j).is_ok())
        .collect();
    ordered_path(x, y, &order, m, Some(order.len()))
}

pub fn run_baseline<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    cfg: &BaselineConfig,
) -> Result<SolutionPath<T>> {
    match cfg.method {
        BaselineMethod::Fs => forward_selection(x, y, cfg.m_max),
        BaselineMethod::Fr => forward_regression(x, y, cfg.m_max),
        BaselineMethod::Marginal => marginal_path(x, y, cfg.m_max),
        BaselineMethod::PcSimple => pc_simple_path(x, y, cfg.alpha, cfg.max_order, cfg.m_max),
    }
}
