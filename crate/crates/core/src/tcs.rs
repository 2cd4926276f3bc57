//! Iterative tilted correlation screening and extended-BIC model choice.
//!
//! Each step screens marginal correlations between the current residual and
//! the renormalized residualized design. When the leading variable has a
//! non-empty conditioning set, the winner is instead chosen among that set
//! (plus the leader) by tilted correlation. The selected variable is then
//! projected out of both the response and the design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, DesignMatrix, Matrix, Response};
use crate::scalar::{axpy, dot, norm_sq, Scalar};
use crate::thresholding::estimate_threshold;
use crate::tilting::{conditioning_set_masked, tilt, ConditioningCap, Rescaling};

/// Threshold on working-design correlations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiChoice<T> {
    /// Calibrate once on the original design by FDR control.
    Auto(AutoTag),
    Value(T),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl<T> PiChoice<T> {
    pub fn auto() -> Self {
        PiChoice::Auto(AutoTag::Auto)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcsConfig<T> {
    pub pi: PiChoice<T>,
    pub rescaling: Rescaling,
    /// Cap on the active-set size; `None` means `floor(n / 2)`.
    pub m_max: Option<usize>,
    /// Seed for the null reference when `pi` is `auto`.
    pub seed: u64,
    /// FDR level for `auto`; `None` means `p^{-1/2}`.
    pub nu_star: Option<T>,
    /// Multiplier applied to the resolved threshold (sensitivity runs).
    pub pi_scale: T,
    pub conditioning_cap: ConditioningCap,
}

impl<T: Scalar> TcsConfig<T> {
    pub fn new(pi: PiChoice<T>, rescaling: Rescaling) -> Self {
        Self {
            pi,
            rescaling,
            m_max: None,
            seed: 0,
            nu_star: None,
            pi_scale: T::one(),
            conditioning_cap: ConditioningCap::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_m_max(mut self, m: usize) -> Self {
        self.m_max = Some(m);
        self
    }

    pub fn with_cap(mut self, cap: ConditioningCap) -> Self {
        self.conditioning_cap = cap;
        self
    }
}

pub(crate) fn resolve_m_max(m_max: Option<usize>, n: usize) -> Result<usize> {
    let m = m_max.unwrap_or(n / 2);
    if m < 1 || m >= n {
        return Err(Error::InvalidConfig(format!(
            "m_max must satisfy 1 <= m_max < n (got {m}, n = {n})"
        )));
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Marginal,
    Tilted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathStep<T> {
    pub selected_index: usize,
    pub selection_mode: SelectionMode,
    /// Criterion value that won the step.
    pub score: T,
    pub residual_sq_norm: T,
    pub bic: T,
    /// The residual was at or below the floor used inside the BIC log.
    pub rss_floored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSize,
    NoCandidates,
    ExactFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionPath<T> {
    pub steps: Vec<PathStep<T>>,
    pub final_model: Vec<usize>,
    /// OLS coefficients on the raw column scale, aligned with `final_model`.
    pub final_coefficients: Vec<T>,
    pub stop_reason: StopReason,
    pub m_max: usize,
    /// Threshold actually used, when the method has one.
    pub pi_used: Option<T>,
}

impl<T: Scalar> SolutionPath<T> {
    pub fn indices(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.selected_index).collect()
    }

    pub fn bic_trace(&self) -> Vec<T> {
        self.steps.iter().map(|s| s.bic).collect()
    }

    /// Whether the chosen model used every allowed slot.
    pub fn hit_size_limit(&self) -> bool {
        self.final_model.len() == self.m_max
    }
}

/// `log(rss / n) + (|A| / n)(log n + 2 log p)`.
pub fn extended_bic<T: Scalar>(residual_sq_norm: T, model_size: usize, n: usize, p: usize) -> T {
    let rss = residual_sq_norm.max(T::rss_floor());
    let nf = T::of_usize(n);
    let two = T::of(2.0);
    (rss / nf).ln() + T::of_usize(model_size) / nf * (nf.ln() + two * T::of_usize(p).ln())
}

/// Residual and residualized design after projecting out the active set.
#[derive(Clone, Debug)]
pub struct WorkingState<T> {
    active: Vec<usize>,
    y: Vec<T>,
    residual: Vec<T>,
    working: Matrix<T>,
    /// `‖(I - Π_A) X_j‖` for the unit-norm original columns.
    residual_norms: Vec<T>,
    excluded: Vec<bool>,
    degenerate: Vec<usize>,
    basis: Vec<Vec<T>>,
}

impl<T: Scalar> WorkingState<T> {
    pub fn new(x: &DesignMatrix<T>, y: &Response<T>) -> Result<Self> {
        if y.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                actual: y.len(),
            });
        }
        Ok(Self {
            active: Vec::new(),
            y: y.values().to_vec(),
            residual: y.values().to_vec(),
            working: x.values().clone(),
            residual_norms: vec![T::one(); x.p()],
            excluded: vec![false; x.p()],
            degenerate: Vec::new(),
            basis: Vec::new(),
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn residual(&self) -> &[T] {
        &self.residual
    }

    pub fn working_design(&self) -> &Matrix<T> {
        &self.working
    }

    pub fn degenerate_columns(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn is_candidate(&self, j: usize) -> bool {
        !self.excluded[j]
    }

    pub fn n(&self) -> usize {
        self.working.rows()
    }

    pub fn p(&self) -> usize {
        self.working.cols()
    }

    pub fn residual_sq_norm(&self) -> T {
        norm_sq(&self.residual)
    }

    /// `‖(I - Π_A) X_j‖`, the factor forward selection's criterion lacks.
    pub fn residual_norm(&self, j: usize) -> T {
        self.residual_norms[j]
    }

    /// Candidate maximizing `score(j)` in absolute value, ties to the lowest index.
    pub(crate) fn argmax_candidate(&self, score: impl Fn(usize) -> T) -> Option<(usize, T)> {
        let mut best: Option<(usize, T)> = None;
        for j in (0..self.p()).filter(|&j| self.is_candidate(j)) {
            let s = score(j);
            match best {
                Some((_, b)) if !(s.abs() > b.abs()) => {}
                _ => best = Some((j, s)),
            }
        }
        best
    }

    /// `Z_jᵀ z`
    pub fn marginal(&self, j: usize) -> T {
        dot(self.working.col(j), &self.residual)
    }

    /// Adds `k` to the active set and projects it out of `z` and `Z`.
    pub fn add(&mut self, k: usize) {
        assert!(self.is_candidate(k), "variable {k} is not a candidate");
        let mut q = self.working.col(k).to_vec();
        for b in &self.basis {
            let c = dot(b, &q);
            axpy(-c, b, &mut q);
        }
        let nrm = norm_sq(&q).sqrt();
        for v in q.iter_mut() {
            *v = *v / nrm;
        }
        let c = dot(&q, &self.residual);
        axpy(-c, &q, &mut self.residual);

        self.active.push(k);
        self.excluded[k] = true;

        let tol = T::degeneracy_tolerance();
        let excluded = &self.excluded;
        let data = self.working.columns_mut();
        let scaled: Vec<Option<T>> = data
            .into_par_iter()
            .enumerate()
            .map(|(j, col)| {
                if excluded[j] {
                    return None;
                }
                let c = dot(&q, col);
                axpy(-c, &q, col);
                let s = norm_sq(col).sqrt();
                if s > T::zero() {
                    for v in col.iter_mut() {
                        *v = *v / s;
                    }
                }
                Some(s)
            })
            .collect();
        for (j, s) in scaled.into_iter().enumerate() {
            if let Some(s) = s {
                self.residual_norms[j] = self.residual_norms[j] * s;
                if !(self.residual_norms[j] >= tol) {
                    self.excluded[j] = true;
                    self.degenerate.push(j);
                }
            }
        }
        self.basis.push(q);
    }

    /// Recomputes `(I - Π_A) y` from scratch.
    pub fn fresh_residual(&self) -> Vec<T> {
        let mut r = self.y.clone();
        for b in &self.basis {
            let c = dot(b, &r);
            axpy(-c, b, &mut r);
        }
        r
    }
}

/// One screening step on the current working state.
pub fn tcs_step<T: Scalar>(
    state: &WorkingState<T>,
    pi: T,
    rescaling: Rescaling,
    cap: ConditioningCap,
) -> Result<(usize, SelectionMode, T)> {
    let (k, marginal) = state
        .argmax_candidate(|j| state.marginal(j))
        .ok_or(Error::NoCandidates)?;
    let limit = cap.limit(state.n(), state.active().len());
    let z = state.residual();
    let ck = conditioning_set_masked(state.working_design(), k, pi, &state.excluded, limit);
    if ck.members.is_empty() {
        return Ok((k, SelectionMode::Marginal, marginal));
    }
    let mut candidates = ck.members.clone();
    candidates.push(k);
    candidates.sort_unstable();
    let scored: Vec<(usize, T, bool)> = candidates
        .par_iter()
        .map(|&j| {
            let cj = conditioning_set_masked(state.working_design(), j, pi, &state.excluded, limit);
            let t = tilt(state.working_design(), z, &cj);
            (j, t.score(rescaling), t.degenerate)
        })
        .collect();
    if scored.iter().all(|s| s.2) {
        return Ok((k, SelectionMode::Marginal, marginal));
    }
    let mut best = scored[0];
    for &s in &scored[1..] {
        if s.1.abs() > best.1.abs() {
            best = s;
        }
    }
    Ok((best.0, SelectionMode::Tilted, best.1))
}

/// Greedy path driver shared by the one-at-a-time methods.
pub(crate) fn run_path<T: Scalar, F>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    m_max: Option<usize>,
    pi_used: Option<T>,
    mut step: F,
) -> Result<SolutionPath<T>>
where
    F: FnMut(&WorkingState<T>) -> Result<(usize, SelectionMode, T)>,
{
    let m = resolve_m_max(m_max, x.n())?;
    let mut state = WorkingState::new(x, y)?;
    let (n, p) = (x.n(), x.p());
    let exact = { T::rank_tolerance() * T::rank_tolerance() * norm_sq(y.values()) };
    let mut steps = Vec::new();
    let mut stop_reason = StopReason::MaxSize;
    while steps.len() < m {
        let (k, mode, score) = match step(&state) {
            Ok(v) => v,
            Err(Error::NoCandidates) => {
                stop_reason = StopReason::NoCandidates;
                break;
            }
            Err(e) => return Err(e),
        };
        state.add(k);
        let rss = state.residual_sq_norm();
        steps.push(PathStep {
            selected_index: k,
            selection_mode: mode,
            score,
            residual_sq_norm: rss,
            bic: extended_bic(rss, steps.len() + 1, n, p),
            rss_floored: rss <= T::rss_floor(),
        });
        if rss <= exact {
            stop_reason = StopReason::ExactFit;
            break;
        }
    }
    finish_path(x, y, steps, stop_reason, m, pi_used)
}

/// Picks the BIC-minimal prefix (ties to the smaller model) and fits it.
pub(crate) fn finish_path<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    steps: Vec<PathStep<T>>,
    stop_reason: StopReason,
    m_max: usize,
    pi_used: Option<T>,
) -> Result<SolutionPath<T>> {
    let mut best: Option<(usize, T)> = None;
    for (i, s) in steps.iter().enumerate() {
        match best {
            Some((_, b)) if !(s.bic < b) => {}
            _ => best = Some((i + 1, s.bic)),
        }
    }
    let size = best.map_or(0, |b| b.0);
    let final_model: Vec<usize> = steps[..size].iter().map(|s| s.selected_index).collect();
    let final_coefficients = fit_denormalized(x, y, &final_model)?;
    Ok(SolutionPath {
        steps,
        final_model,
        final_coefficients,
        stop_reason,
        m_max,
        pi_used,
    })
}

/// OLS of `y` on the given columns, reported on the raw column scale.
pub fn fit_denormalized<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    model: &[usize],
) -> Result<Vec<T>> {
    let cols: Vec<&[T]> = model.iter().map(|&j| x.col(j)).collect();
    let b = least_squares(&cols, y.values())?;
    Ok(x.denormalize(model, &b))
}

/// Threshold the run will use, after calibration and scaling.
pub fn resolve_pi<T: Scalar>(x: &DesignMatrix<T>, cfg: &TcsConfig<T>) -> T {
    let base = match cfg.pi {
        PiChoice::Auto(_) => estimate_threshold(x, cfg.seed, cfg.nu_star).pi_hat,
        PiChoice::Value(v) => v,
    };
    base * cfg.pi_scale
}

pub fn run_tcs<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    cfg: &TcsConfig<T>,
) -> Result<SolutionPath<T>> {
    let pi = resolve_pi(x, cfg);
    run_tcs_with_pi(x, y, cfg, pi)
}

/// Runs with an already resolved threshold (lets callers share one calibration).
pub fn run_tcs_with_pi<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &Response<T>,
    cfg: &TcsConfig<T>,
    pi: T,
) -> Result<SolutionPath<T>> {
    run_path(x, y, cfg.m_max, Some(pi), |state| {
        tcs_step(state, pi, cfg.rescaling, cfg.conditioning_cap)
    })
}
