//! Data-driven hard threshold on off-diagonal sample correlations.
//!
//! Observed `|c_{j,k}|` are tested against an empirical null built from
//! independent Gaussian vectors, and Benjamini-Hochberg at level `nu_star`
//! decides how many correlations are non-negligible. The threshold is the
//! absolute correlation at the last rejection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::DesignMatrix;
use crate::scalar::{dot, Scalar};

/// Cap on the number of reference pairs kept when `p(p-1)/2` is very large.
pub const DEFAULT_MAX_REFERENCE_PAIRS: usize = 2_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdEstimate<T> {
    pub pi_hat: T,
    pub nu_star: T,
    #[serde(skip)]
    pub reference_abs_correlations: Vec<T>,
    pub rejected_count: usize,
    pub d: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NullReferenceConfig {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    /// Uniform subsample of pairs (without replacement) once `d` exceeds this.
    pub max_pairs: Option<usize>,
}

impl NullReferenceConfig {
    pub fn new(seed: u64, n: usize, p: usize) -> Self {
        Self {
            seed,
            n,
            p,
            max_pairs: Some(DEFAULT_MAX_REFERENCE_PAIRS),
        }
    }
}

pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Default FDR level `p^{-1/2}`.
pub fn default_nu_star<T: Scalar>(p: usize) -> T {
    T::one() / T::of_usize(p).sqrt()
}

/// Maps a linear index over pairs `j < k` (row by row) to the pair.
fn unrank_pair(mut idx: usize, p: usize) -> (usize, usize) {
    let mut j = 0;
    loop {
        let row = p - 1 - j;
        if idx < row {
            return (j, j + 1 + idx);
        }
        idx -= row;
        j += 1;
    }
}

/// Absolute upper-triangle entries of the Gram matrix of unit columns,
/// row by row. Rows are computed in parallel and concatenated in order.
fn upper_abs_correlations<T: Scalar>(cols: &[Vec<T>]) -> Vec<T> {
    let p = cols.len();
    (0..p)
        .into_par_iter()
        .map(|j| {
            ((j + 1)..p)
                .map(|k| dot(&cols[j], &cols[k]).abs())
                .collect::<Vec<T>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

fn standardized<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let nrm = centered.iter().map(|x| x * x).sum::<f64>().sqrt();
    centered.iter().map(|x| T::of(x / nrm)).collect()
}

/// Sorted absolute Pearson correlations among `p` independent standard
/// Gaussian `n`-vectors drawn from the seeded generator.
pub fn generate_null_reference<T: Scalar>(cfg: &NullReferenceConfig) -> Vec<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let cols: Vec<Vec<T>> = (0..cfg.p)
        .map(|_| standardized((0..cfg.n).map(|_| rng.sample(StandardNormal)).collect()))
        .collect();
    let d = pair_count(cfg.p);
    let mut out = match cfg.max_pairs {
        Some(cap) if d > cap => {
            let mut picks = rand::seq::index::sample(&mut rng, d, cap).into_vec();
            picks.sort_unstable();
            picks
                .into_par_iter()
                .map(|idx| {
                    let (j, k) = unrank_pair(idx, cfg.p);
                    dot(&cols[j], &cols[k]).abs()
                })
                .collect()
        }
        _ => upper_abs_correlations(&cols),
    };
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite correlations"));
    out
}

/// `P = |{r : |r| >= |c|}| / d` for each observed absolute correlation.
pub fn empirical_p_values<T: Scalar>(abs_correlations: &[T], reference: &[T]) -> Vec<T> {
    let d = T::of_usize(reference.len().max(1));
    abs_correlations
        .iter()
        .map(|&c| {
            let below = reference.partition_point(|&r| r < c);
            T::of_usize(reference.len() - below) / d
        })
        .collect()
}

/// Benjamini-Hochberg step-up on `p_values` (paired with `abs_correlations`).
///
/// Ordering is by p-value ascending, then by `|c|` descending, then by input
/// position, so equal p-values resolve towards the largest qualifying index.
/// With no rejection the threshold is 1, which empties every conditioning set.
pub fn benjamini_hochberg_threshold<T: Scalar>(
    p_values: &[T],
    abs_correlations: &[T],
    nu_star: T,
    reference: Vec<T>,
) -> ThresholdEstimate<T> {
    assert_eq!(p_values.len(), abs_correlations.len());
    let d = p_values.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .partial_cmp(&p_values[b])
            .expect("finite p-values")
            .then(
                abs_correlations[b]
                    .partial_cmp(&abs_correlations[a])
                    .expect("finite correlations"),
            )
            .then(a.cmp(&b))
    });
    let df = T::of_usize(d);
    let last = order
        .iter()
        .enumerate()
        .filter(|&(i, &idx)| p_values[idx] <= T::of_usize(i + 1) / df * nu_star)
        .map(|(i, _)| i)
        .last();
    let (pi_hat, rejected_count) = match last {
        Some(i) => (abs_correlations[order[i]], i + 1),
        None => (T::one(), 0),
    };
    ThresholdEstimate {
        pi_hat,
        nu_star,
        reference_abs_correlations: reference,
        rejected_count,
        d,
    }
}

/// Absolute off-diagonal correlations `|c_{j,k}|`, `j < k`, row by row.
pub fn observed_abs_correlations<T: Scalar>(x: &DesignMatrix<T>) -> Vec<T> {
    let cols: Vec<Vec<T>> = (0..x.p()).map(|j| x.col(j).to_vec()).collect();
    upper_abs_correlations(&cols)
}

/// Full calibration: null reference, empirical p-values and BH.
pub fn estimate_threshold<T: Scalar>(
    x: &DesignMatrix<T>,
    seed: u64,
    nu_star: Option<T>,
) -> ThresholdEstimate<T> {
    estimate_threshold_with(x, &NullReferenceConfig::new(seed, x.n(), x.p()), nu_star)
}

pub fn estimate_threshold_with<T: Scalar>(
    x: &DesignMatrix<T>,
    cfg: &NullReferenceConfig,
    nu_star: Option<T>,
) -> ThresholdEstimate<T> {
    let nu = nu_star.unwrap_or_else(|| default_nu_star(x.p()));
    if x.p() < 2 {
        return ThresholdEstimate {
            pi_hat: T::one(),
            nu_star: nu,
            reference_abs_correlations: Vec::new(),
            rejected_count: 0,
            d: 0,
        };
    }
    let reference = generate_null_reference::<T>(cfg);
    let observed = observed_abs_correlations(x);
    let pv = empirical_p_values(&observed, &reference);
    benjamini_hochberg_threshold(&pv, &observed, nu, reference)
}
