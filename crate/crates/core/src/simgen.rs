//! Seeded simulation designs, sparse coefficients and R²-calibrated noise.
//!
//! Factor and external designs are returned with unit-norm columns, so the
//! true coefficients and the estimation error live on that scale. The
//! equicorrelated designs (`FanD`, `FanE`) keep their raw Gaussian scale
//! with fixed coefficient patterns and standard normal noise.
//!
//! Simulation runs in `f64`; cast the result for single-precision work.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_matrix;
use crate::linalg::{cholesky, normalize_columns, DesignMatrix, Matrix, ThinQr};

/// Generator used for every random draw in the crate.
pub const PRNG_NAME: &str = "ChaCha20 (rand_chacha), ziggurat normals (rand_distr StandardNormal)";

/// Coefficient multiplier for the equicorrelated designs.
pub const FAN_BETA: f64 = 2.5;

pub const MAX_SUPPORT_ATTEMPTS: usize = 100;

/// Independent random streams derived from one replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Threshold = 2,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(master, replicate, stream)`, independent of scheduling.
pub fn derive_seed(master: u64, replicate: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ stream as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimModel {
    /// `X_j = Σ_l f_{j,l} φ_l + η_j` with `q` standard normal factors.
    Factor { q: usize },
    /// Equicorrelation `phi`, except column 4 which has correlation `sqrt(phi)`.
    FanD { phi: f64 },
    /// As `FanD`, with column 5 uncorrelated with the rest.
    FanE { phi: f64 },
    /// Design read from a headerless CSV; `n` and `p` come from the file.
    External {
        path: PathBuf,
        #[serde(default)]
        header: bool,
    },
}

impl SimModel {
    /// Parses the command-line model names `factor<q>`, `fanD`, `fanE`.
    pub fn from_name(name: &str, phi: f64) -> Result<Self> {
        match name {
            "fanD" | "fand" | "fan_d" => Ok(SimModel::FanD { phi }),
            "fanE" | "fane" | "fan_e" => Ok(SimModel::FanE { phi }),
            _ => name
                .strip_prefix("factor")
                .and_then(|q| q.parse::<usize>().ok())
                .map(|q| SimModel::Factor { q })
                .ok_or_else(|| Error::InvalidConfig(format!("unknown model {name:?}"))),
        }
    }

    fn fan_pattern(&self) -> Option<Vec<f64>> {
        match *self {
            SimModel::FanD { phi } => Some(vec![
                FAN_BETA,
                FAN_BETA,
                FAN_BETA,
                -3.0 * FAN_BETA * phi.sqrt(),
            ]),
            SimModel::FanE { phi } => Some(vec![
                FAN_BETA,
                FAN_BETA,
                FAN_BETA,
                -3.0 * FAN_BETA * phi.sqrt(),
                0.25 * FAN_BETA,
            ]),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: SimModel,
    pub n: usize,
    pub p: usize,
    /// Support size for factor and external designs; the equicorrelated
    /// designs use their fixed patterns instead.
    #[serde(default = "default_sparsity")]
    pub sparsity: usize,
    #[serde(default = "default_r_squared")]
    pub r_squared: f64,
    #[serde(default)]
    pub replicate_seed: u64,
}

fn default_sparsity() -> usize {
    10
}

fn default_r_squared() -> f64 {
    0.9
}

impl SimSpec {
    pub fn new(model: SimModel, n: usize, p: usize) -> Self {
        Self {
            model,
            n,
            p,
            sparsity: default_sparsity(),
            r_squared: default_r_squared(),
            replicate_seed: 0,
        }
    }

    pub fn with_sparsity(mut self, s: usize) -> Self {
        self.sparsity = s;
        self
    }

    pub fn with_r_squared(mut self, r2: f64) -> Self {
        self.r_squared = r2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.replicate_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if let SimModel::External { .. } = self.model {
            return if self.r_squared > 0.0 && self.r_squared < 1.0 {
                Ok(())
            } else {
                bad(format!("r_squared must lie in (0, 1), got {}", self.r_squared))
            };
        }
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        match &self.model {
            SimModel::Factor { q } if *q == 0 => bad("factor model needs q >= 1".into()),
            SimModel::FanD { phi } | SimModel::FanE { phi } if !(0.0..1.0).contains(phi) => {
                bad(format!("phi must lie in [0, 1), got {phi}"))
            }
            m => {
                let need = m.fan_pattern().map_or(self.sparsity, |b| b.len());
                if need > self.p || need == 0 {
                    bad(format!("need 1 <= sparsity <= p (sparsity {need}, p {})", self.p))
                } else if m.fan_pattern().is_none()
                    && !(self.r_squared > 0.0 && self.r_squared < 1.0)
                {
                    bad(format!("r_squared must lie in (0, 1), got {}", self.r_squared))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    /// Ascending indices with non-zero coefficient.
    pub support: Vec<usize>,
    pub beta: Vec<f64>,
    /// Noise is `ε_i ~ N(0, sigma² / n)`.
    pub sigma: f64,
    /// `None` for the fixed-noise equicorrelated designs.
    pub r_squared_target: Option<f64>,
    pub seed: u64,
}

/// One simulated data set. `x` is the matrix handed to selection methods.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
    pub truth: TrueModel,
}

impl Replicate {
    pub fn design(&self) -> Result<DesignMatrix<f64>> {
        normalize_columns(&self.x)
    }
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let v: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_row_major(rows, cols, &v).expect("consistent shape")
}

/// Factor design plus the `p x q` loadings used to build it.
pub fn factor_design(rng: &mut ChaCha20Rng, n: usize, p: usize, q: usize) -> (Matrix<f64>, Matrix<f64>) {
    let loadings = gaussian_matrix(rng, p, q);
    let factors = gaussian_matrix(rng, n, q);
    let mut x = gaussian_matrix(rng, n, p);
    for j in 0..p {
        for l in 0..q {
            let f = loadings.get(j, l);
            let col = x.col_mut(j);
            for (i, v) in col.iter_mut().enumerate() {
                *v += f * factors.get(i, l);
            }
        }
    }
    (x, loadings)
}

/// Population covariance of the equicorrelated designs.
pub fn fan_covariance(p: usize, phi: f64, fifth_independent: bool) -> Matrix<f64> {
    let mut s = Matrix::zeros(p, p);
    for j in 0..p {
        for k in 0..p {
            let v = if j == k {
                1.0
            } else if fifth_independent && (j == 4 || k == 4) {
                0.0
            } else if j == 3 || k == 3 {
                phi.sqrt()
            } else {
                phi
            };
            s.set(j, k, v);
        }
    }
    s
}

/// Rows `x_i = L g_i` with `Σ = L Lᵀ`.
fn correlated_gaussian(rng: &mut ChaCha20Rng, n: usize, sigma: &Matrix<f64>) -> Result<Matrix<f64>> {
    let l = cholesky(sigma)?;
    let p = sigma.rows();
    let g = gaussian_matrix(rng, n, p);
    let mut x = Matrix::zeros(n, p);
    for k in 0..p {
        let gk = g.col(k);
        for j in k..p {
            let ljk = l.get(j, k);
            if ljk == 0.0 {
                continue;
            }
            let col = x.col_mut(j);
            for i in 0..n {
                col[i] += ljk * gk[i];
            }
        }
    }
    Ok(x)
}

/// Raw design described by `spec`. Factor and external designs are unit-normalized.
pub fn generate_design(spec: &SimSpec, rng: &mut ChaCha20Rng) -> Result<Matrix<f64>> {
    spec.validate()?;
    match &spec.model {
        SimModel::Factor { q } => {
            let (x, _) = factor_design(rng, spec.n, spec.p, *q);
            Ok(normalize_columns(&x)?.values().clone())
        }
        SimModel::FanD { phi } => correlated_gaussian(rng, spec.n, &fan_covariance(spec.p, *phi, false)),
        SimModel::FanE { phi } => correlated_gaussian(rng, spec.n, &fan_covariance(spec.p, *phi, true)),
        SimModel::External { path, header } => {
            let raw = read_matrix(path, *header)?;
            Ok(normalize_columns(&raw)?.values().clone())
        }
    }
}

/// Draws the support uniformly and sets `β_S = C_SS⁻¹ g`, `g ~ N(0, I/n)`,
/// resampling the support while `C_SS` is singular. The equicorrelated
/// designs get their fixed patterns on the leading columns.
pub fn generate_coefficients(
    x: &DesignMatrix<f64>,
    spec: &SimSpec,
    rng: &mut ChaCha20Rng,
) -> Result<TrueModel> {
    let p = x.p();
    let mut beta = vec![0.0; p];
    if let Some(pattern) = spec.model.fan_pattern() {
        beta[..pattern.len()].copy_from_slice(&pattern);
    } else {
        let s = spec.sparsity;
        if s == 0 || s > p {
            return Err(Error::InvalidConfig(format!("sparsity {s} out of range for p = {p}")));
        }
        let scale = 1.0 / (x.n() as f64).sqrt();
        let mut solved = None;
        for _ in 0..MAX_SUPPORT_ATTEMPTS {
            let mut support = rand::seq::index::sample(rng, p, s).into_vec();
            support.sort_unstable();
            let g: Vec<f64> = (0..s).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            match ThinQr::new(support.iter().map(|&j| x.col(j))) {
                Ok(qr) => {
                    solved = Some((support, qr.solve_gram(&g)));
                    break;
                }
                Err(Error::RankDeficient) => continue,
                Err(e) => return Err(e),
            }
        }
        let (support, b) = solved.ok_or(Error::SingularSupportGram {
            attempts: MAX_SUPPORT_ATTEMPTS,
        })?;
        for (&j, v) in support.iter().zip(b) {
            beta[j] = v;
        }
    }
    Ok(TrueModel {
        support: (0..p).filter(|&j| beta[j] != 0.0).collect(),
        beta,
        sigma: 0.0,
        r_squared_target: None,
        seed: spec.replicate_seed,
    })
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// `σ` with `σ² = n v (1 - R²) / R²`, `v` the empirical variance of `Xβ`.
pub fn calibrate_noise(x: &Matrix<f64>, beta: &[f64], r_squared: f64) -> Result<f64> {
    if !(r_squared > 0.0 && r_squared < 1.0) {
        return Err(Error::InvalidConfig(format!("r_squared must lie in (0, 1), got {r_squared}")));
    }
    if beta.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: beta.len(),
        });
    }
    let v = variance(&x.mul_vec(beta));
    if v < 1e-12 {
        return Err(Error::ZeroSignal);
    }
    Ok((x.rows() as f64 * v * (1.0 - r_squared) / r_squared).sqrt())
}

/// Design, coefficients and response for `spec.replicate_seed`.
pub fn generate_replicate(spec: &SimSpec) -> Result<Replicate> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.replicate_seed);
    let x = generate_design(spec, &mut rng)?;
    let design = normalize_columns(&x)?;
    let mut truth = match spec.model {
        SimModel::FanD { .. } | SimModel::FanE { .. } => generate_coefficients(&design, spec, &mut rng)?,
        _ => {
            // coefficients on the stored (unit-norm) columns
            let mut t = generate_coefficients(&design, spec, &mut rng)?;
            t.sigma = calibrate_noise(&x, &t.beta, spec.r_squared)?;
            t.r_squared_target = Some(spec.r_squared);
            t
        }
    };
    let n = x.rows();
    if truth.r_squared_target.is_none() {
        truth.sigma = (n as f64).sqrt();
    }
    let noise_sd = truth.sigma / (n as f64).sqrt();
    let mut y = x.mul_vec(&truth.beta);
    for yi in y.iter_mut() {
        *yi += noise_sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(Replicate { x, y, truth })
}

/// `var(Xβ) / var(y)` for a generated replicate.
pub fn empirical_r_squared(rep: &Replicate) -> f64 {
    variance(&rep.x.mul_vec(&rep.truth.beta)) / variance(&rep.y)
}
