//! Replicated simulation benchmarks driven by a TOML file.
//!
//! ```toml
//! replicates = 20
//! master_seed = 7
//! output_dir = "out/factor2"
//! threads = "auto"          # or an integer
//!
//! [spec]
//! n = 100
//! p = 500
//! sparsity = 10
//! r_squared = 0.9
//! model = { kind = "factor", q = 2 }
//!
//! [[methods]]
//! kind = "tcs"
//! rescaling = "r2"
//!
//! [[methods]]
//! kind = "fr"
//! ```
//!
//! Each replicate owns its data stream, derived from the master seed and its
//! index, so outputs do not depend on the number of threads.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, fpr_guideline, score, write_roc_csv, write_summary_csv, write_summary_json,
    SelectionReport,
};
use crate::simgen::{derive_seed, generate_replicate, SimSpec, Stream, PRNG_NAME};
use crate::tcs::{run_tcs, PiChoice, TcsConfig};
use crate::tilting::{ConditioningCap, Rescaling};

pub const THREADS_ENV: &str = "TILTSEL_THREADS";
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodKind {
    Tcs {
        rescaling: Rescaling,
        #[serde(default = "PiChoice::auto")]
        pi: PiChoice<f64>,
        #[serde(default = "one")]
        pi_scale: f64,
        #[serde(default)]
        nu_star: Option<f64>,
        #[serde(default)]
        conditioning_cap: ConditioningCap,
    },
    Fs,
    Fr,
    Marginal,
    PcSimple {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_max_order")]
        max_order: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_max_order() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(flatten)]
    pub kind: MethodKind,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            label: None,
            m_max: None,
            kind,
        }
    }

    pub fn tcs(rescaling: Rescaling) -> Self {
        Self::new(MethodKind::Tcs {
            rescaling,
            pi: PiChoice::auto(),
            pi_scale: 1.0,
            nu_star: None,
            conditioning_cap: ConditioningCap::default(),
        })
    }

    pub fn name(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match &self.kind {
            MethodKind::Tcs {
                rescaling, pi_scale, ..
            } => {
                let base = match rescaling {
                    Rescaling::R1 => "tcs-r1",
                    Rescaling::R2 => "tcs-r2",
                };
                if *pi_scale == 1.0 {
                    base.to_string()
                } else {
                    format!("{base}@{pi_scale}")
                }
            }
            MethodKind::Fs => "fs".into(),
            MethodKind::Fr => "fr".into(),
            MethodKind::Marginal => "marginal".into(),
            MethodKind::PcSimple { .. } => "pcsimple".into(),
        }
    }

    /// Copies of TCS methods at each threshold multiplier; other methods once.
    pub fn expand_pi_scales(methods: &[MethodSpec], scales: &[f64]) -> Vec<MethodSpec> {
        if scales.is_empty() {
            return methods.to_vec();
        }
        let mut out = Vec::new();
        for m in methods {
            match &m.kind {
                MethodKind::Tcs { .. } => {
                    for &s in scales {
                        let mut c = m.clone();
                        if let MethodKind::Tcs { pi_scale, .. } = &mut c.kind {
                            *pi_scale = s;
                        }
                        c.label = m.label.as_ref().map(|l| format!("{l}@{s}"));
                        out.push(c);
                    }
                }
                _ => out.push(m.clone()),
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threads {
    Auto(AutoThreads),
    Count(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoThreads {
    Auto,
}

impl Default for Threads {
    fn default() -> Self {
        Threads::Auto(AutoThreads::Auto)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub spec: SimSpec,
    pub methods: Vec<MethodSpec>,
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Threads,
}

impl BenchmarkConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        let mut names: Vec<String> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(
                "method names must be unique; set `label` to tell them apart".into(),
            ));
        }
        self.spec.validate()
    }

    /// Threads from the config, overridden by `TILTSEL_THREADS` when set.
    pub fn resolved_threads(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            return v
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}={v:?} is not a count")));
        }
        Ok(match self.threads {
            Threads::Auto(_) => 0,
            Threads::Count(k) => k,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub replicate: usize,
    pub seed: u64,
    pub method: String,
    pub pi_used: Option<f64>,
    pub path: Vec<usize>,
    pub final_model: Vec<usize>,
    pub final_coefficients: Vec<f64>,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub l2_sq: f64,
}

struct ReplicateOutcome {
    runs: Vec<RunRecord>,
    reports: Vec<SelectionReport>,
    seconds: f64,
}

pub fn run_method(
    method: &MethodSpec,
    x: &crate::linalg::DesignMatrix<f64>,
    y: &crate::linalg::Response<f64>,
    threshold_seed: u64,
) -> Result<crate::tcs::SolutionPath<f64>> {
    match &method.kind {
        MethodKind::Tcs {
            rescaling,
            pi,
            pi_scale,
            nu_star,
            conditioning_cap,
        } => {
            let cfg = TcsConfig {
                pi: *pi,
                rescaling: *rescaling,
                m_max: method.m_max,
                seed: threshold_seed,
                nu_star: *nu_star,
                pi_scale: *pi_scale,
                conditioning_cap: *conditioning_cap,
            };
            run_tcs(x, y, &cfg)
        }
        other => {
            let mut cfg = BaselineConfig::new(match other {
                MethodKind::Fs => BaselineMethod::Fs,
                MethodKind::Fr => BaselineMethod::Fr,
                MethodKind::Marginal => BaselineMethod::Marginal,
                _ => BaselineMethod::PcSimple,
            });
            cfg.m_max = method.m_max;
            if let MethodKind::PcSimple { alpha, max_order } = other {
                cfg.alpha = *alpha;
                cfg.max_order = *max_order;
            }
            run_baseline(x, y, &cfg)
        }
    }
}

fn run_replicate(cfg: &BenchmarkConfig, r: usize) -> Result<ReplicateOutcome> {
    let start = Instant::now();
    let seed = derive_seed(cfg.master_seed, r as u64, Stream::Data);
    let spec = cfg.spec.clone().with_seed(seed);
    let rep = generate_replicate(&spec)?;
    let x = rep.design()?;
    let y = crate::linalg::Response::for_design(rep.y.clone(), &x)?;
    let tseed = derive_seed(cfg.master_seed, r as u64, Stream::Threshold);
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for m in &cfg.methods {
        let name = m.name();
        let path = run_method(m, &x, &y, tseed)?;
        let report = score(&rep.truth, &path, &name, r)?;
        runs.push(RunRecord {
            replicate: r,
            seed,
            method: name,
            pi_used: path.pi_used,
            path: path.indices(),
            final_model: path.final_model.clone(),
            final_coefficients: path.final_coefficients.clone(),
            fp: report.fp,
            fn_: report.fn_,
            l2_sq: report.l2_sq,
        });
        reports.push(report);
    }
    Ok(ReplicateOutcome {
        runs,
        reports,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkSummary {
    pub reports: Vec<SelectionReport>,
    pub summaries: Vec<crate::metrics::MethodSummary>,
    pub output_dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    prng: &'a str,
    seed_derivation: &'a str,
    master_seed: u64,
    replicate_seeds: Vec<u64>,
    threads: usize,
    fpr_guideline: f64,
    wall_seconds_total: f64,
    wall_seconds_per_replicate: Vec<Option<f64>>,
    completed: usize,
    failed: Option<String>,
    config: &'a BenchmarkConfig,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs every replicate, writes the output files and returns the summary.
///
/// On failure the completed replicates (up to the first failing one) are
/// still written, alongside a `FAILED` file holding the error.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkSummary> {
    cfg.validate()?;
    let threads = cfg.resolved_threads()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicateOutcome>> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(cfg, r))
            .collect()
    });
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let marker = dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }

    let mut done = Vec::new();
    let mut failure = None;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => done.push(v),
            Err(e) => {
                failure = Some((r, e));
                break;
            }
        }
    }

    let reports: Vec<SelectionReport> = done.iter().flat_map(|o| o.reports.clone()).collect();
    let mut runs = create(&dir.join("runs.jsonl"))?;
    for o in &done {
        for rec in &o.runs {
            serde_json::to_writer(&mut runs, rec)?;
            runs.write_all(b"\n")?;
        }
    }
    runs.flush()?;
    write_roc_csv(create(&dir.join("roc.csv"))?, &reports)?;
    let guideline = fpr_guideline(cfg.spec.sparsity, cfg.spec.p.max(1));
    let summaries = if reports.is_empty() {
        Vec::new()
    } else {
        aggregate(&reports)?
    };
    write_summary_csv(create(&dir.join("summary.csv"))?, &summaries)?;
    write_summary_json(create(&dir.join("summary.json"))?, &summaries, guideline)?;

    let mut per_rep: Vec<Option<f64>> = done.iter().map(|o| Some(o.seconds)).collect();
    per_rep.resize(cfg.replicates, None);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        prng: PRNG_NAME,
        seed_derivation: "splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ stream), stream 1 = data, 2 = threshold",
        master_seed: cfg.master_seed,
        replicate_seeds: (0..cfg.replicates)
            .map(|r| derive_seed(cfg.master_seed, r as u64, Stream::Data))
            .collect(),
        threads: pool.current_num_threads(),
        fpr_guideline: guideline,
        wall_seconds_total: started.elapsed().as_secs_f64(),
        wall_seconds_per_replicate: per_rep,
        completed: done.len(),
        failed: failure.as_ref().map(|(r, e)| format!("replicate {r}: {e}")),
        config: cfg,
    };
    serde_json::to_writer_pretty(create(&dir.join("manifest.json"))?, &manifest)?;

    if let Some((r, e)) = failure {
        fs::write(&marker, format!("replicate {r}: {e}\n"))?;
        return Err(e);
    }
    Ok(BenchmarkSummary {
        reports,
        summaries,
        output_dir: dir.clone(),
    })
}
