//! Command-line front end: `simulate`, `threshold`, `select`, `benchmark`.
//!
//! Exit status is 0 on success, 1 for data and I/O errors and 2 for usage
//! errors (bad flags, invalid configuration).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{run_benchmark, BenchmarkConfig, MethodKind, MethodSpec, Threads};
use crate::error::{Error, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector};
use crate::linalg::{center_and_normalize, normalize_columns, DesignMatrix, Response};
use crate::simgen::{generate_replicate, SimModel, SimSpec};
use crate::tcs::{PathStep, PiChoice, SolutionPath, StopReason};
use crate::thresholding::estimate_threshold;
use crate::tilting::{ConditioningCap, Rescaling};

#[derive(Debug, Parser)]
#[command(name = "tiltsel", version, about = "Variable selection by tilted correlation screening")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated data set (X.csv, y.csv, truth.json).
    Simulate(SimulateArgs),
    /// Calibrate the correlation threshold for a design.
    Threshold(ThresholdArgs),
    /// Run a selection method and print its solution path as JSON.
    Select(SelectArgs),
    /// Run a replicated benchmark described by a TOML file.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// factor2, factor10, factor20 (any factor<q>), fanD or fanE
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.9)]
    pub r2: f64,
    #[arg(long, default_value_t = 10)]
    pub sparsity: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, visible_alias = "input")]
    pub x: PathBuf,
    /// Input CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    /// Center columns (and the response) before normalizing.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// FDR level; defaults to p^{-1/2}.
    #[arg(long, alias = "nu")]
    pub nu_star: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Tcs,
    Fs,
    Fr,
    Marginal,
    Pcsimple,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RescalingArg {
    R1,
    R2,
}

impl From<RescalingArg> for Rescaling {
    fn from(r: RescalingArg) -> Self {
        match r {
            RescalingArg::R1 => Rescaling::R1,
            RescalingArg::R2 => Rescaling::R2,
        }
    }
}

fn parse_pi(s: &str) -> std::result::Result<PiChoice<f64>, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(PiChoice::auto());
    }
    let v: f64 = s.parse().map_err(|_| format!("expected `auto` or a number, got {s:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("threshold must lie in [0, 1], got {v}"));
    }
    Ok(PiChoice::Value(v))
}

fn parse_cap(s: &str) -> std::result::Result<ConditioningCap, String> {
    match s {
        "sqrt_n" | "sqrtn" => Ok(ConditioningCap::SqrtN),
        "saturated" | "none" => Ok(ConditioningCap::Saturated),
        _ => s
            .parse::<usize>()
            .map(ConditioningCap::Fixed)
            .map_err(|_| format!("expected sqrt_n, saturated or a count, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Tcs)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = RescalingArg::R2)]
    pub rescaling: RescalingArg,
    /// Correlation threshold: `auto` or a value in [0, 1].
    #[arg(long, default_value = "auto", value_parser = parse_pi)]
    pub pi: PiChoice<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub pi_scale: f64,
    /// Conditioning-set size cap: sqrt_n, saturated or a count.
    #[arg(long, default_value = "sqrt_n", value_parser = parse_cap)]
    pub cap: ConditioningCap,
    #[arg(long, visible_alias = "m")]
    pub m_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub max_order: usize,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated threshold multipliers applied to every TCS method.
    #[arg(long, value_delimiter = ',')]
    pub pi_scale: Vec<f64>,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::Toml(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Threshold(a) => cmd_threshold(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

fn write_json<S: Serialize>(out: Option<&Path>, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}")?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SimSpec::new(SimModel::from_name(&a.model, a.phi)?, a.n, a.p)
        .with_sparsity(a.sparsity)
        .with_r_squared(a.r2)
        .with_seed(a.seed);
    let rep = generate_replicate(&spec)?;
    fs::create_dir_all(&a.out)?;
    write_matrix(&a.out.join("X.csv"), &rep.x)?;
    write_vector(&a.out.join("y.csv"), &rep.y)?;
    write_json(Some(&a.out.join("truth.json")), &rep.truth)
}

fn load_design(d: &DesignArgs) -> Result<DesignMatrix<f64>> {
    let raw = read_matrix(&d.x, d.header)?;
    if d.center {
        center_and_normalize(&raw)
    } else {
        normalize_columns(&raw)
    }
}

pub fn cmd_threshold(a: &ThresholdArgs) -> Result<()> {
    let x = load_design(&a.design)?;
    let est = estimate_threshold(&x, a.seed, a.nu_star);
    #[derive(Serialize)]
    struct Out {
        pi_hat: f64,
        nu_star: f64,
        rejected_count: usize,
        d: usize,
        reference_pairs: usize,
        seed: u64,
    }
    write_json(
        None,
        &Out {
            pi_hat: est.pi_hat,
            nu_star: est.nu_star,
            rejected_count: est.rejected_count,
            d: est.d,
            reference_pairs: est.reference_abs_correlations.len(),
            seed: a.seed,
        },
    )
}

#[derive(Serialize)]
pub struct PathReport<'a> {
    pub method: &'a str,
    pub n: usize,
    pub p: usize,
    pub pi_used: Option<f64>,
    pub steps: &'a [PathStep<f64>],
    pub bic_trace: Vec<f64>,
    pub final_model: &'a [usize],
    pub final_coefficients: &'a [f64],
    pub stop_reason: StopReason,
    pub hit_size_limit: bool,
}

pub fn cmd_select(a: &SelectArgs) -> Result<()> {
    let x = load_design(&a.design)?;
    let yv = read_vector(&a.y, a.design.header)?;
    let mut y = Response::for_design(yv, &x)?;
    if a.design.center {
        y = y.centered();
    }
    let kind = match a.method {
        MethodArg::Tcs => MethodKind::Tcs {
            rescaling: a.rescaling.into(),
            pi: a.pi,
            pi_scale: a.pi_scale,
            nu_star: None,
            conditioning_cap: a.cap,
        },
        MethodArg::Fs => MethodKind::Fs,
        MethodArg::Fr => MethodKind::Fr,
        MethodArg::Marginal => MethodKind::Marginal,
        MethodArg::Pcsimple => MethodKind::PcSimple {
            alpha: a.alpha,
            max_order: a.max_order,
        },
    };
    let mut spec = MethodSpec::new(kind);
    spec.m_max = a.m_max;
    let name = spec.name();
    let path: SolutionPath<f64> = crate::bench::run_method(&spec, &x, &y, a.seed)?;
    if path.hit_size_limit() {
        eprintln!(
            "warning: the selected model uses all {} allowed variables; consider a larger m_max",
            path.m_max
        );
    }
    write_json(
        a.out.as_deref(),
        &PathReport {
            method: &name,
            n: x.n(),
            p: x.p(),
            pi_used: path.pi_used,
            steps: &path.steps,
            bic_trace: path.bic_trace(),
            final_model: &path.final_model,
            final_coefficients: &path.final_coefficients,
            stop_reason: path.stop_reason,
            hit_size_limit: path.hit_size_limit(),
        },
    )
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let mut cfg = BenchmarkConfig::from_file(&a.config)?;
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = a.threads {
        cfg.threads = Threads::Count(t);
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    cfg.methods = MethodSpec::expand_pi_scales(&cfg.methods, &a.pi_scale);
    let out = run_benchmark(&cfg)?;
    let mut so = std::io::stdout().lock();
    for s in &out.summaries {
        writeln!(
            so,
            "{:<16} FP {:>7.3}  FN {:>7.3}  FP+FN {:>7.3}  L2 {:>10.3e}",
            s.method, s.mean_fp, s.mean_fn, s.mean_fp_fn, s.mean_l2
        )?;
    }
    writeln!(so, "results written to {}", out.output_dir.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_and_cap_parsing() {
        assert_eq!(parse_pi("auto").unwrap(), PiChoice::auto());
        assert_eq!(parse_pi("0.3").unwrap(), PiChoice::Value(0.3));
        assert!(parse_pi("1.5").is_err());
        assert_eq!(parse_cap("7").unwrap(), ConditioningCap::Fixed(7));
        assert_eq!(parse_cap("saturated").unwrap(), ConditioningCap::Saturated);
        assert!(parse_cap("x").is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["tiltsel", "select"]), 2);
        assert_eq!(run(["tiltsel", "frobnicate"]), 2);
        assert_eq!(
            run(["tiltsel", "simulate", "--model", "nope", "--n", "10", "--p", "5", "--seed", "1", "--out", "/tmp/x"]),
            2
        );
    }

    #[test]
    fn flag_aliases() {
        let cli = Cli::try_parse_from([
            "tiltsel", "select", "--input", "X.csv", "--y", "y.csv", "--m", "7",
        ])
        .unwrap();
        match cli.command {
            Command::Select(a) => {
                assert_eq!(a.design.x, PathBuf::from("X.csv"));
                assert_eq!(a.m_max, Some(7));
            }
            _ => panic!("expected select"),
        }
    }

    #[test]
    fn data_errors_exit_one() {
        assert_eq!(
            run(["tiltsel", "threshold", "--x", "/nonexistent/definitely/X.csv"]),
            1
        );
    }
}
