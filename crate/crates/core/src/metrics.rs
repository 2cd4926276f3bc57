//! False positives and negatives, coefficient error and ROC points.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simgen::TrueModel;
use crate::tcs::SolutionPath;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    /// Prefix length, starting at 1.
    pub step: usize,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionReport {
    pub method: String,
    pub replicate: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub l2_sq: f64,
    pub model_size: usize,
    pub roc_points: Vec<RocPoint>,
}

/// Scores a path against the truth. Coefficients are compared on the scale
/// of the matrix the path was fitted on.
pub fn score<T: Scalar>(
    truth: &TrueModel,
    path: &SolutionPath<T>,
    method: &str,
    replicate: usize,
) -> Result<SelectionReport> {
    let p = truth.beta.len();
    if path.final_model.len() != path.final_coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: path.final_model.len(),
            actual: path.final_coefficients.len(),
        });
    }
    if let Some(&bad) = path
        .final_model
        .iter()
        .chain(path.steps.iter().map(|s| &s.selected_index))
        .find(|&&j| j >= p)
    {
        return Err(Error::IndexOutOfRange { index: bad, len: p });
    }
    let in_support = |j: usize| truth.support.binary_search(&j).is_ok();
    let hits = path.final_model.iter().filter(|&&j| in_support(j)).count();
    let mut beta_hat = vec![0.0; p];
    for (&j, &b) in path.final_model.iter().zip(&path.final_coefficients) {
        beta_hat[j] = b.to_f64_lossy();
    }
    let l2_sq = truth
        .beta
        .iter()
        .zip(&beta_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let s = truth.support.len();
    let negatives = p - s;
    let mut tp = 0;
    let mut fpc = 0;
    let roc_points = path
        .steps
        .iter()
        .enumerate()
        .map(|(i, st)| {
            if in_support(st.selected_index) {
                tp += 1;
            } else {
                fpc += 1;
            }
            RocPoint {
                step: i + 1,
                fpr: if negatives == 0 { 0.0 } else { fpc as f64 / negatives as f64 },
                tpr: if s == 0 { 0.0 } else { tp as f64 / s as f64 },
            }
        })
        .collect();
    Ok(SelectionReport {
        method: method.to_string(),
        replicate,
        fp: path.final_model.len() - hits,
        fn_: s - hits,
        l2_sq,
        model_size: path.final_model.len(),
        roc_points,
    })
}

/// FPR up to which ROC curves are usually drawn: `2.5 |S| / p`.
pub fn fpr_guideline(support_size: usize, p: usize) -> f64 {
    2.5 * support_size as f64 / p as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub replicates: usize,
    pub mean_fp: f64,
    pub mean_fn: f64,
    pub mean_fp_fn: f64,
    pub mean_l2: f64,
    pub mean_model_size: f64,
    /// Pointwise mean over replicates; shorter paths hold their last point.
    pub roc: Vec<RocPoint>,
}

/// Per-method means, in order of first appearance.
pub fn aggregate(reports: &[SelectionReport]) -> Result<Vec<MethodSummary>> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no reports to aggregate".into()));
    }
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    Ok(methods
        .into_iter()
        .map(|m| {
            let rs: Vec<&SelectionReport> = reports.iter().filter(|r| r.method == m).collect();
            let k = rs.len() as f64;
            let mean = |f: &dyn Fn(&SelectionReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / k;
            let len = rs.iter().map(|r| r.roc_points.len()).max().unwrap_or(0);
            let roc = (0..len)
                .map(|i| {
                    let at = |r: &SelectionReport| {
                        r.roc_points
                            .get(i)
                            .or(r.roc_points.last())
                            .map_or((0.0, 0.0), |pt| (pt.fpr, pt.tpr))
                    };
                    RocPoint {
                        step: i + 1,
                        fpr: rs.iter().map(|r| at(r).0).sum::<f64>() / k,
                        tpr: rs.iter().map(|r| at(r).1).sum::<f64>() / k,
                    }
                })
                .collect();
            MethodSummary {
                method: m.to_string(),
                replicates: rs.len(),
                mean_fp: mean(&|r| r.fp as f64),
                mean_fn: mean(&|r| r.fn_ as f64),
                mean_fp_fn: mean(&|r| (r.fp + r.fn_) as f64),
                mean_l2: mean(&|r| r.l2_sq),
                mean_model_size: mean(&|r| r.model_size as f64),
                roc,
            }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(w: W, summaries: &[MethodSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "replicates",
        "mean_fp",
        "mean_fn",
        "mean_fp_fn",
        "mean_l2",
        "mean_model_size",
    ])?;
    for s in summaries {
        out.write_record([
            s.method.clone(),
            s.replicates.to_string(),
            s.mean_fp.to_string(),
            s.mean_fn.to_string(),
            s.mean_fp_fn.to_string(),
            s.mean_l2.to_string(),
            s.mean_model_size.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long format: `method,replicate,step,fpr,tpr`.
pub fn write_roc_csv<W: Write>(w: W, reports: &[SelectionReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "replicate", "step", "fpr", "tpr"])?;
    for r in reports {
        for pt in &r.roc_points {
            out.write_record([
                r.method.clone(),
                r.replicate.to_string(),
                pt.step.to_string(),
                pt.fpr.to_string(),
                pt.tpr.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(w: W, summaries: &[MethodSummary], fpr_guideline: f64) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a> {
        fpr_guideline: f64,
        methods: &'a [MethodSummary],
    }
    serde_json::to_writer_pretty(
        w,
        &Doc {
            fpr_guideline,
            methods: summaries,
        },
    )?;
    Ok(())
}
