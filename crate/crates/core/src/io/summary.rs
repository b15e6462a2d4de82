//! Posterior summary tables and run manifests.
//!
//! | file                | columns                                   |
//! |---------------------|-------------------------------------------|
//! | `summary_alpha.csv` | `attribute,class,mean,lower,upper`        |
//! | `summary_beta.csv`  | `entry,level,coef,mean,lower,upper`       |
//! | `summary_gamma.csv` | `class,coef,mean,lower,upper`             |
//! | `summary_theta.csv` | `attribute,coef,mean,lower,upper`         |
//! | `summary_g.csv`     | `entry,attribute,mean,mode`               |
//! | `summary_z.csv`     | `obs,z_mode,prob_0,…,prob_{d-1}`          |
//! | `summary_w.csv`     | `obs,attribute,mean,mode`                 |
//!
//! Indices are 0-based; `coef = 0` is the intercept.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use super::tables::write_rows;
use crate::error::{Error, Result};
use crate::postproc::{Interval, Relabeling, Summary, WaicResult};

/// Scalar diagnostics of one fit, written to `fit.json`.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub q: usize,
    pub d: usize,
    pub n_samples: usize,
    pub waic: WaicResult,
    pub relabeling: Relabeling,
    pub refine_threshold: f64,
    pub mh_acceptance: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

/// Provenance of a CLI run, written to `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub settings: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, settings: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            settings: serde_json::to_value(settings).map_err(|e| Error::Config(e.to_string()))?,
            outputs: Vec::new(),
        })
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `manifest.json` into `dir`, listing the files present there.
pub fn write_manifest(dir: &Path, mut manifest: Manifest) -> Result<()> {
    let mut outputs: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    outputs.sort();
    manifest.outputs = outputs;
    write_json(&dir.join("manifest.json"), &manifest)
}

fn interval_cells(v: &Interval) -> [String; 3] {
    [v.mean.to_string(), v.lower.to_string(), v.upper.to_string()]
}

fn interval_rows(m: &DMatrix<Interval>) -> Vec<Vec<String>> {
    (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| [vec![r.to_string(), c.to_string()], interval_cells(&m[(r, c)]).to_vec()].concat())
        .collect()
}

fn mean_mode_rows(mean: &DMatrix<f64>, mode: &DMatrix<u8>) -> Vec<Vec<String>> {
    (0..mean.nrows())
        .flat_map(|r| (0..mean.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| vec![r.to_string(), c.to_string(), mean[(r, c)].to_string(), mode[(r, c)].to_string()])
        .collect()
}

/// Writes the summary tables and `fit.json` into `dir`.
pub fn write_fit_summary(dir: &Path, summary: &Summary, report: &FitReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_rows(
        &dir.join("summary_alpha.csv"),
        &["attribute", "class", "mean", "lower", "upper"],
        interval_rows(&summary.alpha),
    )?;
    let mut beta = Vec::new();
    for (i, levels) in summary.beta.iter().enumerate() {
        for (l, row) in levels.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                beta.push([vec![i.to_string(), l.to_string(), k.to_string()], interval_cells(v).to_vec()].concat());
            }
        }
    }
    write_rows(&dir.join("summary_beta.csv"), &["entry", "level", "coef", "mean", "lower", "upper"], beta)?;
    write_rows(
        &dir.join("summary_gamma.csv"),
        &["class", "coef", "mean", "lower", "upper"],
        interval_rows(&summary.gamma),
    )?;
    write_rows(
        &dir.join("summary_theta.csv"),
        &["attribute", "coef", "mean", "lower", "upper"],
        interval_rows(&summary.theta),
    )?;
    write_rows(
        &dir.join("summary_g.csv"),
        &["entry", "attribute", "mean", "mode"],
        mean_mode_rows(&summary.g_mean, &summary.g_mode),
    )?;
    let d = summary.class_probs.ncols();
    let mut header = vec!["obs".to_string(), "z_mode".to_string()];
    header.extend((0..d).map(|h| format!("prob_{h}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        &dir.join("summary_z.csv"),
        &header,
        summary.z_mode.iter().enumerate().map(|(n, h)| {
            let mut row = vec![n.to_string(), h.to_string()];
            row.extend(summary.class_probs.row(n).iter().map(|v| v.to_string()));
            row
        }),
    )?;
    write_rows(
        &dir.join("summary_w.csv"),
        &["obs", "attribute", "mean", "mode"],
        mean_mode_rows(&summary.w_mean, &summary.w_mode),
    )?;
    write_json(&dir.join("fit.json"), report)
}
