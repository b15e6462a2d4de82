//! TOML run configuration.
//!
//! ```toml
//! output = "out"
//!
//! [data]
//! y = "Y.csv"
//! x = "X.csv"                       # optional
//! t = "T.csv"                       # optional
//! entries = ["binary", "count"]     # optional, default all binary
//!
//! [model]
//! q = 2
//! d = 2
//!
//! [prior]                           # optional
//! b = 1.0
//! beta_var = 1.0
//! gamma_var = 1.0
//!
//! [sampler]
//! n_iters = 2000
//! burn_in = 1000
//! thin = 1
//! seed = 1
//! w_mode = "block"
//! g_mode = "block"
//! step_scale = 0.1
//! coreset = [0, 1]                  # optional surrogate likelihood
//! subsample_size = 5
//!
//! [select]
//! q = [1, 2, 3]
//! d = [1, 2, 3]
//!
//! [postproc]
//! refine_threshold = 2.0
//!
//! [metrics]
//! cooccurrence_threshold = 0.5
//! ```

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tables::DatasetPaths;
use crate::error::{Error, Result};
use crate::gibbs::{SamplerSchedule, SurrogateConfig, UpdateMode};
use crate::glm::MhTuning;
use crate::model::{EntryKind, Hyperparams, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub y: PathBuf,
    #[serde(default)]
    pub x: Option<PathBuf>,
    #[serde(default)]
    pub t: Option<PathBuf>,
    #[serde(default)]
    pub entries: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub q: usize,
    pub d: usize,
}

/// Isotropic prior scales; means are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub b: f64,
    pub beta_var: f64,
    pub gamma_var: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { b: 1.0, beta_var: 1.0, gamma_var: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_iters: usize,
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
    pub seed: u64,
    #[serde(default = "block")]
    pub w_mode: UpdateMode,
    #[serde(default = "block")]
    pub g_mode: UpdateMode,
    #[serde(default = "default_step")]
    pub step_scale: f64,
    #[serde(default)]
    pub coreset: Option<Vec<usize>>,
    #[serde(default)]
    pub subsample_size: Option<usize>,
}

fn one() -> usize {
    1
}

fn block() -> UpdateMode {
    UpdateMode::Block
}

fn default_step() -> f64 {
    MhTuning::default().step_scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectSection {
    pub q: Vec<usize>,
    pub d: Vec<usize>,
}

impl Default for SelectSection {
    fn default() -> Self {
        Self { q: vec![1, 2, 3], d: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostprocSection {
    pub refine_threshold: f64,
}

impl Default for PostprocSection {
    fn default() -> Self {
        Self { refine_threshold: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub cooccurrence_threshold: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { cooccurrence_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub postproc: PostprocSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

impl RunConfig {
    /// Parses a TOML file; relative data and output paths resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_table(read_config_table(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.entries()?;
        self.schedule().validate_basic()?;
        if self.select.q.is_empty() || self.select.d.is_empty() {
            return Err(Error::Config("selection grid must be nonempty".into()));
        }
        if !(self.postproc.refine_threshold > 0.0) {
            return Err(Error::Config("refine_threshold must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.metrics.cooccurrence_threshold) {
            return Err(Error::Config("cooccurrence_threshold must lie in [0, 1]".into()));
        }
        self.prior_for(&ModelConfig::binary(1, self.model.q, self.model.d, 0, 0))?;
        Ok(())
    }

    pub fn paths(&self) -> DatasetPaths {
        DatasetPaths { y: self.data.y.clone(), x: self.data.x.clone(), t: self.data.t.clone() }
    }

    pub fn entries(&self) -> Result<Option<Vec<EntryKind>>> {
        self.data.entries.as_ref().map(|v| v.iter().map(|s| EntryKind::parse(s)).collect()).transpose()
    }

    /// Model configuration for data of the given shape.
    pub fn model_config(&self, p: usize, px: usize, pt: usize, q: usize, d: usize) -> Result<ModelConfig> {
        let entries = self.entries()?.unwrap_or_else(|| vec![EntryKind::Binary; p]);
        let config = ModelConfig { p, q, d, px, pt, entries };
        config.validate()?;
        Ok(config)
    }

    pub fn prior_for(&self, config: &ModelConfig) -> Result<Hyperparams> {
        let pr = &self.prior;
        if !(pr.b > 0.0 && pr.beta_var > 0.0 && pr.gamma_var > 0.0) {
            return Err(Error::Config("prior b, beta_var and gamma_var must be positive".into()));
        }
        Ok(Hyperparams {
            b: pr.b,
            m_beta: DVector::zeros(config.q + 1),
            v_beta: DMatrix::identity(config.q + 1, config.q + 1) * pr.beta_var,
            m_gamma: DVector::zeros(config.px + 1),
            v_gamma: DMatrix::identity(config.px + 1, config.px + 1) * pr.gamma_var,
        })
    }

    pub fn schedule(&self) -> SamplerSchedule {
        let s = &self.sampler;
        let mut out = SamplerSchedule::new(s.n_iters, s.burn_in, s.seed);
        out.thin = s.thin;
        out.w_mode = s.w_mode;
        out.g_mode = s.g_mode;
        out.mh = MhTuning { step_scale: s.step_scale };
        out.surrogate = s
            .coreset
            .as_ref()
            .map(|c| SurrogateConfig { coreset: c.clone(), subsample_size: s.subsample_size.unwrap_or(0) });
        out
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Reads a configuration file as a raw table, resolving relative paths
/// against its directory. Callers may overlay values before
/// [`RunConfig::from_table`].
pub fn read_config_table(path: &Path) -> Result<toml::Table> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut table = parse_table(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for key in [&["output"][..], &["data", "y"], &["data", "x"], &["data", "t"]] {
        if let Some(toml::Value::String(s)) = lookup_mut(&mut table, key) {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
    }
    Ok(table)
}

fn lookup_mut<'a>(table: &'a mut toml::Table, key: &[&str]) -> Option<&'a mut toml::Value> {
    let (last, parents) = key.split_last()?;
    let mut t = table;
    for k in parents {
        t = t.get_mut(*k)?.as_table_mut()?;
    }
    t.get_mut(*last)
}

/// Sets `key` (a dotted path given as segments), creating parent tables.
pub fn set_value(table: &mut toml::Table, key: &[&str], value: toml::Value) -> Result<()> {
    let (last, parents) = key.split_last().ok_or_else(|| Error::Config("empty key".into()))?;
    let mut t = table;
    for k in parents {
        t = t
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{k}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}
