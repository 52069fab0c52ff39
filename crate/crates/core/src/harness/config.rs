//! Experiment configuration: a TOML document with hyperparameter grids.
//!
//! Inside a grid table every array is an axis and every scalar a fixed
//! value; candidates are the Cartesian product of the axes, taken in key
//! order with the last key varying fastest. A parameter that is itself a
//! list (`hidden`, `discriminator_hidden`) is written as an array of arrays.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::dataio::FeatureSchema;
use crate::embed::{GloveConfig, DEFAULT_DIM};
use crate::encoders::{EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::preprocess::DEFAULT_ZMAX;
use crate::supervised::{ForestConfig, LassoConfig, LearnerConfig, LearnerKind, SvrConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Extra missing-value tokens besides the empty cell.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
}

fn default_target() -> String {
    "y".into()
}

fn default_missing() -> Vec<String> {
    vec!["NA".into()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputePolicy {
    /// Median for numeric columns, mode for categorical ones.
    MedianMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub zmax: f64,
    pub impute: ImputePolicy,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            zmax: DEFAULT_ZMAX,
            impute: ImputePolicy::MedianMode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub xmax: f64,
    pub alpha: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        let g = GloveConfig::default();
        EmbeddingConfig {
            dim: DEFAULT_DIM,
            lr: g.lr,
            epochs: g.epochs,
            xmax: g.xmax,
            alpha: g.alpha,
        }
    }
}

impl EmbeddingConfig {
    pub fn glove(&self, seed: u64) -> GloveConfig {
        GloveConfig {
            lr: self.lr,
            epochs: self.epochs,
            xmax: self.xmax,
            alpha: self.alpha,
            seed,
        }
    }
}

/// Encoder grids: `common` applies to every kind; a per-kind table
/// replaces individual keys of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderGrids {
    pub kinds: Vec<EncoderKind>,
    pub common: Table,
    pub ssae: Table,
    pub dbn: Table,
    pub vae: Table,
    pub aae: Table,
}

impl Default for EncoderGrids {
    fn default() -> Self {
        EncoderGrids {
            kinds: EncoderKind::ALL.to_vec(),
            common: Table::new(),
            ssae: Table::new(),
            dbn: Table::new(),
            vae: Table::new(),
            aae: Table::new(),
        }
    }
}

impl EncoderGrids {
    fn table(&self, kind: EncoderKind) -> &Table {
        match kind {
            EncoderKind::Ssae => &self.ssae,
            EncoderKind::Dbn => &self.dbn,
            EncoderKind::Vae => &self.vae,
            EncoderKind::Aae => &self.aae,
        }
    }

    fn merged(&self, kind: EncoderKind) -> Table {
        let mut t = self.common.clone();
        t.extend(self.table(kind).clone());
        t
    }

    /// Candidate configurations for one kind, in grid order.
    pub fn candidates(&self, kind: EncoderKind) -> Result<Vec<EncoderConfig>> {
        let section = format!("encoders.{}", kind.key());
        let out: Vec<EncoderConfig> = expand_grid(&self.merged(kind), &section)?;
        for c in &out {
            c.validate().map_err(|e| Error::Config(format!("{section}: {e}")))?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerGrids {
    pub kinds: Vec<LearnerKind>,
    pub rf: Table,
    pub lasso: Table,
    pub svm: Table,
}

impl Default for LearnerGrids {
    fn default() -> Self {
        let mut lasso = Table::new();
        lasso.insert(
            "lambda".into(),
            Value::Array(vec![Value::Float(0.001), Value::Float(0.01), Value::Float(0.1)]),
        );
        LearnerGrids {
            kinds: LearnerKind::ALL.to_vec(),
            rf: Table::new(),
            lasso,
            svm: Table::new(),
        }
    }
}

impl LearnerGrids {
    pub fn candidates(&self, kind: LearnerKind) -> Result<Vec<LearnerConfig>> {
        Ok(match kind {
            LearnerKind::Rf => expand_grid::<ForestConfig>(&self.rf, "learners.rf")?
                .into_iter()
                .map(LearnerConfig::Rf)
                .collect(),
            LearnerKind::Lasso => expand_grid::<LassoConfig>(&self.lasso, "learners.lasso")?
                .into_iter()
                .map(LearnerConfig::Lasso)
                .collect(),
            LearnerKind::Svm => expand_grid::<SvrConfig>(&self.svm, "learners.svm")?
                .into_iter()
                .map(LearnerConfig::Svm)
                .collect(),
        })
    }
}

/// How the encoder candidate is chosen within a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderSelection {
    /// Lowest validation reconstruction MSE, independent of the learner.
    Reconstruction,
    /// Per learner, the encoder/learner pair with the lowest validation RMSE.
    Downstream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub encoders: EncoderGrids,
    #[serde(default)]
    pub learners: LearnerGrids,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_selection")]
    pub selection: EncoderSelection,
    /// Fit the categorical embedding on all rows, as the original pipeline
    /// does, instead of on each fold's training rows.
    #[serde(default)]
    pub paper_faithful: bool,
    /// Fail the run if any fitted statistic saw a test row.
    #[serde(default)]
    pub audit_leakage: bool,
}

fn default_folds() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("dip-out")
}

fn default_selection() -> EncoderSelection {
    EncoderSelection::Reconstruction
}

impl ExperimentConfig {
    /// Config for a dataset with every other setting at its default.
    pub fn for_dataset(path: impl Into<PathBuf>, target: &str) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig {
                path: path.into(),
                target: target.into(),
                categorical: Vec::new(),
                missing: default_missing(),
            },
            preprocess: PreprocessConfig::default(),
            embedding: EmbeddingConfig::default(),
            encoders: EncoderGrids::default(),
            learners: LearnerGrids::default(),
            folds: default_folds(),
            seed: 0,
            out: default_out(),
            selection: default_selection(),
            paper_faithful: false,
            audit_leakage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be ≥ 2, got {}", self.folds)));
        }
        if !(self.preprocess.zmax > 0.0) {
            return Err(Error::Config(format!("preprocess.zmax must be > 0, got {}", self.preprocess.zmax)));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding.dim must be ≥ 1".into()));
        }
        if self.dataset.path.as_os_str().is_empty() {
            return Err(Error::Config("dataset.path is empty".into()));
        }
        if self.learners.kinds.is_empty() {
            return Err(Error::Config("learners.kinds is empty".into()));
        }
        for kind in &self.encoders.kinds {
            if self.encoders.candidates(*kind)?.is_empty() {
                return Err(Error::Config(format!("encoders.{} grid is empty", kind.key())));
            }
        }
        for kind in &self.learners.kinds {
            if self.learners.candidates(*kind)?.is_empty() {
                return Err(Error::Config(format!("learners.{kind} grid is empty")));
            }
        }
        Ok(())
    }

    /// The same configuration with every grid key written out, defaults
    /// included, as a single-valued axis.
    pub fn materialized(&self) -> Result<ExperimentConfig> {
        let mut out = self.clone();
        let enc_defaults = to_table(&EncoderConfig::default())?;
        fill_defaults(&mut out.encoders.common, &enc_defaults);
        fill_defaults(&mut out.learners.rf, &to_table(&ForestConfig::default())?);
        fill_defaults(&mut out.learners.lasso, &to_table(&LassoConfig::default())?);
        fill_defaults(&mut out.learners.svm, &to_table(&SvrConfig::default())?);
        Ok(out)
    }

    /// TOML echo of [`ExperimentConfig::materialized`].
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.materialized()?).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the materialized TOML echo.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn schema(&self, header: &[String]) -> Result<FeatureSchema> {
        FeatureSchema::from_header(header, &self.dataset.target, &self.dataset.categorical, &self.dataset.missing)
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    Table::try_from(value).map_err(|e| Error::Config(e.to_string()))
}

/// Adds each default key missing from `grid`; list-valued defaults are
/// wrapped so they stay a single candidate.
fn fill_defaults(grid: &mut Table, defaults: &Table) {
    for (k, v) in defaults {
        if !grid.contains_key(k) {
            let v = match v {
                Value::Array(_) => Value::Array(vec![v.clone()]),
                other => other.clone(),
            };
            grid.insert(k.clone(), v);
        }
    }
}

/// Cartesian product of a grid table, each point deserialized into `T`.
pub fn expand_grid<T: DeserializeOwned>(grid: &Table, section: &str) -> Result<Vec<T>> {
    let mut points = vec![Table::new()];
    for (key, value) in grid {
        let axis: Vec<Value> = match value {
            Value::Array(items) => items.clone(),
            scalar => vec![scalar.clone()],
        };
        if axis.is_empty() {
            return Err(Error::Config(format!("{section}.{key}: empty grid axis")));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
        .into_iter()
        .map(|p| {
            Value::Table(p)
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("{section}: {}", e.message())))
        })
        .collect()
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; a relative dataset path is taken relative to the
/// file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if cfg.dataset.path.is_relative() {
        if let Some(dir) = path.parent() {
            cfg.dataset.path = dir.join(&cfg.dataset.path);
        }
    }
    Ok(cfg)
}
