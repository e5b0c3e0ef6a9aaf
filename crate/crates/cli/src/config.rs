//! Experiment configuration: a JSON file whose fields can be overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stratwelfare::data::SyntheticSpec;
use stratwelfare::models::mlp::Activation;
use stratwelfare::train::{Algorithm, CvGrid, TrainConfig};

use crate::CliError;

/// Environment variable that overrides the output root.
pub const OUTPUT_ENV: &str = "STRATWELFARE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Synthetic population size.
    pub n: usize,
    pub group1_fraction: f64,
    /// Replaces the built-in synthetic population; `n`, `group1_fraction`,
    /// the seed and the cost scale still come from this config.
    pub synthetic: Option<SyntheticSpec>,
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub train_frac: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Synthetic,
            n: 10_000,
            group1_fraction: 0.2,
            synthetic: None,
            csv: None,
            schema: None,
            train_frac: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelerKind {
    /// Network trained on the training split.
    Mlp,
    /// The generating quadratic (synthetic data only).
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerSpec {
    pub kind: LabelerKind,
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Pre-trained labeler document; skips training when set.
    pub model: Option<PathBuf>,
}

impl Default for LabelerSpec {
    fn default() -> Self {
        Self {
            kind: LabelerKind::Mlp,
            hidden: [16, 16],
            activation: Activation::Relu,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKindSpec {
    ClosedForm,
    Numeric,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseSpec {
    pub kind: ResponseKindSpec,
    /// Information level `K`.
    pub order: usize,
    /// Cost scale `a`; defaults to 5 for synthetic data and 1 otherwise.
    pub cost_scale: Option<f64>,
    /// Learned response document (required for `learned`).
    pub model: Option<PathBuf>,
    /// Number of random policies used by `learn-response`.
    pub policies: usize,
    pub epochs: usize,
}

impl Default for ResponseSpec {
    fn default() -> Self {
        Self {
            kind: ResponseKindSpec::ClosedForm,
            order: 1,
            cost_scale: None,
            model: None,
            policies: 20,
            epochs: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSpec {
    pub enabled: bool,
    pub grid: CvGrid,
    pub seeds: Vec<u64>,
    pub folds: usize,
    /// Epochs per cross-validation run; the training epochs when unset.
    pub epochs: Option<usize>,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            grid: CvGrid::default(),
            seeds: (0..7).collect(),
            folds: 2,
            epochs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub labeler: LabelerSpec,
    pub algorithm: Algorithm,
    pub train: TrainConfig,
    pub response: ResponseSpec,
    pub cv: CvSpec,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            labeler: LabelerSpec::default(),
            algorithm: Algorithm::Stwf,
            train: TrainConfig::default(),
            response: ResponseSpec::default(),
            cv: CvSpec::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parses a config; also accepts an output's provenance wrapper
    /// `{"config": {...}, ...}`.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let inner = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn cost_scale(&self) -> f64 {
        self.response.cost_scale.unwrap_or(match self.dataset.kind {
            DatasetKind::Synthetic => 5.0,
            DatasetKind::Csv => 1.0,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if !(self.dataset.train_frac > 0.0 && self.dataset.train_frac < 1.0) {
            return bad(format!("train fraction {} outside (0, 1)", self.dataset.train_frac));
        }
        if self.dataset.kind == DatasetKind::Csv
            && (self.dataset.csv.is_none() || self.dataset.schema.is_none())
        {
            return bad("csv datasets need both a csv and a schema path".into());
        }
        if self.dataset.kind == DatasetKind::Csv && self.labeler.kind == LabelerKind::Oracle {
            return bad("the oracle labeler exists only for synthetic data".into());
        }
        if !(1..=2).contains(&self.response.order) {
            return bad(format!("information level K = {} must be 1 or 2", self.response.order));
        }
        if !(self.cost_scale() > 0.0) {
            return bad(format!("cost scale {} must be > 0", self.cost_scale()));
        }
        if self.response.kind == ResponseKindSpec::Learned && self.response.model.is_none() {
            return bad("learned responses need a model path".into());
        }
        self.train
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }
}
