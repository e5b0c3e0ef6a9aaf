//! Pipeline stages shared by the subcommands.

use std::path::Path;

use rayon::prelude::*;
use stratwelfare::data::{gen_synthetic, load_csv, split, Schema, SyntheticSpec};
use stratwelfare::models::{train_labeler, LabelerArch, LabelerConfig, ModelDocument};
use stratwelfare::response::{LearnedResponse, NumericOptions};
use stratwelfare::train::{cross_validate, train, CvResult};
use stratwelfare::welfare::{evaluate, Evaluation};
use stratwelfare::{
    CostModel, Dataset, LabelingModel, Policy, ResponseModel, TrainConfig, TrainTrace,
};

use crate::config::{DatasetKind, ExperimentConfig, LabelerKind, ResponseKindSpec};
use crate::CliError;

/// Synthetic population for `seed` under the config's size and group mix.
pub fn synthetic_spec(cfg: &ExperimentConfig, seed: u64) -> SyntheticSpec {
    let base = cfg.dataset.synthetic.clone().unwrap_or_else(|| SyntheticSpec::preset(seed));
    SyntheticSpec {
        n: cfg.dataset.n,
        group1_fraction: cfg.dataset.group1_fraction,
        cost_scale: cfg.cost_scale(),
        seed,
        ..base
    }
}

/// Full dataset before splitting. CSV data does not depend on the seed.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset, CliError> {
    match cfg.dataset.kind {
        DatasetKind::Synthetic => Ok(gen_synthetic(&synthetic_spec(cfg, seed))?),
        DatasetKind::Csv => {
            let (csv, schema) = match (&cfg.dataset.csv, &cfg.dataset.schema) {
                (Some(c), Some(s)) => (c, s),
                _ => return Err(CliError::Validation("csv dataset without csv/schema paths".into())),
            };
            let schema = Schema::load(schema).map_err(|e| unreadable(schema, e))?;
            load_csv(csv, &schema).map_err(|e| unreadable(csv, e))
        }
    }
}

/// Names the file when an input cannot be opened at all.
fn unreadable(path: &Path, e: stratwelfare::Error) -> CliError {
    match e {
        stratwelfare::Error::Io(io) => CliError::Validation(format!("cannot read {}: {io}", path.display())),
        stratwelfare::Error::Csv(c) if c.is_io_error() => {
            CliError::Validation(format!("cannot read {}: {c}", path.display()))
        }
        e => e.into(),
    }
}

pub fn build_labeler(
    cfg: &ExperimentConfig,
    train_data: &Dataset,
    seed: u64,
) -> Result<LabelingModel, CliError> {
    if let Some(path) = &cfg.labeler.model {
        let h = LabelingModel::from_document(&ModelDocument::load(path)?)?;
        if h.feature_dim() != train_data.feature_dim() {
            return Err(stratwelfare::Error::DimensionMismatch {
                expected: train_data.feature_dim(),
                got: h.feature_dim(),
            }
            .into());
        }
        return Ok(h);
    }
    match cfg.labeler.kind {
        LabelerKind::Oracle => Ok(LabelingModel::ClosedQuadratic(
            synthetic_spec(cfg, seed).labeling_model()?,
        )),
        LabelerKind::Mlp => {
            let arch = LabelerArch {
                hidden: cfg.labeler.hidden,
                activation: cfg.labeler.activation,
            };
            let lc = LabelerConfig {
                epochs: cfg.labeler.epochs,
                batch_size: cfg.labeler.batch_size,
                learning_rate: cfg.labeler.learning_rate,
                seed,
            };
            Ok(train_labeler(train_data, &arch, &lc)?)
        }
    }
}

pub fn build_response(cfg: &ExperimentConfig, data: &Dataset) -> Result<ResponseModel, CliError> {
    let cost = CostModel::new(cfg.cost_scale(), data.improvable_mask().to_vec())?;
    let order = cfg.response.order;
    Ok(match cfg.response.kind {
        ResponseKindSpec::ClosedForm => ResponseModel::closed_form(order, cost),
        ResponseKindSpec::Numeric => ResponseModel::numeric(order, cost, NumericOptions::default()),
        ResponseKindSpec::Learned => {
            let path = cfg
                .response
                .model
                .as_ref()
                .ok_or_else(|| CliError::Validation("learned response without a model path".into()))?;
            let model = LearnedResponse::from_document(&ModelDocument::load(path)?)?;
            if model.feature_dim() != data.feature_dim() {
                return Err(stratwelfare::Error::DimensionMismatch {
                    expected: data.feature_dim(),
                    got: model.feature_dim(),
                }
                .into());
            }
            ResponseModel::learned(model, cost)
        }
    })
}

/// Everything a training run needs for one seed.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub labeler: LabelingModel,
    pub response: ResponseModel,
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared, CliError> {
    let data = load_dataset(cfg, seed)?;
    let (train_data, test) = split(&data, cfg.dataset.train_frac, seed)?;
    let labeler = build_labeler(cfg, &train_data, seed)?;
    let response = build_response(cfg, &train_data)?;
    Ok(Prepared {
        train: train_data,
        test,
        labeler,
        response,
    })
}

/// Picks `(lr, lambda1, lambda2)` by cross-validation on the first seed's
/// training split and returns the resulting training config.
pub fn select_hyperparameters(cfg: &ExperimentConfig) -> Result<CvResult, CliError> {
    let seed = cfg.seeds[0];
    let prep = prepare(cfg, seed)?;
    let base = TrainConfig {
        epochs: cfg.cv.epochs.unwrap_or(cfg.train.epochs),
        ..cfg.train.clone()
    };
    let mut result = cross_validate(
        &prep.train,
        &prep.labeler,
        &prep.response,
        cfg.algorithm,
        &cfg.cv.grid,
        &cfg.cv.seeds,
        cfg.cv.folds,
        &base,
    )?;
    result.best.epochs = cfg.train.epochs;
    Ok(result)
}

pub struct SeedRun {
    pub seed: u64,
    pub policy: Policy,
    pub trace: TrainTrace,
    pub evaluation: Evaluation,
}

/// Trains on the seed's training split and evaluates on its test split.
pub fn run_seed(cfg: &ExperimentConfig, train_cfg: &TrainConfig, seed: u64) -> Result<SeedRun, CliError> {
    let prep = prepare(cfg, seed)?;
    let run_cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let (policy, trace) = train(&prep.train, &prep.labeler, &prep.response, cfg.algorithm, &run_cfg)?;
    let evaluation = evaluate(&policy, &prep.test, &prep.labeler, &prep.response)?;
    Ok(SeedRun {
        seed,
        policy,
        trace,
        evaluation,
    })
}

/// Runs every configured seed, in seed order. Failures stay per seed.
pub fn run_seeds(cfg: &ExperimentConfig, train_cfg: &TrainConfig) -> Vec<(u64, Result<SeedRun, CliError>)> {
    cfg.seeds
        .par_iter()
        .map(|&s| (s, run_seed(cfg, train_cfg, s)))
        .collect()
}
