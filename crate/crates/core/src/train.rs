//! Minibatch training of linear-sigmoid policies: the welfare-regularized
//! objective and the baselines it is compared against.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{kfold_indices, Dataset};
use crate::error::{Error, Result};
use crate::models::{LabelingModel, Policy};
use crate::optim::{Optimizer, OptimizerKind};
use crate::response::ResponseModel;
use crate::welfare::{
    composite_loss_indexed, evaluate, fairness_penalty, welfare_report, SoftNotion, SwfComponents,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Stwf,
    Erm,
    Safe,
    Ei,
    Be,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Stwf,
        Algorithm::Erm,
        Algorithm::Safe,
        Algorithm::Ei,
        Algorithm::Be,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Stwf => "stwf",
            Algorithm::Erm => "erm",
            Algorithm::Safe => "safe",
            Algorithm::Ei => "ei",
            Algorithm::Be => "be",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub swf_components: SwfComponents,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Temperature of the fairness surrogates.
    pub tau: f64,
    /// Regularization strength of the SAFE / EI / BE baselines.
    pub baseline_lambda: f64,
    /// Trailing fraction of the training data used for the trace.
    pub validation_frac: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 0.01,
            lambda1: 0.0,
            lambda2: 0.0,
            swf_components: SwfComponents::BOTH,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            tau: 0.1,
            baseline_lambda: 0.1,
            validation_frac: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be > 0", self.learning_rate));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("baseline_lambda", self.baseline_lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be >= 0"));
            }
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau {} must be > 0", self.tau));
        }
        if !(0.0..1.0).contains(&self.validation_frac) {
            return bad(format!("validation fraction {} outside [0, 1)", self.validation_frac));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_dw: f64,
    pub l_imp: f64,
    pub l_sf: f64,
    pub l_aw: f64,
    pub total: f64,
    pub val_dw: f64,
    pub val_imp: f64,
    pub val_sf: f64,
    pub val_aw: f64,
}

/// Per-epoch batch-averaged losses and validation welfare.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    pub const COLUMNS: [&'static str; 10] = [
        "epoch", "l_dw", "l_imp", "l_sf", "l_aw", "total", "val_dw", "val_imp", "val_sf", "val_aw",
    ];

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if let Some(c) = comment {
            writeln!(file, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(Self::COLUMNS)?;
        for e in &self.epochs {
            w.write_record(&[
                e.epoch.to_string(),
                e.l_dw.to_string(),
                e.l_imp.to_string(),
                e.l_sf.to_string(),
                e.l_aw.to_string(),
                e.total.to_string(),
                e.val_dw.to_string(),
                e.val_imp.to_string(),
                e.val_sf.to_string(),
                e.val_aw.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean total loss over the first and last `k` epochs.
    pub fn leading_trailing_means(&self, k: usize) -> Option<(f64, f64)> {
        if self.epochs.is_empty() {
            return None;
        }
        let k = k.min(self.epochs.len());
        let mean = |s: &[EpochRecord]| s.iter().map(|e| e.total).sum::<f64>() / s.len() as f64;
        Some((mean(&self.epochs[..k]), mean(&self.epochs[self.epochs.len() - k..])))
    }
}

enum Objective {
    Composite {
        lambda1: f64,
        lambda2: f64,
        components: SwfComponents,
    },
    Fair(SoftNotion, f64),
}

/// Trains a zero-initialized linear-sigmoid policy on the
/// welfare-regularized objective with `cfg.lambda1`, `cfg.lambda2`.
pub fn stwf_train(
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainTrace)> {
    let obj = Objective::Composite {
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        components: cfg.swf_components,
    };
    train_loop(data, h, resp, cfg, obj)
}

/// ERM, SAFE (`l_dw + lambda * l_sf`) and the EI / BE gap-penalized
/// baselines, with `lambda = cfg.baseline_lambda`.
pub fn baseline_train(
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
    algo: Algorithm,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainTrace)> {
    let obj = match algo {
        Algorithm::Erm => Objective::Composite {
            lambda1: 0.0,
            lambda2: 0.0,
            components: SwfComponents::BOTH,
        },
        Algorithm::Safe => Objective::Composite {
            lambda1: cfg.baseline_lambda,
            lambda2: 0.0,
            components: SwfComponents::SF_ONLY,
        },
        Algorithm::Ei | Algorithm::Be => {
            if !data.has_groups() {
                return Err(Error::MissingGroup);
            }
            let notion = if algo == Algorithm::Ei {
                SoftNotion::Ei
            } else {
                SoftNotion::Be
            };
            Objective::Fair(notion, cfg.baseline_lambda)
        }
        Algorithm::Stwf => return stwf_train(data, h, resp, cfg),
    };
    train_loop(data, h, resp, cfg, obj)
}

/// Dispatches to [`stwf_train`] or [`baseline_train`].
pub fn train(
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
    algo: Algorithm,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainTrace)> {
    baseline_train(data, h, resp, algo, cfg)
}

fn train_loop(
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
    cfg: &TrainConfig,
    obj: Objective,
) -> Result<(Policy, TrainTrace)> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!("{} samples; at least 2 required", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64) * cfg.validation_frac).round() as usize;
    let n_val = n_val.min(data.len() - 1);
    let (train_idx, val_idx) = order.split_at(data.len() - n_val);
    let mut train_idx = train_idx.to_vec();
    if cfg.batch_size > train_idx.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds {} training samples",
            cfg.batch_size,
            train_idx.len()
        )));
    }
    let val = if val_idx.is_empty() {
        None
    } else {
        Some(data.subset(val_idx))
    };

    let d = data.feature_dim();
    let mut policy =
        Policy::linear_sigmoid(vec![0.0; d], 0.0).with_domain_box(data.domain_box().clone())?;
    let mut opt = Optimizer::new(cfg.optimizer, policy.param_count(), cfg.learning_rate);
    let samples = data.samples();
    let mut trace = TrainTrace::default();

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut sums = [0.0; 5];
        for batch in train_idx.chunks(cfg.batch_size) {
            let (parts, grad) = match &obj {
                Objective::Composite {
                    lambda1,
                    lambda2,
                    components,
                } => {
                    let out = composite_loss_indexed(
                        &policy, samples, batch, h, resp, *lambda1, *lambda2, *components,
                    );
                    let out = match out {
                        Ok(o) => o,
                        Err(Error::NonFinite(_)) => {
                            return Err(Error::Diverged {
                                epoch,
                                trace: Box::new(trace),
                            })
                        }
                        Err(e) => return Err(e),
                    };
                    ([out.l_dw, out.l_imp, out.l_sf, out.l_aw, out.total], out.grad)
                }
                Objective::Fair(notion, lambda) => {
                    let base = composite_loss_indexed(
                        &policy,
                        samples,
                        batch,
                        h,
                        resp,
                        0.0,
                        0.0,
                        SwfComponents::BOTH,
                    )?;
                    let (pen, pen_grad) =
                        fairness_penalty(&policy, samples, batch, resp, *notion, cfg.tau)?;
                    let mut grad = base.grad;
                    if *lambda > 0.0 {
                        for (g, p) in grad.iter_mut().zip(&pen_grad) {
                            *g += lambda * p;
                        }
                    }
                    (
                        [base.l_dw, base.l_imp, base.l_sf, base.l_aw, base.total + lambda * pen],
                        grad,
                    )
                }
            };
            if !parts[4].is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    trace: Box::new(trace),
                });
            }
            let w = batch.len() as f64;
            for (s, v) in sums.iter_mut().zip(parts) {
                *s += w * v;
            }
            opt.step(policy.params_mut(), &grad);
        }
        let n = train_idx.len() as f64;
        let (val_dw, val_imp, val_sf, val_aw) = match &val {
            Some(v) => {
                let r = welfare_report(&policy, v, h, resp)?;
                (r.dw, r.imp, r.sf, r.aw)
            }
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        trace.epochs.push(EpochRecord {
            epoch,
            l_dw: sums[0] / n,
            l_imp: sums[1] / n,
            l_sf: sums[2] / n,
            l_aw: sums[3] / n,
            total: sums[4] / n,
            val_dw,
            val_imp,
            val_sf,
            val_aw,
        });
        if policy.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                trace: Box::new(trace),
            });
        }
    }
    Ok((policy, trace))
}

/// Hyperparameter grids for [`cross_validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub learning_rates: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        let lambdas = vec![0.0, 0.5, 1.0, 1.5, 2.0];
        Self {
            learning_rates: vec![0.001, 0.01, 0.1],
            lambda1: lambdas.clone(),
            lambda2: lambdas,
        }
    }
}

impl CvGrid {
    /// Sorted, de-duplicated `(lr, lambda1, lambda2)` points. Baselines
    /// only vary the learning rate.
    pub fn points(&self, algo: Algorithm) -> Vec<(f64, f64, f64)> {
        let norm = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let lrs = norm(&self.learning_rates);
        let (l1s, l2s) = if algo == Algorithm::Stwf {
            (norm(&self.lambda1), norm(&self.lambda2))
        } else {
            (vec![0.0], vec![0.0])
        };
        let mut out = Vec::new();
        for &lr in &lrs {
            for &a in &l1s {
                for &b in &l2s {
                    out.push((lr, a, b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mean_total: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: TrainConfig,
    pub scores: Vec<CvScore>,
}

/// Picks the grid point with the highest mean held-out total welfare over
/// `folds` folds and all `seeds`. Ties go to the smallest
/// `(lr, lambda1, lambda2)`. Runs that fail count as `-inf`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
    algo: Algorithm,
    grid: &CvGrid,
    seeds: &[u64],
    folds: usize,
    base: &TrainConfig,
) -> Result<CvResult> {
    let points = grid.points(algo);
    if points.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("cross-validation grid"));
    }
    if folds < 2 || data.len() < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "{folds}-fold cross-validation on {} samples",
            data.len()
        )));
    }
    let config_for = |&(lr, l1, l2): &(f64, f64, f64)| TrainConfig {
        learning_rate: lr,
        lambda1: l1,
        lambda2: l2,
        ..base.clone()
    };
    let scores: Vec<CvScore> = points
        .par_iter()
        .map(|pt| {
            let cfg = config_for(pt);
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut failures = 0usize;
            for &seed in seeds {
                let parts = kfold_indices(data.len(), folds, seed);
                for k in 0..folds {
                    let train_idx: Vec<usize> = parts
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .flat_map(|(_, p)| p.iter().copied())
                        .collect();
                    let fit = data.subset(&train_idx);
                    let held = data.subset(&parts[k]);
                    let run = TrainConfig { seed, ..cfg.clone() };
                    match train(&fit, h, resp, algo, &run)
                        .and_then(|(p, _)| evaluate(&p, &held, h, resp))
                    {
                        Ok(ev) => {
                            sum += ev.welfare.total;
                            count += 1;
                        }
                        Err(e) => {
                            log::warn!("cv point {pt:?} seed {seed} fold {k}: {e}");
                            failures += 1;
                        }
                    }
                }
            }
            CvScore {
                learning_rate: pt.0,
                lambda1: pt.1,
                lambda2: pt.2,
                mean_total: if failures > 0 || count == 0 {
                    f64::NEG_INFINITY
                } else {
                    sum / count as f64
                },
                failures,
            }
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_total > scores[best].mean_total {
            best = i;
        }
    }
    if scores[best].mean_total == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("every cross-validation run failed".into()));
    }
    Ok(CvResult {
        best: config_for(&points[best]),
        scores,
    })
}
