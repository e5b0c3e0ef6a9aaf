use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Cache, Mlp};
use super::poly::MonomialBasis;
use super::SmoothFunction;
use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::optim::Adam;

/// Order-2 polynomial clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLabeler {
    basis: MonomialBasis,
    coeffs: Vec<f64>,
}

impl QuadraticLabeler {
    /// `coeffs` follow [`MonomialBasis::new(dim, 2)`] ordering.
    pub fn new(dim: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = MonomialBasis::new(dim, 2);
        check_dim(basis.len(), coeffs.len())?;
        Ok(Self { basis, coeffs })
    }

    /// Constant labeler `h = c` (clamped).
    pub fn constant(dim: usize, c: f64) -> Self {
        let basis = MonomialBasis::new(dim, 2);
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[0] = c;
        Self { basis, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        self.basis.eval(&self.coeffs, x)
    }

    /// Clamped value and whether the clamp was active.
    pub fn eval_with_clamp(&self, x: &[f64]) -> (f64, bool) {
        let r = self.raw(x);
        if r <= 0.0 {
            (0.0, true)
        } else if r >= 1.0 {
            (1.0, true)
        } else {
            (r, false)
        }
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (v, clamped) = self.eval_with_clamp(x);
        if clamped {
            grad.iter_mut().for_each(|g| *g = 0.0);
        } else {
            self.basis.gradient_into(&self.coeffs, x, grad);
        }
        v
    }
}

/// Ground-truth qualification model `h(x)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelingModel {
    ClosedQuadratic(QuadraticLabeler),
    /// Three dense layers with a sigmoid output.
    Mlp(Mlp),
}

impl LabelingModel {
    pub fn feature_dim(&self) -> usize {
        match self {
            LabelingModel::ClosedQuadratic(q) => q.dim(),
            LabelingModel::Mlp(m) => m.input_dim(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.feature_dim(), x.len())?;
        crate::error::check_finite(x, "labeler input")?;
        Ok(self.value(x))
    }

    /// Value and input gradient, reusing `cache` across calls.
    pub fn value_and_gradient(&self, x: &[f64], cache: &mut Cache, grad: &mut [f64]) -> f64 {
        match self {
            LabelingModel::ClosedQuadratic(q) => q.value_and_gradient(x, grad),
            LabelingModel::Mlp(m) => {
                m.forward_cached(x, cache);
                let v = cache.output()[0];
                let g = m.backward(cache, &[1.0], None);
                grad.copy_from_slice(&g);
                v
            }
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        let hits = data
            .samples()
            .iter()
            .filter(|s| u8::from(self.value(&s.x) >= 0.5) == s.y)
            .count();
        hits as f64 / data.len() as f64
    }
}

impl SmoothFunction for LabelingModel {
    fn dim(&self) -> usize {
        self.feature_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            LabelingModel::ClosedQuadratic(q) => q.eval_with_clamp(x).0,
            LabelingModel::Mlp(m) => m.forward(x)[0],
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.feature_dim()];
        let mut cache = Cache::default();
        self.value_and_gradient(x, &mut cache, &mut g);
        g
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        match self {
            LabelingModel::ClosedQuadratic(q) => {
                let d = q.dim();
                Some(if q.eval_with_clamp(x).1 {
                    DMatrix::zeros(d, d)
                } else {
                    q.basis.hessian(&q.coeffs, x)
                })
            }
            LabelingModel::Mlp(_) => None,
        }
    }

    fn max_order(&self) -> usize {
        match self {
            LabelingModel::ClosedQuadratic(_) => 2,
            LabelingModel::Mlp(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerArch {
    pub hidden: [usize; 2],
    pub activation: Activation,
}

impl Default for LabelerArch {
    fn default() -> Self {
        Self {
            hidden: [16, 16],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

/// Fits an MLP labeler by minibatch cross-entropy with adaptive moments.
pub fn train_labeler(
    data: &Dataset,
    arch: &LabelerArch,
    cfg: &LabelerConfig,
) -> Result<LabelingModel> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument(
            "labeler epochs and batch size must be positive".into(),
        ));
    }
    let positives = data.samples().iter().filter(|s| s.y == 1).count();
    if positives == 0 || positives == data.len() {
        log::warn!("labeler training data has a single class");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = vec![data.feature_dim(), arch.hidden[0], arch.hidden[1], 1];
    let mut net = Mlp::init(sizes, arch.activation, Activation::Sigmoid, &mut rng);
    let mut adam = Adam::new(net.params().len(), cfg.learning_rate);
    let mut grad = vec![0.0; net.params().len()];
    let mut cache = Cache::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &data.samples()[i];
                net.forward_cached(&s.x, &mut cache);
                let h = cache.output()[0];
                // d(BCE)/d(logit) = h - y
                let d_pre = (h - f64::from(s.y)) * scale;
                net.backward_pre(&cache, &[d_pre], Some(&mut grad));
            }
            adam.step(net.params_mut(), &grad);
        }
    }
    Ok(LabelingModel::Mlp(net))
}
