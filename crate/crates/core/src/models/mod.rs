//! Scoring policies and labeling models with exact derivative queries.

mod labeler;
pub mod mlp;
pub mod poly;
mod serial;

pub use labeler::{train_labeler, LabelerArch, LabelerConfig, LabelingModel, QuadraticLabeler};
pub use serial::{ModelDocument, FORMAT_VERSION};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use mlp::sigmoid;
use poly::MonomialBasis;

/// A scalar function of `d` features with analytic derivatives.
///
/// Callers guarantee `x.len() == self.dim()`. `hessian` returns `None`
/// when the function has no second derivative query.
pub trait SmoothFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>>;

    /// Highest derivative order available.
    fn max_order(&self) -> usize {
        2
    }
}

/// Per-feature bounds `[lo, hi]`. Infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serial::RawBox", into = "serial::RawBox")]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("domain box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    #[inline]
    pub fn clamp_coord(&self, i: usize, v: f64) -> (f64, bool) {
        if v < self.lo[i] {
            (self.lo[i], true)
        } else if v > self.hi[i] {
            (self.hi[i], true)
        } else {
            (v, false)
        }
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    LinearSigmoid,
    LinearRaw,
    Polynomial,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LinearSigmoid => "linear-sigmoid",
            PolicyKind::LinearRaw => "linear-raw",
            PolicyKind::Polynomial => "polynomial",
        }
    }
}

/// A differentiable scoring policy `f(x)`.
///
/// Parameter layout: linear kinds store `[w_1, .., w_d, b]`; polynomial
/// policies store one coefficient per monomial of [`MonomialBasis`].
/// Sigmoid kinds score in `(0, 1)`; raw kinds are not squashed so that
/// polynomial identities stay exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    dim: usize,
    params: Vec<f64>,
    domain_box: DomainBox,
    basis: Option<MonomialBasis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Value,
    InputGradient,
}

/// Derivative of a policy quantity with respect to the flattened parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamJacobian {
    pub quantity: Quantity,
    /// `quantity-size x theta-size`.
    pub matrix: DMatrix<f64>,
}

/// Result of [`Policy::grad_policy`].
#[derive(Debug, Clone, PartialEq)]
pub enum Derivative {
    Gradient(Vec<f64>),
    Hessian(DMatrix<f64>),
}

impl Policy {
    pub fn linear_sigmoid(weights: Vec<f64>, bias: f64) -> Self {
        Self::linear(PolicyKind::LinearSigmoid, weights, bias)
    }

    pub fn linear_raw(weights: Vec<f64>, bias: f64) -> Self {
        Self::linear(PolicyKind::LinearRaw, weights, bias)
    }

    fn linear(kind: PolicyKind, mut weights: Vec<f64>, bias: f64) -> Self {
        let dim = weights.len();
        weights.push(bias);
        Self {
            kind,
            dim,
            params: weights,
            domain_box: DomainBox::unbounded(dim),
            basis: None,
        }
    }

    pub fn polynomial(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = MonomialBasis::new(dim, order);
        check_dim(basis.len(), coeffs.len())?;
        Ok(Self {
            kind: PolicyKind::Polynomial,
            dim,
            params: coeffs,
            domain_box: DomainBox::unbounded(dim),
            basis: Some(basis),
        })
    }

    /// Builds a policy of `kind` from a flat parameter vector.
    pub fn from_params(
        kind: PolicyKind,
        dim: usize,
        order: Option<usize>,
        params: Vec<f64>,
    ) -> Result<Self> {
        match kind {
            PolicyKind::Polynomial => {
                let order =
                    order.ok_or_else(|| Error::Format("polynomial policy needs an order".into()))?;
                Self::polynomial(dim, order, params)
            }
            _ => {
                check_dim(dim + 1, params.len())?;
                let mut w = params;
                let b = w.pop().expect("non-empty");
                Ok(Self::linear(kind, w, b))
            }
        }
    }

    pub fn with_domain_box(mut self, domain_box: DomainBox) -> Result<Self> {
        check_dim(self.dim, domain_box.dim())?;
        self.domain_box = domain_box;
        Ok(self)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> Option<usize> {
        self.basis.as_ref().map(MonomialBasis::order)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn domain_box(&self) -> &DomainBox {
        &self.domain_box
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_finite(x, "policy input")
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn gradient_checked(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    pub fn hessian_checked(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.hessian_unchecked(x))
    }

    /// Input derivative of order 1 (gradient) or 2 (Hessian).
    pub fn grad_policy(&self, x: &[f64], order: usize) -> Result<Derivative> {
        match order {
            1 => self.gradient_checked(x).map(Derivative::Gradient),
            2 => self.hessian_checked(x).map(Derivative::Hessian),
            _ => Err(Error::UnsupportedOrder {
                order,
                kind: self.kind.name().into(),
            }),
        }
    }

    /// `D(x) = 1(f(x) >= threshold)`.
    pub fn decide(&self, x: &[f64], threshold: f64) -> Result<u8> {
        Ok(decide_score(self.eval(x)?, threshold))
    }

    #[inline]
    fn linear_part(&self, x: &[f64]) -> f64 {
        self.params[self.dim] + mlp::dot(&self.params[..self.dim], x)
    }

    #[inline]
    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            PolicyKind::LinearSigmoid => sigmoid(self.linear_part(x)),
            PolicyKind::LinearRaw => self.linear_part(x),
            PolicyKind::Polynomial => self.basis().eval(&self.params, x),
        }
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            PolicyKind::LinearSigmoid => {
                let s = sigmoid(self.linear_part(x));
                let q = s * (1.0 - s);
                for (o, w) in out.iter_mut().zip(&self.params[..self.dim]) {
                    *o = q * w;
                }
            }
            PolicyKind::LinearRaw => out.copy_from_slice(&self.params[..self.dim]),
            PolicyKind::Polynomial => self.basis().gradient_into(&self.params, x, out),
        }
    }

    pub fn hessian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match self.kind {
            PolicyKind::LinearSigmoid => {
                let s = sigmoid(self.linear_part(x));
                let r = s * (1.0 - s) * (1.0 - 2.0 * s);
                let w = &self.params[..d];
                DMatrix::from_fn(d, d, |i, j| r * w[i] * w[j])
            }
            PolicyKind::LinearRaw => DMatrix::zeros(d, d),
            PolicyKind::Polynomial => self.basis().hessian(&self.params, x),
        }
    }

    fn basis(&self) -> &MonomialBasis {
        self.basis.as_ref().expect("polynomial policy carries a basis")
    }

    pub fn param_jacobian(&self, quantity: Quantity, x: &[f64]) -> Result<ParamJacobian> {
        self.check_input(x)?;
        let p = self.param_count();
        let matrix = match quantity {
            Quantity::Value => {
                let mut row = vec![0.0; p];
                self.value_param_grad_into(x, &mut row);
                DMatrix::from_row_slice(1, p, &row)
            }
            Quantity::InputGradient => {
                let mut buf = vec![0.0; self.dim * p];
                self.gradient_param_jacobian_into(x, &mut buf);
                DMatrix::from_row_slice(self.dim, p, &buf)
            }
        };
        Ok(ParamJacobian { quantity, matrix })
    }

    /// `df/dtheta` written into `out` (length `param_count`).
    pub fn value_param_grad_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match self.kind {
            PolicyKind::LinearSigmoid => {
                let s = sigmoid(self.linear_part(x));
                let q = s * (1.0 - s);
                for (o, xi) in out[..d].iter_mut().zip(x) {
                    *o = q * xi;
                }
                out[d] = q;
            }
            PolicyKind::LinearRaw => {
                out[..d].copy_from_slice(x);
                out[d] = 1.0;
            }
            PolicyKind::Polynomial => self.basis().monomials_into(x, out),
        }
    }

    /// Row-major `d x param_count` Jacobian of the input gradient.
    pub fn gradient_param_jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let p = self.param_count();
        match self.kind {
            PolicyKind::LinearSigmoid => {
                let s = sigmoid(self.linear_part(x));
                let q = s * (1.0 - s);
                let r = q * (1.0 - 2.0 * s);
                let w = &self.params[..d];
                for i in 0..d {
                    let row = &mut out[i * p..(i + 1) * p];
                    for j in 0..d {
                        row[j] = r * x[j] * w[i];
                    }
                    row[i] += q;
                    row[d] = r * w[i];
                }
            }
            PolicyKind::LinearRaw => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    out[i * p + i] = 1.0;
                }
            }
            PolicyKind::Polynomial => self.basis().monomial_gradients_into(x, out),
        }
    }

    /// Value and input gradient at `x` under the current parameters.
    pub(crate) fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient_into(x, grad);
        self.value_unchecked(x)
    }
}

impl SmoothFunction for Policy {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_unchecked(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.hessian_unchecked(x))
    }
}

#[inline]
pub fn decide_score(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_quadratic() -> Policy {
        // -4x(x-1) = 4x - 4x^2
        Policy::polynomial(1, 2, vec![0.0, 4.0, -4.0]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = Policy::linear_sigmoid(vec![0.0], 0.0);
        assert_eq!(p.eval(&[3.7]).unwrap(), 0.5);
        assert!((example_quadratic().eval(&[0.4]).unwrap() - 0.96).abs() < 1e-15);
        let p = Policy::linear_sigmoid(vec![1.0, 1.0], -1.0);
        assert_eq!(p.eval(&[0.3, 0.7]).unwrap(), 0.5);
    }

    #[test]
    fn eval_errors() {
        let p = Policy::linear_sigmoid(vec![1.0, 1.0], 0.0);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(p.eval(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn grad_examples() {
        let f = example_quadratic();
        match f.grad_policy(&[0.4], 1).unwrap() {
            Derivative::Gradient(g) => assert!((g[0] - 0.8).abs() < 1e-15),
            _ => unreachable!(),
        }
        match f.grad_policy(&[0.4], 2).unwrap() {
            Derivative::Hessian(h) => assert_eq!(h[(0, 0)], -8.0),
            _ => unreachable!(),
        }
        let lin = Policy::linear_raw(vec![1.5, -2.0, 0.3], 0.1);
        match lin.grad_policy(&[0.2, 0.1, 9.0], 2).unwrap() {
            Derivative::Hessian(h) => assert_eq!(h, DMatrix::zeros(3, 3)),
            _ => unreachable!(),
        }
        assert!(matches!(
            lin.grad_policy(&[0.0; 3], 3),
            Err(Error::UnsupportedOrder { order: 3, .. })
        ));
    }

    #[test]
    fn param_jacobian_examples() {
        let p = Policy::linear_sigmoid(vec![0.0], 0.0);
        let j = p.param_jacobian(Quantity::Value, &[2.0]).unwrap();
        assert_eq!(j.matrix.shape(), (1, 2));
        assert_eq!(j.matrix[(0, 0)], 0.5);
        assert_eq!(j.matrix[(0, 1)], 0.25);

        let raw = Policy::linear_raw(vec![3.0, -1.0], 2.0);
        let j = raw.param_jacobian(Quantity::Value, &[0.5, 4.0]).unwrap();
        assert_eq!(j.matrix.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 4.0, 1.0]);
    }

    #[test]
    fn decide_boundary() {
        assert_eq!(decide_score(0.6, 0.5), 1);
        assert_eq!(decide_score(0.5, 0.5), 1);
        assert_eq!(decide_score(0.49, 0.5), 0);
    }

    #[test]
    fn polynomial_order_plus_one_derivative_vanishes() {
        // a linear polynomial has a zero Hessian everywhere
        let p = Policy::polynomial(2, 1, vec![0.3, -1.0, 2.0]).unwrap();
        assert_eq!(p.hessian_unchecked(&[0.7, -3.0]), DMatrix::zeros(2, 2));
    }
}
