//! How agents move in response to a published policy.
//!
//! An agent with information level `K` sees `f(x)` and its first `K`
//! input derivatives at its own point, builds the Taylor polynomial
//! `Q_x` and best responds to `Q_x(x') - c(x, x')`.

mod learned;

pub use learned::{
    build_response_dataset, encode_info, info_width, random_policies, train_learned_response,
    LearnedArch, LearnedConfig, LearnedResponse, ResponseFitReport, ResponseRow, ResponseRows,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::models::{DomainBox, Policy, SmoothFunction};

/// Order-`K` Taylor polynomial of a function around a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorExpansion {
    base: Vec<f64>,
    order: usize,
    value: f64,
    gradient: Vec<f64>,
    hessian: Option<DMatrix<f64>>,
}

impl TaylorExpansion {
    pub fn base_point(&self) -> &[f64] {
        &self.base
    }

    /// Order actually used (may be below the requested `K` when the
    /// function has fewer derivatives).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base_value(&self) -> f64 {
        self.value
    }

    pub fn base_gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn base_hessian(&self) -> Option<&DMatrix<f64>> {
        self.hessian.as_ref()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = self.value;
        for i in 0..self.base.len() {
            out += self.gradient[i] * (x[i] - self.base[i]);
        }
        if let Some(h) = &self.hessian {
            let mut quad = 0.0;
            for i in 0..self.base.len() {
                let di = x[i] - self.base[i];
                for j in 0..self.base.len() {
                    quad += di * h[(i, j)] * (x[j] - self.base[j]);
                }
            }
            out += 0.5 * quad;
        }
        out
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.gradient.clone();
        if let Some(h) = &self.hessian {
            for (i, gi) in g.iter_mut().enumerate() {
                for j in 0..self.base.len() {
                    *gi += h[(i, j)] * (x[j] - self.base[j]);
                }
            }
        }
        g
    }
}

impl SmoothFunction for TaylorExpansion {
    fn dim(&self) -> usize {
        self.base.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_at(x)
    }

    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        let d = self.base.len();
        Some(self.hessian.clone().unwrap_or_else(|| DMatrix::zeros(d, d)))
    }
}

/// Builds `Q_x^f` of order `k` (1 or 2). Uses whatever derivatives `f`
/// provides when it has fewer than `k`.
pub fn taylor_expand<F: SmoothFunction + ?Sized>(
    f: &F,
    x: &[f64],
    k: usize,
) -> Result<TaylorExpansion> {
    check_dim(f.dim(), x.len())?;
    check_finite(x, "expansion base point")?;
    if k == 0 || k > 2 {
        return Err(Error::UnsupportedOrder {
            order: k,
            kind: "taylor expansion".into(),
        });
    }
    let order = k.min(f.max_order());
    let hessian = if order >= 2 { f.hessian(x) } else { None };
    Ok(TaylorExpansion {
        base: x.to_vec(),
        order: if hessian.is_some() { 2 } else { 1 },
        value: f.value(x),
        gradient: f.gradient(x),
        hessian,
    })
}

/// Quadratic movement cost `a * ||mask (x' - x)||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub scale: f64,
    pub improvable: Vec<bool>,
}

impl CostModel {
    pub fn new(scale: f64, improvable: Vec<bool>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost scale {scale} must be > 0")));
        }
        Ok(Self { scale, improvable })
    }

    pub fn uniform(scale: f64, dim: usize) -> Result<Self> {
        Self::new(scale, vec![true; dim])
    }

    pub fn dim(&self) -> usize {
        self.improvable.len()
    }

    pub fn cost(&self, x: &[f64], x_new: &[f64]) -> f64 {
        self.scale
            * x.iter()
                .zip(x_new)
                .zip(&self.improvable)
                .filter(|(_, m)| **m)
                .map(|((a, b), _)| (b - a) * (b - a))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseOutcome {
    pub x_star: Vec<f64>,
    /// Coordinates pinned to the domain box.
    pub clamped: Vec<bool>,
}

/// Closed-form maximizer of `Q(x') - c(x, x')` where `x` is the expansion
/// base, restricted to improvable coordinates and clamped to `bounds`.
///
/// Order 1: `x* = x + mask * grad / (2a)`. Order 2: `x* = x + (2aI - H)^-1 grad`
/// on improvable coordinates; requires `2aI - H` positive definite there.
pub fn best_respond_closed(
    q: &TaylorExpansion,
    cost: &CostModel,
    bounds: &DomainBox,
) -> Result<ResponseOutcome> {
    let d = q.base.len();
    check_dim(d, cost.dim())?;
    check_dim(d, bounds.dim())?;
    let a = cost.scale;
    let mut delta = vec![0.0; d];
    match &q.hessian {
        None => {
            for i in 0..d {
                if cost.improvable[i] {
                    delta[i] = q.gradient[i] / (2.0 * a);
                }
            }
        }
        Some(h) => {
            let idx: Vec<usize> = (0..d).filter(|&i| cost.improvable[i]).collect();
            let k = idx.len();
            if k > 0 {
                let m = DMatrix::from_fn(k, k, |r, c| {
                    let diag = if r == c { 2.0 * a } else { 0.0 };
                    diag - h[(idx[r], idx[c])]
                });
                let chol = m.cholesky().ok_or(Error::IndefiniteCurvature)?;
                let g = DVector::from_iterator(k, idx.iter().map(|&i| q.gradient[i]));
                let sol = chol.solve(&g);
                for (r, &i) in idx.iter().enumerate() {
                    delta[i] = sol[r];
                }
            }
        }
    }
    let mut x_star = Vec::with_capacity(d);
    let mut clamped = Vec::with_capacity(d);
    for i in 0..d {
        let (v, c) = bounds.clamp_coord(i, q.base[i] + delta[i]);
        x_star.push(v);
        clamped.push(c);
    }
    Ok(ResponseOutcome { x_star, clamped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericOptions {
    /// Initial step as a fraction of each coordinate's box width.
    pub step_frac: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Convergence tolerance on the objective change between iterations.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            step_frac: 0.05,
            max_iters: 500,
            restarts: 4,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericOutcome {
    pub x_star: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
}

/// Projected gradient ascent with backtracking on `q(x') - c(x, x')`.
///
/// Runs from `x` and from `opts.restarts` random points of the box (only
/// improvable coordinates vary) and keeps the best end point. Never
/// returns a point worse than `x`.
pub fn best_respond_numeric<F: SmoothFunction + ?Sized>(
    q: &F,
    x: &[f64],
    cost: &CostModel,
    bounds: &DomainBox,
    opts: &NumericOptions,
) -> Result<NumericOutcome> {
    let d = x.len();
    check_dim(q.dim(), d)?;
    check_dim(d, cost.dim())?;
    check_dim(d, bounds.dim())?;
    let objective = |p: &[f64]| q.value(p) - cost.cost(x, p);
    let scale: Vec<f64> = (0..d)
        .map(|i| {
            let w = bounds.width(i);
            opts.step_frac * if w.is_finite() && w > 0.0 { w } else { 1.0 }
        })
        .collect();
    let project = |p: &mut [f64]| {
        for i in 0..d {
            p[i] = if cost.improvable[i] {
                bounds.clamp_coord(i, p[i]).0
            } else {
                x[i]
            };
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![x.to_vec()];
    for _ in 0..opts.restarts {
        let s: Vec<f64> = (0..d)
            .map(|i| {
                if !cost.improvable[i] {
                    return x[i];
                }
                let (lo, hi) = (bounds.lo[i], bounds.hi[i]);
                let (lo, hi) = if lo.is_finite() && hi.is_finite() {
                    (lo, hi)
                } else {
                    (x[i] - 1.0, x[i] + 1.0)
                };
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        starts.push(s);
    }

    let mut best: Option<NumericOutcome> = None;
    for mut p in starts {
        project(&mut p);
        let mut val = objective(&p);
        let mut converged = false;
        let mut t = 1.0;
        for _ in 0..opts.max_iters {
            let g_q = q.gradient(&p);
            let grad: Vec<f64> = (0..d)
                .map(|i| {
                    if cost.improvable[i] {
                        g_q[i] - 2.0 * cost.scale * (p[i] - x[i])
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut accepted = None;
            for _ in 0..60 {
                let mut cand: Vec<f64> = (0..d).map(|i| p[i] + t * scale[i] * grad[i]).collect();
                project(&mut cand);
                let lin: f64 = (0..d).map(|i| grad[i] * (cand[i] - p[i])).sum();
                let cv = objective(&cand);
                if cv >= val + 1e-4 * lin {
                    accepted = Some((cand, cv));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, cv)) = accepted else {
                converged = true;
                break;
            };
            let moved = (0..d).map(|i| (cand[i] - p[i]).abs()).fold(0.0, f64::max);
            let gain = cv - val;
            p = cand;
            val = cv;
            if gain.abs() <= opts.tol && moved <= opts.tol.sqrt() * 1e-3 {
                converged = true;
                break;
            }
            t = (t * 2.0).min(1e6);
        }
        if best.as_ref().is_none_or(|b| val > b.objective) {
            best = Some(NumericOutcome {
                x_star: p,
                objective: val,
                converged,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseKind {
    ClosedForm,
    Numeric(NumericOptions),
    Learned(Box<LearnedResponse>),
}

impl ResponseKind {
    pub fn name(&self) -> &'static str {
        match self {
            ResponseKind::ClosedForm => "closed-form-taylor",
            ResponseKind::Numeric(_) => "numeric-taylor",
            ResponseKind::Learned(_) => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel {
    pub kind: ResponseKind,
    /// Information level `K`.
    pub order: usize,
    pub cost: CostModel,
}

impl ResponseModel {
    pub fn closed_form(order: usize, cost: CostModel) -> Self {
        Self {
            kind: ResponseKind::ClosedForm,
            order,
            cost,
        }
    }

    pub fn numeric(order: usize, cost: CostModel, opts: NumericOptions) -> Self {
        Self {
            kind: ResponseKind::Numeric(opts),
            order,
            cost,
        }
    }

    pub fn learned(model: LearnedResponse, cost: CostModel) -> Self {
        Self {
            order: model.order(),
            kind: ResponseKind::Learned(Box::new(model)),
            cost,
        }
    }

    /// Whether the response map can be differentiated in the policy
    /// parameters (needed by the social-welfare losses).
    pub fn supports_param_derivative(&self) -> bool {
        match &self.kind {
            ResponseKind::ClosedForm => self.order == 1,
            ResponseKind::Learned(l) => l.order() == 1,
            ResponseKind::Numeric(_) => false,
        }
    }

    /// Post-response features `x*` and, when `jac` is given, the row-major
    /// `d x P` Jacobian of `x*` in the policy parameters.
    ///
    /// `scratch` must hold at least `d * P + d` values.
    pub(crate) fn respond_with_jacobian(
        &self,
        policy: &Policy,
        x: &[f64],
        x_star: &mut [f64],
        jac: Option<&mut [f64]>,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        let d = x.len();
        let p = policy.param_count();
        let bounds = policy.domain_box();
        let mask = &self.cost.improvable;
        match (&self.kind, jac) {
            (ResponseKind::ClosedForm, Some(jac)) if self.order == 1 => {
                scratch.resize(d * p + d, 0.0);
                let (gj, grad) = scratch.split_at_mut(d * p);
                policy.gradient_into(x, grad);
                policy.gradient_param_jacobian_into(x, gj);
                let inv = 1.0 / (2.0 * self.cost.scale);
                for i in 0..d {
                    let row = &mut jac[i * p..(i + 1) * p];
                    if !mask[i] {
                        x_star[i] = x[i];
                        row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let (v, clamped) = bounds.clamp_coord(i, x[i] + grad[i] * inv);
                    x_star[i] = v;
                    if clamped {
                        row.iter_mut().for_each(|v| *v = 0.0);
                    } else {
                        for (r, g) in row.iter_mut().zip(&gj[i * p..(i + 1) * p]) {
                            *r = g * inv;
                        }
                    }
                }
                Ok(())
            }
            (ResponseKind::Learned(model), Some(jac)) if model.order() == 1 => {
                model.respond_with_jacobian(policy, x, mask, x_star, jac, scratch)
            }
            (_, Some(_)) => Err(Error::NoParamDerivative(format!(
                "{} (K={})",
                self.kind.name(),
                self.order
            ))),
            (_, None) => {
                let out = apply_response(self, policy, x)?;
                x_star.copy_from_slice(&out);
                Ok(())
            }
        }
    }
}

/// Post-response features of an agent at `x`. Always inside the policy's
/// domain box; non-improvable coordinates are unchanged.
pub fn apply_response(model: &ResponseModel, policy: &Policy, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(policy.feature_dim(), x.len())?;
    check_dim(model.cost.dim(), x.len())?;
    check_finite(x, "agent features")?;
    let bounds = policy.domain_box();
    match &model.kind {
        ResponseKind::ClosedForm => {
            let q = taylor_expand(policy, x, model.order)?;
            match best_respond_closed(&q, &model.cost, bounds) {
                Ok(o) => Ok(o.x_star),
                Err(Error::IndefiniteCurvature) => {
                    best_respond_numeric(&q, x, &model.cost, bounds, &NumericOptions::default())
                        .map(|o| o.x_star)
                }
                Err(e) => Err(e),
            }
        }
        ResponseKind::Numeric(opts) => {
            let q = taylor_expand(policy, x, model.order)?;
            best_respond_numeric(&q, x, &model.cost, bounds, opts).map(|o| o.x_star)
        }
        ResponseKind::Learned(l) => l.predict(policy, x, &model.cost.improvable),
    }
}
