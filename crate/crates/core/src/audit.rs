//! Grid-based checks of when welfare objectives align, plus exact
//! reproductions of the two worked one-dimensional examples.
//!
//! A pass means no violation was found at the grid's resolution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{check_dim, Error, Result};
use crate::models::poly::MonomialBasis;
use crate::models::{DomainBox, LabelingModel, Policy, QuadraticLabeler, SmoothFunction};
use crate::response::{apply_response, taylor_expand, CostModel, ResponseModel};
use crate::welfare::{agent_welfare, improvement, safety};

pub const DEFAULT_GRID_CAP: usize = 4096;
pub const MAX_RECORDED_VIOLATIONS: usize = 100;
/// Least-squares residual below which `h` counts as representable.
pub const REALIZABILITY_TOL: f64 = 1e-8;

/// Rectangular grid with `counts[i]` points on `[lo[i], hi[i]]`. A single
/// point is allowed only on a degenerate axis `lo[i] == hi[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_GRID_CAP
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("grid bounds and counts must share a positive length".into()));
        }
        for i in 0..lo.len() {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
                return Err(Error::InvalidArgument(format!("grid axis {i}: [{}, {}]", lo[i], hi[i])));
            }
            if counts[i] == 0 || (counts[i] == 1 && lo[i] != hi[i]) {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {i} needs at least 2 points, or 1 on a degenerate axis"
                )));
            }
        }
        Ok(Self {
            lo,
            hi,
            counts,
            cap: DEFAULT_GRID_CAP,
        })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![count; dim])
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn total_points(&self) -> usize {
        self.counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX)
    }

    /// All grid points, first axis slowest.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let total = self.total_points();
        if total > self.cap {
            return Err(Error::GridTooLarge {
                points: total,
                cap: self.cap,
            });
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            out.push(
                (0..d)
                    .map(|i| {
                        let t = idx[i] as f64 / (self.counts[i].max(2) - 1) as f64;
                        self.lo[i] + t * (self.hi[i] - self.lo[i])
                    })
                    .collect(),
            );
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < self.counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub base: Vec<f64>,
    pub probe: Vec<f64>,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub condition: String,
    pub pass: bool,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pairs_checked: usize,
    /// First violations in grid order, at most [`MAX_RECORDED_VIOLATIONS`].
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_nonnegative: Option<bool>,
}

impl AuditReport {
    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{} {}: worst violation {:.3e} (tol {:.1e})",
            if self.pass { "holds" } else { "violated" },
            self.condition,
            self.worst_violation,
            self.tolerance
        );
        if let Some(c) = self.constant {
            s.push_str(&format!(", C = {c}"));
        }
        s
    }
}

/// Runs `eval(base, probe)` over all grid pairs and folds the violations
/// in grid order.
fn scan<F>(condition: &str, grid: &GridSpec, tol: f64, eval: F) -> Result<AuditReport>
where
    F: Fn(&[f64], &[Vec<f64>]) -> Result<Vec<f64>> + Sync,
{
    let pts = grid.points()?;
    let per_base: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|b| eval(b, &pts))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    let mut violations = Vec::new();
    for (bi, row) in per_base.iter().enumerate() {
        for (pi, &v) in row.iter().enumerate() {
            let v = if v.is_nan() { f64::INFINITY } else { v };
            worst = worst.max(v);
            if v > tol && violations.len() < MAX_RECORDED_VIOLATIONS {
                violations.push(Violation {
                    base: pts[bi].clone(),
                    probe: pts[pi].clone(),
                    magnitude: v,
                });
            }
        }
    }
    Ok(AuditReport {
        condition: condition.to_string(),
        pass: worst <= tol,
        worst_violation: worst,
        tolerance: tol,
        pairs_checked: pts.len() * pts.len(),
        violations,
        constant: None,
        constant_nonnegative: None,
    })
}

/// Largest `|Q_x(x') - f(x')|` over grid base points `x` and probes `x'`.
pub fn check_taylor_exactness<F: SmoothFunction + ?Sized>(
    f: &F,
    order: usize,
    grid: &GridSpec,
    tol: f64,
) -> Result<AuditReport> {
    check_dim(f.dim(), grid.dim())?;
    if order > f.max_order() {
        return Err(Error::UnsupportedOrder {
            order,
            kind: "function derivatives".into(),
        });
    }
    scan(&format!("taylor-exactness K={order}"), grid, tol, |base, pts| {
        let q = taylor_expand(f, base, order)?;
        Ok(pts.iter().map(|p| (q.eval(p) - f.value(p)).abs()).collect())
    })
}

/// Sign agreement of `dh/dx_i` and `dQ_x/dx_i` at every probe, for every
/// base point. Violation magnitude is the most negative product.
pub fn check_safety_alignment<H, F>(h: &H, f: &F, order: usize, grid: &GridSpec, tol: f64) -> Result<AuditReport>
where
    H: SmoothFunction + ?Sized,
    F: SmoothFunction + ?Sized,
{
    check_dim(h.dim(), grid.dim())?;
    check_dim(f.dim(), grid.dim())?;
    let pts = grid.points()?;
    let h_grads: Vec<Vec<f64>> = pts.iter().map(|p| h.gradient(p)).collect();
    scan(&format!("safety-alignment K={order}"), grid, tol, |base, pts| {
        let q = taylor_expand(f, base, order)?;
        Ok(pts
            .iter()
            .zip(&h_grads)
            .map(|(p, gh)| {
                let gq = q.gradient_at(p);
                gh.iter()
                    .zip(&gq)
                    .map(|(a, b)| (-(a * b)).max(0.0))
                    .fold(0.0, f64::max)
            })
            .collect())
    })
}

/// Whether `Q^{f_b}_x = Q^{f_a}_x + C` for one constant `C` at every grid
/// base point. Compares the expansions over all probes and their gradient
/// and Hessian coefficients; `C` is the mean of `Q^{f_b} - Q^{f_a}`.
pub fn check_offset_equivalence<A, B>(f_a: &A, f_b: &B, order: usize, grid: &GridSpec, tol: f64) -> Result<AuditReport>
where
    A: SmoothFunction + ?Sized,
    B: SmoothFunction + ?Sized,
{
    check_dim(f_a.dim(), grid.dim())?;
    check_dim(f_b.dim(), grid.dim())?;
    let pts = grid.points()?;
    let rows: Vec<(Vec<f64>, f64)> = pts
        .par_iter()
        .map(|base| -> Result<(Vec<f64>, f64)> {
            let qa = taylor_expand(f_a, base, order)?;
            let qb = taylor_expand(f_b, base, order)?;
            let diffs: Vec<f64> = pts.iter().map(|p| qb.eval(p) - qa.eval(p)).collect();
            let mut coef = qa
                .base_gradient()
                .iter()
                .zip(qb.base_gradient())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            match (qa.base_hessian(), qb.base_hessian()) {
                (Some(ha), Some(hb)) => coef = coef.max((ha - hb).abs().max()),
                (None, None) => {}
                (Some(h), None) | (None, Some(h)) => coef = coef.max(h.abs().max()),
            }
            Ok((diffs, coef))
        })
        .collect::<Result<_>>()?;
    let count = (pts.len() * pts.len()) as f64;
    let mean = rows.iter().flat_map(|(d, _)| d.iter()).sum::<f64>() / count;
    let mut report = scan(&format!("offset-equivalence K={order}"), grid, tol, |base, pts| {
        let bi = pts.iter().position(|p| p.as_slice() == base).unwrap_or(0);
        let (diffs, coef) = &rows[bi];
        Ok(diffs.iter().map(|d| (d - mean).abs().max(*coef)).collect())
    })?;
    report.constant = Some(mean);
    report.constant_nonnegative = Some(mean >= 0.0);
    Ok(report)
}

/// Families a labeling function can be tested against for membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyFamily {
    LinearRaw,
    LinearSigmoid,
    Polynomial(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realizability {
    pub family: PolicyFamily,
    /// Root-mean-square residual of the best fit on the grid.
    pub residual: f64,
    pub realizable: bool,
    pub params: Vec<f64>,
}

/// Least-squares fit of `h` into `family` over the grid points.
pub fn realizability<H: SmoothFunction + ?Sized>(h: &H, family: PolicyFamily, grid: &GridSpec) -> Result<Realizability> {
    check_dim(h.dim(), grid.dim())?;
    let pts = grid.points()?;
    let d = grid.dim();
    let values: Vec<f64> = pts.iter().map(|p| h.value(p)).collect();
    let (features, targets): (Vec<Vec<f64>>, Vec<f64>) = match family {
        PolicyFamily::LinearRaw | PolicyFamily::LinearSigmoid => {
            let feats = pts
                .iter()
                .map(|p| {
                    let mut r = p.clone();
                    r.push(1.0);
                    r
                })
                .collect();
            let t = if family == PolicyFamily::LinearSigmoid {
                // saturated values get a large finite logit; the residual
                // is measured on the values themselves
                values
                    .iter()
                    .map(|v| {
                        let v = v.clamp(1e-12, 1.0 - 1e-12);
                        (v / (1.0 - v)).ln()
                    })
                    .collect()
            } else {
                values.clone()
            };
            (feats, t)
        }
        PolicyFamily::Polynomial(order) => {
            let basis = MonomialBasis::new(d, order);
            let feats = pts
                .iter()
                .map(|p| {
                    let mut r = vec![0.0; basis.len()];
                    basis.monomials_into(p, &mut r);
                    r
                })
                .collect();
            (feats, values.clone())
        }
    };
    let k = features[0].len();
    let a = DMatrix::from_fn(pts.len(), k, |i, j| features[i][j]);
    let b = DVector::from_vec(targets);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let params: Vec<f64> = sol.iter().copied().collect();
    let policy = match family {
        PolicyFamily::LinearRaw => Policy::linear_raw(params[..d].to_vec(), params[d]),
        PolicyFamily::LinearSigmoid => Policy::linear_sigmoid(params[..d].to_vec(), params[d]),
        PolicyFamily::Polynomial(order) => Policy::polynomial(d, order, params.clone())?,
    };
    let sq: f64 = pts
        .iter()
        .zip(&values)
        .map(|(p, v)| (policy.value(p) - v).powi(2))
        .sum();
    let residual = (sq / pts.len() as f64).sqrt();
    Ok(Realizability {
        family,
        residual,
        realizable: residual <= REALIZABILITY_TOL,
        params,
    })
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A function given by closed-form value and derivative closures.
pub struct AnalyticFunction {
    dim: usize,
    value: ScalarFn,
    gradient: VectorFn,
    hessian: Option<MatrixFn>,
}

impl AnalyticFunction {
    pub fn new(dim: usize, value: ScalarFn, gradient: VectorFn, hessian: Option<MatrixFn>) -> Self {
        Self {
            dim,
            value,
            gradient,
            hessian,
        }
    }

    /// `e^x - x - 1` in one dimension.
    pub fn exp_minus_linear() -> Self {
        Self::new(
            1,
            Box::new(|x| x[0].exp() - x[0] - 1.0),
            Box::new(|x| vec![x[0].exp() - 1.0]),
            Some(Box::new(|x| DMatrix::from_element(1, 1, x[0].exp()))),
        )
    }
}

impl std::fmt::Debug for AnalyticFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticFunction").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl SmoothFunction for AnalyticFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    fn max_order(&self) -> usize {
        if self.hessian.is_some() {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    Ex1,
    Ex2,
}

impl Example {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex1" => Some(Example::Ex1),
            "ex2" => Some(Example::Ex2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleCheck {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub example: Example,
    pub checks: Vec<ExampleCheck>,
    pub pass: bool,
}

impl ExampleReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.value)
    }
}

/// Tolerance of the closed-form example values.
pub const EXAMPLE_TOL: f64 = 1e-9;

fn exact(name: &str, value: f64, expected: f64) -> ExampleCheck {
    ExampleCheck {
        name: name.into(),
        value,
        expected: Some(expected),
        pass: (value - expected).abs() <= EXAMPLE_TOL,
    }
}

fn holds(name: &str, value: f64, pass: bool) -> ExampleCheck {
    ExampleCheck {
        name: name.into(),
        value,
        expected: None,
        pass,
    }
}

/// `h(x) = -4x(x - 1)` on `[0, 1]`.
pub fn bump_labeler() -> LabelingModel {
    LabelingModel::ClosedQuadratic(QuadraticLabeler::new(1, vec![0.0, 4.0, -4.0]).expect("three coefficients"))
}

fn population(xs: &[f64]) -> Result<Dataset> {
    let samples = xs
        .iter()
        .map(|&x| Sample {
            x: vec![x],
            y: u8::from(-4.0 * x * (x - 1.0) >= 0.5),
            z: 0,
        })
        .collect();
    Dataset::new(samples, vec!["x".into()])?.with_domain_box(DomainBox::unit(1))
}

/// Positions of the five agents of the linear-policy example.
pub const EXAMPLE1_AGENTS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.7];

pub fn reproduce_example(which: Example) -> Result<ExampleReport> {
    let h = bump_labeler();
    let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1)?);
    let checks = match which {
        Example::Ex2 => {
            let f = Policy::polynomial(1, 2, vec![0.0, 4.0, -4.0])?.with_domain_box(DomainBox::unit(1))?;
            let data = population(&[0.4])?;
            let x_star = apply_response(&resp, &f, &[0.4])?[0];
            vec![
                exact("x_star", x_star, 0.8),
                exact("h_x", h.value(&[0.4]), 0.96),
                exact("h_x_star", h.value(&[x_star]), 0.64),
                exact("imp", improvement(&f, &data, &h, &resp)?, -0.32),
                exact("sf", safety(&f, &data, &h, &resp)?, -0.32),
                exact("aw", agent_welfare(&f, &data, &h)?, 0.0),
            ]
        }
        Example::Ex1 => example_one(&h, &resp)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(ExampleReport {
        example: which,
        checks,
        pass,
    })
}

fn example_one(h: &LabelingModel, resp: &ResponseModel) -> Result<Vec<ExampleCheck>> {
    let data = population(&EXAMPLE1_AGENTS)?;
    let steps = |lo: f64, hi: f64, step: f64| {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(move |i| lo + i as f64 * step)
    };
    let line = |slope: f64, intercept: f64| -> Result<Policy> {
        Policy::linear_raw(vec![slope], intercept).with_domain_box(DomainBox::unit(1))
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for slope in steps(-8.0, 8.0, 0.05) {
        for intercept in steps(-4.0, 4.0, 0.05) {
            let imp = improvement(&line(slope, intercept)?, &data, h, resp)?;
            if best.is_none_or(|(_, _, b)| imp > b) {
                best = Some((slope, intercept, imp));
            }
        }
    }
    let (slope, intercept, imp) = best.expect("non-empty grid");
    let f_imp = line(slope, intercept)?;
    let sf = safety(&f_imp, &data, h, resp)?;
    let left_improve = EXAMPLE1_AGENTS
        .iter()
        .filter(|&&x| x < 0.5)
        .map(|&x| -> Result<bool> {
            let xs = apply_response(resp, &f_imp, &[x])?;
            Ok(h.value(&xs) > h.value(&[x]))
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .all(|b| b);

    // least-squares line through (x, h(x))
    let n = EXAMPLE1_AGENTS.len() as f64;
    let mx = EXAMPLE1_AGENTS.iter().sum::<f64>() / n;
    let hs: Vec<f64> = EXAMPLE1_AGENTS.iter().map(|&x| h.value(&[x])).collect();
    let mh = hs.iter().sum::<f64>() / n;
    let sxy: f64 = EXAMPLE1_AGENTS.iter().zip(&hs).map(|(x, y)| (x - mx) * (y - mh)).sum();
    let sxx: f64 = EXAMPLE1_AGENTS.iter().map(|x| (x - mx) * (x - mx)).sum();
    let ls_slope = sxy / sxx;
    let ls_intercept = mh - ls_slope * mx;

    let one = line(0.0, 1.0)?;
    let aw_one = agent_welfare(&one, &data, h)?;
    Ok(vec![
        holds("imp_max_slope", slope, slope > 0.0),
        holds("imp_max_intercept", intercept, true),
        holds("imp_max_imp", imp, imp > 0.0),
        holds("imp_max_sf", sf, sf < 0.0),
        holds("left_agents_improve", f64::from(u8::from(left_improve)), left_improve),
        holds("ls_slope", ls_slope, (ls_slope - slope).abs() > 0.05),
        holds("ls_intercept", ls_intercept, true),
        exact("aw_constant_one", aw_one, 0.0),
    ])
}
