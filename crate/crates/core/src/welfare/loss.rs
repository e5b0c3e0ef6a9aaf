use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{check_dim, Error, Result};
use crate::models::mlp::{sigmoid, Cache};
use crate::models::{LabelingModel, Policy, SmoothFunction};
use crate::response::ResponseModel;

use super::THRESHOLD;

/// Probabilities inside logarithms are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 1e-7;

/// Which parts of the social-welfare loss are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwfComponents {
    pub imp: bool,
    pub sf: bool,
}

impl SwfComponents {
    pub const BOTH: Self = Self { imp: true, sf: true };
    pub const IMP_ONLY: Self = Self { imp: true, sf: false };
    pub const SF_ONLY: Self = Self { imp: false, sf: true };

    pub fn any(self) -> bool {
        self.imp || self.sf
    }

    pub fn parse(s: &str) -> Option<Self> {
        let mut out = Self { imp: false, sf: false };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "imp" => out.imp = true,
                "sf" => out.sf = true,
                _ => return None,
            }
        }
        out.any().then_some(out)
    }

    pub fn label(self) -> &'static str {
        match (self.imp, self.sf) {
            (true, true) => "imp+sf",
            (true, false) => "imp",
            (false, true) => "sf",
            (false, false) => "none",
        }
    }
}

impl Default for SwfComponents {
    fn default() -> Self {
        Self::BOTH
    }
}

/// Loss values of one batch and their parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_dw: f64,
    pub l_imp: f64,
    pub l_sf: f64,
    pub l_aw: f64,
    pub total: f64,
    /// Gradient of `total`.
    pub grad: Vec<f64>,
    pub grad_dw: Vec<f64>,
    /// `None` when the response map has no parameter derivative and the
    /// social-welfare weight is zero.
    pub grad_imp: Option<Vec<f64>>,
    pub grad_sf: Option<Vec<f64>>,
    pub grad_aw: Vec<f64>,
    pub components: SwfComponents,
    /// Sizes of the deteriorated and underestimated sets.
    pub n_sf: usize,
    pub n_aw: usize,
}

fn clip(p: f64) -> (f64, bool) {
    if p < PROB_CLIP {
        (PROB_CLIP, true)
    } else if p > 1.0 - PROB_CLIP {
        (1.0 - PROB_CLIP, true)
    } else {
        (p, false)
    }
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// `l_dw + lambda1 * (active social parts) + lambda2 * l_aw` over the whole slice.
pub fn composite_loss(
    policy: &Policy,
    batch: &[Sample],
    h: &LabelingModel,
    resp: &ResponseModel,
    lambda1: f64,
    lambda2: f64,
    components: SwfComponents,
) -> Result<LossBreakdown> {
    let idx: Vec<usize> = (0..batch.len()).collect();
    composite_loss_indexed(policy, batch, &idx, h, resp, lambda1, lambda2, components)
}

/// [`composite_loss`] over `samples[idx]`.
///
/// Subset losses are sums over the deteriorated / underestimated sets
/// divided by the full batch size. Set membership carries no gradient.
#[allow(clippy::too_many_arguments)]
pub fn composite_loss_indexed(
    policy: &Policy,
    samples: &[Sample],
    idx: &[usize],
    h: &LabelingModel,
    resp: &ResponseModel,
    lambda1: f64,
    lambda2: f64,
    components: SwfComponents,
) -> Result<LossBreakdown> {
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} = {l} must be finite and >= 0")));
        }
    }
    if idx.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let d = policy.feature_dim();
    check_dim(d, h.feature_dim())?;
    check_dim(d, resp.cost.dim())?;
    let with_response_grad = resp.supports_param_derivative();
    if !with_response_grad && lambda1 > 0.0 && components.any() {
        return Err(Error::NoParamDerivative(format!(
            "{} response (K={})",
            resp.kind.name(),
            resp.order
        )));
    }

    let p = policy.param_count();
    let mut grad_dw = vec![0.0; p];
    let mut grad_imp = vec![0.0; p];
    let mut grad_sf = vec![0.0; p];
    let mut grad_aw = vec![0.0; p];
    let (mut l_dw, mut l_imp, mut l_sf, mut l_aw) = (0.0, 0.0, 0.0, 0.0);
    let (mut n_sf, mut n_aw) = (0usize, 0usize);

    let mut vg = vec![0.0; p];
    let mut x_star = vec![0.0; d];
    let mut jac = vec![0.0; d * p];
    let mut scratch = Vec::new();
    let mut gh = vec![0.0; d];
    let mut chain = vec![0.0; p];
    let mut cache = Cache::default();

    for &i in idx {
        let s = &samples[i];
        check_dim(d, s.x.len())?;
        let f = policy.value_unchecked(&s.x);
        policy.value_param_grad_into(&s.x, &mut vg);
        let (pf, f_clipped) = clip(f);

        if s.y == 1 {
            l_dw -= pf.ln();
            if !f_clipped {
                axpy(&mut grad_dw, -1.0 / pf, &vg);
            }
        } else {
            l_dw -= (1.0 - pf).ln();
            if !f_clipped {
                axpy(&mut grad_dw, 1.0 / (1.0 - pf), &vg);
            }
        }

        let hx = h.value(&s.x);
        if f < hx {
            n_aw += 1;
            l_aw -= pf.ln();
            if !f_clipped {
                axpy(&mut grad_aw, -1.0 / pf, &vg);
            }
        }

        resp.respond_with_jacobian(
            policy,
            &s.x,
            &mut x_star,
            with_response_grad.then_some(jac.as_mut_slice()),
            &mut scratch,
        )?;
        let hs = h.value_and_gradient(&x_star, &mut cache, &mut gh);
        let (ph, h_clipped) = clip(hs);
        let term = -ph.ln();
        l_imp += term;
        let deteriorated = hs < hx;
        if deteriorated {
            n_sf += 1;
            l_sf += term;
        }
        if with_response_grad && !h_clipped {
            // d(-log h(x*))/dtheta = -(grad h(x*)^T dx*/dtheta) / h
            chain.iter_mut().for_each(|c| *c = 0.0);
            for k in 0..d {
                if gh[k] != 0.0 {
                    axpy(&mut chain, gh[k], &jac[k * p..(k + 1) * p]);
                }
            }
            axpy(&mut grad_imp, -1.0 / ph, &chain);
            if deteriorated {
                axpy(&mut grad_sf, -1.0 / ph, &chain);
            }
        }
    }

    let n = idx.len() as f64;
    for g in [&mut grad_dw, &mut grad_imp, &mut grad_sf, &mut grad_aw] {
        g.iter_mut().for_each(|v| *v /= n);
    }
    let (l_dw, l_imp, l_sf, l_aw) = (l_dw / n, l_imp / n, l_sf / n, l_aw / n);

    let mut social = 0.0;
    let mut grad = grad_dw.clone();
    if lambda1 > 0.0 {
        if components.imp {
            social += l_imp;
            axpy(&mut grad, lambda1, &grad_imp);
        }
        if components.sf {
            social += l_sf;
            axpy(&mut grad, lambda1, &grad_sf);
        }
    }
    if lambda2 > 0.0 {
        axpy(&mut grad, lambda2, &grad_aw);
    }
    let total = l_dw + lambda1 * social + lambda2 * l_aw;
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("composite loss"));
    }
    Ok(LossBreakdown {
        l_dw,
        l_imp,
        l_sf,
        l_aw,
        total,
        grad,
        grad_dw,
        grad_imp: with_response_grad.then_some(grad_imp),
        grad_sf: with_response_grad.then_some(grad_sf),
        grad_aw,
        components,
        n_sf,
        n_aw,
    })
}

/// Fairness notions with a smooth surrogate penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftNotion {
    /// Equal improvability: acceptance after response among rejected agents.
    Ei,
    /// Bounded effort: rejected agents that become accepted, per group.
    Be,
}

/// Squared between-group gap of a surrogate rate and its gradient.
///
/// Every indicator `1(f >= 0.5)` is replaced by `sigmoid((f - 0.5) / tau)`.
/// Returns zero when either group has no (soft) conditioning mass.
pub fn fairness_penalty(
    policy: &Policy,
    samples: &[Sample],
    idx: &[usize],
    resp: &ResponseModel,
    notion: SoftNotion,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {tau} must be > 0")));
    }
    let d = policy.feature_dim();
    let p = policy.param_count();
    let mut counts = [0usize; 2];
    for &i in idx {
        counts[samples[i].z as usize] += 1;
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Ok((0.0, vec![0.0; p]));
    }
    if !resp.supports_param_derivative() {
        return Err(Error::NoParamDerivative(format!("{} response", resp.kind.name())));
    }

    // per group: numerator, denominator and their gradients
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    let mut dnum = [vec![0.0; p], vec![0.0; p]];
    let mut dden = [vec![0.0; p], vec![0.0; p]];

    let mut vg = vec![0.0; p];
    let mut vg_star = vec![0.0; p];
    let mut x_star = vec![0.0; d];
    let mut jac = vec![0.0; d * p];
    let mut scratch = Vec::new();
    let mut g_star = vec![0.0; d];
    let mut df_star = vec![0.0; p];

    for &i in idx {
        let s = &samples[i];
        let z = s.z as usize;
        let a = sigmoid((policy.value_unchecked(&s.x) - THRESHOLD) / tau);
        policy.value_param_grad_into(&s.x, &mut vg);
        let da = a * (1.0 - a) / tau;

        resp.respond_with_jacobian(policy, &s.x, &mut x_star, Some(&mut jac), &mut scratch)?;
        let f_star = policy.value_and_gradient(&x_star, &mut g_star);
        policy.value_param_grad_into(&x_star, &mut vg_star);
        df_star.copy_from_slice(&vg_star);
        for k in 0..d {
            axpy(&mut df_star, g_star[k], &jac[k * p..(k + 1) * p]);
        }
        let b = sigmoid((f_star - THRESHOLD) / tau);
        let db = b * (1.0 - b) / tau;

        // term = b (1 - a)
        num[z] += b * (1.0 - a);
        axpy(&mut dnum[z], db * (1.0 - a), &df_star);
        axpy(&mut dnum[z], -b * da, &vg);
        match notion {
            SoftNotion::Ei => {
                den[z] += 1.0 - a;
                axpy(&mut dden[z], -da, &vg);
            }
            SoftNotion::Be => den[z] += 1.0,
        }
    }
    if den[0] <= 1e-12 || den[1] <= 1e-12 {
        return Ok((0.0, vec![0.0; p]));
    }
    let rate = |z: usize| num[z] / den[z];
    let drate = |z: usize| -> Vec<f64> {
        (0..p)
            .map(|j| (dnum[z][j] * den[z] - num[z] * dden[z][j]) / (den[z] * den[z]))
            .collect()
    };
    let gap = rate(0) - rate(1);
    let (d0, d1) = (drate(0), drate(1));
    let grad = (0..p).map(|j| 2.0 * gap * (d0[j] - d1[j])).collect();
    Ok((gap * gap, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DomainBox, QuadraticLabeler};
    use crate::response::CostModel;

    fn sample(x: f64, y: u8) -> Sample {
        Sample { x: vec![x], y, z: 0 }
    }

    #[test]
    fn zero_lambdas_reduce_to_cross_entropy() {
        let f = Policy::linear_sigmoid(vec![1.5], -0.4);
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::new(1, vec![0.0, 4.0, -4.0]).unwrap());
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        let batch = vec![sample(0.1, 0), sample(0.6, 1), sample(0.9, 1)];
        let out = composite_loss(&f, &batch, &h, &resp, 0.0, 0.0, SwfComponents::BOTH).unwrap();
        let ce: f64 = batch
            .iter()
            .map(|s| {
                let p = f.value(&s.x);
                if s.y == 1 {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / 3.0;
        assert!((out.total - ce).abs() < 1e-14);
        assert_eq!(out.grad, out.grad_dw);
    }

    #[test]
    fn example_two_improvement_loss() {
        let f = Policy::polynomial(1, 2, vec![0.0, 4.0, -4.0])
            .unwrap()
            .with_domain_box(DomainBox::unit(1))
            .unwrap();
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::new(1, vec![0.0, 4.0, -4.0]).unwrap());
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        let out = composite_loss(&f, &[sample(0.4, 1)], &h, &resp, 1.0, 0.0, SwfComponents::IMP_ONLY).unwrap();
        assert!((out.l_imp - (-(0.64f64).ln())).abs() < 1e-12);
        assert!((out.l_imp - 0.4463).abs() < 1e-4);
        // the agent deteriorates, but the safety part is inactive
        assert_eq!(out.n_sf, 1);
        assert!((out.total - out.l_dw - out.l_imp).abs() < 1e-15);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let f = Policy::linear_sigmoid(vec![1.0], 0.0);
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::constant(1, 0.5));
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        assert!(composite_loss(&f, &[sample(0.1, 1)], &h, &resp, -1.0, 0.0, SwfComponents::BOTH).is_err());
    }

    #[test]
    fn numeric_response_has_no_parameter_derivative() {
        let f = Policy::linear_sigmoid(vec![1.0], 0.0);
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::constant(1, 0.5));
        let resp = ResponseModel::numeric(1, CostModel::uniform(1.0, 1).unwrap(), Default::default());
        let batch = [sample(0.1, 1)];
        assert!(matches!(
            composite_loss(&f, &batch, &h, &resp, 1.0, 0.0, SwfComponents::BOTH),
            Err(Error::NoParamDerivative(_))
        ));
        assert!(composite_loss(&f, &batch, &h, &resp, 0.0, 1.0, SwfComponents::BOTH).is_ok());
    }

    #[test]
    fn agent_loss_vanishes_when_nobody_is_underestimated() {
        let f = Policy::linear_raw(vec![0.0], 0.9);
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::constant(1, 0.5));
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        let out = composite_loss(&f, &[sample(0.1, 1), sample(0.3, 0)], &h, &resp, 0.0, 3.0, SwfComponents::BOTH)
            .unwrap();
        assert_eq!(out.l_aw, 0.0);
        assert_eq!(out.n_aw, 0);
    }

    #[test]
    fn single_group_penalty_is_zero() {
        let f = Policy::linear_sigmoid(vec![2.0], -1.0);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        let batch = [sample(0.1, 1), sample(0.7, 0)];
        let (v, g) = fairness_penalty(&f, &batch, &[0, 1], &resp, SoftNotion::Ei, 0.1).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn components_parse() {
        assert_eq!(SwfComponents::parse("imp,sf"), Some(SwfComponents::BOTH));
        assert_eq!(SwfComponents::parse("IMP"), Some(SwfComponents::IMP_ONLY));
        assert_eq!(SwfComponents::parse("foo"), None);
        assert_eq!(SwfComponents::parse(""), None);
    }
}
