//! Welfare and fairness metrics of a deployed policy, and the
//! differentiable training losses built from them.

mod loss;

pub use loss::{
    composite_loss, composite_loss_indexed, fairness_penalty, LossBreakdown, SoftNotion,
    SwfComponents, PROB_CLIP,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{check_dim, Error, Result};
use crate::models::{decide_score, LabelingModel, Policy, SmoothFunction};
use crate::response::{apply_response, ResponseModel};

/// Decision threshold of `D(x) = 1(f(x) >= 0.5)`.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub dw: f64,
    pub imp: f64,
    pub sf: f64,
    pub aw: f64,
    pub swf: f64,
    pub total: f64,
    pub n_deteriorated: usize,
    pub n_underestimated: usize,
}

/// Group-conditional rates and their absolute gaps. `None` marks an empty
/// conditioning set and serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub ei_gap: Option<f64>,
    pub be_gap: Option<f64>,
    pub dp_gap: Option<f64>,
    pub eo_gap: Option<f64>,
    pub ei_rate_z0: Option<f64>,
    pub ei_rate_z1: Option<f64>,
    pub be_rate_z0: Option<f64>,
    pub be_rate_z1: Option<f64>,
    pub dp_rate_z0: Option<f64>,
    pub dp_rate_z1: Option<f64>,
    pub eo_rate_z0: Option<f64>,
    pub eo_rate_z1: Option<f64>,
}

/// Metric columns of result tables, in order.
pub const METRIC_COLUMNS: [&str; 10] = [
    "dw", "imp", "sf", "aw", "swf", "total", "ei_gap", "be_gap", "dp_gap", "eo_gap",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub welfare: WelfareReport,
    pub fairness: Option<FairnessReport>,
}

impl Evaluation {
    /// Values in [`METRIC_COLUMNS`] order.
    pub fn metric_values(&self) -> [Option<f64>; 10] {
        let w = &self.welfare;
        let f = self.fairness.as_ref();
        [
            Some(w.dw),
            Some(w.imp),
            Some(w.sf),
            Some(w.aw),
            Some(w.swf),
            Some(w.total),
            f.and_then(|f| f.ei_gap),
            f.and_then(|f| f.be_gap),
            f.and_then(|f| f.dp_gap),
            f.and_then(|f| f.eo_gap),
        ]
    }
}

fn check_inputs(policy: &Policy, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    check_dim(policy.feature_dim(), data.feature_dim())
}

/// Post-response features of every sample, in sample order.
pub fn responses(resp: &ResponseModel, policy: &Policy, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| apply_response(resp, policy, &s.x))
        .collect()
}

/// Accuracy of `D(x)` on pre-response features.
pub fn decision_welfare(policy: &Policy, data: &Dataset) -> Result<f64> {
    check_inputs(policy, data)?;
    let hits = data
        .samples()
        .iter()
        .filter(|s| decide_score(policy.value_unchecked(&s.x), THRESHOLD) == s.y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

fn qualification_changes(
    policy: &Policy,
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
) -> Result<Vec<f64>> {
    check_inputs(policy, data)?;
    check_dim(h.feature_dim(), data.feature_dim())?;
    let moved = responses(resp, policy, data.samples())?;
    Ok(data
        .samples()
        .iter()
        .zip(&moved)
        .map(|(s, xs)| h.value(xs) - h.value(&s.x))
        .collect())
}

/// Mean `h(x*) - h(x)`.
pub fn improvement(policy: &Policy, data: &Dataset, h: &LabelingModel, resp: &ResponseModel) -> Result<f64> {
    let diffs = qualification_changes(policy, data, h, resp)?;
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Mean `min(h(x*) - h(x), 0)`.
pub fn safety(policy: &Policy, data: &Dataset, h: &LabelingModel, resp: &ResponseModel) -> Result<f64> {
    let diffs = qualification_changes(policy, data, h, resp)?;
    Ok(diffs.iter().map(|d| d.min(0.0)).sum::<f64>() / diffs.len() as f64)
}

/// Mean `min(f(x) - h(x), 0)`.
pub fn agent_welfare(policy: &Policy, data: &Dataset, h: &LabelingModel) -> Result<f64> {
    check_inputs(policy, data)?;
    check_dim(h.feature_dim(), data.feature_dim())?;
    let s: f64 = data
        .samples()
        .iter()
        .map(|s| (policy.value_unchecked(&s.x) - h.value(&s.x)).min(0.0))
        .sum();
    Ok(s / data.len() as f64)
}

fn welfare_from(policy: &Policy, samples: &[Sample], moved: &[Vec<f64>], h: &LabelingModel) -> WelfareReport {
    let n = samples.len() as f64;
    let (mut hits, mut imp, mut sf, mut aw) = (0usize, 0.0, 0.0, 0.0);
    let (mut n_det, mut n_under) = (0usize, 0usize);
    for (s, xs) in samples.iter().zip(moved) {
        let f = policy.value_unchecked(&s.x);
        let hx = h.value(&s.x);
        let delta = h.value(xs) - hx;
        if decide_score(f, THRESHOLD) == s.y {
            hits += 1;
        }
        imp += delta;
        if delta < 0.0 {
            sf += delta;
            n_det += 1;
        }
        if f < hx {
            aw += f - hx;
            n_under += 1;
        }
    }
    let (dw, imp, sf, aw) = (hits as f64 / n, imp / n, sf / n, aw / n);
    let swf = imp + sf;
    WelfareReport {
        dw,
        imp,
        sf,
        aw,
        swf,
        total: dw + swf + aw,
        n_deteriorated: n_det,
        n_underestimated: n_under,
    }
}

pub fn welfare_report(
    policy: &Policy,
    data: &Dataset,
    h: &LabelingModel,
    resp: &ResponseModel,
) -> Result<WelfareReport> {
    check_inputs(policy, data)?;
    check_dim(h.feature_dim(), data.feature_dim())?;
    let moved = responses(resp, policy, data.samples())?;
    Ok(welfare_from(policy, data.samples(), &moved, h))
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn gap(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some((a? - b?).abs())
}

fn fairness_from(policy: &Policy, samples: &[Sample], moved: &[Vec<f64>]) -> FairnessReport {
    // per group: [ei_num, ei_den, be_num, n, dp_num, eo_num, eo_den]
    let mut c = [[0usize; 7]; 2];
    for (s, xs) in samples.iter().zip(moved) {
        let g = &mut c[s.z as usize];
        let before = policy.value_unchecked(&s.x) >= THRESHOLD;
        let after = policy.value_unchecked(xs) >= THRESHOLD;
        g[3] += 1;
        if !before {
            g[1] += 1;
            if after {
                g[0] += 1;
                g[2] += 1;
            }
        }
        if before {
            g[4] += 1;
        }
        if s.y == 1 {
            g[6] += 1;
            if before {
                g[5] += 1;
            }
        }
    }
    let r = |z: usize, num: usize, den: usize| rate(c[z][num], c[z][den]);
    let (ei0, ei1) = (r(0, 0, 1), r(1, 0, 1));
    let (be0, be1) = (r(0, 2, 3), r(1, 2, 3));
    let (dp0, dp1) = (r(0, 4, 3), r(1, 4, 3));
    let (eo0, eo1) = (r(0, 5, 6), r(1, 5, 6));
    FairnessReport {
        ei_gap: gap(ei0, ei1),
        be_gap: gap(be0, be1),
        dp_gap: gap(dp0, dp1),
        eo_gap: gap(eo0, eo1),
        ei_rate_z0: ei0,
        ei_rate_z1: ei1,
        be_rate_z0: be0,
        be_rate_z1: be1,
        dp_rate_z0: dp0,
        dp_rate_z1: dp1,
        eo_rate_z0: eo0,
        eo_rate_z1: eo1,
    }
}

pub fn fairness_report(policy: &Policy, data: &Dataset, resp: &ResponseModel) -> Result<FairnessReport> {
    check_inputs(policy, data)?;
    if !data.has_groups() {
        return Err(Error::MissingGroup);
    }
    let moved = responses(resp, policy, data.samples())?;
    Ok(fairness_from(policy, data.samples(), &moved))
}

/// Welfare and (when the data has groups) fairness, sharing one pass of
/// agent responses.
pub fn evaluate(policy: &Policy, data: &Dataset, h: &LabelingModel, resp: &ResponseModel) -> Result<Evaluation> {
    check_inputs(policy, data)?;
    check_dim(h.feature_dim(), data.feature_dim())?;
    let moved = responses(resp, policy, data.samples())?;
    Ok(Evaluation {
        welfare: welfare_from(policy, data.samples(), &moved, h),
        fairness: data
            .has_groups()
            .then(|| fairness_from(policy, data.samples(), &moved)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DomainBox, QuadraticLabeler};
    use crate::response::CostModel;

    fn dataset(xs: &[f64], ys: &[u8], zs: &[u8]) -> Dataset {
        let samples = xs
            .iter()
            .zip(ys)
            .zip(zs)
            .map(|((&x, &y), &z)| Sample { x: vec![x], y, z })
            .collect();
        Dataset::new(samples, vec!["x".into()])
            .unwrap()
            .with_group("z")
            .with_domain_box(DomainBox::unit(1))
            .unwrap()
    }

    fn quadratic_h() -> LabelingModel {
        LabelingModel::ClosedQuadratic(QuadraticLabeler::new(1, vec![0.0, 4.0, -4.0]).unwrap())
    }

    fn example_two() -> (Policy, Dataset, LabelingModel, ResponseModel) {
        let f = Policy::polynomial(1, 2, vec![0.0, 4.0, -4.0])
            .unwrap()
            .with_domain_box(DomainBox::unit(1))
            .unwrap();
        let data = dataset(&[0.4], &[1], &[0]);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        (f, data, quadratic_h(), resp)
    }

    #[test]
    fn example_two_values() {
        let (f, data, h, resp) = example_two();
        let imp = improvement(&f, &data, &h, &resp).unwrap();
        let sf = safety(&f, &data, &h, &resp).unwrap();
        assert!((imp + 0.32).abs() < 1e-12);
        assert!((sf + 0.32).abs() < 1e-12);
        assert_eq!(agent_welfare(&f, &data, &h).unwrap(), 0.0);
    }

    #[test]
    fn decision_welfare_extremes() {
        let f = Policy::linear_raw(vec![1.0], 0.0);
        let data = dataset(&[0.2, 0.7, 0.9], &[0, 1, 1], &[0, 0, 1]);
        assert_eq!(decision_welfare(&f, &data).unwrap(), 1.0);
        let flipped = dataset(&[0.2, 0.7, 0.9], &[1, 0, 0], &[0, 0, 1]);
        assert_eq!(decision_welfare(&f, &flipped).unwrap(), 0.0);
    }

    #[test]
    fn agent_welfare_of_zero_policy() {
        let f = Policy::linear_raw(vec![0.0], 0.0);
        let h = LabelingModel::ClosedQuadratic(QuadraticLabeler::constant(1, 0.5));
        let data = dataset(&[0.1; 10], &[0; 10], &[0; 10]);
        assert!((agent_welfare(&f, &data, &h).unwrap() + 0.5).abs() < 1e-15);
        let one = Policy::linear_raw(vec![0.0], 1.0);
        assert_eq!(agent_welfare(&one, &data, &quadratic_h()).unwrap(), 0.0);
    }

    #[test]
    fn constant_policy_has_no_improvement() {
        let f = Policy::linear_sigmoid(vec![0.0], 0.3);
        let data = dataset(&[0.1, 0.5, 0.8], &[0, 1, 1], &[0, 1, 0]);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        assert_eq!(improvement(&f, &data, &quadratic_h(), &resp).unwrap(), 0.0);
    }

    #[test]
    fn dp_gap_from_hand_built_groups() {
        // group 0: 4 of 5 accepted; group 1: 2 of 4 accepted (plus one more reject)
        let xs = [0.9, 0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.1, 0.1];
        let zs = [0, 0, 0, 0, 0, 1, 1, 1, 1];
        let f = Policy::linear_raw(vec![1.0], 0.0);
        let data = dataset(&xs, &[1; 9], &zs);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1e6, 1).unwrap());
        let r = fairness_report(&f, &data, &resp).unwrap();
        assert!((r.dp_rate_z0.unwrap() - 0.8).abs() < 1e-15);
        assert!((r.dp_rate_z1.unwrap() - 0.5).abs() < 1e-15);
        assert!((r.dp_gap.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ei_is_undefined_without_rejected_agents() {
        let f = Policy::linear_raw(vec![0.0], 0.9);
        let data = dataset(&[0.1, 0.2, 0.3, 0.4], &[1, 0, 1, 0], &[0, 0, 1, 1]);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        let r = fairness_report(&f, &data, &resp).unwrap();
        assert_eq!(r.ei_gap, None);
        assert_eq!(r.dp_gap, Some(0.0));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"ei_gap\":null"));
    }

    #[test]
    fn symmetric_groups_have_zero_gaps() {
        let xs = [0.1, 0.45, 0.6, 0.8];
        let f = Policy::linear_sigmoid(vec![6.0], -3.0)
            .with_domain_box(DomainBox::unit(1))
            .unwrap();
        let mut all_x = xs.to_vec();
        all_x.extend(xs);
        let ys = [0, 1, 1, 1, 0, 1, 1, 1];
        let zs = [0, 0, 0, 0, 1, 1, 1, 1];
        let data = dataset(&all_x, &ys, &zs);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(0.5, 1).unwrap());
        let r = fairness_report(&f, &data, &resp).unwrap();
        for g in [r.ei_gap, r.be_gap, r.dp_gap, r.eo_gap] {
            assert_eq!(g, Some(0.0));
        }
    }

    #[test]
    fn fairness_requires_groups() {
        let data = Dataset::new(
            vec![Sample {
                x: vec![0.1],
                y: 1,
                z: 0,
            }],
            vec!["x".into()],
        )
        .unwrap();
        let f = Policy::linear_raw(vec![1.0], 0.0);
        let resp = ResponseModel::closed_form(1, CostModel::uniform(1.0, 1).unwrap());
        assert!(matches!(fairness_report(&f, &data, &resp), Err(Error::MissingGroup)));
    }

    #[test]
    fn report_totals_are_consistent() {
        let (f, data, h, resp) = example_two();
        let r = welfare_report(&f, &data, &h, &resp).unwrap();
        assert_eq!(r.swf, r.imp + r.sf);
        assert_eq!(r.total, r.dw + r.swf + r.aw);
        assert_eq!(r.n_deteriorated, 1);
        assert_eq!(r.n_underestimated, 0);
        let json = serde_json::to_value(r).unwrap();
        for key in ["dw", "imp", "sf", "aw", "swf", "total", "n_deteriorated", "n_underestimated"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let f = Policy::linear_raw(vec![1.0], 0.0);
        let data = dataset(&[0.1], &[1], &[0]).subset(&[]);
        assert!(matches!(decision_welfare(&f, &data), Err(Error::Empty(_))));
    }
}
