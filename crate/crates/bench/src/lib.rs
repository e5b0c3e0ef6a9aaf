//! Shared fixtures for the benchmarks in `benches/`.

use stratwelfare::data::{gen_synthetic, SyntheticSpec};
use stratwelfare::response::CostModel;
use stratwelfare::{Dataset, LabelingModel, Policy, ResponseModel};

pub struct Fixture {
    pub data: Dataset,
    pub labeler: LabelingModel,
    pub policy: Policy,
}

/// Preset synthetic population of `n` agents scored by a fixed linear policy.
pub fn fixture(n: usize) -> Fixture {
    let spec = SyntheticSpec {
        n,
        ..SyntheticSpec::preset(0)
    };
    let data = gen_synthetic(&spec).expect("preset is valid");
    let labeler = LabelingModel::ClosedQuadratic(spec.labeling_model().expect("preset is valid"));
    let policy = Policy::linear_sigmoid(vec![2.0, 3.0], -2.0)
        .with_domain_box(data.domain_box().clone())
        .expect("matching dimension");
    Fixture { data, labeler, policy }
}

pub fn closed_form(order: usize, data: &Dataset) -> ResponseModel {
    let cost = CostModel::new(5.0, data.improvable_mask().to_vec()).expect("positive scale");
    ResponseModel::closed_form(order, cost)
}
