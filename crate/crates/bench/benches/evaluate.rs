use criterion::{criterion_group, criterion_main, Criterion};
use stratwelfare::welfare::evaluate;
use stratwelfare_bench::{closed_form, fixture};

fn evaluation(c: &mut Criterion) {
    let fx = fixture(10_000);
    let resp = closed_form(1, &fx.data);
    c.bench_function("evaluate_10k", |b| {
        b.iter(|| evaluate(&fx.policy, &fx.data, &fx.labeler, &resp).unwrap())
    });
}

criterion_group!(benches, evaluation);
criterion_main!(benches);
