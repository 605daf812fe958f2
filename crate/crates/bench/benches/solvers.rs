use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsvm_core::assign::{greedy_init_from_costs, solve_simplex, solve_switching};
use tsvm_core::experiments::{random_costs, random_counts, CostDistribution, CountShape};
use tsvm_core::model::score_all;
use tsvm_core::synth::{clusters, ClusterParams};
use tsvm_core::{train, LossKind, SolverConfig, Taxonomy, WeightVector};

fn assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("assign");
    group.sample_size(10);
    for &(n, m) in &[(500, 5), (2000, 10)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let costs = random_costs(n, m, CostDistribution::Uniform, &mut rng);
        let counts = random_counts(n, m, CountShape::Random, &mut rng);
        let id = format!("{n}x{m}");
        group.bench_function(BenchmarkId::new("switching", &id), |b| {
            b.iter(|| {
                let init = greedy_init_from_costs(&costs, &counts).unwrap();
                solve_switching(black_box(&costs), &counts, &init).unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("simplex", &id), |b| {
            b.iter(|| solve_simplex(black_box(&costs), &counts).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let params = ClusterParams { classes: 8, per_class: 50, ..Default::default() };
    let data = clusters(&params, 2);
    let tax = Taxonomy::flat(params.classes);
    let w = WeightVector::from_blocks(
        tax.num_nodes(),
        params.feature_dim(),
        (0..tax.num_nodes() * params.feature_dim()).map(|i| (i % 7) as f64 - 3.0).collect(),
    )
    .unwrap();
    c.bench_function("score_all/400x8", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for x in data.examples() {
                s += score_all(tax.paths(), &w, black_box(x))[0];
            }
            s
        })
    });
}

fn weight_step(c: &mut Criterion) {
    let params = ClusterParams { classes: 4, per_class: 100, ..Default::default() };
    let data = clusters(&params, 3);
    let tax = Taxonomy::flat(params.classes);
    let cfg = SolverConfig { lambda: 0.1, max_epochs: 1, ..SolverConfig::for_loss(LossKind::LargeMargin) };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch/400", |b| {
        b.iter(|| train(&tax, black_box(&data), None, &cfg, LossKind::LargeMargin, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assignment, scoring, weight_step);
criterion_main!(benches);
