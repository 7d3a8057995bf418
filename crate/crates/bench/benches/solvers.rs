use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flowmatch::message_flow::{run_message_flow, FlowMode, FlowSchedule, Neighborhood, ParameterStore};
use flowmatch::ot::{
    build_partial_problem, cosine_cost_matrix, exact_solve_oracle, sinkhorn_solve, CostMatrix, MarginalWeights,
    SinkhornConfig,
};
use flowmatch::tensor_io::{synthesize_episode, EpisodeSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_costs(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..2.0f32)).collect()
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    for side in [8usize, 16] {
        let n = side * side;
        let cost = CostMatrix::new(n, n, random_costs(n * n, 7)).unwrap();
        let w = MarginalWeights::unit(n, n, (n / 4) as f64).unwrap();
        let problem = build_partial_problem(&w, &cost).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &problem, |b, p| {
            b.iter(|| sinkhorn_solve(p, &SinkhornConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let cost = CostMatrix::new(8, 8, random_costs(64, 3)).unwrap();
    let w = MarginalWeights::new(vec![3.0; 8], vec![2.0; 8], 10.0).unwrap();
    let problem = build_partial_problem(&w, &cost).unwrap();
    c.bench_function("oracle_8x8", |b| b.iter(|| exact_solve_oracle(&problem).unwrap()));
}

fn features(c: &mut Criterion) {
    let spec = EpisodeSpec { height: 16, width: 16, channels: 32, ..Default::default() };
    let ep = synthesize_episode(1, &spec).unwrap();
    c.bench_function("cosine_cost_256x256", |b| b.iter(|| cosine_cost_matrix(&ep.support, &ep.query).unwrap()));

    let schedule = FlowSchedule { mode: FlowMode::Iterative, steps: 1, neighborhood: Neighborhood::Eight };
    let store = ParameterStore::random(32, schedule, 1);
    c.bench_function("message_flow_16x16x32", |b| {
        b.iter(|| run_message_flow(&ep.query, &ep.support, &schedule, &store).unwrap())
    });
}

criterion_group!(benches, sinkhorn, oracle, features);
criterion_main!(benches);
