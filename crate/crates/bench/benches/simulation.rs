use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use morphx_bench::quad_walker;
use morphx_core::optimizers::{cma_ask, cma_tell};
use morphx_core::{
    control_dim, simulate_episode, train_controller, CmaState, ControllerAlgorithm, ControllerParams, DeskEnvironment,
    SeedTree, StreamKind, TrainingBudget, DEFAULT_DT,
};

fn episode(c: &mut Criterion) {
    let graph = quad_walker();
    let controller = ControllerParams::new([0.3, 0.0, 0.0, 0.3, 1.6, 0.0].to_vec());
    assert_eq!(controller.len(), control_dim(&graph));
    c.bench_function("simulate_episode_500", |b| {
        b.iter(|| simulate_episode(&graph, &controller, 500, DEFAULT_DT).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let graph = quad_walker();
    let env = DeskEnvironment::default();
    let budget = TrainingBudget::new(16, 500).unwrap();
    let mut group = c.benchmark_group("train_controller_16x500");
    group.sample_size(20);
    for algorithm in [ControllerAlgorithm::Cmaes, ControllerAlgorithm::MuCommaLambda] {
        group.bench_function(format!("{algorithm:?}"), |b| {
            b.iter_batched(
                || SeedTree::new(1).stream(StreamKind::ControllerTraining(0)),
                |mut rng| train_controller(&env, &graph, budget, algorithm, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn cma_generation(c: &mut Criterion) {
    let state = CmaState::new(vec![0.0; 24], 0.6);
    let mut rng = SeedTree::new(2).stream(StreamKind::DesignInit);
    c.bench_function("cma_ask_tell_d24", |b| {
        b.iter(|| {
            let xs = cma_ask(&state, &mut rng);
            let fs: Vec<f64> = xs.iter().map(|x| -x.iter().map(|v| v * v).sum::<f64>()).collect();
            cma_tell(&state, &xs, &fs).unwrap()
        })
    });
}

criterion_group!(benches, episode, training, cma_generation);
criterion_main!(benches);
