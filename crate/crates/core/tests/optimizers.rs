use morphx_core::optimizers::{cma_ask, cma_tell, es_step, gaussian_mutation, CmaState, EsConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rastrigin(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos() + 10.0).sum::<f64>()
}

#[test]
fn plus_selection_never_loses_its_best() {
    let config = EsConfig { mu: 5, lambda: 10, elitist: true, step_size: 0.3 };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pop: Vec<Vec<f64>> = (0..10).map(|_| gaussian_mutation(&[3.0; 6], 1.0, &mut rng)).collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| rastrigin(x)).collect();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..1_000 {
        let step = config.step_size;
        let off = es_step(&pop, &fit, &config, |x: &Vec<f64>, r| gaussian_mutation(x, step, r), &mut rng).unwrap();
        let child_fit: Vec<f64> = off.children.iter().map(|x| rastrigin(x)).collect();
        (pop, fit) = off.into_pool(child_fit);
        let now = fit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(now >= best);
        best = now;
    }
    assert!(best > -20.0, "{best}");
}

#[test]
fn cma_runs_are_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = CmaState::new(vec![1.0; 4], 0.5);
        for _ in 0..50 {
            let xs = cma_ask(&state, &mut rng);
            let fs: Vec<f64> = xs.iter().map(|x| -x.iter().map(|v| v * v).sum::<f64>()).collect();
            state = cma_tell(&state, &xs, &fs).unwrap();
        }
        state
    };
    let (a, b) = (run(), run());
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.sigma, b.sigma);
    assert_eq!(a.covariance, b.covariance);
}
