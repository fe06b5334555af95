use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use ehf_core::forest::{label_matrix, training_rows, Dataset, Forest, ForestConfig, LabelRule};
use ehf_core::frontier::pareto_indices;
use ehf_core::hedging::{compute_trade_mask, risk_and_gradient, CostModel, DeltaPolicy, PolicyConfig, RiskConfig};
use ehf_core::market_sim::{simulate_heston, HestonParams, PathSet, SimConfig};
use ehf_core::nn::{Activation, Mlp, Parameterized};
use ehf_core::ContractSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn paths(n_paths: usize, seed: u64) -> PathSet {
    simulate_heston(&HestonParams::high_vol(), &SimConfig { n_paths, seed, ..SimConfig::default() }).unwrap()
}

fn simulation(c: &mut Criterion) {
    let cfg = SimConfig { n_paths: 10_000, seed: 1, ..SimConfig::default() };
    c.bench_function("simulate_heston 10k x 30", |b| {
        b.iter(|| simulate_heston(black_box(&HestonParams::high_vol()), &cfg).unwrap())
    });
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = Mlp::new(&[5, 32, 32, 1], Activation::Relu, Activation::Identity, &mut rng);
    let mut tape = vec![0.0; net.tape_len()];
    for v in &mut tape[..5] {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut grads = net.zero_gradient().blocks;
    c.bench_function("mlp forward 5-32-32-1", |b| b.iter(|| net.forward_record(black_box(&mut tape))[0]));
    c.bench_function("mlp forward+backward 5-32-32-1", |b| {
        b.iter(|| {
            net.forward_record(&mut tape);
            net.backward(black_box(&tape), &[1.0], &mut grads, None);
        })
    });
}

fn episode_batch(c: &mut Criterion) {
    let batch = paths(1000, 3);
    let mask = compute_trade_mask(&batch, 0.05).unwrap();
    let contract = ContractSpec::default();
    let (cost, risk) = (CostModel::new(0.02), RiskConfig::new(0.5));
    let mut group = c.benchmark_group("episode batch of 1000");
    group.sample_size(20);
    for (name, cfg) in [("dense", PolicyConfig::dense()), ("gru", PolicyConfig::gru())] {
        let policy = DeltaPolicy::new(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| risk_and_gradient(&batch, &policy, &mask, None, &contract, &cost, &risk).unwrap())
        });
    }
    group.finish();
}

fn forest_fit(c: &mut Criterion) {
    let train = paths(2000, 5);
    let labels = label_matrix(&train, 0.05, LabelRule::LocalExtremum).unwrap();
    let (rows, y) = training_rows(&train, &labels).unwrap();
    let cfg = ForestConfig { n_trees: 10, ..ForestConfig::default() };
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    group.bench_function("fit 10 trees on 56k days", |b| {
        b.iter(|| Forest::fit(&Dataset::new(&rows, &y).unwrap(), black_box(&cfg)).unwrap())
    });
    group.finish();
}

fn pareto(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    c.bench_function("pareto filter of 10k points", |b| {
        b.iter_batched(
            || (0..10_000).map(|_| (rng.random_range(0.0..10.0), rng.random_range(-20.0..0.0))).collect::<Vec<_>>(),
            |pts| pareto_indices(&pts),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, simulation, mlp, episode_batch, forest_fit, pareto);
criterion_main!(benches);
