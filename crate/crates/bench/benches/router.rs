use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use besteffort::eval::{run_eval, scenario, EvalSetup, Policy};
use besteffort::policy::{BatchScratch, LossKind, QNetwork, DEFAULT_HIDDEN};
use besteffort::reward::RewardSpec;
use besteffort::rng::rng_from_seed;
use besteffort::sim::ClusterSpec;
use besteffort::trainer::{train_step, Optimizer, OptimizerKind, ReplayBuffer, StepScratch, TrainConfig, Transition};

fn network() -> QNetwork {
    QNetwork::new(8, DEFAULT_HIDDEN, 3, &mut rng_from_seed(1))
}

fn encoded(i: usize) -> Vec<f64> {
    let mut x = vec![0.0; 8];
    x[i % 4] = 1.0;
    x[4] = (i % 50) as f64 / 128.0;
    x[5] = (i % 20) as f64 / 32.0;
    x[6] = (i % 9) as f64 / 8.0;
    x[7] = (i % 48) as f64 / 48.0;
    x
}

fn forward(c: &mut Criterion) {
    let net = network();
    let x = encoded(3);
    let (mut h, mut q) = (vec![0.0; DEFAULT_HIDDEN], vec![0.0; 3]);
    c.bench_function("forward_single", |b| b.iter(|| net.forward_into(black_box(&x), &mut h, &mut q).unwrap()));

    let batch: Vec<f64> = (0..1024).flat_map(encoded).collect();
    let mut scratch = BatchScratch::default();
    c.bench_function("forward_batch_1024", |b| b.iter(|| net.forward_batch(black_box(&batch), 1024, &mut scratch)));

    let actions: Vec<usize> = (0..1024).map(|i| i % 3).collect();
    let targets: Vec<f64> = (0..1024).map(|i| (i % 10) as f64 / 10.0).collect();
    let mut grad = Vec::new();
    c.bench_function("loss_and_gradient_1024", |b| {
        b.iter(|| net.loss_and_gradient(black_box(&batch), &actions, &targets, LossKind::Huber, &mut scratch, &mut grad))
    });
}

fn update(c: &mut Criterion) {
    let cfg = TrainConfig { warmup: 1024, ..TrainConfig::default() };
    let mut buffer = ReplayBuffer::new(20_000, 8).unwrap();
    for i in 0..20_000 {
        let t = Transition {
            state: encoded(i),
            action: i % 3,
            reward: (i % 7) as f64 / 7.0,
            next_state: encoded(i + 1),
            continue_flag: 1.0,
            request_id: i as u64,
        };
        buffer.push(&t).unwrap();
    }
    let mut online = network();
    let mut target = online.clone();
    let mut opt = Optimizer::new(OptimizerKind::Adam, cfg.learning_rate, online.params().len());
    let mut rng = rng_from_seed(2);
    let mut scratch = StepScratch::default();
    let mut step = 0;
    c.bench_function("train_step_1024", |b| {
        b.iter(|| {
            step += 1;
            train_step(&mut online, &mut target, &buffer, &cfg, step, &mut opt, &mut rng, &mut scratch)
        })
    });
}

fn replay(c: &mut Criterion) {
    let (cluster, reward) = (ClusterSpec::default(), RewardSpec::default());
    let sc = scenario("unpredictable-2", &cluster, &reward).unwrap();
    let trace = sc.generate(1).unwrap();
    let setup = EvalSetup { rate_mode: sc.rate_mode, ..EvalSetup::new(cluster, reward) };
    let mut group = c.benchmark_group("replay_10k_requests");
    group.sample_size(10);
    group.bench_function("static_medium", |b| b.iter(|| run_eval(&Policy::Static(1), &trace, &setup, 1).unwrap()));
    let greedy = Policy::Greedy(network());
    group.bench_function("greedy_network", |b| b.iter(|| run_eval(&greedy, &trace, &setup, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, forward, update, replay);
criterion_main!(benches);
