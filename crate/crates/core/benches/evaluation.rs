use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ne_sgd::data::{generate_two_moons, split, Split};
use ne_sgd::evolution::{evaluate_fitness, FitnessContext};
use ne_sgd::exec::Executor;
use ne_sgd::genome::Genome;
use ne_sgd::nn::{build_model, sgd_train, Architecture, Provenance, TrainConfig};
use ne_sgd::seed::{derive_seed, rng_from_seed, Purpose};
use ne_sgd::suppression::{agglomerate, build_distance_matrix, Linkage};

fn generation_evaluation(c: &mut Criterion) {
    let data = split(&generate_two_moons(400, 0.25, 1).unwrap(), (0.6, 0.2, 0.2), 1).unwrap();
    let train = data.samples(Split::Train);
    let validation = data.samples(Split::Validation);
    let arch = Architecture::new(vec![2, 32, 32, 2]).unwrap();
    let config = TrainConfig {
        epochs_alpha: 20,
        epochs_beta: 5,
        batch_size: 32,
        lr_retained: 0.001,
        lr_reinit: 0.01,
        weight_decay: 5e-4,
        momentum: 0.9,
    };
    let mut model = build_model(&arch, 3);
    sgd_train(&mut model, &train, &config, 20, &[0.01; 6], &mut rng_from_seed(4)).unwrap();
    let base = model.snapshot(Provenance::Alpha);
    let ctx = FitnessContext {
        base: &base,
        template: &model,
        train: &train,
        validation: &validation,
        config: &config,
        epochs: config.epochs_beta,
    };

    let mut rng = rng_from_seed(7);
    let genomes: Vec<Genome> = (0..8).map(|_| Genome::random(6, &mut rng).unwrap()).collect();

    let mut group = c.benchmark_group("evaluate_generation");
    group.sample_size(10);
    for threads in [1usize, 2, 4] {
        let executor = Executor::new(threads).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, _| {
            b.iter(|| {
                let scores = executor.map(&genomes, |g| {
                    let id = g.count_ones() as u64;
                    evaluate_fitness(
                        &ctx,
                        g,
                        derive_seed(1, 0, id, Purpose::Reinit),
                        derive_seed(1, 0, id, Purpose::Retrain),
                    )
                    .unwrap()
                    .fitness
                });
                black_box(scores)
            })
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mut rng = rng_from_seed(11);
    let genomes: Vec<Genome> = (0..60).map(|_| Genome::random(32, &mut rng).unwrap()).collect();
    c.bench_function("agglomerate_60_to_30", |b| {
        b.iter(|| {
            let m = build_distance_matrix(black_box(&genomes)).unwrap();
            black_box(agglomerate(&m, 30, Linkage::Average).unwrap())
        })
    });
}

criterion_group!(benches, generation_evaluation, clustering);
criterion_main!(benches);
