use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use corrkd::autodiff::Tape;
use corrkd::losses::{cl_loss, kd_loss, EffectiveWeights, LossWeights};
use corrkd::probe::{Forest, ForestConfig};
use corrkd::rng::rng_for;
use corrkd::trainer::{Featurizer, Trainer};
use corrkd_bench::fixture;
use rand::Rng;

fn features(c: &mut Criterion) {
    let f = fixture();
    let featurizer = Featurizer::new(&f.config.features).unwrap();
    let batch = &f.corpus[..f.config.batch_size];
    c.bench_function("logmel batch of 8 x 1 s", |b| b.iter(|| featurizer.batch(batch).unwrap()));
}

fn losses(c: &mut Criterion) {
    let f = fixture();
    let mut trainer = Trainer::new(f.config.clone(), &f.teacher, &f.corpus).unwrap();
    let batch = trainer.prepare_batch(0).unwrap();
    let w = EffectiveWeights::from(LossWeights::default());
    let mut group = c.benchmark_group("loss forward+backward");
    group.sample_size(20);
    group.bench_function("kd", |b| {
        b.iter(|| {
            let tape = Tape::new();
            let fwd = f.student.forward(&tape, &batch.student_features).unwrap();
            let loss = kd_loss(&tape, fwd.predictions, tape.constant(batch.teacher_targets.clone()), 1.0).unwrap();
            tape.backward(loss).unwrap()
        })
    });
    group.bench_function("cl", |b| {
        b.iter(|| {
            let tape = Tape::new();
            let fwd = f.student.forward(&tape, &batch.student_features).unwrap();
            let terms = cl_loss(&tape, fwd.predictions, tape.constant(batch.teacher_targets.clone()), w).unwrap();
            tape.backward(terms.total).unwrap()
        })
    });
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let f = fixture();
    let mut trainer = Trainer::new(f.config.clone(), &f.teacher, &f.corpus).unwrap();
    let mut group = c.benchmark_group("training step");
    group.sample_size(10);
    group.bench_function("prepare batch (views, features, teacher)", |b| {
        let mut step = 0;
        b.iter(|| {
            step += 1;
            trainer.prepare_batch(step).unwrap()
        })
    });
    let batch = trainer.prepare_batch(0).unwrap();
    group.bench_function("apply step (student + Adam)", |b| {
        b.iter_batched(
            || f.student.clone(),
            |mut student| trainer.apply_step(&mut student, &batch).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn forest(c: &mut Criterion) {
    let mut rng = rng_for(0, &[1]);
    let x: Vec<Vec<f64>> = (0..320)
        .map(|_| (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let y: Vec<usize> = (0..320).map(|i| i % 4).collect();
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    group.bench_function("fit 100 trees on 320 x 32", |b| {
        b.iter(|| Forest::fit(&x, &y, 4, &ForestConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, features, losses, training_step, forest);
criterion_main!(benches);
