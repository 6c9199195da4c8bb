use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidlab_bench::warm_learner;
use sidlab_core::env::Action;
use sidlab_core::sf::SuccessorFeatures;
use sidlab_core::{Convention, Embedding, GridEnv, GridSpec, SfTable};

fn sf_update(c: &mut Criterion) {
    let spec = GridSpec::builtin("flytrap").unwrap();
    let n = spec.n_states();
    let mut sf = SfTable::new(Arc::new(Embedding::one_hot(n)), 0.98, 0.1, Convention::NextStateOnly);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("sf_td_update_flytrap", |b| {
        b.iter(|| {
            let s = rng.random_range(0..n);
            sf.td_update(s, (s + 1) % n).unwrap();
        })
    });
    c.bench_function("sfc_reward_flytrap", |b| {
        b.iter(|| {
            let s = rng.random_range(0..n);
            black_box(sf.sfc_reward(s, (s + 7) % n))
        })
    });
}

fn learner_step(c: &mut Criterion) {
    for agent in ["sid", "m"] {
        let (_, mut learner, buffer) = warm_learner("flytrap", agent, 4);
        c.bench_function(&format!("learner_step_{agent}_flytrap"), |b| {
            b.iter(|| black_box(learner.step(&buffer).unwrap()))
        });
    }
}

fn env_step(c: &mut Criterion) {
    let spec = Arc::new(GridSpec::builtin("flytrap").unwrap());
    let mut env = GridEnv::new(spec, 0);
    env.reset();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("env_step_flytrap", |b| {
        b.iter(|| {
            let a = Action::ALL[rng.random_range(0..4)];
            if env.step(a).unwrap().done {
                env.reset();
            }
        })
    });
}

criterion_group!(benches, sf_update, learner_step, env_step);
criterion_main!(benches);
