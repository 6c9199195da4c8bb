//! Shared setup for the kernel benchmarks.

use std::sync::Arc;

use sidlab_core::sid::training::{build_actors, build_learner};
use sidlab_core::{Config, GridSpec, Learner, TwoTierBuffer};

/// A learner plus a replay buffer filled by `episodes` rounds of all actors
/// acting on the untrained snapshot.
pub fn warm_learner(env: &str, agent: &str, episodes: usize) -> (Arc<GridSpec>, Learner, TwoTierBuffer) {
    let text = format!("[env]\nname = \"{env}\"\n[agent]\nkind = \"{agent}\"\n");
    let cfg = Config::from_toml_str(&text).expect("bench config");
    let (spec, learner) = build_learner(&cfg, 0).expect("learner");
    let mut actors = build_actors(&cfg, 0).expect("actors");
    let mut buffer = TwoTierBuffer::new(cfg.replay.main_capacity, cfg.replay.high_capacity);
    let snap = learner.snapshot();
    for _ in 0..episodes {
        for actor in actors.iter_mut() {
            actor.run_episode(&snap, &mut buffer).expect("episode");
        }
    }
    (spec, learner, buffer)
}
