//! Run orchestration: builds actors and the learner from a config, drives
//! them until the step budget is spent, then evaluates the extrinsic head.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::actor::{Actor, EpisodeStats, Snapshot};
use super::learner::{Learner, LearnerParams, StepDiagnostics};
use super::scheduler::{Scheduler, SchedulerKind};
use super::{AgentKind, TaskId};
use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::intrinsic::Normalizer;
use crate::qlearn::{epsilon_for_actor, QMode, ValueApproximator};
use crate::replay::{NullSink, Transition, TwoTierBuffer};
use crate::report::RunManifest;
use crate::sf::heatmap;

pub const METRICS_HEADER: &str = "episode,env_steps,return,task_E_steps,task_I_steps,success";

/// One row of the metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Cumulative environment steps at the end of this episode.
    pub env_steps: u64,
    pub ret: f64,
    pub task_e_steps: usize,
    pub task_i_steps: usize,
    pub success: bool,
    pub actor: usize,
    pub tasks: String,
}

impl EpisodeRecord {
    fn from_stats(episode: u64, env_steps: u64, st: &EpisodeStats) -> Self {
        EpisodeRecord {
            episode,
            env_steps,
            ret: st.extrinsic_return,
            task_e_steps: st.task_steps[TaskId::Extrinsic.index()],
            task_i_steps: st.task_steps[TaskId::Intrinsic.index()],
            success: st.success,
            actor: st.actor,
            tasks: st.task_sequence(),
        }
    }
}

/// Learner statistics averaged over a window of learner steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerRecord {
    pub learner_steps: u64,
    pub env_steps: u64,
    pub raw_intrinsic_mean: f64,
    pub normalized_intrinsic_mean: f64,
    pub extrinsic_scale: f64,
    pub td_extrinsic_mean: f64,
    pub td_intrinsic_mean: f64,
}

#[derive(Debug, Default)]
struct DiagWindow {
    n: u64,
    raw: f64,
    norm: f64,
    td_e: f64,
    td_i: f64,
    scale: f64,
}

impl DiagWindow {
    fn add(&mut self, d: &StepDiagnostics) {
        self.n += 1;
        self.raw += d.raw_intrinsic_mean;
        self.norm += d.normalized_intrinsic_mean;
        self.td_e += d.td_extrinsic_mean;
        self.td_i += d.td_intrinsic_mean;
        self.scale = d.extrinsic_scale;
    }

    fn flush(&mut self, learner_steps: u64, env_steps: u64) -> Option<LearnerRecord> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let rec = LearnerRecord {
            learner_steps,
            env_steps,
            raw_intrinsic_mean: self.raw / n,
            normalized_intrinsic_mean: self.norm / n,
            extrinsic_scale: self.scale,
            td_extrinsic_mean: self.td_e / n,
            td_intrinsic_mean: self.td_i / n,
        };
        *self = DiagWindow::default();
        Some(rec)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: Config,
    pub seed: u64,
    pub spec: Arc<GridSpec>,
    pub learner: Learner,
    pub episodes: Vec<EpisodeRecord>,
    pub learner_log: Vec<LearnerRecord>,
    pub eval: Vec<EpisodeRecord>,
    pub env_steps: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for one consumer of randomness.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream))
}

const STREAM_LEARNER: u64 = 1;
const STREAM_QINIT: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_ACTOR: u64 = 100;

struct Setup {
    spec: Arc<GridSpec>,
    learner: Learner,
    actors: Vec<Actor>,
    buffer: TwoTierBuffer,
}

fn setup(cfg: &Config, seed: u64) -> Result<Setup> {
    cfg.validate()?;
    let spec = Arc::new(cfg.build_spec()?);
    let n = spec.n_states();
    let embedding = Arc::new(cfg.build_embedding(n)?);
    let alpha = cfg.q.alpha();
    let q = match cfg.q.mode {
        QMode::Tabular => ValueApproximator::tabular(n, alpha),
        QMode::Dense => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_QINIT));
            ValueApproximator::dense(Arc::clone(&embedding), alpha, &mut rng)
        }
    }
    .with_discounts(cfg.q.gamma_e, cfg.intrinsic.gamma_i);
    let learner = Learner::new(
        LearnerParams {
            agent: cfg.agent.kind,
            intrinsic: cfg.intrinsic_kind(),
            intrinsic_scale: cfg.intrinsic.scale,
            batch: cfg.replay.batch,
            high_share: cfg.replay.high_share,
        },
        q,
        cfg.q.sync_interval,
        embedding,
        cfg.sf.gamma,
        cfg.sf.alpha,
        cfg.sf.convention,
        Normalizer::new(cfg.intrinsic.eta, cfg.intrinsic.gamma_i),
        derive_seed(seed, STREAM_LEARNER),
    );
    let sched = cfg.scheduler_section();
    let n_actors = cfg.agent.actors;
    let actors = (1..=n_actors)
        .map(|i| {
            let eps = epsilon_for_actor(i, n_actors, cfg.agent.epsilon_base, cfg.agent.epsilon_alpha);
            let scheduler = match sched.kind() {
                SchedulerKind::MacroQ => Scheduler::macro_q(n, sched.slots, sched.macro_alpha, cfg.q.gamma_e, eps),
                kind => Scheduler::new(kind, sched.slots),
            };
            Actor::new(
                i,
                eps,
                cfg.agent.kind,
                cfg.agent.k,
                cfg.q.gamma_e,
                Arc::clone(&spec),
                scheduler,
                derive_seed(seed, STREAM_ACTOR + i as u64),
            )
        })
        .collect();
    Ok(Setup {
        spec,
        learner,
        actors,
        buffer: TwoTierBuffer::new(cfg.replay.main_capacity, cfg.replay.high_capacity),
    })
}

/// Trains according to `cfg`, using `cfg.run.seed`.
pub fn run_training(cfg: &Config) -> Result<RunOutput> {
    let seed = cfg.run.seed;
    let Setup {
        spec,
        mut learner,
        mut actors,
        buffer,
    } = setup(cfg, seed)?;
    let (episodes, learner_log, env_steps) = if cfg.run.deterministic {
        run_deterministic(cfg, &mut learner, &mut actors, buffer)?
    } else {
        run_concurrent(cfg, &mut learner, &mut actors, buffer)?
    };
    let eval = evaluate(
        &learner.q,
        Arc::clone(&spec),
        cfg.run.eval_episodes,
        cfg.run.eval_epsilon,
        derive_seed(seed, STREAM_EVAL),
    )?;
    log::info!(
        "run finished: {} episodes, {} env steps, {} learner steps, eval success {:.2}",
        episodes.len(),
        env_steps,
        learner.steps,
        success_rate(&eval)
    );
    Ok(RunOutput {
        config: cfg.clone(),
        seed,
        spec,
        learner,
        episodes,
        learner_log,
        eval,
        env_steps,
    })
}

type Trace = (Vec<EpisodeRecord>, Vec<LearnerRecord>, u64);

/// Single thread: actors take turns, one episode each, and the learner
/// runs a fixed number of steps after every episode.
fn run_deterministic(cfg: &Config, learner: &mut Learner, actors: &mut [Actor], mut buffer: TwoTierBuffer) -> Result<Trace> {
    let mut snapshot = learner.snapshot();
    let mut records = Vec::new();
    let mut log = Vec::new();
    let mut window = DiagWindow::default();
    let mut env_steps = 0u64;
    let mut episode = 0u64;
    while env_steps < cfg.run.budget {
        let actor = &mut actors[episode as usize % actors.len()];
        let st = actor.run_episode(&snapshot, &mut buffer)?;
        env_steps += st.steps as u64;
        records.push(EpisodeRecord::from_stats(episode, env_steps, &st));
        episode += 1;
        if buffer.main_len() >= cfg.run.learn_start.max(1) {
            for _ in 0..cfg.run.learner_steps_per_episode {
                let d = learner.step(&buffer)?;
                window.add(&d);
                if learner.steps.is_multiple_of(cfg.run.snapshot_interval) {
                    snapshot = learner.snapshot();
                    log.extend(window.flush(learner.steps, env_steps));
                }
            }
        }
    }
    log.extend(window.flush(learner.steps, env_steps));
    Ok((records, log, env_steps))
}

/// One thread per actor plus the learner on the calling thread. The
/// learner is throttled to `learner_steps_per_episode` per finished episode.
fn run_concurrent(cfg: &Config, learner: &mut Learner, actors: &mut [Actor], buffer: TwoTierBuffer) -> Result<Trace> {
    let budget = cfg.run.budget;
    let buffer = Arc::new(Mutex::new(buffer));
    let snapshot: RwLock<Arc<Snapshot>> = RwLock::new(Arc::new(learner.snapshot()));
    let env_steps = AtomicU64::new(0);
    let records: Mutex<(u64, Vec<EpisodeRecord>)> = Mutex::new((0, Vec::new()));
    let episodes_done = AtomicU64::new(0);
    let actors_running = AtomicUsize::new(actors.len());
    let mut log = Vec::new();

    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for actor in actors.iter_mut() {
            let mut sink = Arc::clone(&buffer);
            let (snapshot, env_steps, records, episodes_done, actors_running) =
                (&snapshot, &env_steps, &records, &episodes_done, &actors_running);
            handles.push(scope.spawn(move || -> Result<()> {
                let result = (|| {
                    while env_steps.load(Ordering::SeqCst) < budget {
                        let snap = Arc::clone(&snapshot.read().expect("snapshot lock"));
                        let st = actor.run_episode(&snap, &mut sink)?;
                        let mut rec = records.lock().expect("records lock");
                        let total = env_steps.fetch_add(st.steps as u64, Ordering::SeqCst) + st.steps as u64;
                        let idx = rec.0;
                        rec.0 += 1;
                        rec.1.push(EpisodeRecord::from_stats(idx, total, &st));
                        episodes_done.fetch_add(1, Ordering::SeqCst);
                    }
                    Ok(())
                })();
                actors_running.fetch_sub(1, Ordering::SeqCst);
                result
            }));
        }

        let mut window = DiagWindow::default();
        let mut run_steps = 0u64;
        loop {
            let allowed = episodes_done.load(Ordering::SeqCst) * cfg.run.learner_steps_per_episode as u64;
            let finished = actors_running.load(Ordering::SeqCst) == 0;
            let batch: Option<Vec<Transition>> = if run_steps < allowed {
                let b = buffer.lock().expect("replay lock");
                if b.main_len() >= cfg.run.learn_start.max(1) {
                    Some(learner.sample_batch(&b)?)
                } else {
                    None
                }
            } else {
                None
            };
            match batch {
                Some(batch) => {
                    let d = learner.step_on_batch(&batch)?;
                    run_steps += 1;
                    window.add(&d);
                    if learner.steps.is_multiple_of(cfg.run.snapshot_interval) {
                        *snapshot.write().expect("snapshot lock") = Arc::new(learner.snapshot());
                        log.extend(window.flush(learner.steps, env_steps.load(Ordering::SeqCst)));
                    }
                }
                None if finished => break,
                None => std::thread::yield_now(),
            }
        }
        log.extend(window.flush(learner.steps, env_steps.load(Ordering::SeqCst)));
        for h in handles {
            h.join().expect("actor thread panicked")?;
        }
        Ok(())
    })?;
    let (_, records) = records.into_inner().expect("records lock");
    Ok((records, log, env_steps.into_inner()))
}

/// Plays `episodes` episodes following the extrinsic head, epsilon-greedy
/// with `epsilon`. States where the head has no preference get a random
/// action, as during training.
pub fn evaluate(
    q: &ValueApproximator,
    spec: Arc<GridSpec>,
    episodes: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    if q.n_states() != spec.n_states() {
        return Err(Error::MismatchedEnv(
            format!("{} states in the value function", q.n_states()),
            format!("{} ({} states)", spec.name(), spec.n_states()),
        ));
    }
    let snap = Snapshot {
        q: q.clone(),
        extrinsic_scale: 1.0,
        learner_steps: 0,
    };
    let mut actor = Actor::new(
        1,
        epsilon,
        AgentKind::M,
        1,
        q.gamma_e,
        spec,
        Scheduler::new(SchedulerKind::Random, 1),
        seed,
    );
    let mut out = Vec::with_capacity(episodes);
    let mut steps = 0u64;
    for e in 0..episodes {
        let st = actor.run_episode(&snap, &mut NullSink)?;
        steps += st.steps as u64;
        out.push(EpisodeRecord::from_stats(e as u64, steps, &st));
    }
    Ok(out)
}

pub fn success_rate(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.success).count() as f64 / records.len() as f64
}

pub fn mean_return(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.ret).sum::<f64>() / records.len() as f64
}

pub fn metrics_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.episode,
            r.env_steps,
            r.ret,
            r.task_e_steps,
            r.task_i_steps,
            u8::from(r.success)
        )
        .unwrap();
    }
    out
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl RunOutput {
    /// Success rate of the post-training evaluation episodes.
    pub fn final_success_rate(&self) -> f64 {
        success_rate(&self.eval)
    }

    /// Mean extrinsic return of the post-training evaluation episodes.
    pub fn final_return(&self) -> f64 {
        mean_return(&self.eval)
    }

    /// Success rate over the last `n` training episodes.
    pub fn trailing_success_rate(&self, n: usize) -> f64 {
        success_rate(&self.episodes[self.episodes.len().saturating_sub(n)..])
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.episodes)
    }

    pub fn learner_csv(&self) -> String {
        let mut out = String::from(
            "learner_steps,env_steps,raw_intrinsic_mean,normalized_intrinsic_mean,extrinsic_scale,td_extrinsic_mean,td_intrinsic_mean\n",
        );
        for r in &self.learner_log {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.learner_steps,
                r.env_steps,
                r.raw_intrinsic_mean,
                r.normalized_intrinsic_mean,
                r.extrinsic_scale,
                r.td_extrinsic_mean,
                r.td_intrinsic_mean
            )
            .unwrap();
        }
        out
    }

    pub fn tasks_csv(&self) -> String {
        let mut out = String::from("episode,actor,tasks\n");
        for r in &self.episodes {
            writeln!(out, "{},{},{}", r.episode, r.actor, r.tasks).unwrap();
        }
        out
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.config.clone(),
            self.seed,
            self.env_steps,
            self.episodes.len() as u64,
            self.learner.clone(),
        )
    }

    /// Writes metrics, evaluation, learner log, task sequences, checkpoint,
    /// heatmaps and the manifest into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<RunManifest> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut outputs = Vec::new();
        let mut put = |name: &str, contents: Vec<u8>| -> Result<()> {
            write(&dir.join(name), contents)?;
            outputs.push(name.to_string());
            Ok(())
        };
        put("metrics.csv", self.metrics_csv().into_bytes())?;
        put("eval.csv", metrics_csv(&self.eval).into_bytes())?;
        put("learner.csv", self.learner_csv().into_bytes())?;
        put("tasks.csv", self.tasks_csv().into_bytes())?;
        put("config.toml", self.config.to_toml_string().into_bytes())?;
        put("checkpoint.json", self.checkpoint().to_json()?.into_bytes())?;
        let anchor = self.spec.starts()[0];
        let sd = heatmap::sd_field(&self.learner.sf, &self.spec, anchor)?;
        put("heatmap_sd.csv", sd.to_csv().into_bytes())?;
        put("heatmap_sd.pgm", sd.to_pgm())?;
        let sfc = heatmap::sfc_field(&self.learner.sf, &self.spec);
        put("heatmap_sfc.csv", sfc.to_csv().into_bytes())?;
        put("heatmap_sfc.pgm", sfc.to_pgm())?;
        outputs.push("manifest.json".into());
        let manifest = RunManifest::new(&self.config, vec![self.seed], self.spec.name(), outputs);
        manifest.write(&dir.join("manifest.json"))?;
        Ok(manifest)
    }
}

/// Shared setup for tests and benches that need a ready learner and buffer.
pub fn build_learner(cfg: &Config, seed: u64) -> Result<(Arc<GridSpec>, Learner)> {
    let s = setup(cfg, seed)?;
    Ok((s.spec, s.learner))
}

/// The actors a run with this config would use.
pub fn build_actors(cfg: &Config, seed: u64) -> Result<Vec<Actor>> {
    Ok(setup(cfg, seed)?.actors)
}
