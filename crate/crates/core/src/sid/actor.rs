//! Actors play episodes against a parameter snapshot and push K-step
//! transitions into replay. They never compute intrinsic rewards.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scheduler::{slot_length, MacroTransition, Scheduler, SchedulerContext, SchedulerKind};
use super::{AgentKind, TaskId};
use crate::env::{Action, GridEnv, GridSpec, NUM_ACTIONS};
use crate::error::Result;
use crate::qlearn::{argmax, k_step_target, ValueApproximator};
use crate::replay::{Transition, TransitionSink};
use crate::stats::RunningStats;

/// Read-only copy of the learner's state handed to actors.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub q: ValueApproximator,
    /// Multiplier the learner currently applies to extrinsic rewards.
    pub extrinsic_scale: f64,
    pub learner_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub actor: usize,
    pub steps: usize,
    pub extrinsic_return: f64,
    /// Steps spent following each task, indexed by [`TaskId::index`].
    pub task_steps: [usize; 2],
    pub success: bool,
    /// Task chosen for each slot, in order.
    pub tasks: Vec<TaskId>,
}

impl EpisodeStats {
    pub fn task_sequence(&self) -> String {
        self.tasks.iter().map(|t| t.letter()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
}

#[derive(Debug, Clone)]
pub struct Actor {
    /// 1-based actor index.
    pub id: usize,
    pub epsilon: f64,
    pub agent: AgentKind,
    pub k: usize,
    pub gamma_e: f64,
    env: GridEnv,
    rng: ChaCha8Rng,
    scheduler: Scheduler,
    q_mean: RunningStats,
    episodes: u64,
}

impl Actor {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        epsilon: f64,
        agent: AgentKind,
        k: usize,
        gamma_e: f64,
        spec: Arc<GridSpec>,
        scheduler: Scheduler,
        seed: u64,
    ) -> Self {
        assert!(k >= 1, "K must be at least 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = GridEnv::new(spec, rng.random());
        Actor {
            id,
            epsilon,
            agent,
            k,
            gamma_e,
            env,
            rng,
            scheduler,
            q_mean: RunningStats::new(),
            episodes: 0,
        }
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Epsilon-greedy on `head`. A head that has learned nothing about `s`
    /// (all values equal) gives no preference, so the actor moves at random
    /// instead of repeating the lowest-index action.
    fn act(&mut self, q: &ValueApproximator, head: TaskId, s: usize) -> usize {
        let values = q.q_values(head, s);
        let flat = values.iter().all(|&v| v == values[0]);
        if flat || self.rng.random::<f64>() < self.epsilon {
            self.rng.random_range(0..NUM_ACTIONS)
        } else {
            argmax(&values)
        }
    }

    fn emit(&self, queue: &VecDeque<Step>, s_end: usize, done: bool, episode_id: u64, step_index: usize) -> Transition {
        let first = queue[0];
        let mut sum = 0.0;
        let mut discount = 1.0;
        for st in queue {
            sum += discount * st.r;
            discount *= self.gamma_e;
        }
        Transition {
            s_start: first.s,
            a_start: first.a,
            discounted_reward_sum: sum,
            s_end,
            done,
            steps: queue.len(),
            pair_s: first.s,
            pair_s_next: first.s_next,
            episode_id,
            step_index,
        }
    }

    // Extrinsic K-step error against the snapshot; gates the high replay tier.
    fn gate_error(&self, snap: &Snapshot, t: &Transition) -> f64 {
        let q = &snap.q;
        let scale = match self.agent {
            AgentKind::M => 1.0,
            _ => snap.extrinsic_scale,
        };
        let target = k_step_target(
            q,
            q,
            TaskId::Extrinsic,
            scale * t.discounted_reward_sum,
            t.s_end,
            t.done,
            t.steps,
            self.gamma_e,
        );
        let err = (target - q.q_values(TaskId::Extrinsic, t.s_start)[t.a_start]).abs();
        if err.is_finite() {
            err
        } else {
            0.0
        }
    }

    /// Plays one full episode. Every environment step produces exactly one
    /// transition: full K-step tuples while the episode runs, then the
    /// shorter tails with `done` set once it ends.
    pub fn run_episode(&mut self, snap: &Snapshot, sink: &mut dyn TransitionSink) -> Result<EpisodeStats> {
        let episode_id = ((self.id as u64) << 40) | self.episodes;
        self.episodes += 1;
        let spec = Arc::clone(self.env.spec());
        let slot_len = slot_length(spec.max_steps(), self.scheduler.slots);
        let mut obs = self.env.reset();
        let mut queue: VecDeque<Step> = VecDeque::with_capacity(self.k + 1);
        let mut stats = EpisodeStats {
            actor: self.id,
            steps: 0,
            extrinsic_return: 0.0,
            task_steps: [0; 2],
            success: false,
            tasks: Vec::new(),
        };
        let mut task = TaskId::Extrinsic;
        // macro bookkeeping: slot start state, discounted slot return, length
        let mut slot = (obs.state_id, 0.0, 0usize);
        let mut t = 0usize;
        loop {
            let s = obs.state_id;
            let q_e = snap.q.max_value(TaskId::Extrinsic, s);
            if self.scheduler.kind == SchedulerKind::ThresholdQ(super::ThresholdVariant::RunningMean) {
                self.q_mean.push(q_e);
            }
            if t.is_multiple_of(slot_len) {
                if self.agent.uses_scheduler() {
                    if t > 0 && self.scheduler.kind == SchedulerKind::MacroQ {
                        self.scheduler.macro_q_update(&MacroTransition {
                            s_from: slot.0,
                            s_to: s,
                            task,
                            discounted_return: slot.1,
                            m: slot.2,
                            done: false,
                        })?;
                    }
                    let ctx = SchedulerContext {
                        state: s,
                        q_extrinsic: q_e,
                        running_q_mean: self.q_mean.mean(),
                        slot_index: t / slot_len,
                    };
                    task = self.scheduler.next_task(&ctx, &mut self.rng);
                }
                stats.tasks.push(task);
                slot = (s, 0.0, 0);
            }
            let a = self.act(&snap.q, task, s);
            let out = self.env.step(Action::from_index(a).expect("valid action"))?;
            slot.1 += self.gamma_e.powi(slot.2 as i32) * out.reward;
            slot.2 += 1;
            stats.task_steps[task.index()] += 1;
            stats.extrinsic_return += out.reward;
            queue.push_back(Step {
                s,
                a,
                r: out.reward,
                s_next: out.observation.state_id,
            });
            t += 1;
            if queue.len() == self.k {
                let tr = self.emit(&queue, out.observation.state_id, out.done, episode_id, t - self.k);
                let err = self.gate_error(snap, &tr);
                sink.push_transition(tr, err);
                queue.pop_front();
            }
            obs = out.observation;
            if out.done {
                while !queue.is_empty() {
                    let tr = self.emit(&queue, obs.state_id, true, episode_id, t - queue.len());
                    let err = self.gate_error(snap, &tr);
                    sink.push_transition(tr, err);
                    queue.pop_front();
                }
                stats.success = spec.is_terminal(obs.cell) && out.reward > 0.0;
                if self.agent.uses_scheduler() && self.scheduler.kind == SchedulerKind::MacroQ {
                    self.scheduler.macro_q_update(&MacroTransition {
                        s_from: slot.0,
                        s_to: obs.state_id,
                        task,
                        discounted_return: slot.1,
                        m: slot.2,
                        done: true,
                    })?;
                }
                break;
            }
        }
        stats.steps = t;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sid::scheduler::SchedulerKind;

    fn snapshot(n: usize) -> Snapshot {
        Snapshot {
            q: ValueApproximator::tabular(n, 0.1),
            extrinsic_scale: 1.0,
            learner_steps: 0,
        }
    }

    fn actor(name: &str, agent: AgentKind, eps: f64, kind: SchedulerKind) -> Actor {
        let spec = Arc::new(GridSpec::builtin(name).unwrap());
        Actor::new(1, eps, agent, 5, 0.99, spec, Scheduler::new(kind, 8), 11)
    }

    #[test]
    fn one_transition_per_step() {
        let mut a = actor("three_rooms", AgentKind::M, 1.0, SchedulerKind::Random);
        let snap = snapshot(a.env.spec().n_states());
        for _ in 0..5 {
            let mut sink: Vec<(Transition, f64)> = Vec::new();
            let st = a.run_episode(&snap, &mut sink).unwrap();
            assert_eq!(sink.len(), st.steps);
            assert_eq!(st.task_steps.iter().sum::<usize>(), st.steps);
            assert_eq!(st.task_steps[1], 0);
            let dones = sink.iter().filter(|(t, _)| t.done).count();
            assert_eq!(dones, st.steps.min(5));
        }
    }

    #[test]
    fn k_step_sums_on_chain() {
        // always Right on a 4-cell chain: rewards 0, 0, 1
        let spec = Arc::new(GridSpec::builtin("chain:4").unwrap());
        let mut a = Actor::new(1, 0.0, AgentKind::M, 5, 0.5, spec, Scheduler::new(SchedulerKind::Random, 8), 0);
        let mut q = ValueApproximator::tabular(4, 1.0);
        for s in 0..4 {
            q.td_update(TaskId::Extrinsic, s, Action::Right.index(), 0.1).unwrap();
        }
        let snap = Snapshot {
            q,
            extrinsic_scale: 1.0,
            learner_steps: 0,
        };
        let mut sink: Vec<(Transition, f64)> = Vec::new();
        let st = a.run_episode(&snap, &mut sink).unwrap();
        assert_eq!(st.steps, 3);
        assert!(st.success);
        let sums: Vec<f64> = sink.iter().map(|(t, _)| t.discounted_reward_sum).collect();
        assert_eq!(sums, vec![0.25, 0.5, 1.0]);
        let pairs: Vec<(usize, usize)> = sink.iter().map(|(t, _)| (t.pair_s, t.pair_s_next)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
        assert!(sink.iter().all(|(t, _)| t.done && t.s_end == 3));
    }

    #[test]
    fn full_window_transition_not_done() {
        let spec = Arc::new(GridSpec::builtin("chain:8").unwrap());
        let mut a = Actor::new(1, 0.0, AgentKind::M, 2, 0.9, spec, Scheduler::new(SchedulerKind::Random, 8), 0);
        let mut q = ValueApproximator::tabular(8, 1.0);
        for s in 0..8 {
            q.td_update(TaskId::Extrinsic, s, Action::Right.index(), 0.1).unwrap();
        }
        let snap = Snapshot {
            q,
            extrinsic_scale: 1.0,
            learner_steps: 0,
        };
        let mut sink: Vec<(Transition, f64)> = Vec::new();
        a.run_episode(&snap, &mut sink).unwrap();
        let first = sink[0].0;
        assert_eq!((first.s_start, first.s_end, first.steps, first.done), (0, 2, 2, false));
        assert!((sink[0].1 - (0.81 * 0.1 - 0.1f64).abs()).abs() < 1e-12);
    }

    #[test]
    fn task_changes_only_at_slot_boundaries() {
        let mut a = actor("flytrap", AgentKind::Sid, 1.0, SchedulerKind::Switching);
        let snap = snapshot(a.env.spec().n_states());
        let mut sink: Vec<(Transition, f64)> = Vec::new();
        let st = a.run_episode(&snap, &mut sink).unwrap();
        assert_eq!(st.steps, 500);
        assert_eq!(st.tasks.len(), 8);
        assert_eq!(st.task_sequence(), "EIEIEIEI");
        // 4 extrinsic slots of 63, the last intrinsic slot is 500 - 7 * 63
        assert_eq!(st.task_steps, [4 * 63, 3 * 63 + 59]);
    }

    #[test]
    fn non_scheduled_agents_follow_extrinsic() {
        let mut a = actor("flytrap", AgentKind::BonusSum, 1.0, SchedulerKind::Switching);
        let snap = snapshot(a.env.spec().n_states());
        let st = a.run_episode(&snap, &mut Vec::new()).unwrap();
        assert_eq!(st.task_steps[1], 0);
        assert!(st.tasks.iter().all(|&t| t == TaskId::Extrinsic));
    }
}
