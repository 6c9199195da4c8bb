//! High-level task schedulers. A task is chosen at each slot boundary and
//! followed until the next one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskId;
use crate::error::{Error, Result};
use crate::qlearn::argmax;

pub const DEFAULT_SLOTS: usize = 8;
pub const HEURISTIC_MEDIAN_THRESHOLD: f64 = 0.007;
pub const DEFAULT_MACRO_ALPHA: f64 = 0.1;

/// Steps per slot: `ceil(max_steps / slots)`; the final slot may be shorter.
pub fn slot_length(max_steps: usize, slots: usize) -> usize {
    assert!(slots > 0, "need at least one slot");
    max_steps.div_ceil(slots).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum ThresholdVariant {
    RunningMean,
    HeuristicMedian { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    #[default]
    Random,
    Switching,
    MacroQ,
    ThresholdQ(ThresholdVariant),
}

/// What a scheduler may look at when choosing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerContext {
    pub state: usize,
    pub q_extrinsic: f64,
    pub running_q_mean: f64,
    pub slot_index: usize,
}

/// One macro step: the task followed from `s_from` for `m` steps, ending in
/// `s_to`, with the extrinsic return discounted within the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroTransition {
    pub s_from: usize,
    pub s_to: usize,
    pub task: TaskId,
    pub discounted_return: f64,
    pub m: usize,
    pub done: bool,
}

/// Tabular macro head: one value per (state, task).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroQTable {
    values: Vec<[f64; 2]>,
    pub alpha: f64,
    pub gamma: f64,
}

impl MacroQTable {
    pub fn new(n_states: usize, alpha: f64, gamma: f64) -> Self {
        MacroQTable {
            values: vec![[0.0; 2]; n_states],
            alpha,
            gamma,
        }
    }

    pub fn values(&self, s: usize) -> [f64; 2] {
        self.values[s]
    }

    /// `Q(s, task) += alpha (G + gamma^m max Q(s_to) - Q(s, task))`, no
    /// bootstrap when the episode ended inside the slot.
    pub fn update(&mut self, t: &MacroTransition) -> f64 {
        let tail = if t.done {
            0.0
        } else {
            let next = self.values[t.s_to];
            self.gamma.powi(t.m as i32) * next[0].max(next[1])
        };
        let q = &mut self.values[t.s_from][t.task.index()];
        let err = t.discounted_return + tail - *q;
        *q += self.alpha * err;
        err
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub kind: SchedulerKind,
    pub slots: usize,
    macro_q: Option<MacroQTable>,
    /// Exploration rate of the macro head (MacroQ only).
    pub macro_epsilon: f64,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, slots: usize) -> Self {
        Scheduler {
            kind,
            slots,
            macro_q: None,
            macro_epsilon: 0.0,
        }
    }

    pub fn macro_q(n_states: usize, slots: usize, alpha: f64, gamma: f64, epsilon: f64) -> Self {
        Scheduler {
            kind: SchedulerKind::MacroQ,
            slots,
            macro_q: Some(MacroQTable::new(n_states, alpha, gamma)),
            macro_epsilon: epsilon,
        }
    }

    pub fn macro_table(&self) -> Option<&MacroQTable> {
        self.macro_q.as_ref()
    }

    pub fn next_task<R: Rng + ?Sized>(&mut self, ctx: &SchedulerContext, rng: &mut R) -> TaskId {
        match self.kind {
            SchedulerKind::Random => {
                if rng.random_bool(0.5) {
                    TaskId::Extrinsic
                } else {
                    TaskId::Intrinsic
                }
            }
            SchedulerKind::Switching => {
                if ctx.slot_index.is_multiple_of(2) {
                    TaskId::Extrinsic
                } else {
                    TaskId::Intrinsic
                }
            }
            SchedulerKind::MacroQ => {
                let table = self.macro_q.as_ref().expect("MacroQ scheduler owns a table");
                if rng.random::<f64>() < self.macro_epsilon {
                    TaskId::ALL[rng.random_range(0..2)]
                } else {
                    TaskId::ALL[argmax(&table.values(ctx.state))]
                }
            }
            SchedulerKind::ThresholdQ(variant) => {
                let threshold = match variant {
                    ThresholdVariant::RunningMean => ctx.running_q_mean,
                    ThresholdVariant::HeuristicMedian { threshold } => threshold,
                };
                if ctx.q_extrinsic < threshold {
                    TaskId::Intrinsic
                } else {
                    TaskId::Extrinsic
                }
            }
        }
    }

    pub fn macro_q_update(&mut self, t: &MacroTransition) -> Result<f64> {
        match (&self.kind, &mut self.macro_q) {
            (SchedulerKind::MacroQ, Some(table)) => Ok(table.update(t)),
            _ => Err(Error::SchedulerMismatch("macro_q_update")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(q: f64, mean: f64, slot: usize) -> SchedulerContext {
        SchedulerContext {
            state: 0,
            q_extrinsic: q,
            running_q_mean: mean,
            slot_index: slot,
        }
    }

    #[test]
    fn slot_boundaries() {
        assert_eq!(slot_length(500, 8), 63);
        assert_eq!(slot_length(300, 8), 38);
        assert_eq!(slot_length(16, 8), 2);
        assert_eq!(slot_length(3, 8), 1);
    }

    #[test]
    fn switching_alternates() {
        let mut s = Scheduler::new(SchedulerKind::Switching, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq: Vec<TaskId> = (0..4).map(|i| s.next_task(&ctx(0.0, 0.0, i), &mut rng)).collect();
        use TaskId::*;
        assert_eq!(seq, vec![Extrinsic, Intrinsic, Extrinsic, Intrinsic]);
    }

    #[test]
    fn threshold_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mean = Scheduler::new(SchedulerKind::ThresholdQ(ThresholdVariant::RunningMean), 8);
        assert_eq!(mean.next_task(&ctx(0.5, 0.6, 0), &mut rng), TaskId::Intrinsic);
        assert_eq!(mean.next_task(&ctx(0.7, 0.6, 0), &mut rng), TaskId::Extrinsic);
        let mut med = Scheduler::new(
            SchedulerKind::ThresholdQ(ThresholdVariant::HeuristicMedian {
                threshold: HEURISTIC_MEDIAN_THRESHOLD,
            }),
            8,
        );
        assert_eq!(med.next_task(&ctx(0.01, 0.0, 0), &mut rng), TaskId::Extrinsic);
        assert_eq!(med.next_task(&ctx(0.001, 0.0, 0), &mut rng), TaskId::Intrinsic);
    }

    #[test]
    fn macro_update_rejected_elsewhere() {
        let mut s = Scheduler::new(SchedulerKind::Random, 8);
        let t = MacroTransition {
            s_from: 0,
            s_to: 0,
            task: TaskId::Extrinsic,
            discounted_return: 1.0,
            m: 3,
            done: false,
        };
        assert!(matches!(s.macro_q_update(&t), Err(Error::SchedulerMismatch(_))));
    }

    #[test]
    fn macro_zero_returns_stay_zero() {
        let mut s = Scheduler::macro_q(3, 8, 0.5, 0.99, 0.0);
        for i in 0..100 {
            s.macro_q_update(&MacroTransition {
                s_from: i % 3,
                s_to: (i + 1) % 3,
                task: TaskId::ALL[i % 2],
                discounted_return: 0.0,
                m: 63,
                done: i % 7 == 0,
            })
            .unwrap();
        }
        for st in 0..3 {
            assert_eq!(s.macro_table().unwrap().values(st), [0.0, 0.0]);
        }
    }

    #[test]
    fn macro_fixed_point_one_state() {
        let m = 10;
        let gamma: f64 = 0.99;
        let mut s = Scheduler::macro_q(1, 8, 0.5, gamma, 0.0);
        for _ in 0..20_000 {
            s.macro_q_update(&MacroTransition {
                s_from: 0,
                s_to: 0,
                task: TaskId::Extrinsic,
                discounted_return: 1.0,
                m,
                done: false,
            })
            .unwrap();
        }
        let expected = 1.0 / (1.0 - gamma.powi(m as i32));
        assert!((s.macro_table().unwrap().values(0)[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn macro_greedy_prefers_better_task() {
        let mut s = Scheduler::macro_q(1, 8, 0.5, 0.9, 0.0);
        for _ in 0..50 {
            for (task, g) in [(TaskId::Extrinsic, 5.0), (TaskId::Intrinsic, 0.1)] {
                s.macro_q_update(&MacroTransition {
                    s_from: 0,
                    s_to: 0,
                    task,
                    discounted_return: g,
                    m: 4,
                    done: true,
                })
                .unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.next_task(&ctx(0.0, 0.0, 0), &mut rng), TaskId::Extrinsic);
    }
}
