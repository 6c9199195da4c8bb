//! Two-head action values, K-step double-Q targets and per-actor epsilons.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::features::Embedding;
use crate::nn::Mlp;
use crate::sid::TaskId;

pub type ActionValues = [f64; NUM_ACTIONS];

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_ALPHA_TABULAR: f64 = 0.1;
pub const DEFAULT_ALPHA_DENSE: f64 = 1e-4;
pub const DEFAULT_SYNC_INTERVAL: u64 = 500;
pub const DEFAULT_K: usize = 5;
pub const DENSE_WIDTH: usize = 128;

pub const EPSILON_BASE: f64 = 0.4;
pub const EPSILON_ALPHA: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    #[default]
    Tabular,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Tabular {
        extrinsic: Vec<f64>,
        intrinsic: Vec<f64>,
    },
    Dense {
        embedding: Arc<Embedding>,
        // shared encoding: two ReLU layers
        trunk: Mlp,
        extrinsic: Mlp,
        intrinsic: Mlp,
    },
}

/// Action-value function with an extrinsic and an intrinsic head.
///
/// Tabular mode keeps two independent `|S| x |A|` tables. Dense mode runs a
/// shared two-layer encoding of `phi(s)` into two linear heads; both heads
/// backpropagate into the encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueApproximator {
    n_states: usize,
    pub alpha: f64,
    pub gamma_e: f64,
    pub gamma_i: f64,
    model: Model,
}

impl ValueApproximator {
    pub fn tabular(n_states: usize, alpha: f64) -> Self {
        ValueApproximator {
            n_states,
            alpha,
            gamma_e: DEFAULT_GAMMA,
            gamma_i: DEFAULT_GAMMA,
            model: Model::Tabular {
                extrinsic: vec![0.0; n_states * NUM_ACTIONS],
                intrinsic: vec![0.0; n_states * NUM_ACTIONS],
            },
        }
    }

    pub fn dense<R: Rng + ?Sized>(embedding: Arc<Embedding>, alpha: f64, rng: &mut R) -> Self {
        let m = embedding.dim();
        ValueApproximator {
            n_states: embedding.n_states(),
            alpha,
            gamma_e: DEFAULT_GAMMA,
            gamma_i: DEFAULT_GAMMA,
            model: Model::Dense {
                trunk: Mlp::new(&[m, DENSE_WIDTH, DENSE_WIDTH], true, rng),
                extrinsic: Mlp::new(&[DENSE_WIDTH, NUM_ACTIONS], false, rng),
                intrinsic: Mlp::new(&[DENSE_WIDTH, NUM_ACTIONS], false, rng),
                embedding,
            },
        }
    }

    pub fn with_discounts(mut self, gamma_e: f64, gamma_i: f64) -> Self {
        self.gamma_e = gamma_e;
        self.gamma_i = gamma_i;
        self
    }

    pub fn mode(&self) -> QMode {
        match self.model {
            Model::Tabular { .. } => QMode::Tabular,
            Model::Dense { .. } => QMode::Dense,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn gamma(&self, head: TaskId) -> f64 {
        match head {
            TaskId::Extrinsic => self.gamma_e,
            TaskId::Intrinsic => self.gamma_i,
        }
    }

    pub fn q_values(&self, head: TaskId, s: usize) -> ActionValues {
        assert!(s < self.n_states, "state {s} out of range");
        match &self.model {
            Model::Tabular { extrinsic, intrinsic } => {
                let t = match head {
                    TaskId::Extrinsic => extrinsic,
                    TaskId::Intrinsic => intrinsic,
                };
                t[s * NUM_ACTIONS..(s + 1) * NUM_ACTIONS].try_into().unwrap()
            }
            Model::Dense {
                embedding,
                trunk,
                extrinsic,
                intrinsic,
            } => {
                let h = trunk.predict(&embedding.embed(s).expect("state in range"));
                let out = match head {
                    TaskId::Extrinsic => extrinsic.predict(&h),
                    TaskId::Intrinsic => intrinsic.predict(&h),
                };
                out.try_into().unwrap()
            }
        }
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy_action(&self, head: TaskId, s: usize) -> usize {
        argmax(&self.q_values(head, s))
    }

    pub fn max_value(&self, head: TaskId, s: usize) -> f64 {
        let q = self.q_values(head, s);
        q[argmax(&q)]
    }

    /// One semi-gradient step of `head`'s `(s, a)` value toward `target`.
    /// Returns the TD error `target - q(s, a)` before the step.
    pub fn td_update(&mut self, head: TaskId, s: usize, a: usize, target: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(Error::NonFinite(format!("TD target {target}")));
        }
        assert!(s < self.n_states && a < NUM_ACTIONS);
        let alpha = self.alpha;
        match &mut self.model {
            Model::Tabular { extrinsic, intrinsic } => {
                let t = match head {
                    TaskId::Extrinsic => extrinsic,
                    TaskId::Intrinsic => intrinsic,
                };
                let q = &mut t[s * NUM_ACTIONS + a];
                let err = target - *q;
                *q += alpha * err;
                Ok(err)
            }
            Model::Dense { .. } => {
                let (q, grads) = self.dense_grad(head, s, a, target);
                self.apply_dense(head, &grads, alpha);
                Ok(target - q)
            }
        }
    }

    // Gradient of 0.5 (q(s,a) - target)^2 w.r.t. trunk then head parameters.
    fn dense_grad(&self, head: TaskId, s: usize, a: usize, target: f64) -> (f64, DenseGrads) {
        let Model::Dense {
            embedding,
            trunk,
            extrinsic,
            intrinsic,
        } = &self.model
        else {
            unreachable!("dense model")
        };
        let net = match head {
            TaskId::Extrinsic => extrinsic,
            TaskId::Intrinsic => intrinsic,
        };
        let t_trace = trunk.forward(&embedding.embed(s).expect("state in range"));
        let h_trace = net.forward(t_trace.output());
        let q = h_trace.output()[a];
        let mut g = [0.0; NUM_ACTIONS];
        g[a] = q - target;
        let (head_grads, dh) = net.backward(&h_trace, &g);
        let (trunk_grads, _) = trunk.backward(&t_trace, &dh);
        (q, DenseGrads { trunk: trunk_grads, head: head_grads })
    }

    fn apply_dense(&mut self, head: TaskId, grads: &DenseGrads, lr: f64) {
        if let Model::Dense {
            trunk,
            extrinsic,
            intrinsic,
            ..
        } = &mut self.model
        {
            trunk.sgd(&grads.trunk, lr);
            match head {
                TaskId::Extrinsic => extrinsic.sgd(&grads.head, lr),
                TaskId::Intrinsic => intrinsic.sgd(&grads.head, lr),
            }
        }
    }

    /// Raw table for one head (tabular mode only).
    pub fn table(&self, head: TaskId) -> Result<&[f64]> {
        match &self.model {
            Model::Tabular { extrinsic, intrinsic } => Ok(match head {
                TaskId::Extrinsic => extrinsic,
                TaskId::Intrinsic => intrinsic,
            }),
            Model::Dense { .. } => Err(Error::NotTabular),
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.model {
            Model::Tabular { extrinsic, intrinsic } => {
                extrinsic.iter().chain(intrinsic).all(|x| x.is_finite())
            }
            Model::Dense {
                trunk,
                extrinsic,
                intrinsic,
                ..
            } => trunk.params().chain(extrinsic.params()).chain(intrinsic.params()).all(|x| x.is_finite()),
        }
    }
}

struct DenseGrads {
    trunk: Vec<crate::nn::Linear>,
    head: Vec<crate::nn::Linear>,
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Frozen copy of the online parameters, refreshed every `sync_interval`
/// learner steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetNetwork {
    params: ValueApproximator,
    pub sync_interval: u64,
}

impl TargetNetwork {
    pub fn new(online: &ValueApproximator, sync_interval: u64) -> Self {
        TargetNetwork {
            params: online.clone(),
            sync_interval: sync_interval.max(1),
        }
    }

    pub fn sync(&mut self, online: &ValueApproximator) {
        self.params.clone_from(online);
    }

    /// Syncs if `learner_step` is a multiple of the interval.
    pub fn maybe_sync(&mut self, online: &ValueApproximator, learner_step: u64) -> bool {
        if learner_step.is_multiple_of(self.sync_interval) {
            self.sync(online);
            true
        } else {
            false
        }
    }

    pub fn params(&self) -> &ValueApproximator {
        &self.params
    }

    pub fn q_values(&self, head: TaskId, s: usize) -> ActionValues {
        self.params.q_values(head, s)
    }
}

/// K-step double-Q target.
///
/// `discounted_sum` is `sum_{k=1..K} gamma^(k-1) r_{t+k}`. On `done` the sum
/// is returned as is; otherwise the tail is the target network's value at the
/// online network's greedy action in `s_end`, discounted by `gamma^K`.
#[allow(clippy::too_many_arguments)]
pub fn k_step_target(
    online: &ValueApproximator,
    target: &ValueApproximator,
    head: TaskId,
    discounted_sum: f64,
    s_end: usize,
    done: bool,
    k: usize,
    gamma: f64,
) -> f64 {
    if done {
        return discounted_sum;
    }
    let a_star = online.greedy_action(head, s_end);
    discounted_sum + gamma.powi(k as i32) * target.q_values(head, s_end)[a_star]
}

/// Fixed exploration rate of actor `i` (1-based) out of `n`:
/// `base^(1 + ((i - 1) * 360 / n) / (360 - 1) * alpha)`.
pub fn epsilon_for_actor(i: usize, n: usize, base: f64, alpha: f64) -> f64 {
    assert!(n >= 1 && (1..=n).contains(&i), "actor index {i} outside 1..={n}");
    let spread = (i - 1) as f64 * 360.0 / n as f64;
    base.powf(1.0 + spread / 359.0 * alpha)
}
