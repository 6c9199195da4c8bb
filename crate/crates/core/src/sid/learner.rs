//! The learner: samples replay, computes intrinsic rewards from its current
//! models, and updates the value heads, successor features and curiosity
//! models.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actor::Snapshot;
use super::{AgentKind, TaskId};
use crate::error::Result;
use crate::features::Embedding;
use crate::intrinsic::{DistillationPair, ForwardModel, IntrinsicKind, Normalizer};
use crate::qlearn::{k_step_target, TargetNetwork, ValueApproximator};
use crate::replay::{Transition, TwoTierBuffer};
use crate::sf::{Convention, SfTable, SuccessorFeatures};

/// Per-step summary, averaged over the batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub raw_intrinsic_mean: f64,
    pub normalized_intrinsic_mean: f64,
    pub extrinsic_scale: f64,
    pub td_extrinsic_mean: f64,
    pub td_intrinsic_mean: f64,
    /// Reward each extrinsic-head target was built from, in batch order.
    pub extrinsic_rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub agent: AgentKind,
    pub intrinsic: IntrinsicKind,
    /// Multiplies raw intrinsic rewards before normalization.
    pub intrinsic_scale: f64,
    pub batch: usize,
    pub high_share: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub params: LearnerParams,
    pub q: ValueApproximator,
    pub target: TargetNetwork,
    pub sf: SfTable,
    pub icm: Option<ForwardModel>,
    pub rnd: Option<DistillationPair>,
    pub normalizer: Normalizer,
    pub steps: u64,
    rng: ChaCha8Rng,
}

impl Learner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: LearnerParams,
        q: ValueApproximator,
        sync_interval: u64,
        embedding: Arc<Embedding>,
        sf_gamma: f64,
        sf_alpha: f64,
        convention: Convention,
        normalizer: Normalizer,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (icm, rnd) = match params.intrinsic {
            IntrinsicKind::Icm => (Some(ForwardModel::new(Arc::clone(&embedding), &mut rng)), None),
            IntrinsicKind::Rnd => (None, Some(DistillationPair::new(Arc::clone(&embedding), &mut rng))),
            _ => (None, None),
        };
        Learner {
            target: TargetNetwork::new(&q, sync_interval),
            sf: SfTable::new(embedding, sf_gamma, sf_alpha, convention),
            params,
            q,
            icm,
            rnd,
            normalizer,
            steps: 0,
            rng,
        }
    }

    /// Reseeds the batch sampler.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Multiplier applied to extrinsic sums for the current agent.
    pub fn extrinsic_scale(&self) -> f64 {
        match (self.params.agent, self.params.intrinsic) {
            (AgentKind::M, _) | (_, IntrinsicKind::None) => 1.0,
            _ => self.normalizer.effective_extrinsic_scale(),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            q: self.q.clone(),
            extrinsic_scale: self.extrinsic_scale(),
            learner_steps: self.steps,
        }
    }

    pub fn sample_batch(&mut self, buffer: &TwoTierBuffer) -> Result<Vec<Transition>> {
        Ok(buffer
            .sample(self.params.batch, self.params.high_share, &mut self.rng)?
            .into_iter()
            .map(|s| s.transition)
            .collect())
    }

    pub fn step(&mut self, buffer: &TwoTierBuffer) -> Result<StepDiagnostics> {
        let batch = self.sample_batch(buffer)?;
        self.step_on_batch(&batch)
    }

    fn raw_intrinsic(&self, t: &Transition) -> Result<f64> {
        Ok(match self.params.intrinsic {
            // K-step form: squared distance between the ends of the tuple
            IntrinsicKind::Sfc => self.sf.sfc_reward(t.s_start, t.s_end),
            IntrinsicKind::Icm => self.icm.as_ref().expect("icm model").reward(t.pair_s, t.a_start, t.pair_s_next)?,
            IntrinsicKind::Rnd => self.rnd.as_ref().expect("rnd model").reward(t.pair_s_next)?,
            IntrinsicKind::None => 0.0,
        })
    }

    /// One learner update on an explicit batch.
    pub fn step_on_batch(&mut self, batch: &[Transition]) -> Result<StepDiagnostics> {
        let n = batch.len().max(1) as f64;
        let uses_intrinsic = self.params.agent != AgentKind::M && self.params.intrinsic != IntrinsicKind::None;
        let mut diag = StepDiagnostics::default();

        let mut intrinsic = vec![0.0; batch.len()];
        if uses_intrinsic {
            for (r, t) in intrinsic.iter_mut().zip(batch) {
                let raw = self.raw_intrinsic(t)? * self.params.intrinsic_scale;
                diag.raw_intrinsic_mean += raw / n;
                *r = self.normalizer.normalize(raw);
                diag.normalized_intrinsic_mean += *r / n;
            }
        }
        // scale is read after this batch has entered the running statistics
        let scale = self.extrinsic_scale();
        diag.extrinsic_scale = scale;

        let online = &self.q;
        let target = self.target.params();
        let k_step = |head: TaskId, sum: f64, t: &Transition| {
            k_step_target(online, target, head, sum, t.s_end, t.done, t.steps, online.gamma(head))
        };
        let mut updates: Vec<(TaskId, usize, usize, f64)> = Vec::with_capacity(2 * batch.len());
        for (t, &r_i) in batch.iter().zip(&intrinsic) {
            let r_e = match self.params.agent {
                AgentKind::M => t.discounted_reward_sum,
                AgentKind::Sid => scale * t.discounted_reward_sum,
                AgentKind::BonusSum => scale * t.discounted_reward_sum + r_i,
            };
            diag.extrinsic_rewards.push(r_e);
            updates.push((TaskId::Extrinsic, t.s_start, t.a_start, k_step(TaskId::Extrinsic, r_e, t)));
            if self.params.agent == AgentKind::Sid {
                updates.push((TaskId::Intrinsic, t.s_start, t.a_start, k_step(TaskId::Intrinsic, r_i, t)));
            }
        }
        let mut td = [0.0; 2];
        for (head, s, a, y) in updates {
            td[head.index()] += self.q.td_update(head, s, a, y)?.abs() / n;
        }
        diag.td_extrinsic_mean = td[0];
        diag.td_intrinsic_mean = td[1];

        for t in batch {
            self.sf.td_update(t.pair_s, t.pair_s_next)?;
        }
        if let Some(icm) = self.icm.as_mut() {
            for t in batch {
                icm.train(t.pair_s, t.a_start, t.pair_s_next)?;
            }
        }
        if let Some(rnd) = self.rnd.as_mut() {
            for t in batch {
                rnd.train(t.pair_s_next)?;
            }
        }
        self.steps += 1;
        self.target.maybe_sync(&self.q, self.steps);
        Ok(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sf::DEFAULT_GAMMA_SF;

    fn learner(agent: AgentKind, intrinsic: IntrinsicKind, n: usize) -> Learner {
        let emb = Arc::new(Embedding::one_hot(n));
        Learner::new(
            LearnerParams {
                agent,
                intrinsic,
                intrinsic_scale: 1.0,
                batch: 8,
                high_share: 2,
            },
            ValueApproximator::tabular(n, 0.1),
            500,
            emb,
            DEFAULT_GAMMA_SF,
            0.1,
            Convention::NextStateOnly,
            Normalizer::default(),
            3,
        )
    }

    fn tr(s: usize, a: usize, r: f64, s_end: usize, done: bool) -> Transition {
        Transition {
            s_start: s,
            a_start: a,
            discounted_reward_sum: r,
            s_end,
            done,
            steps: 5,
            pair_s: s,
            pair_s_next: (s + 1) % 6,
            episode_id: 0,
            step_index: 0,
        }
    }

    fn zero_batch() -> Vec<Transition> {
        (0..6).map(|i| tr(i, i % 4, 0.0, (i + 3) % 6, i == 5)).collect()
    }

    #[test]
    fn m_with_zero_rewards_stays_zero() {
        let mut l = learner(AgentKind::M, IntrinsicKind::None, 6);
        for _ in 0..50 {
            l.step_on_batch(&zero_batch()).unwrap();
        }
        assert!(l.q.table(TaskId::Extrinsic).unwrap().iter().all(|&v| v == 0.0));
        assert!(l.q.table(TaskId::Intrinsic).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sid_zero_extrinsic_moves_only_intrinsic() {
        let mut l = learner(AgentKind::Sid, IntrinsicKind::Sfc, 6);
        for _ in 0..50 {
            l.step_on_batch(&zero_batch()).unwrap();
        }
        assert!(l.q.table(TaskId::Extrinsic).unwrap().iter().all(|&v| v == 0.0));
        assert!(l.q.table(TaskId::Intrinsic).unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn bonus_sum_composition() {
        let mut l = learner(AgentKind::BonusSum, IntrinsicKind::Sfc, 6);
        for _ in 0..20 {
            l.step_on_batch(&zero_batch()).unwrap();
        }
        let batch = vec![tr(0, 1, 1.0, 3, true), tr(2, 0, 0.0, 4, true), tr(4, 2, 0.5, 1, true)];
        // recompute by hand on a copy of the learner state
        let mut norm = l.normalizer.clone();
        let hats: Vec<f64> = batch.iter().map(|t| norm.normalize(l.sf.sfc_reward(t.s_start, t.s_end))).collect();
        let scale = norm.effective_extrinsic_scale();
        let diag = l.step_on_batch(&batch).unwrap();
        for ((t, hat), got) in batch.iter().zip(&hats).zip(&diag.extrinsic_rewards) {
            assert_eq!(*got, scale * t.discounted_reward_sum + hat);
        }
        assert!(scale > 1.0);
    }

    #[test]
    fn sf_learns_from_pairs() {
        let mut l = learner(AgentKind::M, IntrinsicKind::None, 6);
        l.step_on_batch(&[tr(0, 0, 0.0, 3, false)]).unwrap();
        assert_eq!(l.sf.psi(0)[1], 0.1);
    }

    #[test]
    fn target_syncs_on_schedule() {
        let mut l = learner(AgentKind::M, IntrinsicKind::None, 6);
        l.target.sync_interval = 3;
        let batch = vec![tr(0, 0, 1.0, 1, true)];
        l.step_on_batch(&batch).unwrap();
        l.step_on_batch(&batch).unwrap();
        assert_eq!(l.target.q_values(TaskId::Extrinsic, 0)[0], 0.0);
        l.step_on_batch(&batch).unwrap();
        assert_eq!(l.target.q_values(TaskId::Extrinsic, 0)[0], l.q.q_values(TaskId::Extrinsic, 0)[0]);
    }
}
