//! Baseline novelty rewards and the intrinsic/extrinsic reward normalizer.
//!
//! Both baselines work in the fixed embedding space: the ICM-lite forward
//! model predicts `phi(s')` from `(phi(s), a)` (no inverse-dynamics head);
//! the RND-lite pair regresses a frozen random network's output on `phi(s)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::NUM_ACTIONS;
use crate::error::Result;
use crate::features::Embedding;
use crate::nn::{squared_error, Linear, Mlp};
pub use crate::stats::RunningStats;

pub const HIDDEN_WIDTH: usize = 64;
pub const LEARNING_RATE: f64 = 1e-3;
pub const RND_OUTPUT_DIM: usize = 16;
pub const DEFAULT_ETA: f64 = 3.0;
pub const DEFAULT_GAMMA_I: f64 = 0.99;
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicKind {
    Sfc,
    Icm,
    Rnd,
    None,
}

impl IntrinsicKind {
    pub fn label(self) -> &'static str {
        match self {
            IntrinsicKind::Sfc => "SFC",
            IntrinsicKind::Icm => "ICM",
            IntrinsicKind::Rnd => "RND",
            IntrinsicKind::None => "none",
        }
    }
}

fn action_input(emb: &Embedding, s: usize, a: usize) -> Result<Vec<f64>> {
    let mut x = emb.embed(s)?;
    x.extend((0..NUM_ACTIONS).map(|i| if i == a { 1.0 } else { 0.0 }));
    Ok(x)
}

/// One-hidden-layer forward model `(phi(s), a) -> phi(s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    embedding: Arc<Embedding>,
    net: Mlp,
    pub lr: f64,
}

impl ForwardModel {
    /// Random hidden layer, zero output layer: the untrained model predicts
    /// the zero vector.
    pub fn new<R: Rng + ?Sized>(embedding: Arc<Embedding>, rng: &mut R) -> Self {
        let m = embedding.dim();
        let mut net = Mlp::new(&[m + NUM_ACTIONS, HIDDEN_WIDTH, m], false, rng);
        net.layers[1] = Linear::zeros(HIDDEN_WIDTH, m);
        ForwardModel {
            net,
            embedding,
            lr: LEARNING_RATE,
        }
    }

    /// All-zero weights: predicts the zero vector everywhere.
    pub fn zeros(embedding: Arc<Embedding>) -> Self {
        let m = embedding.dim();
        ForwardModel {
            net: Mlp::zeros(&[m + NUM_ACTIONS, HIDDEN_WIDTH, m], false),
            embedding,
            lr: LEARNING_RATE,
        }
    }

    /// Squared error between predicted and actual next-state features.
    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> Result<f64> {
        let pred = self.net.predict(&action_input(&self.embedding, s, a)?);
        Ok(squared_error(&pred, &self.embedding.embed(s_next)?))
    }

    /// One SGD step on the squared prediction error; returns the pre-step loss.
    pub fn train(&mut self, s: usize, a: usize, s_next: usize) -> Result<f64> {
        let trace = self.net.forward(&action_input(&self.embedding, s, a)?);
        let target = self.embedding.embed(s_next)?;
        let grad: Vec<f64> = trace.output().iter().zip(&target).map(|(p, t)| 2.0 * (p - t)).collect();
        let (grads, _) = self.net.backward(&trace, &grad);
        self.net.sgd(&grads, self.lr);
        Ok(squared_error(trace.output(), &target))
    }
}

/// Frozen random target network plus a trainable predictor of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationPair {
    embedding: Arc<Embedding>,
    target: Mlp,
    predictor: Mlp,
    pub lr: f64,
}

impl DistillationPair {
    pub fn new<R: Rng + ?Sized>(embedding: Arc<Embedding>, rng: &mut R) -> Self {
        let sizes = [embedding.dim(), HIDDEN_WIDTH, RND_OUTPUT_DIM];
        DistillationPair {
            target: Mlp::new(&sizes, false, rng),
            predictor: Mlp::new(&sizes, false, rng),
            embedding,
            lr: LEARNING_RATE,
        }
    }

    /// Predictor starts as an exact copy of the target.
    pub fn matched<R: Rng + ?Sized>(embedding: Arc<Embedding>, rng: &mut R) -> Self {
        let mut pair = Self::new(embedding, rng);
        pair.predictor = pair.target.clone();
        pair
    }

    pub fn target_output(&self, s: usize) -> Result<Vec<f64>> {
        Ok(self.target.predict(&self.embedding.embed(s)?))
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target
    }

    pub fn reward(&self, s_next: usize) -> Result<f64> {
        let x = self.embedding.embed(s_next)?;
        Ok(squared_error(&self.predictor.predict(&x), &self.target.predict(&x)))
    }

    pub fn train(&mut self, s_next: usize) -> Result<f64> {
        let x = self.embedding.embed(s_next)?;
        let target = self.target.predict(&x);
        let trace = self.predictor.forward(&x);
        let grad: Vec<f64> = trace.output().iter().zip(&target).map(|(p, t)| 2.0 * (p - t)).collect();
        let (grads, _) = self.predictor.backward(&trace, &grad);
        self.predictor.sgd(&grads, self.lr);
        Ok(squared_error(trace.output(), &target))
    }
}

/// Divides intrinsic rewards by their running standard deviation and tracks
/// the mean of the result (`r_i'`), from which the extrinsic scale is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    std_stats: RunningStats,
    normalized: RunningStats,
    pub eta: f64,
    pub gamma_i: f64,
    #[serde(default)]
    warned: bool,
}

impl Normalizer {
    pub fn new(eta: f64, gamma_i: f64) -> Self {
        Normalizer {
            std_stats: RunningStats::new(),
            normalized: RunningStats::new(),
            eta,
            gamma_i,
            warned: false,
        }
    }

    /// Standard deviation used as divisor: 1.0 until two samples exist,
    /// then the running std floored at [`STD_FLOOR`].
    pub fn divisor(&self) -> f64 {
        if self.std_stats.count() < 2 {
            1.0
        } else {
            self.std_stats.std().max(STD_FLOOR)
        }
    }

    /// Update-then-divide: the current sample is part of the std estimate.
    pub fn normalize(&mut self, raw: f64) -> f64 {
        self.std_stats.push(raw);
        if self.std_stats.count() >= 2 && self.std_stats.std() < STD_FLOOR && !self.warned {
            log::warn!("intrinsic reward std below floor {STD_FLOOR}; normalized rewards will be large");
            self.warned = true;
        }
        let out = raw / self.divisor();
        self.normalized.push(out);
        out
    }

    /// Running mean of normalized intrinsic rewards.
    pub fn r_i_prime(&self) -> f64 {
        self.normalized.mean()
    }

    pub fn raw_stats(&self) -> &RunningStats {
        &self.std_stats
    }

    /// `eta * r_i' / (1 - gamma_i)`.
    pub fn extrinsic_scale(&self) -> f64 {
        self.eta * self.r_i_prime() / (1.0 - self.gamma_i)
    }

    /// Multiplier actually applied to extrinsic rewards. Falls back to 1
    /// (raw rewards) while the scale is not positive.
    pub fn effective_extrinsic_scale(&self) -> f64 {
        let s = self.extrinsic_scale();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::new(DEFAULT_ETA, DEFAULT_GAMMA_I)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn zero_forward_model_reward() {
        let emb = Arc::new(Embedding::one_hot(3));
        let m = ForwardModel::zeros(emb);
        assert_eq!(m.reward(0, 2, 1).unwrap(), 1.0);
    }

    #[test]
    fn forward_model_learns_single_transition() {
        let emb = Arc::new(Embedding::random_projection(20, 64, 1));
        let mut m = ForwardModel::new(emb, &mut rng());
        let first = m.reward(3, 1, 4).unwrap();
        let mut prev = first;
        for _ in 0..500 {
            m.train(3, 1, 4).unwrap();
            let r = m.reward(3, 1, 4).unwrap();
            assert!(r <= prev + 1e-12);
            prev = r;
        }
        assert!(prev < 0.01, "reward after training {prev} (start {first})");
    }

    #[test]
    fn forward_model_is_pure() {
        let emb = Arc::new(Embedding::random_projection(5, 8, 1));
        let m = ForwardModel::new(emb, &mut rng());
        assert_eq!(m.reward(1, 2, 3).unwrap(), m.reward(1, 2, 3).unwrap());
    }

    #[test]
    fn matched_rnd_is_zero() {
        let emb = Arc::new(Embedding::random_projection(5, 8, 1));
        let pair = DistillationPair::matched(emb, &mut rng());
        for s in 0..5 {
            assert_eq!(pair.reward(s).unwrap(), 0.0);
        }
    }

    #[test]
    fn rnd_target_frozen() {
        let emb = Arc::new(Embedding::random_projection(10, 16, 2));
        let mut pair = DistillationPair::new(emb, &mut rng());
        let before = serde_json::to_string(pair.target_net()).unwrap();
        let out = pair.target_output(4).unwrap();
        for i in 0..300 {
            pair.train(i % 10).unwrap();
        }
        assert_eq!(serde_json::to_string(pair.target_net()).unwrap(), before);
        assert_eq!(pair.target_output(4).unwrap(), out);
    }

    #[test]
    fn rnd_novel_state_scores_higher() {
        let emb = Arc::new(Embedding::random_projection(10, 32, 3));
        let mut pair = DistillationPair::new(emb, &mut rng());
        let seen = [0usize, 1, 2, 3, 4];
        for _ in 0..400 {
            for &s in &seen {
                pair.train(s).unwrap();
            }
        }
        let seen_mean = seen.iter().map(|&s| pair.reward(s).unwrap()).sum::<f64>() / seen.len() as f64;
        for novel in 5..10 {
            assert!(pair.reward(novel).unwrap() > seen_mean);
        }
    }

    #[test]
    fn first_reward_passes_through() {
        let mut n = Normalizer::default();
        assert_eq!(n.normalize(0.7), 0.7);
    }

    #[test]
    fn constant_stream_hits_floor() {
        let mut n = Normalizer::default();
        let c = 0.25;
        let outs: Vec<f64> = (0..10).map(|_| n.normalize(c)).collect();
        assert_eq!(outs[0], c);
        for &o in &outs[1..] {
            assert_eq!(o, c / STD_FLOOR);
        }
    }

    #[test]
    fn std_matches_batch() {
        let mut n = Normalizer::default();
        for i in 1..=100 {
            n.normalize(i as f64);
        }
        // population std of 1..=100
        let batch = ((100.0f64 * 100.0 - 1.0) / 12.0).sqrt();
        assert!((n.divisor() - batch).abs() < 1e-6);
    }

    #[test]
    fn extrinsic_scale_arithmetic() {
        let mut n = Normalizer::new(3.0, 0.99);
        assert_eq!(n.extrinsic_scale(), 0.0);
        assert_eq!(n.effective_extrinsic_scale(), 1.0);
        n.normalized.push(0.5);
        // 3 * 0.5 / 0.01 in binary floating point
        assert_eq!(n.extrinsic_scale(), 3.0 * 0.5 / (1.0 - 0.99));
        assert!((n.extrinsic_scale() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn normalization_is_scale_equivariant() {
        let mut a = Normalizer::default();
        let mut b = Normalizer::default();
        let mut r = rng();
        let mut last = (0.0, 0.0);
        for _ in 0..10_000 {
            let x: f64 = r.random::<f64>() * 3.0 + 0.1;
            last = (a.normalize(x), b.normalize(10.0 * x));
        }
        assert!((last.1 / last.0 - 1.0).abs() < 0.01);
        assert!((b.r_i_prime() / a.r_i_prime() - 1.0).abs() < 0.01);
    }
}
