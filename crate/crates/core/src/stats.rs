//! Streaming mean and variance (Welford).

use serde::{Deserialize, Serialize};

/// Running mean and population variance over a stream of samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Mean of the samples seen so far, 0 when empty.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance `m2 / count`; 0 with fewer than one sample.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn empty_stats_are_zero() {
        let s = RunningStats::new();
        assert_eq!(s.mean(), 0.0);
        assert_eq!(s.variance(), 0.0);
        assert!(s.is_empty());
    }

    #[test]
    fn one_to_hundred_matches_batch() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let mut s = RunningStats::new();
        xs.iter().for_each(|&x| s.push(x));
        let (mean, var) = batch(&xs);
        assert!((s.mean() - mean).abs() < 1e-9);
        assert!((s.std() - var.sqrt()).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn welford_matches_batch(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let mut s = RunningStats::new();
            xs.iter().for_each(|&x| s.push(x));
            let (mean, var) = batch(&xs);
            prop_assert!((s.mean() - mean).abs() < 1e-9);
            prop_assert!((s.variance() - var).abs() < 1e-9 * var.max(1.0));
            prop_assert!(s.variance() >= 0.0);
        }
    }
}
