//! Successor features, the successor distance and the SFC reward.
//!
//! `psi(s)` is the expected discounted sum of future feature vectors when
//! starting in `s`. Two fixed-point conventions are supported:
//!
//! * [`Convention::NextStateOnly`]: `psi(s) = E[phi(s') + gamma psi(s')]`,
//!   the fixed point of the one-step TD target used during learning.
//! * [`Convention::IncludeCurrent`]: `psi(s) = phi(s) + gamma E[psi(s')]`,
//!   the discounted sum counted from the current state.
//!
//! They differ by exactly `phi(s)`, and `psi_next(s) = E[psi_incl(s')]`.

pub mod heatmap;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Embedding;

pub const DEFAULT_GAMMA_SF: f64 = 0.98;
pub const DEFAULT_ALPHA_SF: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    IncludeCurrent,
    #[default]
    NextStateOnly,
}

/// Read access to per-state successor feature rows.
pub trait SuccessorFeatures {
    fn n_states(&self) -> usize;

    fn psi(&self, s: usize) -> &[f64];

    /// Euclidean distance between the SF rows of `s` and `s_prime`.
    fn successor_distance(&self, s: usize, s_prime: usize) -> f64 {
        self.sfc_reward(s, s_prime).sqrt()
    }

    /// Squared successor distance between two states along a trajectory,
    /// one step or `K` steps apart.
    fn sfc_reward(&self, s_t: usize, s_later: usize) -> f64 {
        self.psi(s_t)
            .iter()
            .zip(self.psi(s_later))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Tabular successor features learned by one-step TD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfTable {
    embedding: Arc<Embedding>,
    // row-major n_states x dim
    psi: Vec<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub convention: Convention,
}

impl SfTable {
    /// Zero-initialized table over the embedding's state space.
    pub fn new(embedding: Arc<Embedding>, gamma: f64, alpha: f64, convention: Convention) -> Self {
        let len = embedding.n_states() * embedding.dim();
        SfTable {
            embedding,
            psi: vec![0.0; len],
            gamma,
            alpha,
            convention,
        }
    }

    pub fn embedding(&self) -> &Arc<Embedding> {
        &self.embedding
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    fn check(&self, s: usize) -> Result<()> {
        if s >= self.n_states() {
            Err(Error::StateOutOfRange {
                id: s,
                count: self.n_states(),
            })
        } else {
            Ok(())
        }
    }

    /// One TD step on the pair `(s, s_next)` with the table's own step size.
    pub fn td_update(&mut self, s: usize, s_next: usize) -> Result<()> {
        self.td_update_with(s, s_next, self.alpha)
    }

    /// Moves row `s` toward its TD target by `alpha`; other rows are left
    /// untouched. Works in place when `s == s_next`.
    pub fn td_update_with(&mut self, s: usize, s_next: usize, alpha: f64) -> Result<()> {
        self.check(s)?;
        self.check(s_next)?;
        let d = self.dim();
        let phi_state = match self.convention {
            Convention::NextStateOnly => s_next,
            Convention::IncludeCurrent => s,
        };
        let gamma = self.gamma;
        let (rs, rn) = (s * d, s_next * d);
        // elementwise: component i of the new row only reads component i
        for i in 0..d {
            let target = gamma * self.psi[rn + i];
            let old = self.psi[rs + i];
            self.psi[rs + i] = old + alpha * (target - old);
        }
        // phi contribution: scaled by alpha, added once
        let row = &mut self.psi[rs..rs + d];
        self.embedding.add_scaled(phi_state, alpha, row);
        Ok(())
    }

    /// Copies psi out as an `n_states x dim` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_states(), self.dim(), &self.psi)
    }

    pub fn is_finite(&self) -> bool {
        self.psi.iter().all(|x| x.is_finite())
    }
}

impl SuccessorFeatures for SfTable {
    fn n_states(&self) -> usize {
        self.embedding.n_states()
    }

    fn psi(&self, s: usize) -> &[f64] {
        let d = self.dim();
        &self.psi[s * d..(s + 1) * d]
    }
}

/// Closed-form successor features for a fixed transition matrix.
#[derive(Debug, Clone)]
pub struct AnalyticSr {
    /// `n x m`, row s = psi(s).
    pub psi: DMatrix<f64>,
    /// State-occupancy matrix, `sr[(i, j)]` = discounted visits to `j` from `i`.
    pub sr: DMatrix<f64>,
    /// Metric matrix: `d(s, s')^2 = (e_s - e_s')^T W (e_s - e_s')`.
    pub w: DMatrix<f64>,
    rows: Vec<f64>,
    dim: usize,
}

impl AnalyticSr {
    /// Solves for psi given a row-stochastic `p` (`n x n`) and the feature
    /// rows `phi_rows` (`n x m`).
    ///
    /// * IncludeCurrent: `SR = (I - gamma P)^-1`
    /// * NextStateOnly: `SR = P (I - gamma P)^-1`
    ///
    /// with `psi = SR * phi_rows`. `W` is built from the occupancy matrix and
    /// the feature matrix (`Phi = phi_rows^T`, `Psi = SR^T`) as
    /// `Psi^T Phi^T Phi Psi`, independently of the `psi` rows.
    pub fn solve(p: &DMatrix<f64>, phi_rows: &DMatrix<f64>, gamma: f64, convention: Convention) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || phi_rows.nrows() != n {
            return Err(Error::InvalidPolicy("dimension mismatch".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
        }
        let a = DMatrix::identity(n, n) - p * gamma;
        let inv = a.try_inverse().ok_or(Error::Singular)?;
        let sr = match convention {
            Convention::IncludeCurrent => inv,
            Convention::NextStateOnly => p * inv,
        };
        let psi = &sr * phi_rows;
        let phi = phi_rows.transpose();
        let big_psi = sr.transpose();
        let w = big_psi.transpose() * phi.transpose() * &phi * &big_psi;
        let dim = phi_rows.ncols();
        let mut rows = Vec::with_capacity(n * dim);
        for i in 0..n {
            rows.extend(psi.row(i).iter());
        }
        Ok(AnalyticSr { psi, sr, w, rows, dim })
    }

    /// `(e_s - e_s')^T W (e_s - e_s')`.
    pub fn metric_sq(&self, s: usize, s_prime: usize) -> f64 {
        self.w[(s, s)] + self.w[(s_prime, s_prime)] - self.w[(s, s_prime)] - self.w[(s_prime, s)]
    }
}

impl SuccessorFeatures for AnalyticSr {
    fn n_states(&self) -> usize {
        self.psi.nrows()
    }

    fn psi(&self, s: usize) -> &[f64] {
        &self.rows[s * self.dim..(s + 1) * self.dim]
    }
}
