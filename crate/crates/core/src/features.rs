//! Fixed state embeddings. Never trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    OneHot,
    RandomProjection,
}

/// Everything needed to rebuild an [`Embedding`] bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub seed: u64,
    pub n_states: usize,
}

/// Fixed feature map from state ids to length-`dim` vectors.
///
/// `RandomProjection` draws an `n_states x dim` table once, entries i.i.d.
/// `N(0, 1/dim)`, so each column has expected squared norm 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmbeddingSpec", into = "EmbeddingSpec")]
pub struct Embedding {
    spec: EmbeddingSpec,
    // row s = phi(s); empty for one-hot
    table: Vec<f64>,
}

impl Embedding {
    pub fn one_hot(n_states: usize) -> Self {
        Embedding {
            spec: EmbeddingSpec {
                kind: EmbeddingKind::OneHot,
                dim: n_states,
                seed: 0,
                n_states,
            },
            table: Vec::new(),
        }
    }

    pub fn random_projection(n_states: usize, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("valid std");
        let table = (0..n_states * dim).map(|_| normal.sample(&mut rng)).collect();
        Embedding {
            spec: EmbeddingSpec {
                kind: EmbeddingKind::RandomProjection,
                dim,
                seed,
                n_states,
            },
            table,
        }
    }

    pub fn from_spec(spec: EmbeddingSpec) -> Result<Self> {
        match spec.kind {
            EmbeddingKind::OneHot => {
                if spec.dim != spec.n_states {
                    return Err(Error::Config(format!(
                        "one-hot embedding needs dim = state count ({} != {})",
                        spec.dim, spec.n_states
                    )));
                }
                Ok(Self::one_hot(spec.n_states))
            }
            EmbeddingKind::RandomProjection => {
                if spec.dim == 0 {
                    return Err(Error::Config("embedding dim must be positive".into()));
                }
                Ok(Self::random_projection(spec.n_states, spec.dim, spec.seed))
            }
        }
    }

    pub fn spec(&self) -> EmbeddingSpec {
        self.spec
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.spec.kind
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn n_states(&self) -> usize {
        self.spec.n_states
    }

    fn check(&self, state_id: usize) -> Result<()> {
        if state_id >= self.spec.n_states {
            Err(Error::StateOutOfRange {
                id: state_id,
                count: self.spec.n_states,
            })
        } else {
            Ok(())
        }
    }

    pub fn embed(&self, state_id: usize) -> Result<Vec<f64>> {
        self.check(state_id)?;
        Ok(match self.spec.kind {
            EmbeddingKind::OneHot => {
                let mut v = vec![0.0; self.spec.dim];
                v[state_id] = 1.0;
                v
            }
            EmbeddingKind::RandomProjection => self.row(state_id).to_vec(),
        })
    }

    fn row(&self, state_id: usize) -> &[f64] {
        let d = self.spec.dim;
        &self.table[state_id * d..(state_id + 1) * d]
    }

    /// `out += scale * phi(state_id)` without allocating.
    pub fn add_scaled(&self, state_id: usize, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.spec.dim);
        match self.spec.kind {
            EmbeddingKind::OneHot => out[state_id] += scale,
            EmbeddingKind::RandomProjection => {
                for (o, p) in out.iter_mut().zip(self.row(state_id)) {
                    *o += scale * p;
                }
            }
        }
    }

    /// The `n_states x dim` matrix whose rows are the feature vectors.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        match self.spec.kind {
            EmbeddingKind::OneHot => nalgebra::DMatrix::identity(self.spec.n_states, self.spec.n_states),
            EmbeddingKind::RandomProjection => {
                nalgebra::DMatrix::from_row_slice(self.spec.n_states, self.spec.dim, &self.table)
            }
        }
    }
}

impl TryFrom<EmbeddingSpec> for Embedding {
    type Error = Error;

    fn try_from(spec: EmbeddingSpec) -> Result<Self> {
        Embedding::from_spec(spec)
    }
}

impl From<Embedding> for EmbeddingSpec {
    fn from(e: Embedding) -> Self {
        e.spec
    }
}
