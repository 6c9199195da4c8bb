//! Successor feature control (SFC) and scheduled intrinsic drive (SID) on
//! tabular gridworlds.
//!
//! The crate is organised bottom-up: environments and their exact oracles,
//! fixed feature embeddings, successor features, baseline curiosity models
//! and reward normalization, two-head Q-learning, two-tier replay, and the
//! actor/learner agent that ties them together.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod intrinsic;
pub mod nn;
pub mod qlearn;
pub mod replay;
pub mod report;
pub mod sf;
pub mod sid;
pub mod stats;

pub use checkpoint::Checkpoint;
pub use config::Config;
pub use env::{Action, Cell, GridEnv, GridSpec, Observation, StepOutcome};
pub use error::{Error, Result};
pub use features::{Embedding, EmbeddingKind};
pub use intrinsic::{IntrinsicKind, Normalizer};
pub use qlearn::{QMode, TargetNetwork, ValueApproximator};
pub use replay::{Transition, TwoTierBuffer};
pub use report::{aggregate, emit_plot_data, CurveSummary, RunCurve, RunManifest};
pub use sf::{AnalyticSr, Convention, SfTable, SuccessorFeatures};
pub use sid::{AgentKind, Learner, RunOutput, Scheduler, SchedulerKind, TaskId};
pub use stats::RunningStats;
