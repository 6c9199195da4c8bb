//! Scheduled intrinsic drive: a scheduler picks which of two policies an
//! actor follows for each slot of an episode, while one learner trains both
//! heads (and the successor features) from a shared replay.

pub mod actor;
pub mod learner;
pub mod scheduler;
pub mod training;

use serde::{Deserialize, Serialize};

pub use actor::{Actor, EpisodeStats, Snapshot};
pub use learner::{Learner, StepDiagnostics};
pub use scheduler::{
    slot_length, MacroQTable, MacroTransition, Scheduler, SchedulerContext, SchedulerKind, ThresholdVariant,
    DEFAULT_SLOTS, HEURISTIC_MEDIAN_THRESHOLD,
};
pub use training::{evaluate, run_training, EpisodeRecord, LearnerRecord, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    Extrinsic,
    Intrinsic,
}

impl TaskId {
    pub const ALL: [TaskId; 2] = [TaskId::Extrinsic, TaskId::Intrinsic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            TaskId::Extrinsic => 'E',
            TaskId::Intrinsic => 'I',
        }
    }
}

/// Which agent of the comparison matrix is being trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Extrinsic reward only.
    M,
    /// Normalized intrinsic reward added to the scaled extrinsic reward,
    /// one policy.
    BonusSum,
    /// Separate extrinsic and intrinsic heads, scheduled per slot.
    #[default]
    Sid,
}

impl AgentKind {
    pub fn uses_scheduler(self) -> bool {
        self == AgentKind::Sid
    }
}
