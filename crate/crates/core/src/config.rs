//! Run configuration, read from a sectioned TOML file. Every key has a
//! default, so an empty file is a valid (small) three-rooms SID run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::GridSpec;
use crate::error::{Error, Result};
use crate::features::{Embedding, EmbeddingKind};
use crate::intrinsic::{IntrinsicKind, DEFAULT_ETA, DEFAULT_GAMMA_I};
use crate::qlearn::{self, QMode};
use crate::replay;
use crate::sf::{Convention, DEFAULT_ALPHA_SF, DEFAULT_GAMMA_SF};
use crate::sid::scheduler::{SchedulerKind, ThresholdVariant, DEFAULT_MACRO_ALPHA, DEFAULT_SLOTS, HEURISTIC_MEDIAN_THRESHOLD};
use crate::sid::AgentKind;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub env: EnvSection,
    pub agent: AgentSection,
    /// Only meaningful for SID agents; setting it for others is an error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedulerSection>,
    pub q: QSection,
    pub sf: SfSection,
    pub embedding: EmbeddingSection,
    pub intrinsic: IntrinsicSection,
    pub replay: ReplaySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Environment-step budget. The episode that crosses it is finished.
    pub budget: u64,
    pub deterministic: bool,
    pub learner_steps_per_episode: usize,
    /// Replay size before the learner starts.
    pub learn_start: usize,
    /// Learner steps between actor snapshot refreshes.
    pub snapshot_interval: u64,
    /// Greedy extrinsic-head episodes played after training.
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            budget: 50_000,
            deterministic: true,
            learner_steps_per_episode: 32,
            learn_start: replay::BATCH_SIZE,
            snapshot_interval: 100,
            eval_episodes: 50,
            eval_epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// Built-in name (`three_rooms`, `flytrap`, `distraction`, `chain:<n>`)
    /// or a label for `map`.
    pub name: String,
    /// Plain-text map file; overrides the built-in layout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            name: "three_rooms".into(),
            map: None,
            max_steps: None,
        }
    }
}

const DEFAULT_MAP_MAX_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub kind: AgentKind,
    pub actors: usize,
    pub k: usize,
    pub epsilon_base: f64,
    pub epsilon_alpha: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            kind: AgentKind::Sid,
            actors: 8,
            k: qlearn::DEFAULT_K,
            epsilon_base: qlearn::EPSILON_BASE,
            epsilon_alpha: qlearn::EPSILON_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerName {
    #[default]
    Random,
    Switching,
    MacroQ,
    ThresholdQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdName {
    #[default]
    RunningMean,
    HeuristicMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub kind: SchedulerName,
    /// ThresholdQ only.
    pub variant: ThresholdName,
    pub threshold: f64,
    pub slots: usize,
    pub macro_alpha: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            kind: SchedulerName::Random,
            variant: ThresholdName::RunningMean,
            threshold: HEURISTIC_MEDIAN_THRESHOLD,
            slots: DEFAULT_SLOTS,
            macro_alpha: DEFAULT_MACRO_ALPHA,
        }
    }
}

impl SchedulerSection {
    pub fn kind(&self) -> SchedulerKind {
        match self.kind {
            SchedulerName::Random => SchedulerKind::Random,
            SchedulerName::Switching => SchedulerKind::Switching,
            SchedulerName::MacroQ => SchedulerKind::MacroQ,
            SchedulerName::ThresholdQ => SchedulerKind::ThresholdQ(match self.variant {
                ThresholdName::RunningMean => ThresholdVariant::RunningMean,
                ThresholdName::HeuristicMedian => ThresholdVariant::HeuristicMedian {
                    threshold: self.threshold,
                },
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QSection {
    pub mode: QMode,
    /// Defaults to 0.1 (tabular) or 1e-4 (dense).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub gamma_e: f64,
    pub sync_interval: u64,
}

impl Default for QSection {
    fn default() -> Self {
        QSection {
            mode: QMode::Tabular,
            alpha: None,
            gamma_e: qlearn::DEFAULT_GAMMA,
            sync_interval: qlearn::DEFAULT_SYNC_INTERVAL,
        }
    }
}

impl QSection {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(match self.mode {
            QMode::Tabular => qlearn::DEFAULT_ALPHA_TABULAR,
            QMode::Dense => qlearn::DEFAULT_ALPHA_DENSE,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfSection {
    pub gamma: f64,
    pub alpha: f64,
    pub convention: Convention,
}

impl Default for SfSection {
    fn default() -> Self {
        SfSection {
            gamma: DEFAULT_GAMMA_SF,
            alpha: DEFAULT_ALPHA_SF,
            convention: Convention::NextStateOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub kind: EmbeddingKind,
    /// Required for random projections; must equal the state count for
    /// one-hot if given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub seed: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            kind: EmbeddingKind::OneHot,
            dim: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrinsicSection {
    /// Defaults to `none` for agent M and `sfc` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<IntrinsicKind>,
    pub eta: f64,
    pub gamma_i: f64,
    /// Multiplies raw intrinsic rewards before normalization.
    pub scale: f64,
}

impl Default for IntrinsicSection {
    fn default() -> Self {
        IntrinsicSection {
            kind: None,
            eta: DEFAULT_ETA,
            gamma_i: DEFAULT_GAMMA_I,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub main_capacity: usize,
    pub high_capacity: usize,
    pub batch: usize,
    pub high_share: usize,
}

impl Default for ReplaySection {
    fn default() -> Self {
        ReplaySection {
            main_capacity: replay::MAIN_CAPACITY,
            high_capacity: replay::HIGH_CAPACITY,
            batch: replay::BATCH_SIZE,
            high_share: replay::HIGH_SHARE,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn unit_discount(name: &str, g: f64) -> Result<()> {
    check((0.0..1.0).contains(&g), || format!("{name} must be in [0, 1), got {g}"))
}

impl Config {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Config = toml::from_str(&text)?;
        // map paths are relative to the config file
        if let (Some(map), Some(dir)) = (cfg.env.map.as_mut(), path.parent()) {
            if map.is_relative() {
                *map = dir.join(&*map);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn intrinsic_kind(&self) -> IntrinsicKind {
        self.intrinsic.kind.unwrap_or(match self.agent.kind {
            AgentKind::M => IntrinsicKind::None,
            _ => IntrinsicKind::Sfc,
        })
    }

    pub fn scheduler_section(&self) -> SchedulerSection {
        self.scheduler.clone().unwrap_or_default()
    }

    pub fn build_spec(&self) -> Result<GridSpec> {
        let mut spec = match &self.env.map {
            Some(path) => GridSpec::from_file(path, self.env.max_steps.unwrap_or(DEFAULT_MAP_MAX_STEPS))?,
            None => GridSpec::builtin(&self.env.name)?,
        };
        if let Some(m) = self.env.max_steps {
            spec.set_max_steps(m);
        }
        Ok(spec)
    }

    pub fn build_embedding(&self, n_states: usize) -> Result<Embedding> {
        match self.embedding.kind {
            EmbeddingKind::OneHot => {
                if let Some(d) = self.embedding.dim {
                    check(d == n_states, || format!("one-hot embedding needs dim = {n_states}, got {d}"))?;
                }
                Ok(Embedding::one_hot(n_states))
            }
            EmbeddingKind::RandomProjection => {
                let dim = self
                    .embedding
                    .dim
                    .ok_or_else(|| Error::Config("random projection needs embedding.dim".into()))?;
                Ok(Embedding::random_projection(n_states, dim, self.embedding.seed))
            }
        }
    }

    /// Rejects inconsistent or out-of-range settings. Called before any
    /// work starts.
    pub fn validate(&self) -> Result<()> {
        let intrinsic = self.intrinsic_kind();
        match self.agent.kind {
            AgentKind::M => check(intrinsic == IntrinsicKind::None, || {
                format!("agent m takes no intrinsic reward (got {})", intrinsic.label())
            })?,
            kind => check(intrinsic != IntrinsicKind::None, || {
                format!("agent {kind:?} needs an intrinsic reward kind")
            })?,
        }
        check(self.agent.kind.uses_scheduler() || self.scheduler.is_none(), || {
            format!("agent {:?} has no scheduler; remove the [scheduler] section", self.agent.kind)
        })?;
        let sched = self.scheduler_section();
        check(sched.slots >= 1, || "scheduler.slots must be at least 1".into())?;
        check(sched.macro_alpha > 0.0 && sched.macro_alpha <= 1.0, || {
            "scheduler.macro_alpha must be in (0, 1]".into()
        })?;
        check(self.agent.actors >= 1, || "agent.actors must be at least 1".into())?;
        check(self.agent.k >= 1, || "agent.k must be at least 1".into())?;
        check(self.agent.epsilon_base > 0.0 && self.agent.epsilon_base <= 1.0, || {
            "agent.epsilon_base must be in (0, 1]".into()
        })?;
        check(self.agent.epsilon_alpha >= 0.0, || "agent.epsilon_alpha must be non-negative".into())?;
        check(self.q.alpha() > 0.0, || "q.alpha must be positive".into())?;
        check(self.q.sync_interval >= 1, || "q.sync_interval must be at least 1".into())?;
        unit_discount("q.gamma_e", self.q.gamma_e)?;
        unit_discount("intrinsic.gamma_i", self.intrinsic.gamma_i)?;
        unit_discount("sf.gamma", self.sf.gamma)?;
        check(self.sf.alpha > 0.0 && self.sf.alpha <= 1.0, || "sf.alpha must be in (0, 1]".into())?;
        check(self.intrinsic.eta > 0.0, || "intrinsic.eta must be positive".into())?;
        check(self.intrinsic.scale >= 0.0 && self.intrinsic.scale.is_finite(), || {
            "intrinsic.scale must be finite and non-negative".into()
        })?;
        check(self.replay.main_capacity >= 1 && self.replay.high_capacity >= 1, || {
            "replay capacities must be positive".into()
        })?;
        check(self.replay.batch >= 1, || "replay.batch must be at least 1".into())?;
        check(self.replay.high_share <= self.replay.batch, || {
            "replay.high_share cannot exceed replay.batch".into()
        })?;
        check(self.run.snapshot_interval >= 1, || "run.snapshot_interval must be at least 1".into())?;
        check((0.0..=1.0).contains(&self.run.eval_epsilon), || "run.eval_epsilon must be in [0, 1]".into())?;
        let spec = self.build_spec()?;
        self.build_embedding(spec.n_states())?;
        Ok(())
    }

    /// Hex SHA-256 over the canonical config text and the seed.
    pub fn hash(&self, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml_string().as_bytes());
        h.update(seed.to_le_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_valid() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c.agent.kind, AgentKind::Sid);
        assert_eq!(c.intrinsic_kind(), IntrinsicKind::Sfc);
        assert_eq!(c.agent.actors, 8);
        assert_eq!(c.agent.k, 5);
        assert_eq!(c.scheduler_section().slots, 8);
        assert_eq!(c.intrinsic.eta, 3.0);
    }

    #[test]
    fn sections_parse() {
        let c = Config::from_toml_str(
            r#"
            [run]
            seed = 4
            budget = 1000
            [env]
            name = "flytrap"
            [agent]
            kind = "bonus_sum"
            [intrinsic]
            kind = "rnd"
            [replay]
            batch = 64
            high_share = 16
            "#,
        )
        .unwrap();
        assert_eq!(c.run.seed, 4);
        assert_eq!(c.agent.kind, AgentKind::BonusSum);
        assert_eq!(c.intrinsic_kind(), IntrinsicKind::Rnd);
        assert_eq!(c.build_spec().unwrap().name(), "flytrap");
    }

    #[test]
    fn threshold_scheduler() {
        let c = Config::from_toml_str("[scheduler]\nkind = \"threshold_q\"\nvariant = \"heuristic_median\"\n").unwrap();
        assert_eq!(
            c.scheduler_section().kind(),
            SchedulerKind::ThresholdQ(ThresholdVariant::HeuristicMedian { threshold: 0.007 })
        );
    }

    #[test]
    fn invalid_combinations_rejected() {
        for text in [
            "[agent]\nkind = \"m\"\n[intrinsic]\nkind = \"sfc\"\n",
            "[agent]\nkind = \"bonus_sum\"\n[intrinsic]\nkind = \"none\"\n",
            "[agent]\nkind = \"m\"\n[scheduler]\nkind = \"random\"\n",
            "[agent]\nactors = 0\n",
            "[q]\ngamma_e = 1.0\n",
            "[replay]\nbatch = 8\nhigh_share = 9\n",
            "[env]\nname = \"nowhere\"\n",
            "[embedding]\nkind = \"random_projection\"\n",
            "[embedding]\ndim = 3\n",
            "[bogus]\nx = 1\n",
        ] {
            assert!(Config::from_toml_str(text).is_err(), "accepted: {text}");
        }
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut c = Config::from_toml_str("[env]\nname = \"chain:6\"\n").unwrap();
        c.q.alpha = Some(0.25);
        let back = Config::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.hash(1), back.hash(1));
        assert_ne!(c.hash(1), c.hash(2));
    }
}
