//! Online blueprint-guided graph exploration.
//!
//! One query run is a sequential state machine: decompose the question
//! into subgoals, retrieve or adapt a relational blueprint, then expand
//! the entity frontier step by step. Each step aligns the active subgoal
//! to a blueprint slot (monotone, clamped), scores candidate relations by
//! fused local/step/global similarity, prunes with a structure-consistency
//! safeguard, expands and filters entities, updates working memory, and
//! checks answer sufficiency. Failure signals hand control to [`crate::refine`].

pub mod config;
mod engine;
pub mod ops;
pub mod state;

pub use config::{default_denylist, ConfigOverlay, EngineConfig, RerankWeights};
pub use engine::{Engine, QueryOutcome};
pub use ops::{BlueprintOrigin, Expansion, StepContext, Sufficiency};
pub use state::{
    AgentState, Answer, ConstraintState, ConstraintStatus, PrunedBranch, PrunedItem, Question,
    ScoredRelation, Snapshot, Subgoals, Trace, TraceEvent, Trajectory, TrajectoryNode,
    WorkingMemory,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("entity linking failed: question has no topic entities")]
    EntityLinkingFailed,
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("blueprint library is empty")]
    EmptyLibrary,
    #[error("no candidate relations to score")]
    EmptyCandidates,
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Kg(#[from] crate::kg::KgError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}
