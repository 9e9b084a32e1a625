//! Per-query agent state: question, subgoals, working memory, trajectory,
//! pruned-branch log, checkpoints for backtracking, and the trace stream.

use crate::blueprint::RelationBlueprint;
use crate::kg::{Entity, Relation, Triple};
use crate::llm::UsageLedger;
use crate::refine::FailureKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A question with its dataset-provided topic entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub topic_entities: Vec<Entity>,
    /// Gold answers, present only when driven by the benchmark harness.
    #[serde(default)]
    pub gold_answers: Vec<String>,
}

impl Question {
    pub fn new(text: impl Into<String>, topic_entities: Vec<Entity>) -> Self {
        Self { text: text.into(), topic_entities, gold_answers: Vec::new() }
    }
}

/// Ordered subgoal sequence; never empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgoals {
    items: Vec<String>,
}

impl Subgoals {
    /// Panics on an empty list; the decomposition fallback guarantees at
    /// least one subgoal.
    pub fn new(items: Vec<String>) -> Self {
        assert!(!items.is_empty(), "subgoal list must be non-empty");
        Self { items }
    }

    pub fn fallback(question_text: &str) -> Self {
        Self { items: vec![question_text.to_string()] }
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintStatus {
    Open,
    Satisfied,
    Violated,
}

impl ConstraintStatus {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_lowercase().as_str() {
            "open" => Some(Self::Open),
            "satisfied" => Some(Self::Satisfied),
            "violated" => Some(Self::Violated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintState {
    pub text: String,
    pub status: ConstraintStatus,
}

/// Working memory: verified triples, per-step relation decisions,
/// intermediate conclusions, and constraint states. Forward exploration
/// only appends; truncation happens exclusively through backtracking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub verified_triples: Vec<Triple>,
    pub decisions: Vec<(usize, Relation)>,
    pub conclusions: Vec<String>,
    pub constraints: Vec<ConstraintState>,
}

impl WorkingMemory {
    pub fn any_violated(&self) -> bool {
        self.constraints.iter().any(|c| c.status == ConstraintStatus::Violated)
    }

    /// Constraints not yet satisfied, for grounded inference.
    pub fn unmet_constraints(&self) -> Vec<&ConstraintState> {
        self.constraints
            .iter()
            .filter(|c| c.status != ConstraintStatus::Satisfied)
            .collect()
    }

    /// Merge a constraint update: existing text gets the new status, new
    /// text is appended.
    pub fn upsert_constraint(&mut self, text: &str, status: ConstraintStatus) {
        match self.constraints.iter_mut().find(|c| c.text == text) {
            Some(existing) => existing.status = status,
            None => self.constraints.push(ConstraintState { text: text.into(), status }),
        }
    }

    /// Compact textual form for prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.verified_triples.is_empty() {
            out.push_str("Triples:\n");
            for t in &self.verified_triples {
                out.push_str(&format!("{t}\n"));
            }
        }
        if !self.decisions.is_empty() {
            out.push_str("Decisions:\n");
            for (step, rel) in &self.decisions {
                out.push_str(&format!("step {step}: {rel}\n"));
            }
        }
        if !self.conclusions.is_empty() {
            out.push_str("Conclusions:\n");
            for c in &self.conclusions {
                out.push_str(&format!("- {c}\n"));
            }
        }
        if !self.constraints.is_empty() {
            out.push_str("Constraints:\n");
            for c in &self.constraints {
                out.push_str(&format!("- {} [{:?}]\n", c.text, c.status));
            }
        }
        if out.is_empty() {
            out.push_str("(empty)");
        }
        out.trim_end().to_string()
    }
}

/// Alternating entity-frontier / relation-hop record of the walk; always
/// starts with a frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryNode {
    Frontier { entities: Vec<Entity> },
    Hop { relations: Vec<Relation> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    nodes: Vec<TrajectoryNode>,
}

impl Trajectory {
    pub fn start(entities: Vec<Entity>) -> Self {
        Self { nodes: vec![TrajectoryNode::Frontier { entities }] }
    }

    pub fn push_hop(&mut self, relations: Vec<Relation>) {
        self.nodes.push(TrajectoryNode::Hop { relations });
    }

    pub fn push_frontier(&mut self, entities: Vec<Entity>) {
        self.nodes.push(TrajectoryNode::Frontier { entities });
    }

    pub fn nodes(&self) -> &[TrajectoryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Relations chosen across the walk, in order.
    pub fn hops(&self) -> Vec<&Relation> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TrajectoryNode::Hop { relations } => Some(relations.iter()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn render(&self) -> String {
        self.nodes
            .iter()
            .map(|n| match n {
                TrajectoryNode::Frontier { entities } => {
                    let names: Vec<&str> = entities.iter().map(|e| e.display()).collect();
                    format!("{{{}}}", names.join(", "))
                }
                TrajectoryNode::Hop { relations } => {
                    let names: Vec<&str> = relations.iter().map(|r| r.predicate()).collect();
                    format!("--[{}]->", names.join(", "))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A candidate relation with its three similarity signals and fused score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRelation {
    pub relation: Relation,
    pub phi_loc: f64,
    pub phi_step: f64,
    pub phi_glob: f64,
    pub fused: f64,
}

/// Something discarded during exploration, kept for refinement recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrunedItem {
    Relation { relation: Relation },
    Entity { entity: Entity, via: Triple },
}

impl PrunedItem {
    pub fn display(&self) -> String {
        match self {
            PrunedItem::Relation { relation } => relation.predicate().to_string(),
            PrunedItem::Entity { entity, .. } => entity.display().to_string(),
        }
    }

    /// Stable identity used for the repeated-backtrack check.
    pub fn key(&self) -> String {
        match self {
            PrunedItem::Relation { relation } => format!("r:{}", relation.predicate()),
            PrunedItem::Entity { entity, .. } => format!("e:{}", entity.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedBranch {
    pub step: usize,
    pub item: PrunedItem,
}

/// Final answer with the model's stated reason. `text` is the primary
/// (scored) answer; extra answers land in `alternates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub reason: String,
    #[serde(default)]
    pub alternates: Vec<String>,
}

impl Answer {
    pub fn new(text: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { text: text.into(), reason: reason.into(), alternates: Vec::new() }
    }
}

/// Checkpoint recorded before each step; backtracking restores one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// The step about to execute when this snapshot was taken (1-based).
    pub step: usize,
    pub frontier: BTreeSet<Entity>,
    pub slot_ptr: usize,
    pub subgoal_idx: usize,
    pub triples_len: usize,
    pub decisions_len: usize,
    pub conclusions_len: usize,
    pub constraints: Vec<ConstraintState>,
    pub trajectory_len: usize,
    pub seen: BTreeSet<String>,
}

/// Refinement bookkeeping for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementState {
    pub max_backtracks: usize,
    pub attempts_used: usize,
    /// (t_err, sorted recall keys) of the previous backtrack; an identical
    /// consecutive request is rejected.
    pub last_backtrack: Option<(usize, Vec<String>)>,
    pub triggers: Vec<(FailureKind, usize)>,
}

impl RefinementState {
    pub fn new(max_backtracks: usize) -> Self {
        Self { max_backtracks, attempts_used: 0, last_backtrack: None, triggers: Vec::new() }
    }

    pub fn triggered(&self) -> bool {
        !self.triggers.is_empty()
    }
}

/// Full mutable state of one query run.
#[derive(Debug, Clone)]
pub struct AgentState {
    /// Completed expansion steps.
    pub step: usize,
    pub frontier: BTreeSet<Entity>,
    /// 1-based blueprint slot pointer; non-decreasing between backtracks.
    pub slot_ptr: usize,
    pub subgoal_idx: usize,
    pub memory: WorkingMemory,
    pub trajectory: Trajectory,
    pub pruned_log: Vec<PrunedBranch>,
    pub blueprint: RelationBlueprint,
    pub subgoals: Subgoals,
    /// Ids of every entity that has been on the frontier.
    pub seen: BTreeSet<String>,
    pub ledger: UsageLedger,
    pub snapshots: Vec<Snapshot>,
    /// Relations recalled by refinement, to be re-injected next step.
    pub pending_recalls: Vec<Relation>,
    pub total_expansions: usize,
    pub grounded_fallback: bool,
    pub refinement: RefinementState,
}

impl AgentState {
    pub fn new(
        question: &Question,
        blueprint: RelationBlueprint,
        subgoals: Subgoals,
        ledger: UsageLedger,
        max_backtracks: usize,
    ) -> Self {
        let frontier: BTreeSet<Entity> = question.topic_entities.iter().cloned().collect();
        let seen = frontier.iter().map(|e| e.id.clone()).collect();
        let trajectory = Trajectory::start(question.topic_entities.clone());
        Self {
            step: 0,
            frontier,
            slot_ptr: 1,
            subgoal_idx: 0,
            memory: WorkingMemory::default(),
            trajectory,
            pruned_log: Vec::new(),
            blueprint,
            subgoals,
            seen,
            ledger,
            snapshots: Vec::new(),
            pending_recalls: Vec::new(),
            total_expansions: 0,
            grounded_fallback: false,
            refinement: RefinementState::new(max_backtracks),
        }
    }

    pub fn current_subgoal(&self) -> &str {
        &self.subgoals.items()[self.subgoal_idx]
    }

    pub fn capture_snapshot(&self, step: usize) -> Snapshot {
        Snapshot {
            step,
            frontier: self.frontier.clone(),
            slot_ptr: self.slot_ptr,
            subgoal_idx: self.subgoal_idx,
            triples_len: self.memory.verified_triples.len(),
            decisions_len: self.memory.decisions.len(),
            conclusions_len: self.memory.conclusions.len(),
            constraints: self.memory.constraints.clone(),
            trajectory_len: self.trajectory.len(),
            seen: self.seen.clone(),
        }
    }
}

/// One line of the per-query JSON-lines trace stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    RunStarted { question: String, topic_entities: Vec<String> },
    Decomposed { subgoals: Vec<String> },
    QuestionMasked { masked: String },
    BlueprintObtained {
        slots: Vec<String>,
        origin: String,
        top_similarity: f64,
        anchor: Option<String>,
    },
    StepStarted { step: usize, slot_ptr: usize, subgoal: String, frontier: Vec<String> },
    RelationsCollected { step: usize, relations: Vec<String> },
    RelationsScored { step: usize, scored: Vec<ScoredRelation> },
    Shortlisted { step: usize, relations: Vec<String> },
    RelationsChosen { step: usize, relations: Vec<String>, step_aligned: String },
    LlmExchange { step: usize, purpose: String, prompt: String, response: String },
    Expanded {
        step: usize,
        frontier: Vec<String>,
        new_triples: Vec<String>,
        pruned_entities: Vec<String>,
    },
    MemoryUpdated {
        step: usize,
        conclusions_added: usize,
        constraints: Vec<String>,
        subgoal_advanced: bool,
    },
    SufficiencyChecked { step: usize, sufficient: bool },
    FailureDetected { step: usize, kind: String, detail: String },
    Reflected { step: usize, t_err: usize, reason: String, recalls: Vec<String> },
    Backtracked { t_err: usize, attempts_used: usize, frontier: Vec<String> },
    GroundedFallback { reason: String },
    RunFinished {
        answer: String,
        reason: String,
        grounded: bool,
        calls: u64,
        input_tokens: u64,
        output_tokens: u64,
    },
}

/// In-memory event stream for one query; serializes to JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn llm_exchange_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::LlmExchange { .. }))
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut writer: W) -> std::io::Result<()> {
        writer.write_all(self.to_jsonl().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_render_sections() {
        let mut memory = WorkingMemory::default();
        assert_eq!(memory.render(), "(empty)");
        memory.upsert_constraint("last won", ConstraintStatus::Open);
        memory.upsert_constraint("last won", ConstraintStatus::Satisfied);
        assert_eq!(memory.constraints.len(), 1);
        assert!(!memory.any_violated());
        memory.upsert_constraint("after 2000", ConstraintStatus::Violated);
        assert!(memory.any_violated());
        assert_eq!(memory.unmet_constraints().len(), 1);
    }

    #[test]
    fn trajectory_alternates_and_truncates() {
        let mut tr = Trajectory::start(vec![Entity::new("A")]);
        tr.push_hop(vec![Relation::new("r1").unwrap()]);
        tr.push_frontier(vec![Entity::new("B")]);
        assert_eq!(tr.len(), 3);
        assert!(matches!(tr.nodes()[0], TrajectoryNode::Frontier { .. }));
        assert!(matches!(tr.nodes()[1], TrajectoryNode::Hop { .. }));
        assert_eq!(tr.hops().len(), 1);
        tr.truncate(1);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn trace_serializes_to_jsonl() {
        let mut trace = Trace::default();
        trace.push(TraceEvent::RunStarted {
            question: "q".into(),
            topic_entities: vec!["A".into()],
        });
        trace.push(TraceEvent::GroundedFallback { reason: "depth".into() });
        let text = trace.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"event\":\"run_started\""));
    }
}
