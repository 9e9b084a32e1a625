//! Failure-aware refinement: detect failure signals, reflect over the
//! trajectory to locate the faulty decision point, backtrack to the
//! checkpoint before it with recalled pruned candidates, and fall back to
//! grounded inference when no verifiable chain is recoverable.

use crate::explore::ops::chat_traced;
use crate::explore::state::{
    AgentState, Answer, PrunedBranch, PrunedItem, Question, Trace, TraceEvent, Trajectory,
    WorkingMemory,
};
use crate::kg::Entity;
use crate::llm::{parse_json, parse_list, ChatClient, LlmError, PromptLibrary, TemplateId, UsageLedger};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("refinement budget exhausted")]
    BudgetExhausted,
    #[error("no snapshot recorded for step {0}")]
    InvalidStep(usize),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureKind {
    Stagnation,
    InsufficientEvidence,
    UnverifiableConstraint,
}

impl FailureKind {
    pub fn name(self) -> &'static str {
        match self {
            FailureKind::Stagnation => "stagnation",
            FailureKind::InsufficientEvidence => "insufficient_evidence",
            FailureKind::UnverifiableConstraint => "unverifiable_constraint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureSignal {
    pub kind: FailureKind,
    pub step: usize,
    pub detail: String,
}

/// What the engine observed in the step just executed, for the detector.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepObservation {
    pub step: usize,
    /// Present after an expansion: (frontier became empty, count of
    /// never-seen entities reached).
    pub expansion: Option<(bool, usize)>,
    /// The sufficiency check reported insufficient evidence.
    pub insufficient_answer: bool,
}

/// Detector rules, checked in order: stagnation (empty frontier or no
/// unseen entity), insufficient evidence at step two or beyond, then any
/// violated constraint.
pub fn detect_failure(state: &AgentState, obs: &StepObservation) -> Option<FailureSignal> {
    if let Some((frontier_empty, unseen)) = obs.expansion {
        if frontier_empty {
            return Some(FailureSignal {
                kind: FailureKind::Stagnation,
                step: obs.step,
                detail: "expansion produced an empty frontier".into(),
            });
        }
        if unseen == 0 {
            return Some(FailureSignal {
                kind: FailureKind::Stagnation,
                step: obs.step,
                detail: "expansion produced no unseen entity".into(),
            });
        }
    }
    if obs.insufficient_answer && obs.step >= 2 {
        return Some(FailureSignal {
            kind: FailureKind::InsufficientEvidence,
            step: obs.step,
            detail: "sufficiency check failed".into(),
        });
    }
    if state.memory.any_violated() {
        return Some(FailureSignal {
            kind: FailureKind::UnverifiableConstraint,
            step: obs.step,
            detail: "a constraint is violated".into(),
        });
    }
    None
}

/// Where reflection decided to intervene.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionResult {
    /// 1-based step whose decision is suspected faulty.
    pub t_err: usize,
    pub reason: String,
    /// Pruned branches to recall, all logged at steps >= `t_err`.
    pub recall_candidates: Vec<PrunedBranch>,
}

impl ReflectionResult {
    /// Minimal intervention: latest step, nothing recalled.
    pub fn minimal(state: &AgentState, reason: impl Into<String>) -> Self {
        Self { t_err: state.step.max(1), reason: reason.into(), recall_candidates: Vec::new() }
    }

    /// True when this result asks for no state change.
    pub fn is_minimal(&self, state: &AgentState) -> bool {
        self.recall_candidates.is_empty() && self.t_err >= state.step.max(1)
    }
}

/// Evidence-conditioned reflection. First a necessity judgment (JSON with
/// `Add` and `Reason`); when it declines or fails to parse, the result is
/// the minimal intervention. Otherwise the re-routing prompt selects
/// pruned candidates to recall; `t_err` is the earliest step among the
/// matches. Takes the state mutably for its ledger only.
pub fn reflect(
    state: &mut AgentState,
    signal: &FailureSignal,
    question: &Question,
    prompts: &PromptLibrary,
    client: &ChatClient,
    trace: &mut Trace,
) -> Result<ReflectionResult, LlmError> {
    let pruned_display: Vec<String> =
        state.pruned_log.iter().map(|b| b.item.display()).collect();
    let memory_text = state.memory.render();
    let triplets_text = crate::explore::ops::render_triples(&state.memory.verified_triples);
    let slots = BTreeMap::from([
        ("question", question.text.clone()),
        ("entities", crate::llm::format_list(&pruned_display)),
        ("memory", memory_text.clone()),
        ("triplets", triplets_text),
    ]);
    let response = chat_traced(
        client,
        prompts,
        TemplateId::RetrievalNecessity,
        &slots,
        signal.step,
        &mut state.ledger,
        trace,
    )?;
    let judgment = match parse_json(&response, &["Add", "Reason"]) {
        Ok(map) => map,
        Err(_) => return Ok(ReflectionResult::minimal(state, "necessity judgment unparseable")),
    };
    let add = truthy(&judgment["Add"]);
    let reason = match &judgment["Reason"] {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if !add {
        return Ok(ReflectionResult::minimal(state, reason));
    }

    let slots = BTreeMap::from([
        ("question", question.text.clone()),
        ("reason", reason.clone()),
        ("candidate_entities", crate::llm::format_list(&pruned_display)),
        ("memory", memory_text),
    ]);
    let response = chat_traced(
        client,
        prompts,
        TemplateId::Backtracking,
        &slots,
        signal.step,
        &mut state.ledger,
        trace,
    )?;
    let picks: Vec<String> = parse_list(&response)
        .unwrap_or_default()
        .into_iter()
        .map(|s| s.trim().to_lowercase())
        .collect();
    let recalls: Vec<PrunedBranch> = state
        .pruned_log
        .iter()
        .filter(|branch| {
            let display = branch.item.display().to_lowercase();
            let id = match &branch.item {
                PrunedItem::Entity { entity, .. } => entity.id.to_lowercase(),
                PrunedItem::Relation { relation } => relation.predicate().to_lowercase(),
            };
            picks.iter().any(|p| *p == display || *p == id)
        })
        .cloned()
        .collect();
    if recalls.is_empty() {
        return Ok(ReflectionResult::minimal(state, reason));
    }
    let t_err = recalls.iter().map(|b| b.step).min().expect("non-empty recalls");
    Ok(ReflectionResult { t_err, reason, recall_candidates: recalls })
}

fn truthy(value: &Value) -> bool {
    match value {
        Value::Bool(b) => *b,
        Value::String(s) => matches!(s.trim().to_lowercase().as_str(), "true" | "yes" | "y"),
        Value::Number(n) => n.as_f64().is_some_and(|f| f != 0.0),
        _ => false,
    }
}

/// Targeted backtracking: restore the checkpoint taken before `t_err`,
/// merge recalled entities into the frontier, queue recalled relations for
/// the next candidate set, and drop pruned-log entries at or after
/// `t_err`. A second consecutive backtrack to the same target with the
/// same recall set is rejected as budget exhaustion.
pub fn backtrack(state: &mut AgentState, result: &ReflectionResult) -> Result<(), RefineError> {
    if state.refinement.attempts_used >= state.refinement.max_backtracks {
        return Err(RefineError::BudgetExhausted);
    }
    let mut signature_keys: Vec<String> =
        result.recall_candidates.iter().map(|b| b.item.key()).collect();
    signature_keys.sort();
    let signature = (result.t_err, signature_keys);
    if state.refinement.last_backtrack.as_ref() == Some(&signature) {
        return Err(RefineError::BudgetExhausted);
    }
    if result.t_err == 0 || result.t_err > state.step {
        return Err(RefineError::InvalidStep(result.t_err));
    }
    let snapshot = state
        .snapshots
        .get(result.t_err - 1)
        .cloned()
        .ok_or(RefineError::InvalidStep(result.t_err))?;

    state.frontier = snapshot.frontier;
    state.slot_ptr = snapshot.slot_ptr;
    state.subgoal_idx = snapshot.subgoal_idx;
    state.memory.verified_triples.truncate(snapshot.triples_len);
    state.memory.decisions.truncate(snapshot.decisions_len);
    state.memory.conclusions.truncate(snapshot.conclusions_len);
    state.memory.constraints = snapshot.constraints;
    state.trajectory.truncate(snapshot.trajectory_len);
    state.seen = snapshot.seen;
    state.step = result.t_err - 1;
    state.snapshots.truncate(result.t_err - 1);
    state.pruned_log.retain(|branch| branch.step < result.t_err);

    state.pending_recalls.clear();
    for branch in &result.recall_candidates {
        match &branch.item {
            PrunedItem::Entity { entity, .. } => {
                state.seen.insert(entity.id.clone());
                state.frontier.insert(entity.clone());
            }
            PrunedItem::Relation { relation } => {
                state.pending_recalls.push(relation.clone());
            }
        }
    }

    state.refinement.attempts_used += 1;
    state.refinement.last_backtrack = Some(signature);
    Ok(())
}

/// Terminal grounded inference over verified evidence. Never fails closed:
/// a backend error yields an empty answer with a diagnostic reason so the
/// run still terminates.
pub fn grounded_infer(
    question: &Question,
    memory: &WorkingMemory,
    trajectory: &Trajectory,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Answer {
    let mut evidence = String::new();
    evidence.push_str("Verified path: ");
    evidence.push_str(&trajectory.render());
    evidence.push('\n');
    evidence.push_str(&memory.render());
    let unmet = memory.unmet_constraints();
    if !unmet.is_empty() {
        evidence.push_str("\nUnmet constraints:\n");
        for c in unmet {
            evidence.push_str(&format!("- {} [{:?}]\n", c.text, c.status));
        }
    }
    let slots = BTreeMap::from([
        ("question", question.text.clone()),
        ("evidence", evidence),
    ]);
    match chat_traced(client, prompts, TemplateId::GroundedInference, &slots, 0, ledger, trace) {
        Ok(text) => Answer::new(text.trim(), "grounded inference"),
        Err(e) => {
            trace.push(TraceEvent::GroundedFallback {
                reason: format!("grounded inference unavailable: {e}"),
            });
            Answer::new("", "grounded inference unavailable")
        }
    }
}

/// Render recalled entities for injection bookkeeping and traces.
pub fn recall_names(recalls: &[PrunedBranch]) -> Vec<String> {
    recalls.iter().map(|b| b.item.display()).collect()
}

/// Entities among the recalls.
pub fn recalled_entities(recalls: &[PrunedBranch]) -> Vec<Entity> {
    recalls
        .iter()
        .filter_map(|b| match &b.item {
            PrunedItem::Entity { entity, .. } => Some(entity.clone()),
            _ => None,
        })
        .collect()
}
