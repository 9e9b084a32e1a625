//! The individual exploration operations. Each takes its dependencies
//! explicitly so it can be tested in isolation; [`super::engine::Engine`]
//! composes them into the run loop.

use super::config::{denylist_matches, RerankWeights};
use super::state::{
    Answer, ConstraintStatus, Question, ScoredRelation, Subgoals, Trace, TraceEvent,
    WorkingMemory,
};
use super::EngineError;
use crate::blueprint::{BlueprintLibrary, RelationBlueprint};
use crate::embed::{cosine, EmbedError, Embedding, Encoder, VectorIndex};
use crate::kg::{Direction, Entity, GraphBackend, Relation, Triple};
use crate::llm::{
    format_list, parse_json, parse_list, ChatClient, LlmError, PromptLibrary, TemplateId,
    UsageLedger,
};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Mask token substituted for topic-entity mentions before retrieval.
pub const MASK_TOKEN: &str = "[ENT]";

/// Render a template, send it, and record the exchange in the trace. Every
/// LLM call in a run goes through here so the ledger and the trace stay in
/// one-to-one correspondence.
pub(crate) fn chat_traced(
    client: &ChatClient,
    prompts: &PromptLibrary,
    id: TemplateId,
    slots: &BTreeMap<&str, String>,
    step: usize,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<String, LlmError> {
    let prompt = prompts.render(id, slots)?;
    let response = client.chat(&prompt, ledger)?;
    trace.push(TraceEvent::LlmExchange {
        step,
        purpose: id.name().to_string(),
        prompt,
        response: response.clone(),
    });
    Ok(response)
}

/// Decompose the question into an ordered subgoal list. An unparseable or
/// empty response falls back to the question itself as the single subgoal;
/// backend failures propagate.
pub fn decompose(
    question: &Question,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<Subgoals, LlmError> {
    let slots = BTreeMap::from([("question", question.text.clone())]);
    let response = chat_traced(client, prompts, TemplateId::TaskDecomposition, &slots, 0, ledger, trace)?;
    let items = parse_list(&response).unwrap_or_default();
    let subgoals = if items.is_empty() {
        Subgoals::fallback(&question.text)
    } else {
        Subgoals::new(items)
    };
    trace.push(TraceEvent::Decomposed { subgoals: subgoals.items().to_vec() });
    Ok(subgoals)
}

/// Replace each topic-entity label in the question with the mask token,
/// case-insensitively, longest label first. Entities without labels leave
/// the text unchanged.
pub fn mask_entities(question: &Question) -> String {
    let mut labels: Vec<&str> = question
        .topic_entities
        .iter()
        .filter_map(|e| e.label.as_deref())
        .filter(|l| !l.is_empty())
        .collect();
    labels.sort_by(|a, b| {
        b.chars()
            .count()
            .cmp(&a.chars().count())
            .then_with(|| a.cmp(b))
    });
    let mut text = question.text.clone();
    for label in labels {
        let pattern = regex::Regex::new(&format!("(?i){}", regex::escape(label)))
            .expect("escaped label is a valid pattern");
        text = pattern.replace_all(&text, MASK_TOKEN).into_owned();
    }
    text
}

/// How the query's blueprint was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum BlueprintOrigin {
    /// Top-1 similarity strictly exceeded the copy threshold.
    Copied { key: String, similarity: f64 },
    /// LLM adaptation conditioned on the nearest exemplars.
    Adapted { top_similarity: f64 },
    /// Adaptation failed to produce a usable list; the Top-1 template was
    /// used instead.
    AdaptFallback { key: String, top_similarity: f64 },
}

impl BlueprintOrigin {
    pub fn name(&self) -> &'static str {
        match self {
            BlueprintOrigin::Copied { .. } => "copy",
            BlueprintOrigin::Adapted { .. } => "adapt",
            BlueprintOrigin::AdaptFallback { .. } => "adapt_fallback",
        }
    }

    pub fn top_similarity(&self) -> f64 {
        match self {
            BlueprintOrigin::Copied { similarity, .. } => *similarity,
            BlueprintOrigin::Adapted { top_similarity }
            | BlueprintOrigin::AdaptFallback { top_similarity, .. } => *top_similarity,
        }
    }
}

/// Copy–adapt blueprint retrieval over the masked question. Copy mode
/// requires top similarity strictly above `tau_copy`; otherwise the LLM
/// adapts the nearest exemplars, degrading to the Top-1 template on any
/// adaptation failure.
#[allow(clippy::too_many_arguments)]
pub fn obtain_blueprint(
    masked: &str,
    question: &Question,
    library: &BlueprintLibrary,
    index: &VectorIndex,
    encoder: &dyn Encoder,
    tau_copy: f64,
    retrieval_k: usize,
    adapt_exemplars: usize,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<(RelationBlueprint, BlueprintOrigin), EngineError> {
    if library.is_empty() || index.is_empty() {
        return Err(EngineError::EmptyLibrary);
    }
    let query_vec = encoder.encode(masked)?;
    let hits = index.top_k(&query_vec, retrieval_k)?;
    let (top_key, top_sim) = hits[0].clone();
    let top_record = library.get(&top_key).ok_or_else(|| {
        EngineError::ConfigInvalid(format!("index key {top_key:?} missing from library"))
    })?;

    if top_sim > tau_copy {
        return Ok((
            top_record.blueprint.clone(),
            BlueprintOrigin::Copied { key: top_key, similarity: top_sim },
        ));
    }

    let exemplars: Vec<String> = hits
        .iter()
        .take(adapt_exemplars)
        .filter_map(|(key, _)| library.get(key))
        .map(|record| {
            let slots: Vec<&str> =
                record.blueprint.slots().iter().map(Relation::predicate).collect();
            format!("Q: {} -> {}", record.anchor, format_list(&slots))
        })
        .collect();
    let slots = BTreeMap::from([
        ("question", question.text.clone()),
        ("exemplars", exemplars.join("\n")),
    ]);
    let adapted = chat_traced(client, prompts, TemplateId::BlueprintAdaptation, &slots, 0, ledger, trace)
        .ok()
        .and_then(|response| parse_list(&response).ok())
        .filter(|items| !items.is_empty())
        .and_then(|items| RelationBlueprint::from_predicates(items).ok());
    match adapted {
        Some(blueprint) => Ok((blueprint, BlueprintOrigin::Adapted { top_similarity: top_sim })),
        None => {
            log::warn!("blueprint adaptation failed; falling back to top-1 template {top_key}");
            Ok((
                top_record.blueprint.clone(),
                BlueprintOrigin::AdaptFallback { key: top_key, top_similarity: top_sim },
            ))
        }
    }
}

/// Monotone slot alignment: argmax of subgoal/slot similarity over the
/// window `[prev_ptr, L]`, ties to the smallest index; steps beyond the
/// blueprint length clamp to `L`.
pub fn align_slot(
    prev_ptr: usize,
    step: usize,
    subgoal: &str,
    blueprint: &RelationBlueprint,
    encoder: &dyn Encoder,
) -> Result<usize, EmbedError> {
    let len = blueprint.len();
    if step > len {
        return Ok(len);
    }
    let target = encoder.encode(subgoal)?;
    let mut best = prev_ptr.min(len);
    let mut best_sim = f64::NEG_INFINITY;
    for j in prev_ptr.min(len)..=len {
        let slot_vec = encoder.encode(blueprint.slot(j).predicate())?;
        let sim = cosine(&target, &slot_vec)?;
        if sim > best_sim {
            best_sim = sim;
            best = j;
        }
    }
    Ok(best)
}

/// Drop relations matching any denylist pattern.
pub fn rule_filter(candidates: &BTreeSet<Relation>, denylist: &[String]) -> BTreeSet<Relation> {
    candidates
        .iter()
        .filter(|r| !denylist_matches(denylist, r.predicate()))
        .cloned()
        .collect()
}

/// Score candidates by the three similarity signals and sort by fused
/// score, ties broken lexicographically by predicate.
pub fn score_relations(
    candidates: &BTreeSet<Relation>,
    subgoal: &str,
    blueprint: &RelationBlueprint,
    slot_ptr: usize,
    weights: &RerankWeights,
    encoder: &dyn Encoder,
) -> Result<Vec<ScoredRelation>, EngineError> {
    if candidates.is_empty() {
        return Err(EngineError::EmptyCandidates);
    }
    let target = encoder.encode(subgoal)?;
    let slot_vecs: Vec<Embedding> = blueprint
        .slots()
        .iter()
        .map(|slot| encoder.encode(slot.predicate()))
        .collect::<Result<_, _>>()?;
    let aligned = &slot_vecs[slot_ptr - 1];

    let mut scored = Vec::with_capacity(candidates.len());
    for relation in candidates {
        let vec = encoder.encode(relation.predicate())?;
        let phi_loc = cosine(&target, &vec)?;
        let phi_step = cosine(&vec, aligned)?;
        let mut phi_glob = f64::NEG_INFINITY;
        for slot_vec in &slot_vecs {
            phi_glob = phi_glob.max(cosine(&vec, slot_vec)?);
        }
        let fused = weights.fuse(phi_loc, phi_step, phi_glob);
        scored.push(ScoredRelation { relation: relation.clone(), phi_loc, phi_step, phi_glob, fused });
    }
    scored.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then_with(|| a.relation.cmp(&b.relation))
    });
    Ok(scored)
}

/// Keep the top-n prefix; returns `(kept, cut)`.
pub fn shortlist(
    mut scored: Vec<ScoredRelation>,
    n: usize,
) -> (Vec<ScoredRelation>, Vec<ScoredRelation>) {
    let keep = n.max(1).min(scored.len());
    let cut = scored.split_off(keep);
    (scored, cut)
}

/// Index of the best step-aligned candidate; ties resolve to the earlier
/// entry.
pub fn step_aligned_index(shortlisted: &[ScoredRelation]) -> usize {
    let mut best = 0;
    for (i, sr) in shortlisted.iter().enumerate() {
        if sr.phi_step > shortlisted[best].phi_step {
            best = i;
        }
    }
    best
}

/// Prompt context shared by the per-step LLM calls.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub question: String,
    pub subgoals_text: String,
    pub topic_display: String,
    pub subgoal: String,
    pub step: usize,
}

impl StepContext {
    pub fn new(question: &Question, subgoals: &Subgoals, subgoal: &str, step: usize) -> Self {
        let topics: Vec<&str> = question.topic_entities.iter().map(Entity::display).collect();
        Self {
            question: question.text.clone(),
            subgoals_text: format_list(subgoals.items()),
            topic_display: topics.join(", "),
            subgoal: subgoal.to_string(),
            step,
        }
    }
}

/// Blueprint-guarded pruning: the final set is the union of the LLM's
/// picks (restricted to the shortlist) and the best step-aligned
/// candidate, preserving fused order. An unparseable selection leaves the
/// step-aligned candidate alone; backend failures propagate.
pub fn prune_guarded(
    shortlisted: &[ScoredRelation],
    ctx: &StepContext,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<Vec<ScoredRelation>, LlmError> {
    debug_assert!(!shortlisted.is_empty(), "prune_guarded requires candidates");
    let anchor = step_aligned_index(shortlisted);
    let relations_text = shortlisted
        .iter()
        .map(|sr| sr.relation.predicate())
        .collect::<Vec<_>>()
        .join("; ");
    let slots = BTreeMap::from([
        ("question", ctx.question.clone()),
        ("subgoals", ctx.subgoals_text.clone()),
        ("topic_entity", ctx.topic_display.clone()),
        ("relations", relations_text),
    ]);
    let response =
        chat_traced(client, prompts, TemplateId::RelationPruning, &slots, ctx.step, ledger, trace)?;
    let picks: BTreeSet<String> = parse_list(&response).unwrap_or_default().into_iter().collect();
    Ok(shortlisted
        .iter()
        .enumerate()
        .filter(|(i, sr)| *i == anchor || picks.contains(sr.relation.predicate()))
        .map(|(_, sr)| sr.clone())
        .collect())
}

/// Resolved label cache; lookup failures degrade to the bare id.
#[derive(Debug, Default)]
pub struct LabelCache {
    map: HashMap<String, Option<String>>,
}

impl LabelCache {
    pub fn seed(&mut self, entity: &Entity) {
        if let Some(label) = &entity.label {
            self.map.insert(entity.id.clone(), Some(label.clone()));
        }
    }

    /// Return the entity with its label attached, resolving through the
    /// backend once per id.
    pub fn attach(&mut self, kg: &dyn GraphBackend, entity: Entity) -> Entity {
        let label = self
            .map
            .entry(entity.id.clone())
            .or_insert_with(|| {
                entity
                    .label
                    .clone()
                    .or_else(|| kg.resolve_name(&entity).ok().flatten())
            })
            .clone();
        Entity { id: entity.id, label }
    }
}

/// Result of one frontier expansion.
#[derive(Debug, Clone, Default)]
pub struct Expansion {
    pub frontier: BTreeSet<Entity>,
    pub new_triples: Vec<Triple>,
    /// Entities the filter discarded, with the witness triple that reached
    /// them.
    pub pruned: Vec<(Entity, Triple)>,
    pub retrieved: usize,
}

/// Expand every frontier entity along every chosen relation in both
/// directions, then let the LLM keep the minimal entity set. Unparseable
/// filter output conservatively keeps everything retrieved; an empty list
/// is a valid "keep nothing". Per-edge KG errors skip that lookup.
#[allow(clippy::too_many_arguments)]
pub fn expand_and_filter(
    frontier: &BTreeSet<Entity>,
    chosen: &[ScoredRelation],
    ctx: &StepContext,
    kg: &dyn GraphBackend,
    labels: &mut LabelCache,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<Expansion, LlmError> {
    let mut witness: BTreeMap<Entity, Triple> = BTreeMap::new();
    let mut triples: Vec<Triple> = Vec::new();
    let mut triple_set: BTreeSet<Triple> = BTreeSet::new();
    for sr in chosen {
        for entity in frontier {
            for direction in [Direction::Outgoing, Direction::Incoming] {
                let found = match kg.entity_search(entity, &sr.relation, direction) {
                    Ok(found) => found,
                    Err(e) => {
                        log::warn!("entity_search failed for {}: {e}", entity.id);
                        continue;
                    }
                };
                for raw in found {
                    let reached = labels.attach(kg, raw);
                    let triple = match direction {
                        Direction::Outgoing => {
                            Triple::new(entity.clone(), sr.relation.clone(), reached.clone())
                        }
                        Direction::Incoming => {
                            Triple::new(reached.clone(), sr.relation.clone(), entity.clone())
                        }
                    };
                    if triple_set.insert(triple.clone()) {
                        triples.push(triple.clone());
                    }
                    witness.entry(reached).or_insert(triple);
                }
            }
        }
    }
    if witness.is_empty() {
        return Ok(Expansion::default());
    }
    let retrieved = witness.len();

    let frontier_ids: BTreeSet<&str> = frontier.iter().map(|e| e.id.as_str()).collect();
    let triplets_text = triples
        .iter()
        .map(|t| {
            // Bracket the newly reached side.
            if frontier_ids.contains(t.head.id.as_str()) {
                format!("({}, {}, [{}])", t.head, t.relation, t.tail)
            } else {
                format!("([{}], {}, {})", t.head, t.relation, t.tail)
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let slots = BTreeMap::from([
        ("question", ctx.question.clone()),
        ("triplets", triplets_text),
    ]);
    let response =
        chat_traced(client, prompts, TemplateId::EntityFiltering, &slots, ctx.step, ledger, trace)?;

    let kept: BTreeSet<Entity> = match parse_list(&response) {
        Ok(items) => {
            let wanted: BTreeSet<String> =
                items.iter().map(|s| s.trim().to_lowercase()).collect();
            witness
                .keys()
                .filter(|e| {
                    wanted.contains(&e.display().to_lowercase())
                        || wanted.contains(&e.id.to_lowercase())
                })
                .cloned()
                .collect()
        }
        Err(_) => witness.keys().cloned().collect(),
    };

    let pruned: Vec<(Entity, Triple)> = witness
        .iter()
        .filter(|(e, _)| !kept.contains(*e))
        .map(|(e, t)| (e.clone(), t.clone()))
        .collect();
    let new_triples: Vec<Triple> = triples
        .into_iter()
        .filter(|t| {
            let new_side =
                if frontier_ids.contains(t.head.id.as_str()) { &t.tail } else { &t.head };
            kept.contains(new_side)
        })
        .collect();
    Ok(Expansion { frontier: kept, new_triples, pruned, retrieved })
}

/// Parsed effects of a memory update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryOutcome {
    pub conclusions_added: usize,
    pub constraints_touched: Vec<String>,
    pub completed_subgoals: BTreeSet<usize>,
}

/// Append verified triples, then ask the LLM for conclusions, constraint
/// states, and completed subgoals. Expected JSON keys (all optional):
/// `conclusions` (strings), `constraints` (text → open|satisfied|violated),
/// `subgoals_completed` (subgoal texts or 1-based indexes). Unparseable
/// output appends the triples only.
#[allow(clippy::too_many_arguments)]
pub fn update_memory(
    ctx: &StepContext,
    subgoals: &Subgoals,
    memory: &mut WorkingMemory,
    new_triples: Vec<Triple>,
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<MemoryOutcome, LlmError> {
    memory.verified_triples.extend(new_triples);
    let slots = BTreeMap::from([
        ("question", ctx.question.clone()),
        ("subgoals", ctx.subgoals_text.clone()),
        ("memory", memory.render()),
    ]);
    let response =
        chat_traced(client, prompts, TemplateId::MemoryUpdate, &slots, ctx.step, ledger, trace)?;
    let mut outcome = MemoryOutcome::default();
    let Ok(map) = parse_json(&response, &[]) else {
        return Ok(outcome);
    };
    if let Some(Value::Array(items)) = map.get("conclusions") {
        for item in items {
            if let Value::String(text) = item {
                memory.conclusions.push(text.clone());
                outcome.conclusions_added += 1;
            }
        }
    }
    if let Some(Value::Object(states)) = map.get("constraints") {
        for (text, status) in states {
            let Some(status) = status.as_str().and_then(ConstraintStatus::parse) else {
                continue;
            };
            memory.upsert_constraint(text, status);
            outcome.constraints_touched.push(text.clone());
        }
    }
    if let Some(Value::Array(items)) = map.get("subgoals_completed") {
        for item in items {
            match item {
                Value::String(text) => {
                    let needle = text.trim().to_lowercase();
                    for (i, goal) in subgoals.items().iter().enumerate() {
                        if goal.trim().to_lowercase() == needle {
                            outcome.completed_subgoals.insert(i);
                        }
                    }
                }
                Value::Number(n) => {
                    if let Some(one_based) = n.as_u64() {
                        let idx = one_based as usize;
                        if (1..=subgoals.len()).contains(&idx) {
                            outcome.completed_subgoals.insert(idx - 1);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(outcome)
}

/// Outcome of the sufficiency check.
#[derive(Debug, Clone, PartialEq)]
pub enum Sufficiency {
    Answered(Answer),
    Insufficient,
}

/// Ask for the final answer; a JSON object with `A` and `R` terminates the
/// run, anything else (missing keys, refusals, empty answers) reports
/// insufficiency.
pub fn check_sufficiency_and_answer(
    ctx: &StepContext,
    memory: &WorkingMemory,
    triples: &[Triple],
    prompts: &PromptLibrary,
    client: &ChatClient,
    ledger: &mut UsageLedger,
    trace: &mut Trace,
) -> Result<Sufficiency, LlmError> {
    let slots = BTreeMap::from([
        ("question", ctx.question.clone()),
        ("memory", memory.render()),
        ("triplets", render_triples(triples)),
    ]);
    let response =
        chat_traced(client, prompts, TemplateId::AnswerGeneration, &slots, ctx.step, ledger, trace)?;
    let Ok(map) = parse_json(&response, &["A", "R"]) else {
        return Ok(Sufficiency::Insufficient);
    };
    let (text, alternates) = answer_values(&map["A"]);
    if text.trim().is_empty() {
        return Ok(Sufficiency::Insufficient);
    }
    let reason = match &map["R"] {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Ok(Sufficiency::Answered(Answer { text, reason, alternates }))
}

fn answer_values(value: &Value) -> (String, Vec<String>) {
    match value {
        Value::String(s) => (s.clone(), Vec::new()),
        Value::Array(items) => {
            let mut texts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            if texts.is_empty() {
                (String::new(), Vec::new())
            } else {
                let first = texts.remove(0);
                (first, texts)
            }
        }
        Value::Null => (String::new(), Vec::new()),
        other => (other.to_string(), Vec::new()),
    }
}

pub fn render_triples(triples: &[Triple]) -> String {
    if triples.is_empty() {
        return "(none)".to_string();
    }
    triples.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::{build_index, build_library, TrainingPair};
    use crate::embed::MockEncoder;
    use crate::kg::MemoryStore;
    use crate::llm::ScriptedChat;

    fn client(responses: Vec<&str>) -> ChatClient {
        ChatClient::new(Box::new(ScriptedChat::from_responses(responses)))
    }

    fn question(text: &str) -> Question {
        Question::new(text, vec![Entity::with_label("m.1", "Titanic")])
    }

    fn rel(p: &str) -> Relation {
        Relation::new(p).unwrap()
    }

    fn bp(predicates: &[&str]) -> RelationBlueprint {
        RelationBlueprint::from_predicates(predicates.to_vec()).unwrap()
    }

    /// Test encoder with hand-planted vectors per exact text.
    struct PlantedEncoder {
        map: HashMap<String, Vec<f64>>,
    }

    impl PlantedEncoder {
        fn new(entries: &[(&str, &[f64])]) -> Self {
            let map = entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_vec()))
                .collect();
            Self { map }
        }
    }

    impl Encoder for PlantedEncoder {
        fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
            let values = self
                .map
                .get(text)
                .unwrap_or_else(|| panic!("no planted vector for {text:?}"))
                .clone();
            Embedding::new(values)
        }
    }

    #[test]
    fn decompose_parses_and_falls_back() {
        let prompts = PromptLibrary::default();
        let q = question("who directed X and who composed it");
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();

        let got = decompose(
            &q,
            &prompts,
            &client(vec!["['find director', 'find composer']"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert_eq!(got.items(), ["find director", "find composer"]);

        let fallback =
            decompose(&q, &prompts, &client(vec!["no list at all"]), &mut ledger, &mut trace)
                .unwrap();
        assert_eq!(fallback.items(), [q.text.as_str()]);

        let three = decompose(&q, &prompts, &client(vec!["['a','b','c']"]), &mut ledger, &mut trace)
            .unwrap();
        assert_eq!(three.len(), 3);
    }

    #[test]
    fn mask_replaces_case_insensitively() {
        let q = question("who directed titanic");
        assert_eq!(mask_entities(&q), "who directed [ENT]");

        let unlabeled = Question::new("who directed titanic", vec![Entity::new("m.1")]);
        assert_eq!(mask_entities(&unlabeled), "who directed titanic");
    }

    #[test]
    fn mask_overlapping_labels_longest_first() {
        // Oracle: replacing "New York City" before "New York" masks both
        // mentions without leaving a partial suffix.
        let q = Question::new(
            "is new york in New York City or New York",
            vec![
                Entity::with_label("m.a", "New York"),
                Entity::with_label("m.b", "New York City"),
            ],
        );
        assert_eq!(mask_entities(&q), "is [ENT] in [ENT] or [ENT]");
    }

    #[test]
    fn align_slot_monotone_window() {
        // Planted sims against ["s1","s2","s3"]: goal is closest to slot 1,
        // but the window [2,3] excludes it; slot 3 beats slot 2.
        let encoder = PlantedEncoder::new(&[
            ("goal", &[1.0, 0.0, 0.0]),
            ("s1", &[0.9, 0.1, 0.0]),
            ("s2", &[0.5, 0.8, 0.0]),
            ("s3", &[0.6, 0.0, 0.8]),
        ]);
        let blueprint = bp(&["s1", "s2", "s3"]);
        // Brute-force oracle over the window.
        let goal = encoder.encode("goal").unwrap();
        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 2..=3 {
            let sim = cosine(&goal, &encoder.encode(blueprint.slot(j).predicate()).unwrap()).unwrap();
            if sim > best.1 {
                best = (j, sim);
            }
        }
        assert_eq!(best.0, 3);
        assert_eq!(align_slot(2, 2, "goal", &blueprint, &encoder).unwrap(), 3);
        // First step searches from slot 1.
        assert_eq!(align_slot(1, 1, "goal", &blueprint, &encoder).unwrap(), 1);
        // Steps beyond L clamp.
        assert_eq!(align_slot(3, 7, "goal", &blueprint, &encoder).unwrap(), 3);
    }

    #[test]
    fn rule_filter_denylist() {
        let cands: BTreeSet<Relation> =
            [rel("type.object.type"), rel("film.director.film")].into();
        let filtered = rule_filter(&cands, &super::super::config::default_denylist());
        assert_eq!(filtered, BTreeSet::from([rel("film.director.film")]));
        assert_eq!(rule_filter(&cands, &[]), cands);
        let all_denied: BTreeSet<Relation> = [rel("kg.x"), rel("freebase.y")].into();
        assert!(rule_filter(&all_denied, &super::super::config::default_denylist()).is_empty());
    }

    #[test]
    fn score_relations_degenerate_corner_matches_phi_loc_order() {
        let encoder = MockEncoder::new(24, 9);
        let cands: BTreeSet<Relation> = (0..12)
            .map(|i| rel(&format!("domain{i}.type{i}.prop{i}")))
            .collect();
        let blueprint = bp(&["film.director.film", "film.film.music"]);
        let weights = RerankWeights::new(1.0, 0.0, 0.0).unwrap();
        let scored =
            score_relations(&cands, "find the director", &blueprint, 1, &weights, &encoder)
                .unwrap();

        let target = encoder.encode("find the director").unwrap();
        let mut by_loc: Vec<(f64, String)> = cands
            .iter()
            .map(|r| {
                let v = encoder.encode(r.predicate()).unwrap();
                (cosine(&target, &v).unwrap(), r.predicate().to_string())
            })
            .collect();
        by_loc.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let got: Vec<String> =
            scored.iter().map(|sr| sr.relation.predicate().to_string()).collect();
        let expect: Vec<String> = by_loc.into_iter().map(|(_, p)| p).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn fused_score_matches_direct_arithmetic() {
        let w = RerankWeights::default();
        assert!((w.fuse(0.8, 0.4, 0.6) - 0.67).abs() < 1e-12);
    }

    #[test]
    fn phi_glob_dominates_phi_step() {
        let encoder = MockEncoder::new(16, 3);
        let cands: BTreeSet<Relation> = (0..8).map(|i| rel(&format!("a{i}.b.c"))).collect();
        let blueprint = bp(&["x.y.z", "q.w.e", "r.t.y"]);
        for ptr in 1..=3 {
            let scored = score_relations(
                &cands,
                "goal text",
                &blueprint,
                ptr,
                &RerankWeights::default(),
                &encoder,
            )
            .unwrap();
            for sr in scored {
                assert!(sr.phi_glob >= sr.phi_step - 1e-15);
            }
        }
    }

    #[test]
    fn shortlist_truncates() {
        let encoder = MockEncoder::new(16, 4);
        let cands: BTreeSet<Relation> = (0..10).map(|i| rel(&format!("p{i}.x.y"))).collect();
        let scored = score_relations(
            &cands,
            "goal",
            &bp(&["p0.x.y"]),
            1,
            &RerankWeights::default(),
            &encoder,
        )
        .unwrap();
        let full = scored.clone();
        let (kept, cut) = shortlist(scored, 8);
        assert_eq!(kept.len(), 8);
        assert_eq!(cut.len(), 2);
        assert_eq!(kept.as_slice(), &full[..8]);

        let (kept, cut) = shortlist(full.clone()[..3].to_vec(), 8);
        assert_eq!(kept.len(), 3);
        assert!(cut.is_empty());

        let (kept, _) = shortlist(full.clone(), 1);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0], full[0]);
    }

    fn scored_fixture() -> Vec<ScoredRelation> {
        vec![
            ScoredRelation { relation: rel("r.a.a"), phi_loc: 0.9, phi_step: 0.2, phi_glob: 0.5, fused: 0.8 },
            ScoredRelation { relation: rel("r.b.b"), phi_loc: 0.5, phi_step: 0.9, phi_glob: 0.9, fused: 0.7 },
            ScoredRelation { relation: rel("r.c.c"), phi_loc: 0.4, phi_step: 0.1, phi_glob: 0.4, fused: 0.3 },
        ]
    }

    fn ctx() -> StepContext {
        StepContext {
            question: "q".into(),
            subgoals_text: "['g']".into(),
            topic_display: "T".into(),
            subgoal: "g".into(),
            step: 1,
        }
    }

    #[test]
    fn prune_guarded_unions_llm_picks_with_step_anchor() {
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        // LLM picks r.a.a; phi_step argmax is r.b.b -> union of both.
        let out = prune_guarded(
            &scored_fixture(),
            &ctx(),
            &prompts,
            &client(vec!["['r.a.a']"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        let names: Vec<&str> = out.iter().map(|s| s.relation.predicate()).collect();
        assert_eq!(names, vec!["r.a.a", "r.b.b"]);

        // LLM pick equals the anchor: idempotent union.
        let out = prune_guarded(
            &scored_fixture(),
            &ctx(),
            &prompts,
            &client(vec!["['r.b.b']"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        let names: Vec<&str> = out.iter().map(|s| s.relation.predicate()).collect();
        assert_eq!(names, vec!["r.b.b"]);

        // Unparseable: anchor alone. Picks outside the shortlist drop.
        for resp in ["nothing here", "['unknown.rel']", "[]"] {
            let out = prune_guarded(
                &scored_fixture(),
                &ctx(),
                &prompts,
                &client(vec![resp]),
                &mut ledger,
                &mut trace,
            )
            .unwrap();
            let names: Vec<&str> = out.iter().map(|s| s.relation.predicate()).collect();
            assert_eq!(names, vec!["r.b.b"], "response {resp:?}");
        }
    }

    fn toy_store() -> MemoryStore {
        let t = |h: &str, r: &str, t_: &str| {
            Triple::new(Entity::new(h), rel(r), Entity::new(t_))
        };
        MemoryStore::from_triples([t("A", "r1", "B"), t("C", "r1", "A")])
    }

    fn scored_rel(p: &str) -> ScoredRelation {
        ScoredRelation { relation: rel(p), phi_loc: 0.0, phi_step: 0.0, phi_glob: 0.0, fused: 0.0 }
    }

    #[test]
    fn expand_keeps_filtered_entity_and_appends_triple() {
        let store = toy_store();
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        let mut labels = LabelCache::default();
        let frontier: BTreeSet<Entity> = [Entity::new("A")].into();
        let expansion = expand_and_filter(
            &frontier,
            &[scored_rel("r1")],
            &ctx(),
            &store,
            &mut labels,
            &prompts,
            &client(vec!["['B']"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert_eq!(expansion.retrieved, 2); // B outgoing, C incoming
        assert_eq!(expansion.frontier, BTreeSet::from([Entity::new("B")]));
        assert_eq!(expansion.new_triples.len(), 1);
        assert_eq!(expansion.pruned.len(), 1);
        assert_eq!(expansion.pruned[0].0, Entity::new("C"));
    }

    #[test]
    fn expand_empty_keep_and_conservative_fallback() {
        let store = toy_store();
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        let mut labels = LabelCache::default();
        let frontier: BTreeSet<Entity> = [Entity::new("A")].into();

        let empty = expand_and_filter(
            &frontier,
            &[scored_rel("r1")],
            &ctx(),
            &store,
            &mut labels,
            &prompts,
            &client(vec!["[]"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert!(empty.frontier.is_empty());
        assert_eq!(empty.pruned.len(), 2);

        let conservative = expand_and_filter(
            &frontier,
            &[scored_rel("r1")],
            &ctx(),
            &store,
            &mut labels,
            &prompts,
            &client(vec!["cannot comply"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        // Bidirectional scan oracle: {B (A->B), C (C->A)}.
        assert_eq!(
            conservative.frontier,
            BTreeSet::from([Entity::new("B"), Entity::new("C")])
        );
    }

    #[test]
    fn update_memory_applies_json_and_falls_back() {
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        let subgoals = Subgoals::new(vec!["find school".into(), "check size".into()]);
        let triple = Triple::new(Entity::new("A"), rel("r1"), Entity::new("B"));

        let mut memory = WorkingMemory::default();
        let outcome = update_memory(
            &ctx(),
            &subgoals,
            &mut memory,
            vec![triple.clone(), triple.clone()],
            &prompts,
            &client(vec![
                r#"{"conclusions": ["B is the school"], "constraints": {"last won": "satisfied"}, "subgoals_completed": ["find school"]}"#,
            ]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert_eq!(memory.verified_triples.len(), 2);
        assert_eq!(memory.conclusions, vec!["B is the school"]);
        assert_eq!(memory.constraints[0].status, ConstraintStatus::Satisfied);
        assert_eq!(outcome.completed_subgoals, BTreeSet::from([0]));

        let mut memory = WorkingMemory::default();
        let outcome = update_memory(
            &ctx(),
            &subgoals,
            &mut memory,
            vec![triple],
            &prompts,
            &client(vec!["not json"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert_eq!(memory.verified_triples.len(), 1);
        assert!(memory.conclusions.is_empty());
        assert_eq!(outcome, MemoryOutcome::default());
    }

    #[test]
    fn sufficiency_answer_and_insufficient_paths() {
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        let memory = WorkingMemory::default();

        let answered = check_sufficiency_and_answer(
            &ctx(),
            &memory,
            &[],
            &prompts,
            &client(vec![
                r#"{"A": "In the Land of Blood and Honey", "R": "directed by Jolie"}"#,
            ]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        match answered {
            Sufficiency::Answered(ans) => {
                assert_eq!(ans.text, "In the Land of Blood and Honey");
                assert_eq!(ans.reason, "directed by Jolie");
            }
            other => panic!("expected answer, got {other:?}"),
        }

        for resp in [r#"{"A": "x"}"#, "I cannot answer this."] {
            let got = check_sufficiency_and_answer(
                &ctx(),
                &memory,
                &[],
                &prompts,
                &client(vec![resp]),
                &mut ledger,
                &mut trace,
            )
            .unwrap();
            assert_eq!(got, Sufficiency::Insufficient, "response {resp:?}");
        }
    }

    #[test]
    fn obtain_blueprint_copy_adapt_and_fallback() {
        let pairs = vec![
            TrainingPair {
                question: "who directed [ENT]".into(),
                sparql: "SELECT ?x WHERE { ns:m.1 ns:film.director.film ?x }".into(),
            },
            TrainingPair {
                question: "where was [ENT] born".into(),
                sparql: "SELECT ?x WHERE { ns:m.2 ns:people.person.place_of_birth ?x }".into(),
            },
        ];
        let library = build_library(&pairs).unwrap();
        let encoder = MockEncoder::new(16, 1);
        let index = build_index(&library, &encoder).unwrap();
        let prompts = PromptLibrary::default();
        let q = question("who directed Titanic");
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();

        // Masked text equals the stored anchor, so top similarity is 1.0.
        let (blueprint, origin) = obtain_blueprint(
            "who directed [ENT]",
            &q,
            &library,
            &index,
            &encoder,
            0.92,
            5,
            2,
            &prompts,
            &client(vec![]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert!(matches!(origin, BlueprintOrigin::Copied { .. }));
        assert_eq!(blueprint.key(), "film.director.film");
        assert_eq!(ledger.calls, 0, "copy mode makes no LLM call");

        // Strict threshold: tau=1.0 forces adaptation even at sim 1.0.
        let (blueprint, origin) = obtain_blueprint(
            "who directed [ENT]",
            &q,
            &library,
            &index,
            &encoder,
            1.0,
            5,
            2,
            &prompts,
            &client(vec!["['film.director.film', 'film.film.music']"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert!(matches!(origin, BlueprintOrigin::Adapted { .. }));
        assert_eq!(blueprint.len(), 2);

        // Adaptation parse failure falls back to the top-1 template.
        let (blueprint, origin) = obtain_blueprint(
            "who directed [ENT]",
            &q,
            &library,
            &index,
            &encoder,
            1.0,
            5,
            2,
            &prompts,
            &client(vec!["no list"]),
            &mut ledger,
            &mut trace,
        )
        .unwrap();
        assert!(matches!(origin, BlueprintOrigin::AdaptFallback { .. }));
        assert_eq!(blueprint.key(), "film.director.film");
    }

    #[test]
    fn obtain_blueprint_rejects_empty_library() {
        let library = BlueprintLibrary::default();
        let index = VectorIndex::build(vec![]).unwrap();
        let encoder = MockEncoder::new(8, 1);
        let prompts = PromptLibrary::default();
        let mut ledger = UsageLedger::default();
        let mut trace = Trace::default();
        let err = obtain_blueprint(
            "masked",
            &question("q"),
            &library,
            &index,
            &encoder,
            0.92,
            5,
            2,
            &prompts,
            &client(vec![]),
            &mut ledger,
            &mut trace,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::EmptyLibrary));
    }
}
