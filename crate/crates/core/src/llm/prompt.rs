//! Prompt templates with named slots.
//!
//! Bodies live as data files under `prompts/` and are embedded at compile
//! time. Each body contains `{name}` placeholders; the `{few_shots}` slot
//! is filled from the template's own exemplar block (empty by default, can
//! be configured per template).

use super::LlmError;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    TaskDecomposition,
    RelationPruning,
    EntityFiltering,
    MemoryUpdate,
    AnswerGeneration,
    RetrievalNecessity,
    Backtracking,
    GroundedInference,
    BlueprintAdaptation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::TaskDecomposition,
        TemplateId::RelationPruning,
        TemplateId::EntityFiltering,
        TemplateId::MemoryUpdate,
        TemplateId::AnswerGeneration,
        TemplateId::RetrievalNecessity,
        TemplateId::Backtracking,
        TemplateId::GroundedInference,
        TemplateId::BlueprintAdaptation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::TaskDecomposition => "task_decomposition",
            TemplateId::RelationPruning => "relation_pruning",
            TemplateId::EntityFiltering => "entity_filtering",
            TemplateId::MemoryUpdate => "memory_update",
            TemplateId::AnswerGeneration => "answer_generation",
            TemplateId::RetrievalNecessity => "retrieval_necessity",
            TemplateId::Backtracking => "backtracking",
            TemplateId::GroundedInference => "grounded_inference",
            TemplateId::BlueprintAdaptation => "blueprint_adaptation",
        }
    }

    fn body(self) -> &'static str {
        match self {
            TemplateId::TaskDecomposition => include_str!("../../prompts/task_decomposition.txt"),
            TemplateId::RelationPruning => include_str!("../../prompts/relation_pruning.txt"),
            TemplateId::EntityFiltering => include_str!("../../prompts/entity_filtering.txt"),
            TemplateId::MemoryUpdate => include_str!("../../prompts/memory_update.txt"),
            TemplateId::AnswerGeneration => include_str!("../../prompts/answer_generation.txt"),
            TemplateId::RetrievalNecessity => include_str!("../../prompts/retrieval_necessity.txt"),
            TemplateId::Backtracking => include_str!("../../prompts/backtracking.txt"),
            TemplateId::GroundedInference => include_str!("../../prompts/grounded_inference.txt"),
            TemplateId::BlueprintAdaptation => {
                include_str!("../../prompts/blueprint_adaptation.txt")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub few_shots: String,
}

impl PromptTemplate {
    fn new(id: TemplateId) -> Self {
        Self { id, body: id.body(), few_shots: String::new() }
    }

    /// Substitute every `{name}` placeholder from `slots`. The body is
    /// walked once, so braces inside slot values are never re-scanned.
    pub fn render(&self, slots: &BTreeMap<&str, String>) -> Result<String, LlmError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body;
        while let Some(open) = rest.find('{') {
            let Some(close_rel) = rest[open..].find('}') else {
                break;
            };
            let close = open + close_rel;
            out.push_str(&rest[..open]);
            let name = &rest[open + 1..close];
            if name == "few_shots" {
                out.push_str(&self.few_shots);
            } else {
                let value = slots
                    .get(name)
                    .ok_or_else(|| LlmError::MissingSlot(name.to_string()))?;
                out.push_str(value);
            }
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// All nine templates, with per-template exemplar blocks.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate::new(id)))
            .collect();
        Self { templates }
    }
}

impl PromptLibrary {
    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn set_few_shots(&mut self, id: TemplateId, block: impl Into<String>) {
        if let Some(t) = self.templates.get_mut(&id) {
            t.few_shots = block.into();
        }
    }

    pub fn render(
        &self,
        id: TemplateId,
        slots: &BTreeMap<&str, String>,
    ) -> Result<String, LlmError> {
        self.get(id).render(slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn decomposition_substitutes_question() {
        let lib = PromptLibrary::default();
        let out = lib
            .render(TemplateId::TaskDecomposition, &slots(&[("question", "who directed X")]))
            .unwrap();
        assert!(out.contains("Q: who directed X"));
        assert!(out.contains("as few subgoals as possible"));
    }

    #[test]
    fn missing_slot_is_reported() {
        let lib = PromptLibrary::default();
        let result = lib.render(
            TemplateId::RelationPruning,
            &slots(&[("question", "q"), ("subgoals", "s"), ("topic_entity", "t")]),
        );
        match result {
            Err(LlmError::MissingSlot(name)) => assert_eq!(name, "relations"),
            other => panic!("expected MissingSlot, got {other:?}"),
        }
    }

    #[test]
    fn answer_generation_keeps_template_order() {
        let lib = PromptLibrary::default();
        let out = lib
            .render(
                TemplateId::AnswerGeneration,
                &slots(&[("question", "q"), ("memory", "MEMBLOCK"), ("triplets", "TRIPBLOCK")]),
            )
            .unwrap();
        let mem = out.find("MEMBLOCK").unwrap();
        let trip = out.find("TRIPBLOCK").unwrap();
        assert!(mem < trip, "memory block must precede triplets");
        assert!(out.contains("must include \"A\" and \"R\""));
    }

    #[test]
    fn no_unfilled_placeholder_survives_rendering() {
        let lib = PromptLibrary::default();
        let all = slots(&[
            ("question", "q"),
            ("subgoals", "s"),
            ("topic_entity", "t"),
            ("relations", "r"),
            ("triplets", "tr"),
            ("memory", "m"),
            ("entities", "e"),
            ("reason", "re"),
            ("candidate_entities", "ce"),
            ("evidence", "ev"),
            ("exemplars", "ex"),
        ]);
        let placeholder = regex::Regex::new(r"\{[a-z_]+\}").unwrap();
        for id in TemplateId::ALL {
            let out = lib.render(id, &all).unwrap();
            assert!(!placeholder.is_match(&out), "unfilled placeholder in {:?}: {out}", id);
        }
    }

    #[test]
    fn braces_in_slot_values_are_not_rescanned() {
        let lib = PromptLibrary::default();
        let out = lib
            .render(
                TemplateId::MemoryUpdate,
                &slots(&[("question", "q"), ("subgoals", "s"), ("memory", "{\"Add\": true}")]),
            )
            .unwrap();
        assert!(out.contains("{\"Add\": true}"));
    }

    #[test]
    fn few_shot_block_is_included_verbatim() {
        let mut lib = PromptLibrary::default();
        lib.set_few_shots(TemplateId::TaskDecomposition, "EXAMPLE A -> ['x']");
        let out = lib
            .render(TemplateId::TaskDecomposition, &slots(&[("question", "q")]))
            .unwrap();
        assert!(out.contains("EXAMPLE A -> ['x']"));
    }
}
