//! Chat-completion gateway: prompt templates, pluggable backends,
//! structured-output parsing, and per-query call/token accounting.

mod backend;
mod parse;
mod prompt;

pub use backend::{ChatClient, ChatModel, HttpChat, HttpChatConfig, ScriptEntry, ScriptedChat};
pub use parse::{format_list, parse_json, parse_list};
pub use prompt::{PromptLibrary, PromptTemplate, TemplateId};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("scripted responses exhausted")]
    ScriptExhausted,
    #[error("scripted response mismatch: expected prompt matching {expected:?}")]
    ScriptMismatch { expected: String },
    #[error("missing template slot: {0}")]
    MissingSlot(String),
    #[error("no list found in response")]
    NoListFound,
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("JSON object missing key: {0}")]
    MissingKey(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-query LLM usage accounting. Counters only grow during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl UsageLedger {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    pub fn record(&mut self, input_tokens: u64, output_tokens: u64) {
        self.calls += 1;
        self.input_tokens += input_tokens;
        self.output_tokens += output_tokens;
    }
}

/// Deterministic token counting for usage accounting.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Default heuristic: whitespace-delimited word count times 4/3, rounded up.
/// Absolute numbers are tokenizer-specific; only internal consistency
/// matters for the ledger.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTokenizer;

impl Tokenizer for HeuristicTokenizer {
    fn count(&self, text: &str) -> u64 {
        let words = text.split_whitespace().count() as u64;
        words.div_ceil(3) + words
    }
}

/// Count tokens with the default heuristic.
pub fn token_count(text: &str) -> u64 {
    HeuristicTokenizer.count(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_count_heuristic() {
        assert_eq!(token_count(""), 0);
        // ceil(3 * 4/3) = 4
        assert_eq!(token_count("a b c"), 4);
        assert_eq!(token_count("one two three four five six"), 8);
        assert_eq!(token_count("hello"), 2);
    }

    #[test]
    fn token_count_deterministic() {
        let text = "the same text, counted twice";
        assert_eq!(token_count(text), token_count(text));
    }

    #[test]
    fn ledger_accumulates() {
        let mut ledger = UsageLedger::default();
        ledger.record(10, 4);
        ledger.record(6, 2);
        assert_eq!(ledger.calls, 2);
        assert_eq!(ledger.input_tokens, 16);
        assert_eq!(ledger.output_tokens, 6);
        assert_eq!(ledger.total_tokens(), 22);
    }
}
