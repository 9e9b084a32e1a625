//! Chat backends: a deterministic scripted backend for tests and batch
//! replays, and an HTTP client speaking a chat-completions JSON schema.

use super::{HeuristicTokenizer, LlmError, Tokenizer, UsageLedger};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

/// Environment variable carrying the HTTP chat API key.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// One scripted exchange. `matcher` (substring, or regex when `regex` is
/// set) is validated against the prompt; in queue mode a mismatch is an
/// error, in map mode it selects the response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, rename = "match")]
    pub matcher: Option<String>,
    #[serde(default)]
    pub regex: bool,
    pub response: String,
}

impl ScriptEntry {
    fn matches(&self, prompt: &str) -> bool {
        match (&self.matcher, self.regex) {
            (None, _) => true,
            (Some(m), false) => prompt.contains(m.as_str()),
            (Some(m), true) => Regex::new(m).map(|r| r.is_match(prompt)).unwrap_or(false),
        }
    }
}

enum ScriptState {
    /// Ordered queue, consumed front to back; an entry's matcher, when
    /// present, asserts the expected prompt.
    Queue(Mutex<VecDeque<ScriptEntry>>),
    /// First matching rule answers; rules are not consumed.
    Map(Vec<ScriptEntry>),
}

/// Deterministic scripted backend, bound to a single query run in queue
/// mode.
pub struct ScriptedChat {
    state: ScriptState,
}

impl ScriptedChat {
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue = responses
            .into_iter()
            .map(|r| ScriptEntry { matcher: None, regex: false, response: r.into() })
            .collect();
        Self { state: ScriptState::Queue(Mutex::new(queue)) }
    }

    /// Queue mode with per-entry prompt assertions: each `(matcher,
    /// response)` pair must be consumed by a prompt containing `matcher`.
    pub fn from_expectations<I, M, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (M, S)>,
        M: Into<String>,
        S: Into<String>,
    {
        let queue = entries
            .into_iter()
            .map(|(m, r)| ScriptEntry {
                matcher: Some(m.into()),
                regex: false,
                response: r.into(),
            })
            .collect();
        Self { state: ScriptState::Queue(Mutex::new(queue)) }
    }

    pub fn from_rules(rules: Vec<ScriptEntry>) -> Self {
        Self { state: ScriptState::Map(rules) }
    }

    /// Load a JSON-lines script. When every entry carries a `match` field
    /// the script behaves as a reusable pattern map, otherwise as an
    /// ordered queue.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::BackendUnreachable(format!("bad script line: {e}")))?;
            entries.push(entry);
        }
        if !entries.is_empty() && entries.iter().all(|e| e.matcher.is_some()) {
            Ok(Self::from_rules(entries))
        } else {
            Ok(Self {
                state: ScriptState::Queue(Mutex::new(entries.into_iter().collect())),
            })
        }
    }
}

impl ChatModel for ScriptedChat {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        match &self.state {
            ScriptState::Queue(queue) => {
                let mut queue = queue.lock().expect("script queue poisoned");
                let entry = queue.pop_front().ok_or(LlmError::ScriptExhausted)?;
                if !entry.matches(prompt) {
                    return Err(LlmError::ScriptMismatch {
                        expected: entry.matcher.unwrap_or_default(),
                    });
                }
                Ok(entry.response)
            }
            ScriptState::Map(rules) => rules
                .iter()
                .find(|r| r.matches(prompt))
                .map(|r| r.response.clone())
                .ok_or(LlmError::ScriptExhausted),
        }
    }
}

/// Parameters for the HTTP chat backend. Defaults follow the runtime
/// settings used throughout: temperature 0.3, 1024 max tokens, zero
/// penalties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl HttpChatConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.3,
            max_tokens: 1024,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

/// Chat-completions HTTP client. The API key is read from `LLM_API_KEY`.
pub struct HttpChat {
    agent: ureq::Agent,
    config: HttpChatConfig,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(config: HttpChatConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        let api_key = std::env::var(API_KEY_ENV).ok();
        Self { agent, config, api_key }
    }
}

impl ChatModel for HttpChat {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let payload = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "frequency_penalty": self.config.frequency_penalty,
            "presence_penalty": self.config.presence_penalty,
        });
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&payload)
            .map_err(|e| LlmError::BackendUnreachable(e.to_string()))?;
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::BackendUnreachable(format!("bad response: {e}")))?;
        body.get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::BackendUnreachable("response missing choices[0].message.content".into()))
    }
}

/// A backend paired with the tokenizer used for ledger accounting.
pub struct ChatClient {
    backend: Box<dyn ChatModel>,
    tokenizer: Box<dyn Tokenizer>,
}

impl ChatClient {
    pub fn new(backend: Box<dyn ChatModel>) -> Self {
        Self { backend, tokenizer: Box::new(HeuristicTokenizer) }
    }

    pub fn with_tokenizer(backend: Box<dyn ChatModel>, tokenizer: Box<dyn Tokenizer>) -> Self {
        Self { backend, tokenizer }
    }

    /// Send one prompt; on success the ledger gains one call plus the token
    /// counts of both sides of the exchange.
    pub fn chat(&self, prompt: &str, ledger: &mut UsageLedger) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let response = self.backend.complete(prompt)?;
        ledger.record(self.tokenizer.count(prompt), self.tokenizer.count(&response));
        Ok(response)
    }
}
