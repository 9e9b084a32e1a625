//! Engine configuration: reranking weights, search depth, copy threshold,
//! shortlist and retrieval sizes, relation denylist, refinement budget.

use super::EngineError;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Duration;

/// Fusion weights for the three reranking signals. Non-negative and
/// summing to one within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct RerankWeights {
    loc: f64,
    step: f64,
    glob: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawWeights {
    loc: f64,
    step: f64,
    glob: f64,
}

impl TryFrom<RawWeights> for RerankWeights {
    type Error = EngineError;

    fn try_from(raw: RawWeights) -> Result<Self, EngineError> {
        RerankWeights::new(raw.loc, raw.step, raw.glob)
    }
}

impl From<RerankWeights> for RawWeights {
    fn from(w: RerankWeights) -> Self {
        RawWeights { loc: w.loc, step: w.step, glob: w.glob }
    }
}

impl RerankWeights {
    pub fn new(loc: f64, step: f64, glob: f64) -> Result<Self, EngineError> {
        if loc < 0.0 || step < 0.0 || glob < 0.0 {
            return Err(EngineError::ConfigInvalid("rerank weights must be non-negative".into()));
        }
        let sum = loc + step + glob;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::ConfigInvalid(format!(
                "rerank weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { loc, step, glob })
    }

    pub fn loc(&self) -> f64 {
        self.loc
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn glob(&self) -> f64 {
        self.glob
    }

    /// The fused score: `loc·φ_loc + step·φ_step + glob·φ_glob`.
    pub fn fuse(&self, phi_loc: f64, phi_step: f64, phi_glob: f64) -> f64 {
        self.loc * phi_loc + self.step * phi_step + self.glob * phi_glob
    }
}

impl Default for RerankWeights {
    fn default() -> Self {
        Self { loc: 0.6, step: 0.25, glob: 0.15 }
    }
}

/// Generic relations removed from candidate sets before scoring. A pattern
/// ending in `.*` matches by prefix, anything else exactly.
pub fn default_denylist() -> Vec<String> {
    ["type.object.*", "common.topic.*", "kg.*", "freebase.*"]
        .into_iter()
        .map(String::from)
        .collect()
}

pub(crate) fn denylist_matches(patterns: &[String], predicate: &str) -> bool {
    patterns.iter().any(|p| match p.strip_suffix(".*") {
        Some(prefix) => {
            predicate == prefix || predicate.starts_with(&format!("{prefix}."))
        }
        None => predicate == p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Maximum forward exploration steps per attempt.
    pub depth: usize,
    /// Copy a retrieved blueprint verbatim when top similarity strictly
    /// exceeds this threshold; otherwise adapt via the LLM.
    pub tau_copy: f64,
    pub weights: RerankWeights,
    /// Shortlist size after fused reranking.
    pub shortlist_size: usize,
    /// Exemplars retrieved from the library per query.
    pub retrieval_k: usize,
    /// Exemplars shown to the adaptation prompt.
    pub adapt_exemplars: usize,
    pub denylist: Vec<String>,
    pub max_backtracks: usize,
    pub refinement_enabled: bool,
    /// Per-query wall-clock budget; exceeded queries return an empty
    /// answer and are scored wrong.
    pub query_timeout: Option<Duration>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            tau_copy: 0.92,
            weights: RerankWeights::default(),
            shortlist_size: 8,
            retrieval_k: 5,
            adapt_exemplars: 2,
            denylist: default_denylist(),
            max_backtracks: 2,
            refinement_enabled: true,
            query_timeout: Some(Duration::from_secs(120)),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.depth == 0 {
            return Err(EngineError::ConfigInvalid("depth must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_copy) {
            return Err(EngineError::ConfigInvalid(format!(
                "tau_copy must be in [0, 1], got {}",
                self.tau_copy
            )));
        }
        if self.shortlist_size == 0 {
            return Err(EngineError::ConfigInvalid("shortlist_size must be at least 1".into()));
        }
        if self.retrieval_k == 0 {
            return Err(EngineError::ConfigInvalid("retrieval_k must be at least 1".into()));
        }
        if self.adapt_exemplars == 0 {
            return Err(EngineError::ConfigInvalid("adapt_exemplars must be at least 1".into()));
        }
        Ok(())
    }
}

/// Partial configuration read from a file, merged over defaults and under
/// explicit command-line flags. Accepts JSON (`{...}`) or `key=value`
/// lines; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigOverlay {
    pub depth: Option<usize>,
    pub tau_copy: Option<f64>,
    pub lambda_loc: Option<f64>,
    pub lambda_step: Option<f64>,
    pub lambda_glob: Option<f64>,
    pub shortlist_n: Option<usize>,
    pub retrieval_k: Option<usize>,
    pub adapt_exemplars: Option<usize>,
    pub denylist: Option<Vec<String>>,
    pub max_backtracks: Option<usize>,
    pub refinement_enabled: Option<bool>,
    pub timeout_secs: Option<u64>,
    pub kg: Option<String>,
    pub llm: Option<String>,
    pub encoder: Option<String>,
    pub seed: Option<u64>,
}

impl ConfigOverlay {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::ConfigInvalid(format!("cannot read config: {e}")))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, EngineError> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text)
                .map_err(|e| EngineError::ConfigInvalid(format!("bad JSON config: {e}")));
        }
        let mut overlay = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EngineError::ConfigInvalid(format!("line {}: expected key=value", i + 1))
            })?;
            overlay.set(key.trim(), value.trim()).map_err(|msg| {
                EngineError::ConfigInvalid(format!("line {}: {msg}", i + 1))
            })?;
        }
        Ok(overlay)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e| format!("bad value {v:?}: {e}"))
        }
        match key {
            "depth" => self.depth = Some(num(value)?),
            "tau_copy" => self.tau_copy = Some(num(value)?),
            "lambda_loc" => self.lambda_loc = Some(num(value)?),
            "lambda_step" => self.lambda_step = Some(num(value)?),
            "lambda_glob" => self.lambda_glob = Some(num(value)?),
            "shortlist_n" => self.shortlist_n = Some(num(value)?),
            "retrieval_k" => self.retrieval_k = Some(num(value)?),
            "adapt_exemplars" => self.adapt_exemplars = Some(num(value)?),
            "denylist" => {
                self.denylist =
                    Some(value.split(',').map(|s| s.trim().to_string()).collect())
            }
            "max_backtracks" => self.max_backtracks = Some(num(value)?),
            "refinement_enabled" => self.refinement_enabled = Some(num(value)?),
            "timeout_secs" => self.timeout_secs = Some(num(value)?),
            "kg" => self.kg = Some(value.to_string()),
            "llm" => self.llm = Some(value.to_string()),
            "encoder" => self.encoder = Some(value.to_string()),
            "seed" => self.seed = Some(num(value)?),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Merge this overlay into a config; unset fields keep their values.
    pub fn apply(&self, config: &mut EngineConfig) -> Result<(), EngineError> {
        if let Some(v) = self.depth {
            config.depth = v;
        }
        if let Some(v) = self.tau_copy {
            config.tau_copy = v;
        }
        if self.lambda_loc.is_some() || self.lambda_step.is_some() || self.lambda_glob.is_some() {
            config.weights = RerankWeights::new(
                self.lambda_loc.unwrap_or_else(|| config.weights.loc()),
                self.lambda_step.unwrap_or_else(|| config.weights.step()),
                self.lambda_glob.unwrap_or_else(|| config.weights.glob()),
            )?;
        }
        if let Some(v) = self.shortlist_n {
            config.shortlist_size = v;
        }
        if let Some(v) = self.retrieval_k {
            config.retrieval_k = v;
        }
        if let Some(v) = self.adapt_exemplars {
            config.adapt_exemplars = v;
        }
        if let Some(v) = &self.denylist {
            config.denylist = v.clone();
        }
        if let Some(v) = self.max_backtracks {
            config.max_backtracks = v;
        }
        if let Some(v) = self.refinement_enabled {
            config.refinement_enabled = v;
        }
        if let Some(v) = self.timeout_secs {
            config.query_timeout = if v == 0 { None } else { Some(Duration::from_secs(v)) };
        }
        config.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_enforce_simplex() {
        assert!(RerankWeights::new(0.6, 0.25, 0.15).is_ok());
        assert!(RerankWeights::new(1.0, 0.0, 0.0).is_ok());
        assert!(RerankWeights::new(0.6, 0.25, 0.16).is_err());
        assert!(RerankWeights::new(0.5, 0.5, 0.0 - 1e-6).is_err());
        assert!(RerankWeights::new(-0.1, 0.6, 0.5).is_err());
        // Within tolerance passes.
        assert!(RerankWeights::new(0.6, 0.25, 0.15 + 5e-10).is_ok());
    }

    #[test]
    fn fuse_matches_direct_arithmetic() {
        let w = RerankWeights::default();
        let got = w.fuse(0.8, 0.4, 0.6);
        assert!((got - 0.67).abs() < 1e-12);
    }

    #[test]
    fn denylist_prefix_and_exact() {
        let list = default_denylist();
        assert!(denylist_matches(&list, "type.object.type"));
        assert!(denylist_matches(&list, "common.topic.notable_types"));
        assert!(denylist_matches(&list, "kg.object_profile"));
        assert!(!denylist_matches(&list, "film.director.film"));
        assert!(!denylist_matches(&list, "kgx.other"));
        let exact = vec!["film.director.film".to_string()];
        assert!(denylist_matches(&exact, "film.director.film"));
        assert!(!denylist_matches(&exact, "film.director.film.x"));
    }

    #[test]
    fn overlay_parses_key_value_and_json() {
        let kv = ConfigOverlay::parse("depth=3\ntau_copy=0.9\n# comment\ndenylist=a.*,b.c\n").unwrap();
        assert_eq!(kv.depth, Some(3));
        assert_eq!(kv.denylist.as_ref().unwrap().len(), 2);

        let js = ConfigOverlay::parse(r#"{"depth": 2, "lambda_loc": 1.0, "lambda_step": 0.0, "lambda_glob": 0.0}"#).unwrap();
        let mut config = EngineConfig::default();
        js.apply(&mut config).unwrap();
        assert_eq!(config.depth, 2);
        assert_eq!(config.weights.loc(), 1.0);
    }

    #[test]
    fn overlay_rejects_unknown_keys_and_bad_weights() {
        assert!(ConfigOverlay::parse("nonsense=1\n").is_err());
        let overlay = ConfigOverlay::parse("lambda_loc=0.9\n").unwrap();
        let mut config = EngineConfig::default();
        assert!(overlay.apply(&mut config).is_err());
    }

    #[test]
    fn config_validation() {
        let mut config = EngineConfig::default();
        assert!(config.validate().is_ok());
        config.tau_copy = 1.5;
        assert!(config.validate().is_err());
        config.tau_copy = 0.92;
        config.depth = 0;
        assert!(config.validate().is_err());
    }
}
