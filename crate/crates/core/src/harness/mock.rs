//! Deterministic table-driven mock providers for offline testing.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::harness::providers::{
    Autorater, Embedder, GenerationParams, GenerationRecord, Generator, LogProbScorer, NliScorer,
    NliScores,
};
use crate::quality::fnv1a64;

/// One behavior rule: the first entry whose pattern matches the prompt
/// selects the response. Multi-response entries cycle deterministically,
/// with per-(seed, prompt) counters. A response beginning with `fail:`
/// is a failure directive (`fail:timeout`, `fail:provider`,
/// `fail:http:<status>`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorEntry {
    pub pattern: String,
    pub responses: Vec<String>,
    /// Optional per-response token log-prob lists, parallel to `responses`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BehaviorTable {
    pub entries: Vec<BehaviorEntry>,
    /// Used when no pattern matches; unmatched prompts error otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
}

impl BehaviorTable {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// Single fixed response for every prompt.
    pub fn constant(text: impl Into<String>) -> Self {
        BehaviorTable {
            entries: Vec::new(),
            default: Some(text.into()),
        }
    }
}

pub struct MockProvider {
    table: BehaviorTable,
    patterns: Vec<regex::Regex>,
    seed: u64,
    counters: Mutex<HashMap<u64, usize>>,
}

impl MockProvider {
    pub fn new(table: BehaviorTable, seed: u64) -> Result<Self> {
        let patterns = table
            .entries
            .iter()
            .map(|e| {
                regex::Regex::new(&e.pattern)
                    .map_err(|err| EvalError::InvalidConfig(format!("bad mock pattern: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MockProvider {
            table,
            patterns,
            seed,
            counters: Mutex::new(HashMap::new()),
        })
    }

    fn lookup(&self, prompt: &str) -> Result<(String, Option<Vec<f64>>)> {
        for (entry, re) in self.table.entries.iter().zip(&self.patterns) {
            if !re.is_match(prompt) {
                continue;
            }
            if entry.responses.is_empty() {
                return Err(EvalError::InvalidConfig(format!(
                    "mock entry {:?} has no responses",
                    entry.pattern
                )));
            }
            let key = self.seed ^ fnv1a64(prompt.as_bytes());
            let idx = {
                let mut counters = self.counters.lock().unwrap();
                let c = counters.entry(key).or_insert(0);
                let idx = *c % entry.responses.len();
                *c += 1;
                idx
            };
            let response = entry.responses[idx].clone();
            if let Some(directive) = response.strip_prefix("fail:") {
                return Err(match directive {
                    "timeout" => EvalError::ProviderTimeout("mock timeout".into()),
                    d if d.starts_with("http:") => EvalError::HttpStatus {
                        status: d[5..].parse().unwrap_or(500),
                        body: "mock failure".into(),
                    },
                    d => EvalError::Provider(format!("mock failure directive {d:?}")),
                });
            }
            let lp = entry
                .logprobs
                .as_ref()
                .and_then(|lists| lists.get(idx).cloned());
            return Ok((response, lp));
        }
        match &self.table.default {
            Some(d) => Ok((d.clone(), None)),
            None => Err(EvalError::Provider(format!(
                "mock has no rule matching prompt {:?}",
                prompt.chars().take(60).collect::<String>()
            ))),
        }
    }
}

impl Generator for MockProvider {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord> {
        params.validate()?;
        let (text, token_logprobs) = self.lookup(prompt)?;
        Ok(GenerationRecord {
            text,
            token_logprobs,
            provider: "mock".into(),
            retries: 0,
        })
    }
}

impl LogProbScorer for MockProvider {
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>> {
        let (_, lp) = self.lookup(text)?;
        lp.ok_or_else(|| EvalError::Provider("mock entry has no logprobs".into()))
    }
}

impl Autorater for MockProvider {
    fn rate(&self, rendered_prompt: &str) -> Result<String> {
        Ok(self.lookup(rendered_prompt)?.0)
    }
}

/// NLI mock: first hypothesis-matching rule wins.
pub struct TableNli {
    rules: Vec<(regex::Regex, NliScores)>,
    pub default: NliScores,
}

impl TableNli {
    pub fn new(rules: &[(&str, NliScores)]) -> Result<Self> {
        let compiled = rules
            .iter()
            .map(|(p, s)| {
                regex::Regex::new(p)
                    .map(|re| (re, *s))
                    .map_err(|e| EvalError::InvalidConfig(format!("bad NLI pattern: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TableNli {
            rules: compiled,
            default: NliScores {
                entailment: 1.0 / 3.0,
                neutral: 1.0 / 3.0,
                contradiction: 1.0 / 3.0,
            },
        })
    }
}

impl NliScorer for TableNli {
    fn score(&self, _premise: &str, hypothesis: &str) -> Result<NliScores> {
        for (re, scores) in &self.rules {
            if re.is_match(hypothesis) {
                return Ok(*scores);
            }
        }
        Ok(self.default)
    }
}

/// Deterministic bag-of-words hash embedder: token hashes scatter into a
/// fixed-dimension vector. Shared tokens yield similar vectors, which is
/// enough structure for offline testing.
pub struct HashEmbedder {
    pub dims: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dims: 64 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dims];
        let toks = crate::overlap::tokenize(text, crate::overlap::TokenizeMode::Word).tokens;
        for t in &toks {
            let h = fnv1a64(t.as_bytes());
            v[(h % self.dims as u64) as usize] += 1.0;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &[&str])]) -> BehaviorTable {
        BehaviorTable {
            entries: entries
                .iter()
                .map(|(p, rs)| BehaviorEntry {
                    pattern: p.to_string(),
                    responses: rs.iter().map(|s| s.to_string()).collect(),
                    logprobs: None,
                })
                .collect(),
            default: None,
        }
    }

    #[test]
    fn first_matching_pattern_wins() {
        let m = MockProvider::new(table(&[("^hello", &["hi"]), ("hello", &["other"])]), 0).unwrap();
        let r = m.generate("hello there", &GenerationParams::default()).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.provider, "mock");
    }

    #[test]
    fn multi_response_cycles_in_order() {
        let m = MockProvider::new(table(&[(".*", &["A", "A", "B"])]), 42).unwrap();
        let p = GenerationParams::default();
        let seq: Vec<String> = (0..4).map(|_| m.generate("q", &p).unwrap().text).collect();
        assert_eq!(seq, vec!["A", "A", "B", "A"]);
        // distinct prompts have independent counters
        assert_eq!(m.generate("other", &p).unwrap().text, "A");
    }

    #[test]
    fn fail_directives_raise_typed_errors() {
        let m = MockProvider::new(
            table(&[("t", &["fail:timeout"]), ("h", &["fail:http:429"]), ("g", &["fail:boom"])]),
            0,
        )
        .unwrap();
        let p = GenerationParams::default();
        assert!(matches!(m.generate("t", &p), Err(EvalError::ProviderTimeout(_))));
        assert!(matches!(
            m.generate("h", &p),
            Err(EvalError::HttpStatus { status: 429, .. })
        ));
        assert!(matches!(m.generate("g", &p), Err(EvalError::Provider(_))));
    }

    #[test]
    fn unmatched_prompt_uses_default_or_errors() {
        let mut t = table(&[("^x$", &["matched"])]);
        let m = MockProvider::new(t.clone(), 0).unwrap();
        assert!(m.generate("nope", &GenerationParams::default()).is_err());
        t.default = Some("fallback".into());
        let m = MockProvider::new(t, 0).unwrap();
        assert_eq!(
            m.generate("nope", &GenerationParams::default()).unwrap().text,
            "fallback"
        );
    }

    #[test]
    fn logprobs_travel_with_responses() {
        let t = BehaviorTable {
            entries: vec![BehaviorEntry {
                pattern: ".*".into(),
                responses: vec!["four tokens".into()],
                logprobs: Some(vec![vec![-1.3862943611198906; 4]]),
            }],
            default: None,
        };
        let m = MockProvider::new(t, 0).unwrap();
        let lp = m.token_logprobs("anything").unwrap();
        let ppl = crate::model_metrics::perplexity(&lp).unwrap();
        assert!((ppl - 4.0).abs() < 1e-9);
    }

    #[test]
    fn hash_embedder_is_deterministic_and_order_insensitive() {
        let e = HashEmbedder::default();
        let a = e.embed("alpha beta gamma").unwrap();
        let b = e.embed("gamma beta alpha").unwrap();
        assert_eq!(a, b);
        let sim = crate::model_metrics::cosine(&a, &e.embed("alpha beta gamma").unwrap()).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_round_trips_through_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        let t = BehaviorTable::constant("ok");
        std::fs::write(&path, serde_json::to_string(&t).unwrap()).unwrap();
        let loaded = BehaviorTable::from_path(&path).unwrap();
        assert_eq!(loaded.default.as_deref(), Some("ok"));
    }
}
