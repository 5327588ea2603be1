//! Provider interfaces for every model-backed role. Implementations must be
//! safe to call from multiple workers concurrently.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        use crate::error::EvalError;
        if self.temperature < 0.0 {
            return Err(EvalError::InvalidConfig("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(EvalError::InvalidConfig("top_p must be in (0,1]".into()));
        }
        if self.max_tokens == 0 {
            return Err(EvalError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// A system-under-test response plus optional per-token log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub text: String,
    pub token_logprobs: Option<Vec<f64>>,
    pub provider: String,
    pub retries: u32,
}

impl GenerationRecord {
    pub fn text_only(text: impl Into<String>, provider: &str) -> Self {
        GenerationRecord {
            text: text.into(),
            token_logprobs: None,
            provider: provider.to_string(),
            retries: 0,
        }
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<GenerationRecord>;
}

pub trait LogProbScorer: Send + Sync {
    /// Natural-log per-token probabilities for the given text.
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Raw three-way scores from an NLI provider, not yet validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

pub trait NliScorer: Send + Sync {
    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores>;
}

pub trait Autorater: Send + Sync {
    /// Returns the rater's raw text output for a rendered rubric prompt.
    fn rate(&self, rendered_prompt: &str) -> Result<String>;
}

pub trait IdkClassifier: Send + Sync {
    fn is_idk(&self, response: &str) -> Result<bool>;
}
