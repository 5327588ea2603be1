//! Contamination scanning against a training-corpus index, plus
//! continuation and perplexity memorization probes.

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{EvalError, Result};
use crate::harness::providers::{GenerationParams, Generator, LogProbScorer};
use crate::model_metrics::perplexity;
use crate::overlap::{rouge, OverlapConfig, RougeVariant};
use crate::quality::index::{window_hashes, IndexMode, TrainCorpusIndex};
use crate::quality::{normalize_text, normalized_tokens};

pub const DEFAULT_MIN_SUBSTRING_TOKENS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    ExactMatch,
    SubstringMatch,
    WindowHashHit,
    BloomHit,
    Continuation,
    LowPerplexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationFlag {
    pub item_id: String,
    pub evidence: Evidence,
    /// Matched span or score, depending on evidence kind.
    pub detail: String,
    /// Bloom evidence may be a false positive; everything else is definite.
    pub advisory: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanParams {
    pub min_substring_tokens: usize,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            min_substring_tokens: DEFAULT_MIN_SUBSTRING_TOKENS,
        }
    }
}

/// Flags every item whose normalized prompt or reference hits the index.
/// The evidence kind follows the index mode.
pub fn contamination_scan(
    dataset: &Dataset,
    index: &TrainCorpusIndex,
    params: &ScanParams,
) -> Result<Vec<ContaminationFlag>> {
    let mut flags = Vec::new();
    for item in &dataset.items {
        let texts: Vec<&str> = std::iter::once(item.prompt.as_str())
            .chain(item.references.iter().map(String::as_str))
            .collect();
        match index.mode {
            IndexMode::ExactHash => {
                for text in &texts {
                    let norm = normalize_text(text);
                    if index.contains_exact(&norm)? {
                        flags.push(ContaminationFlag {
                            item_id: item.id.clone(),
                            evidence: Evidence::ExactMatch,
                            detail: excerpt(&norm),
                            advisory: false,
                        });
                        break;
                    }
                }
            }
            IndexMode::WindowedBloom => {
                'item: for text in &texts {
                    let toks = normalized_tokens(text);
                    for (i, h) in window_hashes(&toks, index.window_tokens).iter().enumerate() {
                        if index.contains_window(*h)? {
                            let span = toks[i..i + index.window_tokens].join(" ");
                            flags.push(ContaminationFlag {
                                item_id: item.id.clone(),
                                evidence: Evidence::BloomHit,
                                detail: excerpt(&span),
                                advisory: true,
                            });
                            break 'item;
                        }
                    }
                }
            }
            IndexMode::Suffix => {
                let w = params.min_substring_tokens;
                if w == 0 {
                    return Err(EvalError::InvalidConfig(
                        "min_substring_tokens must be >= 1".into(),
                    ));
                }
                'suffix: for text in &texts {
                    let toks = normalized_tokens(text);
                    if toks.len() < w {
                        // short texts fall back to a whole-text query
                        let norm = normalize_text(text);
                        if !norm.is_empty() && index.contains_substring(&norm)? {
                            flags.push(ContaminationFlag {
                                item_id: item.id.clone(),
                                evidence: Evidence::SubstringMatch,
                                detail: excerpt(&norm),
                                advisory: false,
                            });
                            break 'suffix;
                        }
                        continue;
                    }
                    for i in 0..=(toks.len() - w) {
                        let span = toks[i..i + w].join(" ");
                        if index.contains_substring(&span)? {
                            flags.push(ContaminationFlag {
                                item_id: item.id.clone(),
                                evidence: Evidence::SubstringMatch,
                                detail: excerpt(&span),
                                advisory: false,
                            });
                            break 'suffix;
                        }
                    }
                }
            }
        }
    }
    Ok(flags)
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 120;
    if s.chars().count() <= MAX {
        s.to_string()
    } else {
        let cut: String = s.chars().take(MAX).collect();
        format!("{cut}…")
    }
}

// ---------------------------------------------------------------------------
// continuation probe

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationParams {
    /// Fraction of tokens given as the prefix.
    pub prefix_fraction: f64,
}

impl Default for ContinuationParams {
    fn default() -> Self {
        ContinuationParams {
            prefix_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub item_id: String,
    /// ROUGE-L F1 of the generated continuation vs the held-out suffix;
    /// None when the item was skipped or the provider failed.
    pub score: Option<f64>,
    pub skipped: bool,
    pub error: Option<String>,
}

/// Split each item's reference (or prompt) at `prefix_fraction`, ask the
/// provider to continue at temperature 0, and score the continuation
/// against the held-out suffix. High scores suggest memorization.
pub fn continuation_probe(
    dataset: &Dataset,
    provider: &dyn Generator,
    params: &ContinuationParams,
) -> Result<Vec<ContinuationResult>> {
    if !(0.0 < params.prefix_fraction && params.prefix_fraction < 1.0) {
        return Err(EvalError::InvalidConfig(
            "prefix_fraction must be in (0,1)".into(),
        ));
    }
    let gen_params = GenerationParams {
        temperature: 0.0,
        ..Default::default()
    };
    let mut out = Vec::new();
    for item in &dataset.items {
        let text = item
            .references
            .first()
            .map(String::as_str)
            .unwrap_or(item.prompt.as_str());
        let toks = normalized_tokens(text);
        let split = ((toks.len() as f64) * params.prefix_fraction).floor() as usize;
        if toks.len() < 2 || split == 0 || split >= toks.len() {
            out.push(ContinuationResult {
                item_id: item.id.clone(),
                score: None,
                skipped: true,
                error: None,
            });
            continue;
        }
        let prefix = toks[..split].join(" ");
        let suffix = toks[split..].join(" ");
        match provider.generate(&prefix, &gen_params) {
            Ok(record) => {
                let mut cfg = OverlapConfig::default();
                cfg.rouge_variant = RougeVariant::L;
                let score = rouge(&record.text, &[suffix.as_str()], &cfg)?.f_beta;
                out.push(ContinuationResult {
                    item_id: item.id.clone(),
                    score: Some(score),
                    skipped: false,
                    error: None,
                });
            }
            Err(e) => out.push(ContinuationResult {
                item_id: item.id.clone(),
                score: None,
                skipped: false,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// perplexity flagging

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerplexityFlagParams {
    /// Items in the lowest `percentile` of the PPL distribution are flagged.
    pub percentile: f64,
}

impl Default for PerplexityFlagParams {
    fn default() -> Self {
        PerplexityFlagParams { percentile: 5.0 }
    }
}

/// Relative low-perplexity flagging: an item is flagged when its PPL is
/// strictly below the value at the percentile cutoff rank, so datasets of
/// identical PPLs produce no flags.
pub fn perplexity_flag(
    dataset: &Dataset,
    provider: &dyn LogProbScorer,
    params: &PerplexityFlagParams,
) -> Result<Vec<ContaminationFlag>> {
    if !(0.0..100.0).contains(&params.percentile) {
        return Err(EvalError::InvalidConfig(
            "percentile must be in [0,100)".into(),
        ));
    }
    let mut ppls: Vec<(String, f64)> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    for item in &dataset.items {
        match provider
            .token_logprobs(&item.prompt)
            .and_then(|lps| perplexity(&lps))
        {
            Ok(p) => ppls.push((item.id.clone(), p)),
            Err(e) => failures.push((item.id.clone(), e.to_string())),
        }
    }
    if ppls.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted: Vec<f64> = ppls.iter().map(|(_, p)| *p).collect();
    sorted.sort_by(f64::total_cmp);
    let k = ((params.percentile / 100.0) * ppls.len() as f64).floor() as usize;
    let cutoff = sorted[k.min(sorted.len() - 1)];
    Ok(ppls
        .into_iter()
        .filter(|(_, p)| *p < cutoff)
        .map(|(id, p)| ContaminationFlag {
            item_id: id,
            evidence: Evidence::LowPerplexity,
            detail: format!("ppl={p:.4} < cutoff {cutoff:.4}"),
            advisory: true,
        })
        .collect())
}
