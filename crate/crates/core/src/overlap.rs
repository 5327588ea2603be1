//! Reference-based term-overlap metrics: tokenization, the ROUGE family,
//! BLEU, expected-term recall, and a TF-IDF cosine baseline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{EvalError, Result};

/// A normalized token sequence plus the character length of its source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_len_chars: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizeMode {
    Word,
    Char,
}

/// Lowercase + NFC, then split on maximal runs of non-alphanumeric characters
/// (word mode) or emit one token per character (char mode).
pub fn tokenize(text: &str, mode: TokenizeMode) -> TokenSequence {
    let source_len_chars = text.chars().count();
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    let tokens = match mode {
        TokenizeMode::Word => normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
        TokenizeMode::Char => normalized
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect(),
    };
    TokenSequence {
        tokens,
        source_len_chars,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    N(usize),
    L,
    /// Skip-bigrams with at most `max_skip` intervening tokens.
    S {
        max_skip: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    AddEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiRefAggregation {
    Max,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapConfig {
    pub rouge_variant: RougeVariant,
    /// F_beta recall weight; must be > 0.
    pub beta: f64,
    pub bleu_max_n: usize,
    /// Must have length `bleu_max_n` and sum to 1.
    pub bleu_weights: Vec<f64>,
    pub smoothing: Smoothing,
    pub multi_ref_aggregation: MultiRefAggregation,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        OverlapConfig {
            rouge_variant: RougeVariant::N(1),
            beta: 1.0,
            bleu_max_n: 4,
            bleu_weights: vec![0.25; 4],
            smoothing: Smoothing::None,
            multi_ref_aggregation: MultiRefAggregation::Max,
        }
    }
}

impl OverlapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(EvalError::InvalidConfig("beta must be > 0".into()));
        }
        if let RougeVariant::N(n) = self.rouge_variant {
            if n == 0 {
                return Err(EvalError::InvalidConfig("rouge n must be >= 1".into()));
            }
        }
        if self.bleu_max_n == 0 {
            return Err(EvalError::InvalidConfig("bleu_max_n must be >= 1".into()));
        }
        if self.bleu_weights.len() != self.bleu_max_n {
            return Err(EvalError::InvalidConfig(format!(
                "bleu_weights length {} != bleu_max_n {}",
                self.bleu_weights.len(),
                self.bleu_max_n
            )));
        }
        let sum: f64 = self.bleu_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidConfig(format!(
                "bleu_weights must sum to 1, got {sum}"
            )));
        }
        if let Smoothing::AddEpsilon(eps) = self.smoothing {
            if eps <= 0.0 {
                return Err(EvalError::InvalidConfig("smoothing epsilon must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
}

fn f_beta(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / denom
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(cand: &HashMap<&[String], usize>, reference: &HashMap<&[String], usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(*reference.get(g).unwrap_or(&0)))
        .sum()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn skip_bigram_counts(tokens: &[String], max_skip: usize) -> (HashMap<(&str, &str), usize>, usize) {
    let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
    let mut total = 0usize;
    for i in 0..tokens.len() {
        let hi = (i + 1 + max_skip + 1).min(tokens.len());
        for j in (i + 1)..hi {
            *counts.entry((&tokens[i], &tokens[j])).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

fn rouge_single(cand: &[String], reference: &[String], config: &OverlapConfig) -> RougeScore {
    let (hits, cand_total, ref_total) = match config.rouge_variant {
        RougeVariant::N(n) => {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            let hits = clipped_overlap(&c, &r);
            let ct = cand.len().saturating_sub(n - 1);
            let rt = reference.len().saturating_sub(n - 1);
            (hits, ct, rt)
        }
        RougeVariant::L => (lcs_len(cand, reference), cand.len(), reference.len()),
        RougeVariant::S { max_skip } => {
            let (c, ct) = skip_bigram_counts(cand, max_skip);
            let (r, rt) = skip_bigram_counts(reference, max_skip);
            let hits = c
                .iter()
                .map(|(g, &n)| n.min(*r.get(g).unwrap_or(&0)))
                .sum();
            (hits, ct, rt)
        }
    };
    let p = if cand_total == 0 {
        0.0
    } else {
        hits as f64 / cand_total as f64
    };
    let r = if ref_total == 0 {
        0.0
    } else {
        hits as f64 / ref_total as f64
    };
    RougeScore {
        precision: p,
        recall: r,
        f_beta: f_beta(p, r, config.beta),
    }
}

/// ROUGE against one or more references, aggregated per
/// `config.multi_ref_aggregation`.
pub fn rouge(candidate: &str, references: &[&str], config: &OverlapConfig) -> Result<RougeScore> {
    config.validate()?;
    if references.is_empty() {
        return Err(EvalError::InvalidInput("rouge requires >= 1 reference".into()));
    }
    let cand = tokenize(candidate, TokenizeMode::Word);
    let refs: Vec<TokenSequence> = references
        .iter()
        .map(|r| tokenize(r, TokenizeMode::Word))
        .collect();
    if cand.is_empty() && refs.iter().all(|r| r.is_empty()) {
        return Err(EvalError::InvalidInput(
            "candidate and all references empty".into(),
        ));
    }
    let scores: Vec<RougeScore> = refs
        .iter()
        .map(|r| rouge_single(&cand.tokens, &r.tokens, config))
        .collect();
    Ok(match config.multi_ref_aggregation {
        MultiRefAggregation::Max => scores
            .into_iter()
            .max_by(|a, b| a.f_beta.total_cmp(&b.f_beta))
            .unwrap(),
        MultiRefAggregation::Mean => {
            let n = scores.len() as f64;
            let (p, r, f) = scores.iter().fold((0.0, 0.0, 0.0), |(p, r, f), s| {
                (p + s.precision, r + s.recall, f + s.f_beta)
            });
            RougeScore {
                precision: p / n,
                recall: r / n,
                f_beta: f / n,
            }
        }
    })
}

/// BLEU with clipped modified n-gram precisions and the
/// `exp(1 - r/c)` brevity penalty. Effective reference length is the
/// closest to the candidate length, ties toward shorter.
pub fn bleu(candidate: &str, references: &[&str], config: &OverlapConfig) -> Result<f64> {
    config.validate()?;
    if references.is_empty() {
        return Err(EvalError::InvalidInput("bleu requires >= 1 reference".into()));
    }
    let cand = tokenize(candidate, TokenizeMode::Word);
    if cand.is_empty() {
        return Ok(0.0);
    }
    let refs: Vec<TokenSequence> = references
        .iter()
        .map(|r| tokenize(r, TokenizeMode::Word))
        .collect();
    let c = cand.len();
    let r_eff = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&rl| (rl.abs_diff(c), rl))
        .unwrap();

    let mut log_sum = 0.0f64;
    for (i, &w) in config.bleu_weights.iter().enumerate() {
        let n = i + 1;
        let cand_counts = ngram_counts(&cand.tokens, n);
        // clip against the per-n-gram max count over all references
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for rf in &refs {
            for (g, cnt) in ngram_counts(&rf.tokens, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(cnt);
            }
        }
        let hits = clipped_overlap(&cand_counts, &max_ref) as f64;
        let total = cand.len().saturating_sub(n - 1) as f64;
        if total == 0.0 {
            return Ok(0.0);
        }
        let hits = match config.smoothing {
            Smoothing::None => {
                if hits == 0.0 {
                    return Ok(0.0);
                }
                hits
            }
            Smoothing::AddEpsilon(eps) => hits.max(eps),
        };
        log_sum += w * (hits / total).ln();
    }
    let bp = if c >= r_eff {
        1.0
    } else {
        (1.0 - r_eff as f64 / c as f64).exp()
    };
    Ok((bp * log_sum.exp()).min(1.0))
}

/// Fraction of expected terms appearing in the candidate; multi-word terms
/// must match as a contiguous token subsequence.
pub fn keyword_recall(candidate: &str, expected_terms: &[&str]) -> Result<f64> {
    if expected_terms.is_empty() {
        return Err(EvalError::InvalidInput("expected_terms is empty".into()));
    }
    let cand = tokenize(candidate, TokenizeMode::Word);
    let mut hit = 0usize;
    for term in expected_terms {
        let t = tokenize(term, TokenizeMode::Word);
        if t.is_empty() {
            continue;
        }
        if contains_subsequence(&cand.tokens, &t.tokens) {
            hit += 1;
        }
    }
    Ok(hit as f64 / expected_terms.len() as f64)
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Document frequencies over a dataset, for TF-IDF weighting.
#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub df: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn from_docs<'a, I: IntoIterator<Item = &'a str>>(docs: I) -> Self {
        let mut stats = CorpusStats::default();
        for doc in docs {
            stats.n_docs += 1;
            let toks = tokenize(doc, TokenizeMode::Word);
            let mut seen = std::collections::HashSet::new();
            for t in toks.tokens {
                if seen.insert(t.clone()) {
                    *stats.df.entry(t).or_insert(0) += 1;
                }
            }
        }
        stats
    }

    fn idf(&self, term: &str) -> f64 {
        let df = *self.df.get(term).unwrap_or(&0);
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }
}

/// Cosine similarity of TF-IDF vectors; 0 when either vector is zero.
pub fn tfidf_cosine(candidate: &str, reference: &str, stats: &CorpusStats) -> Result<f64> {
    if stats.n_docs == 0 {
        return Err(EvalError::InvalidInput(
            "corpus stats built from zero documents".into(),
        ));
    }
    let vec_of = |text: &str| -> HashMap<String, f64> {
        let toks = tokenize(text, TokenizeMode::Word);
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in toks.tokens {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        for (term, v) in tf.iter_mut() {
            *v *= stats.idf(term);
        }
        tf
    };
    let a = vec_of(candidate);
    let b = vec_of(reference);
    // equal vectors have cosine exactly 1; skip the rounding of dot/norms
    if !a.is_empty() && a == b {
        return Ok(1.0);
    }
    let dot: f64 = a
        .iter()
        .filter_map(|(t, &va)| b.get(t).map(|&vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}
