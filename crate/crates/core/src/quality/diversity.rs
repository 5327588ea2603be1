//! Diversity measurement: pairwise n-gram similarity statistics, near
//! duplicates, cluster counts, tag entropy, and tag coverage.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{EvalError, Result};
use crate::quality::minhash::{lsh_clusters, LshParams};
use crate::quality::{jaccard_of_sets, ngram_hashes, splitmix64};

pub const DEFAULT_EXACT_PAIR_ITEM_CAP: usize = 2_000;
pub const DEFAULT_SAMPLED_PAIRS: usize = 100_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityParams {
    pub ngram_n: usize,
    /// Pairs with verified similarity at or above this are reported as near
    /// duplicates.
    pub near_duplicate_threshold: f64,
    /// Exact all-pairs similarity up to this many items; sampled beyond.
    pub exact_item_cap: usize,
    pub sampled_pairs: usize,
    pub seed: u64,
    pub lsh: LshParams,
}

impl Default for DiversityParams {
    fn default() -> Self {
        DiversityParams {
            ngram_n: 1,
            near_duplicate_threshold: 0.8,
            exact_item_cap: DEFAULT_EXACT_PAIR_ITEM_CAP,
            sampled_pairs: DEFAULT_SAMPLED_PAIRS,
            seed: 0,
            lsh: LshParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub n_pairs: usize,
    pub sampled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityReport {
    /// None when the dataset has fewer than two items.
    pub pairwise_similarity: Option<PairwiseStats>,
    pub near_duplicate_pairs: Vec<(String, String, f64)>,
    pub cluster_count: usize,
    /// Shannon entropy (natural log) of the tag distribution.
    pub tag_entropy: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Shannon entropy of tag occurrence counts, natural log.
pub fn tag_entropy(dataset: &Dataset) -> f64 {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for item in &dataset.items {
        for tag in &item.tags {
            *counts.entry(tag.as_str()).or_insert(0) += 1;
        }
    }
    let total: u64 = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

pub fn diversity_report(dataset: &Dataset, params: &DiversityParams) -> Result<DiversityReport> {
    if dataset.items.is_empty() {
        return Err(EvalError::InvalidInput("empty dataset".into()));
    }
    let n = dataset.items.len();
    let sets: Vec<HashSet<u64>> = dataset
        .items
        .iter()
        .map(|item| {
            let toks =
                crate::overlap::tokenize(&item.prompt, crate::overlap::TokenizeMode::Word).tokens;
            ngram_hashes(&toks, params.ngram_n)
        })
        .collect();

    let mut near_duplicate_pairs = Vec::new();
    let pairwise_similarity = if n < 2 {
        None
    } else {
        let mut sims = Vec::new();
        let sampled = n > params.exact_item_cap;
        if !sampled {
            for i in 0..n {
                for j in (i + 1)..n {
                    let s = jaccard_of_sets(&sets[i], &sets[j]);
                    sims.push(s);
                    if s >= params.near_duplicate_threshold {
                        near_duplicate_pairs.push((
                            dataset.items[i].id.clone(),
                            dataset.items[j].id.clone(),
                            s,
                        ));
                    }
                }
            }
        } else {
            let mut state = params.seed ^ 0xd1e2_57a1;
            for _ in 0..params.sampled_pairs {
                let i = (splitmix64(&mut state) % n as u64) as usize;
                let mut j = (splitmix64(&mut state) % n as u64) as usize;
                if i == j {
                    j = (j + 1) % n;
                }
                let s = jaccard_of_sets(&sets[i], &sets[j]);
                sims.push(s);
                if s >= params.near_duplicate_threshold {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    near_duplicate_pairs.push((
                        dataset.items[a].id.clone(),
                        dataset.items[b].id.clone(),
                        s,
                    ));
                }
            }
            near_duplicate_pairs.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
            near_duplicate_pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        }
        let mut sorted = sims.clone();
        sorted.sort_by(f64::total_cmp);
        Some(PairwiseStats {
            mean: sims.iter().sum::<f64>() / sims.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            p95: quantile_sorted(&sorted, 0.95),
            n_pairs: sims.len(),
            sampled,
        })
    };

    let clusters = lsh_clusters(dataset, &params.lsh)?;
    Ok(DiversityReport {
        pairwise_similarity,
        near_duplicate_pairs,
        cluster_count: clusters.len(),
        tag_entropy: tag_entropy(dataset),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCoverage {
    pub counts: BTreeMap<String, u64>,
    pub extra_tags: BTreeMap<String, u64>,
    pub untagged: u64,
}

/// Exact per-tag item counts against a taxonomy; out-of-taxonomy tags are
/// reported separately.
pub fn tag_coverage(dataset: &Dataset, taxonomy: &[String]) -> TagCoverage {
    let mut counts: BTreeMap<String, u64> = taxonomy.iter().map(|t| (t.clone(), 0)).collect();
    let mut extra_tags: BTreeMap<String, u64> = BTreeMap::new();
    let mut untagged = 0;
    for item in &dataset.items {
        if item.tags.is_empty() {
            untagged += 1;
            continue;
        }
        for tag in &item.tags {
            if let Some(c) = counts.get_mut(tag.as_str()) {
                *c += 1;
            } else {
                *extra_tags.entry(tag.clone()).or_insert(0) += 1;
            }
        }
    }
    TagCoverage {
        counts,
        extra_tags,
        untagged,
    }
}
