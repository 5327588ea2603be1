//! MinHash signatures and LSH banding for near-duplicate clustering.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{EvalError, Result};
use crate::quality::{jaccard_of_sets, ngram_hashes, splitmix64};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LshParams {
    pub shingle_n: usize,
    pub num_hashes: usize,
    pub bands: usize,
    pub rows: usize,
    /// Verified-Jaccard threshold for candidate pairs.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            shingle_n: 3,
            num_hashes: 128,
            bands: 32,
            rows: 4,
            threshold: 0.8,
            seed: 0,
        }
    }
}

impl LshParams {
    pub fn validate(&self) -> Result<()> {
        if self.shingle_n == 0 {
            return Err(EvalError::InvalidConfig("shingle_n must be >= 1".into()));
        }
        if self.bands * self.rows != self.num_hashes {
            return Err(EvalError::InvalidConfig(format!(
                "bands ({}) * rows ({}) must equal num_hashes ({})",
                self.bands, self.rows, self.num_hashes
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(EvalError::InvalidConfig("threshold must be in [0,1]".into()));
        }
        Ok(())
    }
}

fn minhash_signature(shingles: &HashSet<u64>, coeffs: &[(u64, u64)]) -> Vec<u64> {
    coeffs
        .iter()
        .map(|&(a, b)| {
            shingles
                .iter()
                .map(|&s| a.wrapping_mul(s).wrapping_add(b))
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster items by MinHash/LSH: banded signatures produce candidate pairs,
/// pairs are verified against true shingle Jaccard, and clusters are the
/// connected components. Deterministic for a given seed.
pub fn lsh_clusters(dataset: &Dataset, params: &LshParams) -> Result<Vec<Vec<String>>> {
    params.validate()?;
    let n_items = dataset.items.len();
    let shingle_sets: Vec<HashSet<u64>> = dataset
        .items
        .iter()
        .map(|item| {
            let toks =
                crate::overlap::tokenize(&item.prompt, crate::overlap::TokenizeMode::Word).tokens;
            ngram_hashes(&toks, params.shingle_n)
        })
        .collect();

    let mut state = params.seed ^ 0x5eed_1e5b_u64;
    let coeffs: Vec<(u64, u64)> = (0..params.num_hashes)
        .map(|_| (splitmix64(&mut state) | 1, splitmix64(&mut state)))
        .collect();
    let signatures: Vec<Vec<u64>> = shingle_sets
        .iter()
        .map(|s| minhash_signature(s, &coeffs))
        .collect();

    let mut uf = UnionFind::new(n_items);
    let mut candidates: HashSet<(usize, usize)> = HashSet::new();
    for band in 0..params.bands {
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (i, sig) in signatures.iter().enumerate() {
            let slice = &sig[band * params.rows..(band + 1) * params.rows];
            let mut h = 0xcbf29ce484222325u64 ^ band as u64;
            for &v in slice {
                h ^= v;
                h = h.wrapping_mul(0x100000001b3);
            }
            buckets.entry(h).or_default().push(i);
        }
        for group in buckets.values() {
            for i in 0..group.len() {
                for j in (i + 1)..group.len() {
                    let pair = (group[i].min(group[j]), group[i].max(group[j]));
                    candidates.insert(pair);
                }
            }
        }
    }
    for (i, j) in candidates {
        if jaccard_of_sets(&shingle_sets[i], &shingle_sets[j]) >= params.threshold {
            uf.union(i, j);
        }
    }

    let mut clusters: HashMap<usize, Vec<String>> = HashMap::new();
    for i in 0..n_items {
        let root = uf.find(i);
        clusters
            .entry(root)
            .or_default()
            .push(dataset.items[i].id.clone());
    }
    let mut out: Vec<Vec<String>> = clusters.into_values().collect();
    for c in &mut out {
        c.sort();
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, EvalItem};

    fn dataset(prompts: &[&str]) -> Dataset {
        let mut d = Dataset::new("t");
        for (i, p) in prompts.iter().enumerate() {
            d.items.push(EvalItem::new(format!("i{i}"), p.to_string()));
        }
        d
    }

    #[test]
    fn identical_prompts_form_one_cluster() {
        let p = "the quick brown fox jumps over the lazy dog every single day";
        let d = dataset(&[p, p, p]);
        let clusters = lsh_clusters(&d, &LshParams::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 3);
    }

    #[test]
    fn disjoint_prompts_stay_singletons() {
        let d = dataset(&[
            "alpha bravo charlie delta echo foxtrot golf",
            "hotel india juliet kilo lima mike november",
            "oscar papa quebec romeo sierra tango uniform",
        ]);
        let clusters = lsh_clusters(&d, &LshParams::default()).unwrap();
        assert_eq!(clusters.len(), 3);
        assert!(clusters.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn rejects_inconsistent_params() {
        let d = dataset(&["a b c"]);
        let params = LshParams {
            bands: 5,
            rows: 4,
            num_hashes: 128,
            ..Default::default()
        };
        assert!(lsh_clusters(&d, &params).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let d = dataset(&[
            "one two three four five six seven eight nine",
            "one two three four five six seven eight ten",
            "totally different words appear in this prompt text",
        ]);
        let params = LshParams {
            threshold: 0.3,
            ..Default::default()
        };
        let c1 = lsh_clusters(&d, &params).unwrap();
        let c2 = lsh_clusters(&d, &params).unwrap();
        assert_eq!(c1, c2);
    }
}
