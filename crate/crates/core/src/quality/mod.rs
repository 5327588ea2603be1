//! Dataset quality quantification: diversity measurement, contamination
//! scanning against a training corpus, memorization probes, and tag
//! coverage.

pub mod diversity;
pub mod index;
pub mod minhash;
pub mod scan;

use unicode_normalization::UnicodeNormalization;

/// Normalization used for all contamination comparisons: lowercase, NFC,
/// whitespace runs collapsed to single spaces, trimmed.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect::<String>().to_lowercase();
    let mut out = String::with_capacity(nfc.len());
    let mut in_ws = true; // leading whitespace dropped
    for c in nfc.chars() {
        if c.is_whitespace() {
            if !in_ws {
                out.push(' ');
                in_ws = true;
            }
        } else {
            out.push(c);
            in_ws = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Whitespace tokens of the normalized text.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// FNV-1a 64-bit; stable across platforms and runs.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Token n-gram set as stable 64-bit hashes.
pub fn ngram_hashes(tokens: &[String], n: usize) -> std::collections::HashSet<u64> {
    let mut set = std::collections::HashSet::new();
    if n == 0 || tokens.len() < n {
        return set;
    }
    for w in tokens.windows(n) {
        let joined = w.join(" ");
        set.insert(fnv1a64(joined.as_bytes()));
    }
    set
}

/// Jaccard similarity of token n-gram sets. Both sides empty => 1,
/// exactly one side empty => 0.
pub fn ngram_jaccard(a: &str, b: &str, n: usize) -> f64 {
    let ta = crate::overlap::tokenize(a, crate::overlap::TokenizeMode::Word).tokens;
    let tb = crate::overlap::tokenize(b, crate::overlap::TokenizeMode::Word).tokens;
    jaccard_of_sets(&ngram_hashes(&ta, n), &ngram_hashes(&tb, n))
}

pub(crate) fn jaccard_of_sets(
    a: &std::collections::HashSet<u64>,
    b: &std::collections::HashSet<u64>,
) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses_and_trims() {
        assert_eq!(normalize_text("  The   CAT\n\tsat "), "the cat sat");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn jaccard_trivial_cases() {
        assert_eq!(ngram_jaccard("same text here", "same text here", 1), 1.0);
        assert_eq!(ngram_jaccard("aa bb", "cc dd", 1), 0.0);
        assert_eq!(ngram_jaccard("", "", 1), 1.0);
        assert_eq!(ngram_jaccard("", "word", 1), 0.0);
    }

    #[test]
    fn jaccard_hand_enumerated() {
        // {the,cat,sat} vs {the,cat,ran}: 2 shared of 4 total
        let j = ngram_jaccard("the cat sat", "the cat ran", 1);
        assert!((j - 0.5).abs() < 1e-12);
    }

    #[test]
    fn jaccard_symmetric() {
        let j1 = ngram_jaccard("a b c d", "b c x", 2);
        let j2 = ngram_jaccard("b c x", "a b c d", 2);
        assert_eq!(j1, j2);
        assert!((0.0..=1.0).contains(&j1));
    }
}
