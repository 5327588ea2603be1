//! Training-corpus indexes for contamination scanning: exact content
//! hashes, a Bloom filter over sliding token windows, and a suffix array
//! for substring queries. Indexes persist to a single binary file with an
//! `EFIDX001` magic header.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EvalError, Result};
use crate::quality::{fnv1a64, normalize_text, normalized_tokens};

pub const INDEX_MAGIC: &[u8; 8] = b"EFIDX001";
pub const DEFAULT_WINDOW_TOKENS: usize = 13;
pub const DEFAULT_FP_RATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    ExactHash,
    WindowedBloom,
    Suffix,
}

#[derive(Debug, Clone)]
pub struct CorpusDoc {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexParams {
    pub window_tokens: usize,
    pub fp_rate: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            window_tokens: DEFAULT_WINDOW_TOKENS,
            fp_rate: DEFAULT_FP_RATE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BloomFilter {
    pub m_bits: u64,
    pub k_hashes: u32,
    pub n_inserted: u64,
    bits: Vec<u64>,
}

impl BloomFilter {
    /// Sized by the optimal m = -n ln p / (ln 2)^2, k = (m/n) ln 2.
    pub fn with_capacity(n: usize, fp_rate: f64) -> Self {
        let n = n.max(1) as f64;
        let ln2 = std::f64::consts::LN_2;
        let m = (-(n * fp_rate.ln()) / (ln2 * ln2)).ceil().max(64.0) as u64;
        let k = ((m as f64 / n) * ln2).round().max(1.0) as u32;
        BloomFilter {
            m_bits: m,
            k_hashes: k,
            n_inserted: 0,
            bits: vec![0u64; m.div_ceil(64) as usize],
        }
    }

    fn positions(&self, item: u64) -> impl Iterator<Item = u64> + '_ {
        // double hashing from two independent mixes of the item hash
        let h1 = item;
        let h2 = item
            .rotate_left(31)
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(0x6a09e667f3bcc909)
            | 1;
        (0..self.k_hashes as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % self.m_bits)
    }

    pub fn insert(&mut self, item: u64) {
        let positions: Vec<u64> = self.positions(item).collect();
        for pos in positions {
            self.bits[(pos / 64) as usize] |= 1u64 << (pos % 64);
        }
        self.n_inserted += 1;
    }

    pub fn contains(&self, item: u64) -> bool {
        self.positions(item)
            .all(|pos| self.bits[(pos / 64) as usize] & (1u64 << (pos % 64)) != 0)
    }
}

#[derive(Debug, Clone)]
pub enum IndexPayload {
    Exact(HashSet<[u8; 32]>),
    Bloom(BloomFilter),
    Suffix {
        /// Normalized documents joined by '\n' (never present inside a
        /// normalized document).
        text: String,
        /// Sorted suffix start offsets.
        sa: Vec<u32>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainCorpusIndex {
    pub mode: IndexMode,
    pub doc_count: u64,
    pub window_tokens: usize,
    pub fp_rate: Option<f64>,
    pub payload: IndexPayload,
}

pub(crate) fn doc_hash(normalized: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(normalized.as_bytes());
    h.finalize().into()
}

pub fn window_hash(tokens: &[String]) -> u64 {
    fnv1a64(tokens.join(" ").as_bytes())
}

/// Every `window` consecutive-token window hash of a text.
pub fn window_hashes(tokens: &[String], window: usize) -> Vec<u64> {
    if tokens.len() < window {
        return Vec::new();
    }
    tokens.windows(window).map(window_hash).collect()
}

/// Build an index over the corpus in the requested mode.
pub fn build_corpus_index(
    corpus: &[CorpusDoc],
    mode: IndexMode,
    params: &IndexParams,
) -> Result<TrainCorpusIndex> {
    if corpus.is_empty() {
        return Err(EvalError::InvalidInput("empty corpus".into()));
    }
    if matches!(mode, IndexMode::WindowedBloom) && params.window_tokens < 3 {
        return Err(EvalError::InvalidConfig("window_tokens must be >= 3".into()));
    }
    if matches!(mode, IndexMode::WindowedBloom) && !(0.0 < params.fp_rate && params.fp_rate < 1.0) {
        return Err(EvalError::InvalidConfig("fp_rate must be in (0,1)".into()));
    }
    let doc_count = corpus.len() as u64;
    let payload = match mode {
        IndexMode::ExactHash => {
            let set = corpus
                .iter()
                .map(|d| doc_hash(&normalize_text(&d.text)))
                .collect();
            IndexPayload::Exact(set)
        }
        IndexMode::WindowedBloom => {
            let mut hashes = Vec::new();
            for d in corpus {
                let toks = normalized_tokens(&d.text);
                hashes.extend(window_hashes(&toks, params.window_tokens));
            }
            let mut bloom = BloomFilter::with_capacity(hashes.len(), params.fp_rate);
            for h in hashes {
                bloom.insert(h);
            }
            IndexPayload::Bloom(bloom)
        }
        IndexMode::Suffix => {
            let mut text = String::new();
            for (i, d) in corpus.iter().enumerate() {
                if i > 0 {
                    text.push('\n');
                }
                text.push_str(&normalize_text(&d.text));
            }
            let sa = build_suffix_array(text.as_bytes());
            IndexPayload::Suffix { text, sa }
        }
    };
    Ok(TrainCorpusIndex {
        mode,
        doc_count,
        window_tokens: params.window_tokens,
        fp_rate: matches!(mode, IndexMode::WindowedBloom).then_some(params.fp_rate),
        payload,
    })
}

fn build_suffix_array(text: &[u8]) -> Vec<u32> {
    assert!(text.len() < u32::MAX as usize, "corpus too large for index");
    let mut sa: Vec<u32> = (0..text.len() as u32).collect();
    sa.sort_unstable_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
    sa
}

impl TrainCorpusIndex {
    /// Exact-hash membership of a normalized document.
    pub fn contains_exact(&self, normalized: &str) -> Result<bool> {
        match &self.payload {
            IndexPayload::Exact(set) => Ok(set.contains(&doc_hash(normalized))),
            _ => Err(EvalError::InvalidInput(
                "exact query requires exact_hash mode".into(),
            )),
        }
    }

    /// Bloom membership of a window hash (advisory: false positives possible).
    pub fn contains_window(&self, hash: u64) -> Result<bool> {
        match &self.payload {
            IndexPayload::Bloom(b) => Ok(b.contains(hash)),
            _ => Err(EvalError::InvalidInput(
                "window query requires windowed_bloom mode".into(),
            )),
        }
    }

    /// Substring membership via suffix-array binary search.
    pub fn contains_substring(&self, needle: &str) -> Result<bool> {
        match &self.payload {
            IndexPayload::Suffix { text, sa } => Ok(suffix_contains(text.as_bytes(), sa, needle.as_bytes())),
            _ => Err(EvalError::InvalidInput(
                "substring query requires suffix mode".into(),
            )),
        }
    }
}

fn suffix_contains(text: &[u8], sa: &[u32], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return true;
    }
    let mut lo = 0usize;
    let mut hi = sa.len();
    while lo < hi {
        let mid = (lo + hi) / 2;
        let suffix = &text[sa[mid] as usize..];
        let prefix = &suffix[..needle.len().min(suffix.len())];
        if prefix < needle {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo >= sa.len() {
        return false;
    }
    let suffix = &text[sa[lo] as usize..];
    suffix.len() >= needle.len() && &suffix[..needle.len()] == needle
}

// ---------------------------------------------------------------------------
// corpus input

/// Read a training corpus from a directory of UTF-8 text files or a
/// newline-delimited JSON file of {"doc_id", "text"} records.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusDoc>> {
    let path = path.as_ref();
    let mut docs = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            let text = std::fs::read_to_string(&p)?;
            docs.push(CorpusDoc {
                doc_id: p
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                text,
            });
        }
    } else {
        #[derive(Deserialize)]
        struct Rec {
            doc_id: String,
            text: String,
        }
        let content = std::fs::read_to_string(path)?;
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Rec = serde_json::from_str(line).map_err(|e| EvalError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            docs.push(CorpusDoc {
                doc_id: rec.doc_id,
                text: rec.text,
            });
        }
    }
    Ok(docs)
}

// ---------------------------------------------------------------------------
// binary persistence

fn write_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_u64(input: &mut &[u8]) -> Result<u64> {
    if input.len() < 8 {
        return Err(EvalError::IndexFormat("truncated index file".into()));
    }
    let (head, rest) = input.split_at(8);
    *input = rest;
    Ok(u64::from_le_bytes(head.try_into().unwrap()))
}

fn read_bytes<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(EvalError::IndexFormat("truncated index file".into()));
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

pub fn save_index(index: &TrainCorpusIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.push(match index.mode {
        IndexMode::ExactHash => 0,
        IndexMode::WindowedBloom => 1,
        IndexMode::Suffix => 2,
    });
    write_u64(&mut out, index.doc_count);
    write_u64(&mut out, index.window_tokens as u64);
    match &index.payload {
        IndexPayload::Exact(set) => {
            let mut hashes: Vec<&[u8; 32]> = set.iter().collect();
            hashes.sort();
            write_u64(&mut out, hashes.len() as u64);
            for h in hashes {
                out.extend_from_slice(h.as_slice());
            }
        }
        IndexPayload::Bloom(b) => {
            out.extend_from_slice(&index.fp_rate.unwrap_or(DEFAULT_FP_RATE).to_le_bytes());
            write_u64(&mut out, b.m_bits);
            write_u64(&mut out, b.k_hashes as u64);
            write_u64(&mut out, b.n_inserted);
            write_u64(&mut out, b.bits.len() as u64);
            for w in &b.bits {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        IndexPayload::Suffix { text, sa } => {
            write_u64(&mut out, text.len() as u64);
            out.extend_from_slice(text.as_bytes());
            write_u64(&mut out, sa.len() as u64);
            for &s in sa {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<TrainCorpusIndex> {
    let mut buf = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut buf)?;
    let mut input = buf.as_slice();
    let magic = read_bytes(&mut input, 8)?;
    if magic != INDEX_MAGIC {
        return Err(EvalError::IndexFormat(format!(
            "unknown magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mode_byte = read_bytes(&mut input, 1)?[0];
    let doc_count = read_u64(&mut input)?;
    let window_tokens = read_u64(&mut input)? as usize;
    let (mode, fp_rate, payload) = match mode_byte {
        0 => {
            let count = read_u64(&mut input)? as usize;
            let mut set = HashSet::with_capacity(count);
            for _ in 0..count {
                let h: [u8; 32] = read_bytes(&mut input, 32)?.try_into().unwrap();
                set.insert(h);
            }
            (IndexMode::ExactHash, None, IndexPayload::Exact(set))
        }
        1 => {
            let fp = f64::from_le_bytes(read_bytes(&mut input, 8)?.try_into().unwrap());
            let m_bits = read_u64(&mut input)?;
            let k_hashes = read_u64(&mut input)? as u32;
            let n_inserted = read_u64(&mut input)?;
            let words = read_u64(&mut input)? as usize;
            let mut bits = Vec::with_capacity(words);
            for _ in 0..words {
                bits.push(u64::from_le_bytes(
                    read_bytes(&mut input, 8)?.try_into().unwrap(),
                ));
            }
            (
                IndexMode::WindowedBloom,
                Some(fp),
                IndexPayload::Bloom(BloomFilter {
                    m_bits,
                    k_hashes,
                    n_inserted,
                    bits,
                }),
            )
        }
        2 => {
            let text_len = read_u64(&mut input)? as usize;
            let text = String::from_utf8(read_bytes(&mut input, text_len)?.to_vec())
                .map_err(|e| EvalError::IndexFormat(e.to_string()))?;
            let sa_len = read_u64(&mut input)? as usize;
            let mut sa = Vec::with_capacity(sa_len);
            for chunk in read_bytes(&mut input, sa_len * 4)?.chunks_exact(4) {
                sa.push(u32::from_le_bytes(chunk.try_into().unwrap()));
            }
            (IndexMode::Suffix, None, IndexPayload::Suffix { text, sa })
        }
        other => {
            return Err(EvalError::IndexFormat(format!(
                "unknown mode byte {other}"
            )))
        }
    };
    Ok(TrainCorpusIndex {
        mode,
        doc_count,
        window_tokens,
        fp_rate,
        payload,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn doc(id: &str, text: &str) -> CorpusDoc {
        CorpusDoc {
            doc_id: id.into(),
            text: text.into(),
        }
    }

    #[test]
    fn exact_mode_round_trip_query() {
        let idx = build_corpus_index(
            &[doc("d1", "The Quick  Brown Fox")],
            IndexMode::ExactHash,
            &IndexParams::default(),
        )
        .unwrap();
        assert_eq!(idx.doc_count, 1);
        assert!(idx.contains_exact(&normalize_text("the quick brown fox")).unwrap());
        assert!(!idx.contains_exact(&normalize_text("something else")).unwrap());
    }

    #[test]
    fn bloom_has_no_false_negatives() {
        let docs: Vec<CorpusDoc> = (0..100)
            .map(|i| {
                doc(
                    &format!("d{i}"),
                    &(0..40)
                        .map(|j| format!("tok{}", i * 1000 + j))
                        .collect::<Vec<_>>()
                        .join(" "),
                )
            })
            .collect();
        let params = IndexParams {
            window_tokens: 5,
            fp_rate: 1e-6,
        };
        let idx = build_corpus_index(&docs, IndexMode::WindowedBloom, &params).unwrap();
        for d in &docs {
            let toks = normalized_tokens(&d.text);
            for h in window_hashes(&toks, 5) {
                assert!(idx.contains_window(h).unwrap());
            }
        }
    }

    #[test]
    fn suffix_substring_queries() {
        let idx = build_corpus_index(
            &[doc("d1", "abcdef")],
            IndexMode::Suffix,
            &IndexParams::default(),
        )
        .unwrap();
        assert!(idx.contains_substring("cde").unwrap());
        assert!(idx.contains_substring("abcdef").unwrap());
        assert!(!idx.contains_substring("xyz").unwrap());
    }

    #[test]
    fn persistence_round_trip_all_modes() {
        let dir = tempdir().unwrap();
        let docs = [doc("d1", "one two three four five six seven"), doc("d2", "eight nine ten eleven twelve thirteen")];
        for mode in [IndexMode::ExactHash, IndexMode::WindowedBloom, IndexMode::Suffix] {
            let params = IndexParams {
                window_tokens: 3,
                fp_rate: 1e-4,
            };
            let idx = build_corpus_index(&docs, mode, &params).unwrap();
            let path = dir.path().join(format!("{mode:?}.idx"));
            save_index(&idx, &path).unwrap();
            let loaded = load_index(&path).unwrap();
            assert_eq!(loaded.mode, mode);
            assert_eq!(loaded.doc_count, 2);
            match mode {
                IndexMode::ExactHash => {
                    assert!(loaded
                        .contains_exact(&normalize_text("one two three four five six seven"))
                        .unwrap());
                }
                IndexMode::WindowedBloom => {
                    let toks = normalized_tokens("one two three four five six seven");
                    for h in window_hashes(&toks, 3) {
                        assert!(loaded.contains_window(h).unwrap());
                    }
                }
                IndexMode::Suffix => {
                    assert!(loaded.contains_substring("nine ten eleven").unwrap());
                }
            }
        }
    }

    #[test]
    fn loader_rejects_unknown_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, b"NOTMAGIC\x00rest").unwrap();
        assert!(matches!(load_index(&path), Err(EvalError::IndexFormat(_))));
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(build_corpus_index(&[], IndexMode::ExactHash, &IndexParams::default()).is_err());
    }

    #[test]
    fn ndjson_corpus_reader() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("corpus.ndjson");
        std::fs::write(
            &path,
            "{\"doc_id\":\"a\",\"text\":\"hello world\"}\n{\"doc_id\":\"b\",\"text\":\"more text\"}\n",
        )
        .unwrap();
        let docs = read_corpus(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].doc_id, "b");
    }
}
