//! Model-backed metrics behind pluggable scorer interfaces: embedding
//! similarity, NLI entailment, perplexity, autorater scoring, and retrieval
//! ranking metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::EvalItem;
use crate::error::{EvalError, Result};
use crate::harness::providers::{Autorater, Embedder, NliScorer};

// ---------------------------------------------------------------------------
// embedding similarity

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EvalError::InvalidInput(format!(
            "embedding dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::InvalidInput("non-finite embedding entry".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::InvalidInput(
            "cosine undefined for zero vector".into(),
        ));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn embedding_similarity(a: &str, b: &str, embedder: &dyn Embedder) -> Result<f64> {
    let va = embedder.embed(a)?;
    let vb = embedder.embed(b)?;
    cosine(&va, &vb)
}

// ---------------------------------------------------------------------------
// NLI

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
    pub label: NliLabel,
}

/// Score a premise/hypothesis pair. Provider scores off the simplex by at
/// most 1e-3 are renormalized; anything worse is an error. Ties resolve
/// entailment > neutral > contradiction.
pub fn entailment(premise: &str, hypothesis: &str, scorer: &dyn NliScorer) -> Result<NliVerdict> {
    let s = scorer.score(premise, hypothesis)?;
    let vals = [s.entailment, s.neutral, s.contradiction];
    if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EvalError::Provider(format!(
            "invalid NLI scores from provider: {vals:?}"
        )));
    }
    let sum: f64 = vals.iter().sum();
    if (sum - 1.0).abs() > 1e-3 {
        return Err(EvalError::Provider(format!(
            "NLI scores sum to {sum}, outside tolerance"
        )));
    }
    let [e, n, c] = vals.map(|v| v / sum);
    let label = if e >= n && e >= c {
        NliLabel::Entailment
    } else if n >= c {
        NliLabel::Neutral
    } else {
        NliLabel::Contradiction
    };
    Ok(NliVerdict {
        entailment: e,
        neutral: n,
        contradiction: c,
        label,
    })
}

// ---------------------------------------------------------------------------
// perplexity

/// exp(-(1/N) * sum(logp)); natural-log probabilities, all <= 0.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(EvalError::InvalidInput("perplexity of empty sequence".into()));
    }
    if token_logprobs.iter().any(|&lp| lp > 0.0 || !lp.is_finite()) {
        return Err(EvalError::InvalidInput(
            "log-probabilities must be finite and <= 0".into(),
        ));
    }
    let mean: f64 = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

// ---------------------------------------------------------------------------
// autoraters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    Binary,
    Likert5,
    Continuous01,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RubricSpec {
    pub scale: RatingScale,
    pub criteria: String,
    /// Template with {prompt}, {response}, {response_a}, {response_b},
    /// {grounding}, {criteria} placeholders.
    pub template: String,
}

impl RubricSpec {
    pub fn pointwise(scale: RatingScale, criteria: impl Into<String>) -> Self {
        RubricSpec {
            scale,
            criteria: criteria.into(),
            template: "Rate the response against the criteria.\nCriteria: {criteria}\nPrompt: {prompt}\nGrounding: {grounding}\nResponse: {response}\nAnswer:".into(),
        }
    }

    pub fn side_by_side(criteria: impl Into<String>) -> Self {
        RubricSpec {
            scale: RatingScale::Binary,
            criteria: criteria.into(),
            template: "Which response better satisfies the criteria? Answer A or B.\nCriteria: {criteria}\nPrompt: {prompt}\nGrounding: {grounding}\nResponse A: {response_a}\nResponse B: {response_b}\nAnswer:".into(),
        }
    }

    fn render(&self, vars: &HashMap<&str, &str>) -> String {
        let mut out = self.template.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out.replace("{criteria}", &self.criteria)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoraterVerdict {
    pub scale: RatingScale,
    pub value: f64,
    pub rationale: Option<String>,
    pub raw: String,
}

fn grounding_text(item: &EvalItem) -> String {
    item.grounding
        .iter()
        .map(|g| g.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse the first conforming token/number per the declared scale.
fn parse_verdict(raw: &str, scale: RatingScale) -> Result<f64> {
    match scale {
        RatingScale::Binary => {
            for tok in raw.split(|c: char| !c.is_alphanumeric()) {
                match tok.to_lowercase().as_str() {
                    "yes" => return Ok(1.0),
                    "no" => return Ok(0.0),
                    _ => {}
                }
            }
            Err(EvalError::RaterParse(raw.to_string()))
        }
        RatingScale::Likert5 => {
            for tok in raw.split(|c: char| !c.is_ascii_digit()) {
                if let Ok(v) = tok.parse::<u32>() {
                    if (1..=5).contains(&v) {
                        return Ok(v as f64);
                    }
                }
            }
            Err(EvalError::RaterParse(raw.to_string()))
        }
        RatingScale::Continuous01 => {
            let re = regex::Regex::new(r"\d+(?:\.\d+)?").unwrap();
            for m in re.find_iter(raw) {
                if let Ok(v) = m.as_str().parse::<f64>() {
                    if (0.0..=1.0).contains(&v) {
                        return Ok(v);
                    }
                }
            }
            Err(EvalError::RaterParse(raw.to_string()))
        }
    }
}

pub fn autorate_pointwise(
    item: &EvalItem,
    response: &str,
    rubric: &RubricSpec,
    rater: &dyn Autorater,
) -> Result<AutoraterVerdict> {
    let grounding = grounding_text(item);
    let vars = HashMap::from([
        ("prompt", item.prompt.as_str()),
        ("response", response),
        ("grounding", grounding.as_str()),
    ]);
    let raw = rater.rate(&rubric.render(&vars))?;
    let value = parse_verdict(&raw, rubric.scale)?;
    Ok(AutoraterVerdict {
        scale: rubric.scale,
        value,
        rationale: None,
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxsOutcome {
    pub preference: Preference,
    /// Raw verdicts per queried order: (first_listed_was_a, raw text).
    pub raw_verdicts: Vec<(bool, String)>,
}

fn parse_ab(raw: &str) -> Result<char> {
    for tok in raw.split(|c: char| !c.is_alphanumeric()) {
        match tok.to_lowercase().as_str() {
            "a" => return Ok('a'),
            "b" => return Ok('b'),
            _ => {}
        }
    }
    Err(EvalError::RaterParse(raw.to_string()))
}

/// Side-by-side preference with optional position-bias mitigation: with
/// `order_swap` the rater is queried twice with positions exchanged and an
/// inconsistent winner maps to a tie.
pub fn autorate_sxs(
    item: &EvalItem,
    response_a: &str,
    response_b: &str,
    rubric: &RubricSpec,
    rater: &dyn Autorater,
    order_swap: bool,
) -> Result<SxsOutcome> {
    let grounding = grounding_text(item);
    let ask = |first: &str, second: &str| -> Result<(char, String)> {
        let vars = HashMap::from([
            ("prompt", item.prompt.as_str()),
            ("response_a", first),
            ("response_b", second),
            ("grounding", grounding.as_str()),
        ]);
        let raw = rater.rate(&rubric.render(&vars))?;
        let c = parse_ab(&raw)?;
        Ok((c, raw))
    };
    let (v1, raw1) = ask(response_a, response_b)?;
    // winner in terms of the actual responses
    let w1 = if v1 == 'a' { Preference::A } else { Preference::B };
    if !order_swap {
        return Ok(SxsOutcome {
            preference: w1,
            raw_verdicts: vec![(true, raw1)],
        });
    }
    let (v2, raw2) = ask(response_b, response_a)?;
    let w2 = if v2 == 'a' { Preference::B } else { Preference::A };
    let preference = if w1 == w2 { w1 } else { Preference::Tie };
    Ok(SxsOutcome {
        preference,
        raw_verdicts: vec![(true, raw1), (false, raw2)],
    })
}

// ---------------------------------------------------------------------------
// retrieval metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRetrieval {
    pub ranked_doc_ids: Vec<String>,
    /// doc_id -> graded relevance (binary as 0/1). Keys may include
    /// unretrieved documents; those count against recall.
    pub relevance: HashMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtDepth {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub per_depth: Vec<AtDepth>,
    pub mrr: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f_beta: f64,
    pub mean_ndcg: f64,
}

/// P/R/F_beta and NDCG at each depth, plus MRR over the full ranking.
pub fn retrieval_metrics(run: &RankedRetrieval, depths: &[usize], beta: f64) -> Result<RetrievalReport> {
    if depths.is_empty() || depths.iter().any(|&k| k == 0) {
        return Err(EvalError::InvalidInput("depths must be positive".into()));
    }
    if run.relevance.is_empty() {
        return Err(EvalError::InvalidInput("relevance judgments are empty".into()));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for id in &run.ranked_doc_ids {
            if !seen.insert(id) {
                return Err(EvalError::InvalidInput(format!(
                    "duplicate ranked doc id {id:?}"
                )));
            }
        }
    }
    let rel_of = |id: &str| *run.relevance.get(id).unwrap_or(&0);
    let total_relevant = run.relevance.values().filter(|&&r| r > 0).count();

    let mrr = run
        .ranked_doc_ids
        .iter()
        .position(|id| rel_of(id) > 0)
        .map(|i| 1.0 / (i as f64 + 1.0))
        .unwrap_or(0.0);

    // ideal gains: all judged relevances sorted descending
    let mut ideal: Vec<u32> = run.relevance.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));

    let mut per_depth = Vec::with_capacity(depths.len());
    for &k in depths {
        let top: Vec<u32> = run
            .ranked_doc_ids
            .iter()
            .take(k)
            .map(|id| rel_of(id))
            .collect();
        let rel_in_top = top.iter().filter(|&&r| r > 0).count();
        let precision = rel_in_top as f64 / k as f64;
        let recall = if total_relevant == 0 {
            0.0
        } else {
            rel_in_top as f64 / total_relevant as f64
        };
        let b2 = beta * beta;
        let f = if b2 * precision + recall == 0.0 {
            0.0
        } else {
            (1.0 + b2) * precision * recall / (b2 * precision + recall)
        };
        let dcg: f64 = top
            .iter()
            .enumerate()
            .map(|(i, &r)| r as f64 / ((i + 2) as f64).log2())
            .sum();
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &r)| r as f64 / ((i + 2) as f64).log2())
            .sum();
        let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
        per_depth.push(AtDepth {
            k,
            precision,
            recall,
            f_beta: f,
            ndcg,
        });
    }
    let n = per_depth.len() as f64;
    Ok(RetrievalReport {
        mrr,
        mean_precision: per_depth.iter().map(|d| d.precision).sum::<f64>() / n,
        mean_recall: per_depth.iter().map(|d| d.recall).sum::<f64>() / n,
        mean_f_beta: per_depth.iter().map(|d| d.f_beta).sum::<f64>() / n,
        mean_ndcg: per_depth.iter().map(|d| d.ndcg).sum::<f64>() / n,
        per_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::providers::NliScores;

    struct TableEmbedder(HashMap<String, Vec<f64>>);
    impl Embedder for TableEmbedder {
        fn embed(&self, text: &str) -> Result<Vec<f64>> {
            self.0
                .get(text)
                .cloned()
                .ok_or_else(|| EvalError::Provider(format!("no embedding for {text:?}")))
        }
    }

    #[test]
    fn embedding_similarity_table_cases() {
        let table = HashMap::from([
            ("x".to_string(), vec![1.0, 0.0]),
            ("y".to_string(), vec![0.0, 1.0]),
            ("z".to_string(), vec![0.5f64.sqrt(), 0.5f64.sqrt()]),
        ]);
        let e = TableEmbedder(table);
        assert!((embedding_similarity("x", "x", &e).unwrap() - 1.0).abs() < 1e-6);
        assert!(embedding_similarity("x", "y", &e).unwrap().abs() < 1e-12);
        assert!((embedding_similarity("x", "z", &e).unwrap() - 0.7071067811865476).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_is_error() {
        let e = TableEmbedder(HashMap::from([
            ("a".to_string(), vec![0.0, 0.0]),
            ("b".to_string(), vec![1.0, 0.0]),
        ]));
        assert!(embedding_similarity("a", "b", &e).is_err());
    }

    struct FixedNli(NliScores);
    impl NliScorer for FixedNli {
        fn score(&self, _p: &str, _h: &str) -> Result<NliScores> {
            Ok(self.0)
        }
    }

    #[test]
    fn nli_labels_and_normalization() {
        let v = entailment(
            "p",
            "h",
            &FixedNli(NliScores {
                entailment: 0.8,
                neutral: 0.15,
                contradiction: 0.05,
            }),
        )
        .unwrap();
        assert_eq!(v.label, NliLabel::Entailment);

        // slightly off-simplex gets normalized
        let v = entailment(
            "p",
            "h",
            &FixedNli(NliScores {
                entailment: 0.1,
                neutral: 0.2,
                contradiction: 0.7005,
            }),
        )
        .unwrap();
        assert_eq!(v.label, NliLabel::Contradiction);
        assert!((v.entailment + v.neutral + v.contradiction - 1.0).abs() < 1e-12);

        // badly off-simplex is an error
        assert!(entailment(
            "p",
            "h",
            &FixedNli(NliScores {
                entailment: 0.5,
                neutral: 0.5,
                contradiction: 0.5,
            }),
        )
        .is_err());
    }

    #[test]
    fn nli_tie_order() {
        let v = entailment(
            "p",
            "h",
            &FixedNli(NliScores {
                entailment: 0.5,
                neutral: 0.5,
                contradiction: 0.0,
            }),
        )
        .unwrap();
        assert_eq!(v.label, NliLabel::Entailment);
    }

    #[test]
    fn perplexity_closed_forms() {
        assert!((perplexity(&[0.0]).unwrap() - 1.0).abs() < 1e-12);
        let lp = (0.25f64).ln();
        assert!((perplexity(&[lp, lp, lp, lp]).unwrap() - 4.0).abs() < 1e-9);
        assert!((perplexity(&[0.5f64.ln(), 0.125f64.ln()]).unwrap() - 4.0).abs() < 1e-9);
        assert!(perplexity(&[]).is_err());
        assert!(perplexity(&[0.1]).is_err());
    }

    #[test]
    fn perplexity_length_invariance() {
        let lp = (0.3f64).ln();
        let p1 = perplexity(&[lp]).unwrap();
        let p9 = perplexity(&vec![lp; 9]).unwrap();
        assert!((p1 - p9).abs() < 1e-12);
    }

    struct Script(Vec<String>, std::sync::Mutex<usize>);
    impl Autorater for Script {
        fn rate(&self, _p: &str) -> Result<String> {
            let mut i = self.1.lock().unwrap();
            let out = self.0[*i % self.0.len()].clone();
            *i += 1;
            Ok(out)
        }
    }

    fn script(outs: &[&str]) -> Script {
        Script(
            outs.iter().map(|s| s.to_string()).collect(),
            std::sync::Mutex::new(0),
        )
    }

    #[test]
    fn pointwise_parsing() {
        let item = EvalItem::new("q1", "prompt");
        let rubric = RubricSpec::pointwise(RatingScale::Binary, "accuracy");
        let v = autorate_pointwise(&item, "resp", &rubric, &script(&["YES"])).unwrap();
        assert_eq!(v.value, 1.0);

        let rubric = RubricSpec::pointwise(RatingScale::Likert5, "accuracy");
        let v = autorate_pointwise(&item, "resp", &rubric, &script(&["Score: 4/5"])).unwrap();
        assert_eq!(v.value, 4.0);

        let rubric = RubricSpec::pointwise(RatingScale::Binary, "accuracy");
        assert!(autorate_pointwise(&item, "resp", &rubric, &script(&["maybe"])).is_err());
    }

    struct FirstListed;
    impl Autorater for FirstListed {
        fn rate(&self, _p: &str) -> Result<String> {
            Ok("A".into())
        }
    }

    struct PrefersText(String);
    impl Autorater for PrefersText {
        fn rate(&self, p: &str) -> Result<String> {
            // prefer whichever slot holds the target text
            let a_start = p.find("Response A:").unwrap();
            let b_start = p.find("Response B:").unwrap();
            let a_txt = &p[a_start..b_start];
            Ok(if a_txt.contains(&self.0) { "A" } else { "B" }.into())
        }
    }

    #[test]
    fn sxs_position_bias_neutralized() {
        let item = EvalItem::new("q1", "prompt");
        let rubric = RubricSpec::side_by_side("accuracy and completeness");
        let out = autorate_sxs(&item, "first", "second", &rubric, &FirstListed, true).unwrap();
        assert_eq!(out.preference, Preference::Tie);
    }

    #[test]
    fn sxs_content_preference_survives_swap() {
        let item = EvalItem::new("q1", "prompt");
        let rubric = RubricSpec::side_by_side("accuracy");
        let rater = PrefersText("B-text".into());
        let out = autorate_sxs(&item, "A-text", "B-text", &rubric, &rater, true).unwrap();
        assert_eq!(out.preference, Preference::B);
        // exchanging the arguments relabels the winner
        let out = autorate_sxs(&item, "B-text", "A-text", &rubric, &rater, true).unwrap();
        assert_eq!(out.preference, Preference::A);
    }

    fn run(ids: &[&str], rel: &[(&str, u32)]) -> RankedRetrieval {
        RankedRetrieval {
            ranked_doc_ids: ids.iter().map(|s| s.to_string()).collect(),
            relevance: rel.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn retrieval_ideal_single_doc() {
        let r = retrieval_metrics(&run(&["r1"], &[("r1", 1)]), &[1], 1.0).unwrap();
        let d = &r.per_depth[0];
        assert_eq!(
            (d.precision, d.recall, d.ndcg, r.mrr),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn retrieval_ndcg_hand_computed() {
        // ranked [0,1,1], 2 relevant total, k=3
        let r = retrieval_metrics(
            &run(&["a", "b", "c"], &[("b", 1), ("c", 1)]),
            &[3],
            1.0,
        )
        .unwrap();
        let dcg = 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((r.per_depth[0].ndcg - dcg / idcg).abs() < 1e-12);
        assert!((r.per_depth[0].ndcg - 0.6934).abs() < 1e-4);
    }

    #[test]
    fn mrr_example() {
        let rr: f64 = [1.0, 2.0, 4.0].iter().map(|r| 1.0 / r).sum::<f64>() / 3.0;
        assert!((rr - 0.5833333333333334).abs() < 1e-12);
        let r = retrieval_metrics(&run(&["x", "y", "r"], &[("r", 1)]), &[3], 1.0).unwrap();
        assert!((r.mrr - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn retrieval_rejects_bad_input() {
        assert!(retrieval_metrics(&run(&["a", "a"], &[("a", 1)]), &[1], 1.0).is_err());
        assert!(retrieval_metrics(&run(&["a"], &[("a", 1)]), &[0], 1.0).is_err());
        assert!(retrieval_metrics(&run(&["a"], &[]), &[1], 1.0).is_err());
    }

    #[test]
    fn appending_irrelevant_after_k_is_noop() {
        let base = retrieval_metrics(&run(&["a", "b"], &[("a", 1)]), &[2], 1.0).unwrap();
        let more = retrieval_metrics(&run(&["a", "b", "z", "w"], &[("a", 1)]), &[2], 1.0).unwrap();
        assert_eq!(base.per_depth, more.per_depth);
    }
}
