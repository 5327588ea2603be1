//! The metric registry shared by run orchestration, sensitivity analysis,
//! and run comparison: metric names, scales, data prerequisites, and
//! per-item computation.

use serde::{Deserialize, Serialize};

use crate::corpus::EvalItem;
use crate::error::{EvalError, Result};
use crate::harness::providers::{Autorater, Embedder, NliScorer};
use crate::model_metrics::{autorate_pointwise, embedding_similarity, entailment, RubricSpec};
use crate::overlap::{bleu, keyword_recall, rouge, tfidf_cosine, CorpusStats, OverlapConfig, RougeVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rouge1,
    Rouge2,
    RougeL,
    Bleu,
    KeywordRecall,
    TfidfCosine,
    EmbeddingSimilarity,
    NliEntailment,
    AutoraterPointwise,
}

/// Value scale, used to auto-select the paired test when comparing runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricScale {
    Binary,
    Likert,
    Continuous,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::Rouge1,
        MetricKind::Rouge2,
        MetricKind::RougeL,
        MetricKind::Bleu,
        MetricKind::KeywordRecall,
        MetricKind::TfidfCosine,
        MetricKind::EmbeddingSimilarity,
        MetricKind::NliEntailment,
        MetricKind::AutoraterPointwise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Rouge1 => "rouge1",
            MetricKind::Rouge2 => "rouge2",
            MetricKind::RougeL => "rougeL",
            MetricKind::Bleu => "bleu",
            MetricKind::KeywordRecall => "keyword_recall",
            MetricKind::TfidfCosine => "tfidf_cosine",
            MetricKind::EmbeddingSimilarity => "embedding_similarity",
            MetricKind::NliEntailment => "nli_entailment",
            MetricKind::AutoraterPointwise => "autorater_pointwise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| EvalError::InvalidConfig(format!("unknown metric {s:?}")))
    }

    pub fn requires_references(&self) -> bool {
        matches!(
            self,
            MetricKind::Rouge1
                | MetricKind::Rouge2
                | MetricKind::RougeL
                | MetricKind::Bleu
                | MetricKind::TfidfCosine
                | MetricKind::EmbeddingSimilarity
                | MetricKind::NliEntailment
        )
    }

    pub fn requires_expected_terms(&self) -> bool {
        matches!(self, MetricKind::KeywordRecall)
    }
}

/// Providers and shared state metrics may need. Offline metrics ignore all
/// of it.
#[derive(Default)]
pub struct MetricContext<'a> {
    pub overlap: OverlapConfig,
    pub corpus_stats: Option<&'a CorpusStats>,
    pub embedder: Option<&'a dyn Embedder>,
    pub nli: Option<&'a dyn NliScorer>,
    pub autorater: Option<&'a dyn Autorater>,
    pub rubric: Option<&'a RubricSpec>,
}

pub fn metric_scale(kind: MetricKind, ctx: &MetricContext) -> MetricScale {
    match kind {
        MetricKind::AutoraterPointwise => match ctx.rubric.map(|r| r.scale) {
            Some(crate::model_metrics::RatingScale::Binary) => MetricScale::Binary,
            Some(crate::model_metrics::RatingScale::Likert5) => MetricScale::Likert,
            _ => MetricScale::Continuous,
        },
        _ => MetricScale::Continuous,
    }
}

/// Compute one metric for one item/response pair.
pub fn compute_metric(
    kind: MetricKind,
    item: &EvalItem,
    response: &str,
    ctx: &MetricContext,
) -> Result<f64> {
    let refs: Vec<&str> = item.references.iter().map(String::as_str).collect();
    let need_refs = || -> Result<()> {
        if refs.is_empty() {
            Err(EvalError::InvalidInput(format!(
                "metric {} requires references; item {:?} has none",
                kind.name(),
                item.id
            )))
        } else {
            Ok(())
        }
    };
    match kind {
        MetricKind::Rouge1 | MetricKind::Rouge2 | MetricKind::RougeL => {
            need_refs()?;
            let mut cfg = ctx.overlap.clone();
            cfg.rouge_variant = match kind {
                MetricKind::Rouge1 => RougeVariant::N(1),
                MetricKind::Rouge2 => RougeVariant::N(2),
                _ => RougeVariant::L,
            };
            Ok(rouge(response, &refs, &cfg)?.f_beta)
        }
        MetricKind::Bleu => {
            need_refs()?;
            bleu(response, &refs, &ctx.overlap)
        }
        MetricKind::KeywordRecall => {
            let terms: Vec<&str> = item.expected_terms.iter().map(String::as_str).collect();
            keyword_recall(response, &terms)
        }
        MetricKind::TfidfCosine => {
            need_refs()?;
            let stats = ctx.corpus_stats.ok_or_else(|| {
                EvalError::InvalidConfig("tfidf_cosine requires corpus stats".into())
            })?;
            tfidf_cosine(response, refs[0], stats)
        }
        MetricKind::EmbeddingSimilarity => {
            need_refs()?;
            let embedder = ctx.embedder.ok_or_else(|| {
                EvalError::InvalidConfig("embedding_similarity requires an embedder provider".into())
            })?;
            embedding_similarity(response, refs[0], embedder)
        }
        MetricKind::NliEntailment => {
            need_refs()?;
            let nli = ctx.nli.ok_or_else(|| {
                EvalError::InvalidConfig("nli_entailment requires an NLI provider".into())
            })?;
            // golden reference as premise
            Ok(entailment(refs[0], response, nli)?.entailment)
        }
        MetricKind::AutoraterPointwise => {
            let rater = ctx.autorater.ok_or_else(|| {
                EvalError::InvalidConfig("autorater_pointwise requires an autorater provider".into())
            })?;
            let rubric = ctx
                .rubric
                .ok_or_else(|| EvalError::InvalidConfig("autorater_pointwise requires a rubric".into()))?;
            Ok(autorate_pointwise(item, response, rubric, rater)?.value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in MetricKind::ALL {
            assert_eq!(MetricKind::parse(k.name()).unwrap(), k);
        }
        assert!(MetricKind::parse("nope").is_err());
    }

    #[test]
    fn offline_metric_matches_direct_call() {
        let mut item = EvalItem::new("q", "prompt");
        item.references.push("the cat sat on the mat".into());
        let ctx = MetricContext::default();
        let via_registry =
            compute_metric(MetricKind::Rouge1, &item, "the cat sat", &ctx).unwrap();
        let mut cfg = OverlapConfig::default();
        cfg.rouge_variant = RougeVariant::N(1);
        let direct = rouge("the cat sat", &["the cat sat on the mat"], &cfg)
            .unwrap()
            .f_beta;
        assert_eq!(via_registry, direct);
    }

    #[test]
    fn missing_prerequisites_error() {
        let item = EvalItem::new("q", "prompt");
        let ctx = MetricContext::default();
        assert!(compute_metric(MetricKind::Rouge1, &item, "resp", &ctx).is_err());
        assert!(compute_metric(MetricKind::KeywordRecall, &item, "resp", &ctx).is_err());
    }
}
