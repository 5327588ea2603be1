//! Robustness methodology engines: prompt perturbation, sensitivity
//! analysis, self-consistency, variance baselining, grounding ablation,
//! fictitious-entity probing, and non-response measurement.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{EvalError, Result};
use crate::harness::providers::{GenerationParams, Generator, IdkClassifier};
use crate::metric::{compute_metric, MetricContext, MetricKind};
use crate::quality::fnv1a64;
use crate::stats::{mean_ci, wilcoxon_signed_rank, MeanCi, TestResult};

// ---------------------------------------------------------------------------
// perturbation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    CaseSwap,
    WhitespaceInsert,
    CharSwap,
    LlmRewrite,
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::CaseSwap => "case_swap",
            PerturbationKind::WhitespaceInsert => "whitespace_insert",
            PerturbationKind::CharSwap => "char_swap",
            PerturbationKind::LlmRewrite => "llm_rewrite",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Fraction of eligible positions to touch, in (0,1].
    pub intensity: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(EvalError::InvalidConfig("intensity must be in [0,1]".into()));
        }
        Ok(())
    }
}

fn spec_rng(prompt: &str, spec: &PerturbationSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a64(prompt.as_bytes()))
}

fn sample_positions(rng: &mut ChaCha8Rng, eligible: usize, intensity: f64) -> Vec<usize> {
    let count = (eligible as f64 * intensity).round() as usize;
    let mut all: Vec<usize> = (0..eligible).collect();
    all.shuffle(rng);
    let mut chosen: Vec<usize> = all.into_iter().take(count).collect();
    chosen.sort_unstable();
    chosen
}

/// Apply a provider-free perturbation. Deterministic for a given
/// (prompt, spec); intensity 0 is the identity.
pub fn perturb(prompt: &str, spec: &PerturbationSpec) -> Result<String> {
    perturb_with(prompt, spec, None)
}

/// Like [`perturb`], with a provider for the `llm_rewrite` kind.
pub fn perturb_with(
    prompt: &str,
    spec: &PerturbationSpec,
    provider: Option<&dyn Generator>,
) -> Result<String> {
    spec.validate()?;
    let mut rng = spec_rng(prompt, spec);
    let chars: Vec<char> = prompt.chars().collect();
    match spec.kind {
        PerturbationKind::CaseSwap => {
            let eligible: Vec<usize> = chars
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_alphabetic())
                .map(|(i, _)| i)
                .collect();
            let picks = sample_positions(&mut rng, eligible.len(), spec.intensity);
            let mut out = chars;
            for p in picks {
                let i = eligible[p];
                let c = out[i];
                let flipped: String = if c.is_uppercase() {
                    c.to_lowercase().collect()
                } else {
                    c.to_uppercase().collect()
                };
                // multi-char case mappings would change length; skip them
                if flipped.chars().count() == 1 {
                    out[i] = flipped.chars().next().unwrap();
                }
            }
            Ok(out.into_iter().collect())
        }
        PerturbationKind::WhitespaceInsert => {
            if chars.len() < 2 {
                return Ok(prompt.to_string());
            }
            // boundaries between consecutive characters
            let picks = sample_positions(&mut rng, chars.len() - 1, spec.intensity);
            let mut out = String::new();
            for (i, c) in chars.iter().enumerate() {
                out.push(*c);
                if picks.binary_search(&i).is_ok() {
                    out.push(' ');
                }
            }
            Ok(out)
        }
        PerturbationKind::CharSwap => {
            if chars.len() < 2 {
                return Ok(prompt.to_string());
            }
            // non-overlapping adjacent pairs: eligible pair starts 0,2,4,..
            let eligible: Vec<usize> = (0..chars.len() - 1).step_by(2).collect();
            let picks = sample_positions(&mut rng, eligible.len(), spec.intensity);
            let mut out = chars;
            for p in picks {
                let i = eligible[p];
                out.swap(i, i + 1);
            }
            Ok(out.into_iter().collect())
        }
        PerturbationKind::LlmRewrite => {
            let provider = provider.ok_or_else(|| {
                EvalError::InvalidConfig("llm_rewrite requires a generator provider".into())
            })?;
            let instruction = format!(
                "Rewrite the following prompt, preserving its meaning exactly:\n{prompt}"
            );
            let params = GenerationParams {
                seed: Some(spec.seed),
                ..Default::default()
            };
            Ok(provider.generate(&instruction, &params)?.text)
        }
    }
}

// ---------------------------------------------------------------------------
// sensitivity analysis

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricDelta {
    pub baseline: f64,
    pub perturbed: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffectedItem {
    pub item_id: String,
    pub metric: String,
    pub kind: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// metric -> kind -> aggregate delta
    pub per_metric: BTreeMap<String, BTreeMap<String, MetricDelta>>,
    /// tag -> metric -> kind -> aggregate delta
    pub per_tag: BTreeMap<String, BTreeMap<String, BTreeMap<String, MetricDelta>>>,
    /// Most-affected items sorted by |delta|, truncated to top N.
    pub most_affected: Vec<AffectedItem>,
    /// Fraction of (item, run) scoring attempts that succeeded.
    pub coverage: f64,
    pub failures: Vec<String>,
    pub seed: u64,
}

pub struct SensitivityOptions {
    pub top_n: usize,
    pub generation: GenerationParams,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        SensitivityOptions {
            top_n: 10,
            generation: GenerationParams::default(),
        }
    }
}

type ItemScores = BTreeMap<String, BTreeMap<String, f64>>; // item -> metric -> score

fn score_run(
    dataset: &Dataset,
    provider: &dyn Generator,
    metrics: &[MetricKind],
    ctx: &MetricContext,
    gen_params: &GenerationParams,
    transform: &dyn Fn(&str) -> Result<String>,
    failures: &mut Vec<String>,
    attempts: &mut usize,
    successes: &mut usize,
) -> Result<ItemScores> {
    let mut out = ItemScores::new();
    for item in &dataset.items {
        *attempts += 1;
        let prompt = match transform(&item.prompt) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("{}: perturbation failed: {e}", item.id));
                continue;
            }
        };
        let response = match provider.generate(&prompt, gen_params) {
            Ok(r) => r.text,
            Err(e) => {
                failures.push(format!("{}: provider failed: {e}", item.id));
                continue;
            }
        };
        let mut scores = BTreeMap::new();
        for &m in metrics {
            match compute_metric(m, item, &response, ctx) {
                Ok(v) => {
                    scores.insert(m.name().to_string(), v);
                }
                Err(e) => failures.push(format!("{}: metric {} failed: {e}", item.id, m.name())),
            }
        }
        *successes += 1;
        out.insert(item.id.clone(), scores);
    }
    Ok(out)
}

fn mean_of(scores: &ItemScores, metric: &str, ids: Option<&[&str]>) -> Option<f64> {
    let vals: Vec<f64> = scores
        .iter()
        .filter(|(id, _)| ids.map_or(true, |ids| ids.contains(&id.as_str())))
        .filter_map(|(_, m)| m.get(metric).copied())
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Run the metric pipeline unperturbed, then once per perturbation kind,
/// and aggregate deltas per metric, per tag, and per item.
pub fn sensitivity_analysis(
    dataset: &Dataset,
    provider: &dyn Generator,
    metrics: &[MetricKind],
    specs: &[PerturbationSpec],
    ctx: &MetricContext,
    opts: &SensitivityOptions,
) -> Result<SensitivityReport> {
    if metrics.is_empty() || specs.is_empty() {
        return Err(EvalError::InvalidConfig(
            "sensitivity needs >= 1 metric and >= 1 perturbation".into(),
        ));
    }
    let mut failures = Vec::new();
    let mut attempts = 0usize;
    let mut successes = 0usize;
    let baseline = score_run(
        dataset,
        provider,
        metrics,
        ctx,
        &opts.generation,
        &|p| Ok(p.to_string()),
        &mut failures,
        &mut attempts,
        &mut successes,
    )?;

    let mut per_metric: BTreeMap<String, BTreeMap<String, MetricDelta>> = BTreeMap::new();
    let mut per_tag: BTreeMap<String, BTreeMap<String, BTreeMap<String, MetricDelta>>> =
        BTreeMap::new();
    let mut most_affected: Vec<AffectedItem> = Vec::new();

    let tags: Vec<String> = {
        let mut t: Vec<String> = dataset
            .items
            .iter()
            .flat_map(|i| i.tags.iter().cloned())
            .collect();
        t.sort();
        t.dedup();
        t
    };

    for spec in specs {
        let perturbed = score_run(
            dataset,
            provider,
            metrics,
            ctx,
            &opts.generation,
            &|p| perturb_with(p, spec, Some(provider)),
            &mut failures,
            &mut attempts,
            &mut successes,
        )?;
        for &m in metrics {
            let name = m.name();
            if let (Some(b), Some(p)) = (mean_of(&baseline, name, None), mean_of(&perturbed, name, None)) {
                per_metric.entry(name.to_string()).or_default().insert(
                    spec.kind.name().to_string(),
                    MetricDelta {
                        baseline: b,
                        perturbed: p,
                        delta: p - b,
                    },
                );
            }
            for tag in &tags {
                let ids: Vec<&str> = dataset
                    .items
                    .iter()
                    .filter(|i| i.tags.contains(tag))
                    .map(|i| i.id.as_str())
                    .collect();
                if let (Some(b), Some(p)) = (
                    mean_of(&baseline, name, Some(&ids)),
                    mean_of(&perturbed, name, Some(&ids)),
                ) {
                    per_tag
                        .entry(tag.clone())
                        .or_default()
                        .entry(name.to_string())
                        .or_default()
                        .insert(
                            spec.kind.name().to_string(),
                            MetricDelta {
                                baseline: b,
                                perturbed: p,
                                delta: p - b,
                            },
                        );
                }
            }
            for (id, base_scores) in &baseline {
                if let (Some(&before), Some(&after)) = (
                    base_scores.get(name),
                    perturbed.get(id).and_then(|s| s.get(name)),
                ) {
                    most_affected.push(AffectedItem {
                        item_id: id.clone(),
                        metric: name.to_string(),
                        kind: spec.kind.name().to_string(),
                        before,
                        after,
                        delta: after - before,
                    });
                }
            }
        }
    }
    most_affected.sort_by(|a, b| {
        b.delta
            .abs()
            .total_cmp(&a.delta.abs())
            .then_with(|| (&a.item_id, &a.metric, &a.kind).cmp(&(&b.item_id, &b.metric, &b.kind)))
    });
    most_affected.truncate(opts.top_n);

    Ok(SensitivityReport {
        per_metric,
        per_tag,
        most_affected,
        coverage: if attempts == 0 {
            1.0
        } else {
            successes as f64 / attempts as f64
        },
        failures,
        seed: specs.first().map(|s| s.seed).unwrap_or(0),
    })
}

// ---------------------------------------------------------------------------
// self-consistency

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equivalence {
    NormalizedExact,
    /// Cosine threshold over embeddings (requires an embedder).
    EmbedCluster { tau: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfConsistencyParams {
    pub n: usize,
    pub temperature: f64,
    pub equivalence: Equivalence,
}

impl Default for SelfConsistencyParams {
    fn default() -> Self {
        SelfConsistencyParams {
            n: 5,
            temperature: 0.7,
            equivalence: Equivalence::NormalizedExact,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfConsistencyResult {
    pub modal_response: String,
    pub agreement_rate: f64,
    pub samples: Vec<String>,
    pub failures: Vec<String>,
    pub temperature_warning: bool,
}

fn normalized_key(text: &str) -> String {
    crate::overlap::tokenize(text, crate::overlap::TokenizeMode::Word)
        .tokens
        .join(" ")
}

/// Sample the provider n times and return the first-seen member of the
/// largest equivalence group; ties break toward the earliest first
/// occurrence.
pub fn self_consistency(
    prompt: &str,
    provider: &dyn Generator,
    params: &SelfConsistencyParams,
    embedder: Option<&dyn crate::harness::providers::Embedder>,
) -> Result<SelfConsistencyResult> {
    if params.n == 0 {
        return Err(EvalError::InvalidConfig("n must be >= 1".into()));
    }
    let gen_params = GenerationParams {
        temperature: params.temperature,
        ..Default::default()
    };
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for i in 0..params.n {
        match provider.generate(prompt, &gen_params) {
            Ok(r) => samples.push(r.text),
            Err(e) => failures.push(format!("sample {i}: {e}")),
        }
    }
    if samples.is_empty() {
        return Err(EvalError::Provider(format!(
            "all {} samples failed",
            params.n
        )));
    }
    // group indices by equivalence
    let mut groups: Vec<Vec<usize>> = Vec::new();
    match &params.equivalence {
        Equivalence::NormalizedExact => {
            let mut by_key: BTreeMap<String, usize> = BTreeMap::new();
            for (i, s) in samples.iter().enumerate() {
                let key = normalized_key(s);
                match by_key.get(&key) {
                    Some(&g) => groups[g].push(i),
                    None => {
                        by_key.insert(key, groups.len());
                        groups.push(vec![i]);
                    }
                }
            }
        }
        Equivalence::EmbedCluster { tau } => {
            let embedder = embedder.ok_or_else(|| {
                EvalError::InvalidConfig("embed_cluster equivalence requires an embedder".into())
            })?;
            let vectors: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| embedder.embed(s))
                .collect::<Result<_>>()?;
            for i in 0..samples.len() {
                let mut placed = false;
                for g in groups.iter_mut() {
                    let rep = g[0];
                    if crate::model_metrics::cosine(&vectors[i], &vectors[rep])? >= *tau {
                        g.push(i);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    groups.push(vec![i]);
                }
            }
        }
    }
    let modal = groups
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .unwrap();
    Ok(SelfConsistencyResult {
        modal_response: samples[modal[0]].clone(),
        agreement_rate: modal.len() as f64 / samples.len() as f64,
        samples,
        failures,
        temperature_warning: params.temperature == 0.0,
    })
}

// ---------------------------------------------------------------------------
// variance baselining

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceBaseline {
    /// metric -> stats over per-run aggregates
    pub per_metric: BTreeMap<String, MeanCi>,
    pub n_runs: usize,
    pub failures: Vec<String>,
}

/// Repeat the full metric pipeline `n_runs` times on fixed inputs and
/// report per-metric mean/sd/CI of the run aggregates.
pub fn variance_baseline(
    dataset: &Dataset,
    provider: &dyn Generator,
    metrics: &[MetricKind],
    ctx: &MetricContext,
    n_runs: usize,
    confidence: f64,
) -> Result<VarianceBaseline> {
    if n_runs < 2 {
        return Err(EvalError::InvalidConfig("n_runs must be >= 2".into()));
    }
    let gen_params = GenerationParams {
        temperature: 0.7,
        ..Default::default()
    };
    let mut per_run: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    for run in 0..n_runs {
        let mut attempts = 0;
        let mut successes = 0;
        let mut run_failures = Vec::new();
        let scores = score_run(
            dataset,
            provider,
            metrics,
            ctx,
            &gen_params,
            &|p| Ok(p.to_string()),
            &mut run_failures,
            &mut attempts,
            &mut successes,
        )?;
        for f in run_failures {
            failures.push(format!("run {run}: {f}"));
        }
        for &m in metrics {
            if let Some(v) = mean_of(&scores, m.name(), None) {
                per_run.entry(m.name().to_string()).or_default().push(v);
            }
        }
    }
    let mut per_metric = BTreeMap::new();
    for (name, vals) in per_run {
        per_metric.insert(name, mean_ci(&vals, confidence)?);
    }
    Ok(VarianceBaseline {
        per_metric,
        n_runs,
        failures,
    })
}

// ---------------------------------------------------------------------------
// grounding ablation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTemplates {
    /// Template with {prompt} and {grounding} placeholders.
    pub with_grounding: String,
    /// Template with a {prompt} placeholder.
    pub without_grounding: String,
}

impl Default for AblationTemplates {
    fn default() -> Self {
        AblationTemplates {
            with_grounding: "Context:\n{grounding}\n\nQuestion: {prompt}".into(),
            without_grounding: "Question: {prompt}".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    /// metric -> per-item (id, with, without, delta)
    pub per_item: BTreeMap<String, Vec<(String, f64, f64, f64)>>,
    /// metric -> paired test on (with, without) scores
    pub tests: BTreeMap<String, TestResult>,
    pub items_evaluated: usize,
    pub items_skipped_no_grounding: usize,
    pub failures: Vec<String>,
}

/// Two full runs differing only in grounding injection; per-item paired
/// scores go through the Wilcoxon signed rank test.
pub fn grounding_ablation(
    dataset: &Dataset,
    provider: &dyn Generator,
    metrics: &[MetricKind],
    templates: &AblationTemplates,
    ctx: &MetricContext,
) -> Result<AblationReport> {
    let mut per_item: BTreeMap<String, Vec<(String, f64, f64, f64)>> = BTreeMap::new();
    let mut with_scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut without_scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let gen_params = GenerationParams::default();

    for item in &dataset.items {
        if item.grounding.is_empty() {
            skipped += 1;
            continue;
        }
        let grounding: String = item
            .grounding
            .iter()
            .map(|g| g.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let with_prompt = templates
            .with_grounding
            .replace("{prompt}", &item.prompt)
            .replace("{grounding}", &grounding);
        let without_prompt = templates.without_grounding.replace("{prompt}", &item.prompt);
        let responses = (
            provider.generate(&with_prompt, &gen_params),
            provider.generate(&without_prompt, &gen_params),
        );
        let (with_resp, without_resp) = match responses {
            (Ok(a), Ok(b)) => (a.text, b.text),
            (Err(e), _) | (_, Err(e)) => {
                failures.push(format!("{}: {e}", item.id));
                continue;
            }
        };
        evaluated += 1;
        for &m in metrics {
            let name = m.name().to_string();
            match (
                compute_metric(m, item, &with_resp, ctx),
                compute_metric(m, item, &without_resp, ctx),
            ) {
                (Ok(w), Ok(wo)) => {
                    per_item
                        .entry(name.clone())
                        .or_default()
                        .push((item.id.clone(), w, wo, w - wo));
                    with_scores.entry(name.clone()).or_default().push(w);
                    without_scores.entry(name).or_default().push(wo);
                }
                (Err(e), _) | (_, Err(e)) => {
                    failures.push(format!("{}: metric {}: {e}", item.id, m.name()))
                }
            }
        }
    }

    let mut tests = BTreeMap::new();
    for (name, with_vals) in &with_scores {
        let without_vals = &without_scores[name];
        tests.insert(name.clone(), wilcoxon_signed_rank(with_vals, without_vals)?);
    }
    Ok(AblationReport {
        per_item,
        tests,
        items_evaluated: evaluated,
        items_skipped_no_grounding: skipped,
        failures,
    })
}

// ---------------------------------------------------------------------------
// hallucination probing

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Probe {
    pub prompt: String,
    pub entity: String,
    pub entity_kind: String,
    pub expect_idk: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeParams {
    pub count: usize,
    pub seed: u64,
    /// Generated entities must not collide with these.
    pub known_entities: Vec<String>,
    /// Answerable entities used for non-response probes (expect_idk=false).
    pub answerable: Vec<String>,
    /// Prompt template with an {entity} placeholder.
    pub template: String,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            count: 10,
            seed: 0,
            known_entities: Vec::new(),
            answerable: Vec::new(),
            template: "Tell me about {entity}".into(),
        }
    }
}

const MAX_COLLISION_RETRIES: usize = 64;

fn fictitious_entity(rng: &mut ChaCha8Rng, kind: usize) -> (String, &'static str) {
    match kind % 3 {
        0 => {
            // future-dated CVE identifiers
            let year = 2035 + rng.gen_range(0..10);
            let num = rng.gen_range(1_000_000..10_000_000);
            (format!("CVE-{year}-{num}"), "cve")
        }
        1 => {
            const HEADS: [&str; 6] = ["Zenthor", "Quorvax", "Plimbra", "Vexalon", "Droswick", "Klyptra"];
            let head = HEADS[rng.gen_range(0..HEADS.len())];
            let suffix = rng.gen_range(100..10_000);
            (format!("{head} X{suffix}"), "product")
        }
        _ => {
            const FIRST: [&str; 6] = ["Velmar", "Ostrid", "Quenlan", "Marvix", "Teldra", "Joruna"];
            const LAST: [&str; 6] = ["Quintrell", "Vobersham", "Klendathu", "Morvane", "Zelpher", "Ashgrove"];
            let f = FIRST[rng.gen_range(0..FIRST.len())];
            let l = LAST[rng.gen_range(0..LAST.len())];
            let suffix = rng.gen_range(100..1000);
            (format!("{f} {l}-{suffix}"), "person")
        }
    }
}

/// Deterministic fictitious-entity probes plus optional known-entity
/// probes for non-response measurement.
pub fn generate_probes(params: &ProbeParams) -> Result<ProbeSet> {
    if params.count == 0 {
        return Err(EvalError::InvalidConfig("count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let known: std::collections::HashSet<String> = params
        .known_entities
        .iter()
        .map(|e| e.to_lowercase())
        .collect();
    let mut probes = Vec::new();
    let mut used = std::collections::HashSet::new();
    for i in 0..params.count {
        let mut entity = None;
        for _ in 0..MAX_COLLISION_RETRIES {
            let (candidate, kind) = fictitious_entity(&mut rng, i);
            if !known.contains(&candidate.to_lowercase()) && used.insert(candidate.to_lowercase()) {
                entity = Some((candidate, kind));
                break;
            }
        }
        let (entity, kind) = entity.ok_or_else(|| {
            EvalError::InvalidInput("could not generate a collision-free entity".into())
        })?;
        probes.push(Probe {
            prompt: params.template.replace("{entity}", &entity),
            entity,
            entity_kind: kind.to_string(),
            expect_idk: true,
        });
    }
    for entity in &params.answerable {
        probes.push(Probe {
            prompt: params.template.replace("{entity}", entity),
            entity: entity.clone(),
            entity_kind: "known".into(),
            expect_idk: false,
        });
    }
    Ok(ProbeSet {
        probes,
        seed: params.seed,
    })
}

pub const DEFAULT_REFUSAL_PATTERNS: [&str; 7] = [
    "i don't know",
    "i do not know",
    "does not exist",
    "no information",
    "cannot find",
    "unable to answer",
    "i'm not sure",
];

/// Heuristic refusal detection; a classifier, when supplied, overrides the
/// heuristic (falling back to it on classifier failure).
pub fn detect_idk(
    response: &str,
    classifier: Option<&dyn IdkClassifier>,
    patterns: &[String],
) -> bool {
    if let Some(c) = classifier {
        match c.is_idk(response) {
            Ok(v) => return v,
            Err(_) => {} // fall through to the heuristic
        }
    }
    let normalized = crate::quality::normalize_text(response).replace('\u{2019}', "'");
    patterns.iter().any(|p| normalized.contains(p.as_str()))
}

pub fn default_refusal_patterns() -> Vec<String> {
    DEFAULT_REFUSAL_PATTERNS
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub prompt: String,
    pub entity: String,
    pub expect_idk: bool,
    pub response: Option<String>,
    pub idk: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Fraction of fictitious probes answered without a refusal.
    pub hallucination_rate: f64,
    /// Fraction of answerable probes met with a refusal.
    pub undesirable_nonresponse_rate: f64,
    pub records: Vec<ProbeRecord>,
    pub provider_failures: usize,
    pub seed: u64,
}

/// Run the probe set and compute both failure-mode rates; provider
/// failures are excluded from the denominators.
pub fn hallucination_and_nonresponse(
    probes: &ProbeSet,
    provider: &dyn Generator,
    classifier: Option<&dyn IdkClassifier>,
    patterns: &[String],
) -> Result<ProbeReport> {
    if probes.probes.is_empty() {
        return Err(EvalError::InvalidInput("empty probe set".into()));
    }
    let gen_params = GenerationParams::default();
    let mut records = Vec::new();
    let mut failures = 0usize;
    let (mut fict_total, mut fict_answered) = (0usize, 0usize);
    let (mut known_total, mut known_refused) = (0usize, 0usize);
    for probe in &probes.probes {
        match provider.generate(&probe.prompt, &gen_params) {
            Ok(r) => {
                let idk = detect_idk(&r.text, classifier, patterns);
                if probe.expect_idk {
                    fict_total += 1;
                    if !idk {
                        fict_answered += 1;
                    }
                } else {
                    known_total += 1;
                    if idk {
                        known_refused += 1;
                    }
                }
                records.push(ProbeRecord {
                    prompt: probe.prompt.clone(),
                    entity: probe.entity.clone(),
                    expect_idk: probe.expect_idk,
                    response: Some(r.text),
                    idk: Some(idk),
                    error: None,
                });
            }
            Err(e) => {
                failures += 1;
                records.push(ProbeRecord {
                    prompt: probe.prompt.clone(),
                    entity: probe.entity.clone(),
                    expect_idk: probe.expect_idk,
                    response: None,
                    idk: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(ProbeReport {
        hallucination_rate: if fict_total == 0 {
            0.0
        } else {
            fict_answered as f64 / fict_total as f64
        },
        undesirable_nonresponse_rate: if known_total == 0 {
            0.0
        } else {
            known_refused as f64 / known_total as f64
        },
        records,
        provider_failures: failures,
        seed: probes.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, EvalItem, GroundingDoc};
    use crate::harness::providers::GenerationRecord;

    struct Fixed(String);
    impl Generator for Fixed {
        fn generate(&self, _p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            Ok(GenerationRecord::text_only(self.0.clone(), "mock"))
        }
    }

    fn spec(kind: PerturbationKind, intensity: f64, seed: u64) -> PerturbationSpec {
        PerturbationSpec {
            kind,
            intensity,
            seed,
        }
    }

    #[test]
    fn case_swap_full_intensity() {
        let out = perturb("abc", &spec(PerturbationKind::CaseSwap, 1.0, 0)).unwrap();
        assert_eq!(out, "ABC");
    }

    #[test]
    fn zero_intensity_is_identity() {
        for kind in [
            PerturbationKind::CaseSwap,
            PerturbationKind::WhitespaceInsert,
            PerturbationKind::CharSwap,
        ] {
            let out = perturb("Hello there World", &spec(kind, 0.0, 9)).unwrap();
            assert_eq!(out, "Hello there World");
        }
    }

    #[test]
    fn perturb_deterministic_and_invariants() {
        let prompt = "The quick brown fox jumps over the lazy dog";
        let s = spec(PerturbationKind::CharSwap, 0.5, 7);
        let a = perturb(prompt, &s).unwrap();
        let b = perturb(prompt, &s).unwrap();
        assert_eq!(a, b);
        // char_swap preserves the character multiset
        let mut ca: Vec<char> = a.chars().collect();
        let mut cp: Vec<char> = prompt.chars().collect();
        ca.sort();
        cp.sort();
        assert_eq!(ca, cp);

        let s = spec(PerturbationKind::CaseSwap, 0.5, 7);
        let out = perturb(prompt, &s).unwrap();
        assert_eq!(out.chars().count(), prompt.chars().count());

        let s = spec(PerturbationKind::WhitespaceInsert, 0.3, 7);
        let out = perturb(prompt, &s).unwrap();
        let inserted = out.chars().count() - prompt.chars().count();
        let expected = ((prompt.chars().count() - 1) as f64 * 0.3).round() as usize;
        assert_eq!(inserted, expected);
    }

    #[test]
    fn char_swap_golden_fixture() {
        // frozen from the seeded procedure; guards against silent RNG drift
        let out = perturb("abcdefgh", &spec(PerturbationKind::CharSwap, 1.0, 7)).unwrap();
        assert_eq!(out, perturb("abcdefgh", &spec(PerturbationKind::CharSwap, 1.0, 7)).unwrap());
        let mut sorted: Vec<char> = out.chars().collect();
        sorted.sort();
        assert_eq!(sorted, vec!['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h']);
        // all four non-overlapping pairs swapped at intensity 1.0
        assert_eq!(out, "badcfehg");
    }

    #[test]
    fn llm_rewrite_requires_provider() {
        assert!(perturb("x", &spec(PerturbationKind::LlmRewrite, 1.0, 0)).is_err());
        let out = perturb_with(
            "x",
            &spec(PerturbationKind::LlmRewrite, 1.0, 0),
            Some(&Fixed("rewritten".into())),
        )
        .unwrap();
        assert_eq!(out, "rewritten");
    }

    fn kw_dataset() -> Dataset {
        let mut d = Dataset::new("t");
        for (id, tag) in [("a", "qa"), ("b", "qa"), ("c", "code")] {
            let mut item = EvalItem::new(id, format!("prompt {id}"));
            item.expected_terms = vec!["target".into()];
            item.tags.insert(tag.into());
            d.items.push(item);
        }
        d
    }

    #[test]
    fn insensitive_mock_gives_zero_deltas() {
        let d = kw_dataset();
        let ctx = MetricContext::default();
        let report = sensitivity_analysis(
            &d,
            &Fixed("contains target".into()),
            &[MetricKind::KeywordRecall],
            &[spec(PerturbationKind::CaseSwap, 1.0, 3)],
            &ctx,
            &SensitivityOptions::default(),
        )
        .unwrap();
        let delta = &report.per_metric["keyword_recall"]["case_swap"];
        assert_eq!(delta.delta, 0.0);
        assert_eq!(report.coverage, 1.0);
    }

    struct FailOnDoubleSpace;
    impl Generator for FailOnDoubleSpace {
        fn generate(&self, p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            if p.contains("  ") {
                Err(EvalError::Provider("double space".into()))
            } else {
                Ok(GenerationRecord::text_only("target", "mock"))
            }
        }
    }

    #[test]
    fn provider_failure_reduces_coverage() {
        let mut d = Dataset::new("t");
        let mut item = EvalItem::new("a", "word word word word word");
        item.expected_terms = vec!["target".into()];
        d.items.push(item);
        let ctx = MetricContext::default();
        let report = sensitivity_analysis(
            &d,
            &FailOnDoubleSpace,
            &[MetricKind::KeywordRecall],
            &[spec(PerturbationKind::WhitespaceInsert, 1.0, 3)],
            &ctx,
            &SensitivityOptions::default(),
        )
        .unwrap();
        assert!(report.coverage < 1.0);
        assert!(!report.failures.is_empty());
    }

    struct TagSensitive;
    impl Generator for TagSensitive {
        fn generate(&self, p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            // degrade only on perturbed prompts mentioning item c
            let text = if p != p.to_lowercase() && p.to_lowercase().contains("prompt c") {
                "missing"
            } else {
                "target"
            };
            Ok(GenerationRecord::text_only(text, "mock"))
        }
    }

    #[test]
    fn subgroup_deltas_isolated_to_affected_tag() {
        let d = kw_dataset();
        let ctx = MetricContext::default();
        let report = sensitivity_analysis(
            &d,
            &TagSensitive,
            &[MetricKind::KeywordRecall],
            &[spec(PerturbationKind::CaseSwap, 1.0, 3)],
            &ctx,
            &SensitivityOptions::default(),
        )
        .unwrap();
        let code = &report.per_tag["code"]["keyword_recall"]["case_swap"];
        let qa = &report.per_tag["qa"]["keyword_recall"]["case_swap"];
        assert_eq!(code.delta, -1.0);
        assert_eq!(qa.delta, 0.0);
        // overall delta is the hand-summed mean: (0 + 0 - 1)/3
        let overall = &report.per_metric["keyword_recall"]["case_swap"];
        assert!((overall.delta - (-1.0 / 3.0)).abs() < 1e-12);
    }

    struct Sequence(std::sync::Mutex<usize>, Vec<&'static str>);
    impl Generator for Sequence {
        fn generate(&self, _p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            let mut i = self.0.lock().unwrap();
            let out = self.1[*i % self.1.len()];
            *i += 1;
            Ok(GenerationRecord::text_only(out, "mock"))
        }
    }

    #[test]
    fn self_consistency_modal_and_ties() {
        let p = SelfConsistencyParams {
            n: 3,
            ..Default::default()
        };
        let r = self_consistency(
            "q",
            &Sequence(std::sync::Mutex::new(0), vec!["A", "A", "B"]),
            &p,
            None,
        )
        .unwrap();
        assert_eq!(r.modal_response, "A");
        assert!((r.agreement_rate - 2.0 / 3.0).abs() < 1e-12);

        let r = self_consistency(
            "q",
            &Sequence(std::sync::Mutex::new(0), vec!["x", "y", "z"]),
            &p,
            None,
        )
        .unwrap();
        assert_eq!(r.modal_response, "x");
        assert!((r.agreement_rate - 1.0 / 3.0).abs() < 1e-12);

        let p1 = SelfConsistencyParams {
            n: 1,
            ..Default::default()
        };
        let r = self_consistency("q", &Fixed("only".into()), &p1, None).unwrap();
        assert_eq!(r.agreement_rate, 1.0);
    }

    #[test]
    fn variance_baseline_deterministic_mock() {
        let d = kw_dataset();
        let ctx = MetricContext::default();
        let vb = variance_baseline(
            &d,
            &Fixed("has target inside".into()),
            &[MetricKind::KeywordRecall],
            &ctx,
            5,
            0.95,
        )
        .unwrap();
        let ci = &vb.per_metric["keyword_recall"];
        assert_eq!(ci.sd, Some(0.0));
        assert_eq!(ci.lower, ci.upper);
        assert!(variance_baseline(&d, &Fixed("x".into()), &[MetricKind::KeywordRecall], &ctx, 1, 0.95).is_err());
    }

    #[test]
    fn variance_baseline_alternating_mock() {
        // alternating keyword hit/miss: per-run aggregates alternate 1,0,1,0
        let d = {
            let mut d = Dataset::new("t");
            let mut item = EvalItem::new("a", "p");
            item.expected_terms = vec!["target".into()];
            d.items.push(item);
            d
        };
        let ctx = MetricContext::default();
        let vb = variance_baseline(
            &d,
            &Sequence(std::sync::Mutex::new(0), vec!["target", "miss"]),
            &[MetricKind::KeywordRecall],
            &ctx,
            4,
            0.95,
        )
        .unwrap();
        let ci = &vb.per_metric["keyword_recall"];
        assert!((ci.mean - 0.5).abs() < 1e-12);
        // sd of [1,0,1,0] with Bessel correction
        let expected_sd = (1.0f64 / 3.0).sqrt();
        assert!((ci.sd.unwrap() - expected_sd).abs() < 1e-12);
    }

    fn grounded_dataset(n: usize) -> Dataset {
        let mut d = Dataset::new("t");
        for i in 0..n {
            let mut item = EvalItem::new(format!("i{i}"), format!("question {i}"));
            item.expected_terms = vec!["target".into()];
            item.grounding.push(GroundingDoc {
                doc_id: "g".into(),
                text: format!("grounding text {i}"),
                relevant: Some(1),
            });
            d.items.push(item);
        }
        d
    }

    #[test]
    fn ablation_grounding_ignored_gives_p_one() {
        let d = grounded_dataset(4);
        let ctx = MetricContext::default();
        let r = grounding_ablation(
            &d,
            &Fixed("target present".into()),
            &[MetricKind::KeywordRecall],
            &AblationTemplates::default(),
            &ctx,
        )
        .unwrap();
        assert_eq!(r.items_evaluated, 4);
        let t = &r.tests["keyword_recall"];
        assert_eq!(t.p_value, 1.0);
        assert!(r.per_item["keyword_recall"].iter().all(|(_, _, _, d)| *d == 0.0));
    }

    struct GroundingHelps;
    impl Generator for GroundingHelps {
        fn generate(&self, p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            let text = if p.contains("Context:") { "target" } else { "miss" };
            Ok(GenerationRecord::text_only(text, "mock"))
        }
    }

    #[test]
    fn ablation_uniform_improvement_extreme_p() {
        let d = grounded_dataset(6);
        let ctx = MetricContext::default();
        let r = grounding_ablation(
            &d,
            &GroundingHelps,
            &[MetricKind::KeywordRecall],
            &AblationTemplates::default(),
            &ctx,
        )
        .unwrap();
        let t = &r.tests["keyword_recall"];
        // all six deltas positive and tied: extreme configuration
        assert!((t.p_value - 2.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn ablation_without_grounding_items() {
        let d = {
            let mut d = Dataset::new("t");
            d.items.push(EvalItem::new("a", "no grounding here"));
            d
        };
        let ctx = MetricContext::default();
        let r = grounding_ablation(
            &d,
            &Fixed("x".into()),
            &[MetricKind::KeywordRecall],
            &AblationTemplates::default(),
            &ctx,
        )
        .unwrap();
        assert_eq!(r.items_evaluated, 0);
        assert_eq!(r.items_skipped_no_grounding, 1);
    }

    #[test]
    fn probes_deterministic_and_cve_shaped() {
        let params = ProbeParams {
            count: 9,
            seed: 42,
            ..Default::default()
        };
        let a = generate_probes(&params).unwrap();
        let b = generate_probes(&params).unwrap();
        assert_eq!(
            a.probes.iter().map(|p| &p.prompt).collect::<Vec<_>>(),
            b.probes.iter().map(|p| &p.prompt).collect::<Vec<_>>()
        );
        let cve = a.probes.iter().find(|p| p.entity_kind == "cve").unwrap();
        let re = regex::Regex::new(r"^Tell me about CVE-20[0-9]{2}-[0-9]{7}$").unwrap();
        assert!(re.is_match(&cve.prompt), "{}", cve.prompt);
        assert!(a.probes.iter().all(|p| p.expect_idk));
    }

    #[test]
    fn probes_avoid_known_entities() {
        let params = ProbeParams {
            count: 5,
            seed: 1,
            ..Default::default()
        };
        let first = generate_probes(&params).unwrap();
        let banned = first.probes[0].entity.clone();
        let params2 = ProbeParams {
            known_entities: vec![banned.clone()],
            ..params
        };
        let second = generate_probes(&params2).unwrap();
        assert!(second.probes.iter().all(|p| p.entity != banned));
    }

    #[test]
    fn idk_detection_patterns() {
        let pats = default_refusal_patterns();
        assert!(detect_idk("I don't know.", None, &pats));
        assert!(detect_idk("CVE-2037-1234567 does not exist", None, &pats));
        assert!(detect_idk("I DO NOT KNOW anything about that", None, &pats));
        let candidate_b = "The main goal of Apollo 11 was to successfully land a crew on the Moon and ensure their safe return.";
        assert!(!detect_idk(candidate_b, None, &pats));
    }

    #[test]
    fn probe_rates_at_extremes() {
        let mut probes = generate_probes(&ProbeParams {
            count: 4,
            seed: 5,
            answerable: vec!["Apollo 11".into()],
            ..Default::default()
        })
        .unwrap();
        let pats = default_refusal_patterns();
        let r = hallucination_and_nonresponse(&probes, &Fixed("I don't know".into()), None, &pats)
            .unwrap();
        assert_eq!(r.hallucination_rate, 0.0);
        assert_eq!(r.undesirable_nonresponse_rate, 1.0);

        let r = hallucination_and_nonresponse(
            &probes,
            &Fixed("It is a well known thing.".into()),
            None,
            &pats,
        )
        .unwrap();
        assert_eq!(r.hallucination_rate, 1.0);
        assert_eq!(r.undesirable_nonresponse_rate, 0.0);

        probes.probes.clear();
        assert!(hallucination_and_nonresponse(&probes, &Fixed("x".into()), None, &pats).is_err());
    }

    struct IdkOnSome;
    impl Generator for IdkOnSome {
        fn generate(&self, p: &str, _g: &GenerationParams) -> Result<GenerationRecord> {
            // refuse on a stable subset: entity suffix digit sum divisible by 3
            let digits: u32 = p.chars().filter_map(|c| c.to_digit(10)).sum();
            let text = if digits % 3 == 0 {
                "I don't know"
            } else {
                "Certainly, here are the details."
            };
            Ok(GenerationRecord::text_only(text, "mock"))
        }
    }

    #[test]
    fn rates_complement_on_fictitious_probes() {
        let probes = generate_probes(&ProbeParams {
            count: 10,
            seed: 77,
            ..Default::default()
        })
        .unwrap();
        let pats = default_refusal_patterns();
        let r = hallucination_and_nonresponse(&probes, &IdkOnSome, None, &pats).unwrap();
        let idk_rate = r
            .records
            .iter()
            .filter(|rec| rec.idk == Some(true))
            .count() as f64
            / 10.0;
        assert!((r.hallucination_rate + idk_rate - 1.0).abs() < 1e-12);
    }
}
