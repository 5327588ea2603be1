//! Run orchestration: a RunConfig ties a dataset, providers, metrics, and
//! methodology sections into one EvalReport, deterministically under mock
//! providers and a fixed seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_dataset, validate_dataset, Dataset};
use crate::error::{EvalError, Result};
use crate::harness::http::{HttpProvider, HttpSpec};
use crate::harness::mock::{BehaviorTable, HashEmbedder, MockProvider, TableNli};
use crate::harness::providers::{
    Autorater, Embedder, GenerationParams, Generator, NliScorer, NliScores,
};
use crate::metric::{compute_metric, metric_scale, MetricContext, MetricKind, MetricScale};
use crate::model_metrics::RubricSpec;
use crate::overlap::CorpusStats;
use crate::quality::{fnv1a64, splitmix64};
use crate::robustness::{
    default_refusal_patterns, generate_probes, hallucination_and_nonresponse, self_consistency,
    sensitivity_analysis, AblationReport, AblationTemplates, PerturbationSpec, ProbeParams,
    ProbeReport, SelfConsistencyParams, SensitivityOptions, SensitivityReport,
};
use crate::stats::{mean_ci, MeanCi};

// ---------------------------------------------------------------------------
// config

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table_path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<BehaviorTable>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Http(HttpSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NliRule {
    pub pattern: String,
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvidersConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ProviderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autorater: Option<ProviderSpec>,
    /// Table-driven NLI rules matched against the hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nli: Option<Vec<NliRule>>,
    /// Hash-embedder dimensionality; enables embedding_similarity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder_dims: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

fn default_top_n() -> usize {
    10
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AblationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<AblationTemplates>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MethodologyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_consistency: Option<SelfConsistencyParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub providers: ProvidersConfig,
    pub metrics: Vec<String>,
    #[serde(default)]
    pub methodology: MethodologyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rubric: Option<RubricSpec>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// SHA-256 over the canonical (key-sorted) JSON form with the output
    /// section removed; covers every behavior-affecting setting.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(flatten)]
    pub ci: MeanCi,
    /// Fraction of items with a score for this metric.
    pub coverage: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MethodologySections {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<ProbeReport>,
    /// item id -> self-consistency agreement rate
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_consistency: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    /// Wall-clock; excluded from the config hash and from determinism
    /// comparisons.
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub run_id: String,
    pub dataset_name: String,
    pub dataset_version: u64,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: Vec<String>,
    pub metric_scales: BTreeMap<String, MetricScale>,
    pub items: Vec<ItemRecord>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub methodology: MethodologySections,
    pub timing: Timing,
}

impl EvalReport {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// provider construction

pub struct BuiltProviders {
    pub generator: Option<Box<dyn Generator>>,
    pub autorater: Option<Box<dyn Autorater>>,
    pub nli: Option<TableNli>,
    pub embedder: Option<HashEmbedder>,
}

fn build_generator(spec: &ProviderSpec, run_seed: u64) -> Result<Box<dyn Generator>> {
    match spec {
        ProviderSpec::Mock {
            table_path,
            table,
            seed,
        } => {
            let table = match (table, table_path) {
                (Some(t), _) => t.clone(),
                (None, Some(p)) => BehaviorTable::from_path(p)?,
                (None, None) => {
                    return Err(EvalError::InvalidConfig(
                        "mock provider needs a table or table_path".into(),
                    ))
                }
            };
            Ok(Box::new(MockProvider::new(table, seed.unwrap_or(run_seed))?))
        }
        ProviderSpec::Http(http) => Ok(Box::new(HttpProvider::new(http.clone())?)),
    }
}

fn build_autorater(spec: &ProviderSpec, run_seed: u64) -> Result<Box<dyn Autorater>> {
    match spec {
        ProviderSpec::Mock {
            table_path,
            table,
            seed,
        } => {
            let table = match (table, table_path) {
                (Some(t), _) => t.clone(),
                (None, Some(p)) => BehaviorTable::from_path(p)?,
                (None, None) => {
                    return Err(EvalError::InvalidConfig(
                        "mock autorater needs a table or table_path".into(),
                    ))
                }
            };
            Ok(Box::new(MockProvider::new(table, seed.unwrap_or(run_seed))?))
        }
        ProviderSpec::Http(_) => Err(EvalError::InvalidConfig(
            "http autorater role is not supported; use a mock table".into(),
        )),
    }
}

pub fn build_providers(cfg: &ProvidersConfig, run_seed: u64) -> Result<BuiltProviders> {
    let generator = cfg
        .generator
        .as_ref()
        .map(|s| build_generator(s, run_seed))
        .transpose()?;
    let autorater = cfg
        .autorater
        .as_ref()
        .map(|s| build_autorater(s, run_seed))
        .transpose()?;
    let nli = match &cfg.nli {
        Some(rules) => {
            let pairs: Vec<(&str, NliScores)> = rules
                .iter()
                .map(|r| {
                    (
                        r.pattern.as_str(),
                        NliScores {
                            entailment: r.entailment,
                            neutral: r.neutral,
                            contradiction: r.contradiction,
                        },
                    )
                })
                .collect();
            Some(TableNli::new(&pairs)?)
        }
        None => None,
    };
    let embedder = cfg.embedder_dims.map(|dims| HashEmbedder { dims });
    Ok(BuiltProviders {
        generator,
        autorater,
        nli,
        embedder,
    })
}

// ---------------------------------------------------------------------------
// prerequisite checks

fn check_prerequisites(
    dataset: &Dataset,
    metrics: &[MetricKind],
    cfg: &RunConfig,
    providers: &BuiltProviders,
) -> Result<()> {
    for &m in metrics {
        if m.requires_references() {
            let missing: Vec<&str> = dataset
                .items
                .iter()
                .filter(|i| i.references.is_empty())
                .map(|i| i.id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(EvalError::InvalidConfig(format!(
                    "metric {} requires references; missing on items: {}",
                    m.name(),
                    missing.join(", ")
                )));
            }
        }
        if m.requires_expected_terms() {
            let missing: Vec<&str> = dataset
                .items
                .iter()
                .filter(|i| i.expected_terms.is_empty())
                .map(|i| i.id.as_str())
                .collect();
            if !missing.is_empty() {
                return Err(EvalError::InvalidConfig(format!(
                    "metric {} requires expected_terms; missing on items: {}",
                    m.name(),
                    missing.join(", ")
                )));
            }
        }
        match m {
            MetricKind::EmbeddingSimilarity if providers.embedder.is_none() => {
                return Err(EvalError::InvalidConfig(
                    "embedding_similarity requires providers.embedder_dims".into(),
                ))
            }
            MetricKind::NliEntailment if providers.nli.is_none() => {
                return Err(EvalError::InvalidConfig(
                    "nli_entailment requires providers.nli rules".into(),
                ))
            }
            MetricKind::AutoraterPointwise => {
                if providers.autorater.is_none() {
                    return Err(EvalError::InvalidConfig(
                        "autorater_pointwise requires providers.autorater".into(),
                    ));
                }
                if cfg.rubric.is_none() {
                    return Err(EvalError::InvalidConfig(
                        "autorater_pointwise requires a rubric".into(),
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run

/// Execute a full evaluation run. Config errors fail fast; per-item
/// runtime failures degrade coverage but never abort the run. The report
/// is written atomically when an output path is configured.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let dataset = load_dataset(&cfg.dataset.path)?;
    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        return Err(EvalError::InvalidDataset(format!(
            "{} validation violation(s); first: {}",
            violations.len(),
            violations[0].detail
        )));
    }
    if cfg.metrics.is_empty() {
        return Err(EvalError::InvalidConfig("no metrics configured".into()));
    }
    let metrics: Vec<MetricKind> = cfg
        .metrics
        .iter()
        .map(|s| MetricKind::parse(s))
        .collect::<Result<_>>()?;
    let providers = build_providers(&cfg.providers, cfg.seed)?;
    check_prerequisites(&dataset, &metrics, cfg, &providers)?;
    let generator = providers
        .generator
        .as_ref()
        .ok_or_else(|| EvalError::InvalidConfig("providers.generator is required".into()))?
        .as_ref();

    // TF-IDF background stats come from the reference pool
    let corpus_stats = if metrics.contains(&MetricKind::TfidfCosine) {
        Some(CorpusStats::from_docs(
            dataset
                .items
                .iter()
                .flat_map(|i| i.references.iter())
                .map(String::as_str),
        ))
    } else {
        None
    };
    let ctx = MetricContext {
        corpus_stats: corpus_stats.as_ref(),
        embedder: providers.embedder.as_ref().map(|e| e as &dyn Embedder),
        nli: providers.nli.as_ref().map(|n| n as &dyn NliScorer),
        autorater: providers.autorater.as_deref(),
        rubric: cfg.rubric.as_ref(),
        ..Default::default()
    };

    let mut items = Vec::with_capacity(dataset.items.len());
    let mut consistency: BTreeMap<String, f64> = BTreeMap::new();
    for item in &dataset.items {
        // per-item randomness keyed by (run seed, item id)
        let mut state = cfg.seed ^ fnv1a64(item.id.as_bytes());
        let item_seed = splitmix64(&mut state);
        let gen_params = GenerationParams {
            seed: Some(item_seed),
            ..Default::default()
        };
        let mut record = ItemRecord {
            id: item.id.clone(),
            response: None,
            provider: None,
            metrics: BTreeMap::new(),
            failures: Vec::new(),
        };
        let response = match &cfg.methodology.self_consistency {
            Some(sc) => match self_consistency(
                &item.prompt,
                generator,
                sc,
                providers.embedder.as_ref().map(|e| e as &dyn Embedder),
            ) {
                Ok(r) => {
                    consistency.insert(item.id.clone(), r.agreement_rate);
                    record.provider = Some("mock/self_consistency".into());
                    Some(r.modal_response)
                }
                Err(e) => {
                    record.failures.push(format!("self_consistency: {e}"));
                    None
                }
            },
            None => match generator.generate(&item.prompt, &gen_params) {
                Ok(r) => {
                    record.provider = Some(r.provider);
                    Some(r.text)
                }
                Err(e) => {
                    record.failures.push(format!("generation: {e}"));
                    None
                }
            },
        };
        if let Some(text) = response {
            for &m in &metrics {
                match compute_metric(m, item, &text, &ctx) {
                    Ok(v) => {
                        record.metrics.insert(m.name().to_string(), v);
                    }
                    Err(e) => record.failures.push(format!("{}: {e}", m.name())),
                }
            }
            record.response = Some(text);
        }
        items.push(record);
    }

    let mut aggregates = BTreeMap::new();
    for &m in &metrics {
        let scores: Vec<f64> = items
            .iter()
            .filter_map(|r| r.metrics.get(m.name()).copied())
            .collect();
        if !scores.is_empty() {
            aggregates.insert(
                m.name().to_string(),
                Aggregate {
                    ci: mean_ci(&scores, cfg.confidence)?,
                    coverage: scores.len() as f64 / dataset.items.len() as f64,
                },
            );
        }
    }

    let mut methodology = MethodologySections::default();
    if let Some(sens) = &cfg.methodology.sensitivity {
        let opts = SensitivityOptions {
            top_n: sens.top_n,
            ..Default::default()
        };
        methodology.sensitivity = Some(sensitivity_analysis(
            &dataset,
            generator,
            &metrics,
            &sens.perturbations,
            &ctx,
            &opts,
        )?);
    }
    if let Some(abl) = &cfg.methodology.ablation {
        let templates = abl.templates.clone().unwrap_or_default();
        methodology.ablation = Some(crate::robustness::grounding_ablation(
            &dataset, generator, &metrics, &templates, &ctx,
        )?);
    }
    if let Some(probe_params) = &cfg.methodology.probes {
        let probes = generate_probes(probe_params)?;
        methodology.probes = Some(hallucination_and_nonresponse(
            &probes,
            generator,
            None,
            &default_refusal_patterns(),
        )?);
    }
    if !consistency.is_empty() {
        methodology.self_consistency = Some(consistency);
    }

    let config_hash = cfg.config_hash();
    let metric_scales = metrics
        .iter()
        .map(|&m| (m.name().to_string(), metric_scale(m, &ctx)))
        .collect();
    let report = EvalReport {
        report_version: 1,
        run_id: format!("{}-{}", &config_hash[..16], cfg.seed),
        dataset_name: dataset.name.clone(),
        dataset_version: dataset.version,
        config_hash,
        seed: cfg.seed,
        metrics: metrics.iter().map(|m| m.name().to_string()).collect(),
        metric_scales,
        items,
        aggregates,
        methodology,
        timing: Timing {
            wall_ms: started.elapsed().as_millis() as u64,
        },
    };
    if let Some(path) = &cfg.output.path {
        write_report_atomic(&report, path)?;
    }
    Ok(report)
}

/// Serialize and write via a same-directory temp file + rename, so two
/// runs with disjoint output paths never interfere and readers never see
/// a partial report.
pub fn write_report_atomic(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| EvalError::InvalidInput(e.to_string()))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "report".into()),
        std::process::id()
    ));
    std::fs::write(&tmp, json)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
