//! Report rendering (canonical JSON + human-readable text) and run-to-run
//! comparison with scale-appropriate paired tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::harness::run::EvalReport;
use crate::metric::MetricScale;
use crate::stats::{mcnemar, paired_t, wilcoxon_signed_rank, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Text,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(EvalError::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

/// Render a report. JSON output is canonical (key-sorted) and byte-stable
/// for a fixed report; text is a human-readable summary.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map_err(|e| EvalError::InvalidInput(e.to_string())),
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(report: &EvalReport) -> Result<String> {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "run {}", report.run_id);
    let _ = writeln!(
        w,
        "dataset {} version {}",
        report.dataset_name, report.dataset_version
    );
    let _ = writeln!(w, "config hash {}", report.config_hash);
    let _ = writeln!(w, "seed {}", report.seed);
    let _ = writeln!(w, "items {}", report.items.len());
    let _ = writeln!(w);
    let _ = writeln!(w, "metrics:");
    for name in &report.metrics {
        match report.aggregates.get(name) {
            Some(agg) if agg.coverage > 0.0 => {
                let ci = match (agg.ci.lower, agg.ci.upper) {
                    (Some(lo), Some(hi)) => format!(" [{lo:.4}, {hi:.4}]"),
                    _ => String::new(),
                };
                let _ = writeln!(
                    w,
                    "  {name}: {:.4}{ci}  coverage {:.1}%",
                    agg.ci.mean,
                    agg.coverage * 100.0
                );
            }
            // honest reporting: absence of scores is not a zero score
            _ => {
                let _ = writeln!(w, "  {name}: no data");
            }
        }
    }
    let failures: usize = report.items.iter().map(|i| i.failures.len()).sum();
    if failures > 0 {
        let _ = writeln!(w, "\nfailures: {failures} across items");
    }
    let m = &report.methodology;
    if let Some(s) = &m.sensitivity {
        let _ = writeln!(w, "\nsensitivity (coverage {:.1}%):", s.coverage * 100.0);
        for (metric, kinds) in &s.per_metric {
            for (kind, delta) in kinds {
                let _ = writeln!(
                    w,
                    "  {metric} / {kind}: {:.4} -> {:.4} (delta {:+.4})",
                    delta.baseline, delta.perturbed, delta.delta
                );
            }
        }
    }
    if let Some(a) = &m.ablation {
        if a.items_evaluated == 0 {
            let _ = writeln!(w, "\ngrounding ablation: 0 items evaluated");
        } else {
            let _ = writeln!(w, "\ngrounding ablation ({} items):", a.items_evaluated);
            for (metric, test) in &a.tests {
                let _ = writeln!(
                    w,
                    "  {metric}: {} p = {:.4}",
                    test.test_name, test.p_value
                );
            }
        }
    }
    if let Some(p) = &m.probes {
        let _ = writeln!(
            w,
            "\nprobes: hallucination rate {:.3}, undesirable non-response rate {:.3}",
            p.hallucination_rate, p.undesirable_nonresponse_rate
        );
    }
    if let Some(sc) = &m.self_consistency {
        let mean: f64 = sc.values().sum::<f64>() / sc.len().max(1) as f64;
        let _ = writeln!(w, "\nself-consistency: mean agreement {mean:.3}");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestChoice {
    Auto,
    Mcnemar,
    Ttest,
    Wilcoxon,
}

impl TestChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(TestChoice::Auto),
            "mcnemar" => Ok(TestChoice::Mcnemar),
            "ttest" => Ok(TestChoice::Ttest),
            "wilcoxon" => Ok(TestChoice::Wilcoxon),
            other => Err(EvalError::InvalidConfig(format!("unknown test {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSelection {
    /// Restrict to one metric; all shared metrics otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default)]
    pub test: Option<TestChoice>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for ComparisonSelection {
    fn default() -> Self {
        ComparisonSelection {
            metric: None,
            test: None,
            alpha: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub metric: String,
    pub scale: MetricScale,
    pub mean_a: f64,
    pub mean_b: f64,
    pub test: TestResult,
    pub n_paired: usize,
    /// Items present in only one run, excluded from the pairing.
    pub excluded_items: usize,
    /// B significantly worse than A at the configured alpha.
    pub regression: bool,
    pub verdict: String,
}

fn paired_scores(a: &EvalReport, b: &EvalReport, metric: &str) -> (Vec<f64>, Vec<f64>, usize) {
    let by_id: BTreeMap<&str, f64> = b
        .items
        .iter()
        .filter_map(|r| r.metrics.get(metric).map(|&v| (r.id.as_str(), v)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in &a.items {
        if let (Some(&va), Some(&vb)) = (rec.metrics.get(metric), by_id.get(rec.id.as_str())) {
            xs.push(va);
            ys.push(vb);
        }
    }
    let scored = |r: &EvalReport| {
        r.items
            .iter()
            .filter(|rec| rec.metrics.contains_key(metric))
            .count()
    };
    let excluded = scored(a) + scored(b) - 2 * xs.len();
    (xs, ys, excluded)
}

/// Compare two completed runs metric by metric with a paired test chosen
/// from the metric's declared scale (binary -> McNemar, Likert ->
/// Wilcoxon, continuous -> paired t by default).
pub fn compare_runs(
    a: &EvalReport,
    b: &EvalReport,
    selection: &ComparisonSelection,
) -> Result<Vec<ComparisonResult>> {
    if a.dataset_name != b.dataset_name || a.dataset_version != b.dataset_version {
        return Err(EvalError::Incomparable(format!(
            "dataset mismatch: {} v{} vs {} v{}",
            a.dataset_name, a.dataset_version, b.dataset_name, b.dataset_version
        )));
    }
    let metrics: Vec<String> = match &selection.metric {
        Some(m) => {
            if !a.metrics.contains(m) || !b.metrics.contains(m) {
                return Err(EvalError::Incomparable(format!(
                    "metric {m:?} not present in both runs"
                )));
            }
            vec![m.clone()]
        }
        None => a
            .metrics
            .iter()
            .filter(|m| b.metrics.contains(m))
            .cloned()
            .collect(),
    };
    if metrics.is_empty() {
        return Err(EvalError::Incomparable("no shared metrics".into()));
    }

    let mut results = Vec::new();
    for metric in metrics {
        let (xs, ys, excluded) = paired_scores(a, b, &metric);
        if xs.is_empty() {
            return Err(EvalError::Incomparable(format!(
                "no paired per-item scores for metric {metric:?}"
            )));
        }
        let scale = *a
            .metric_scales
            .get(&metric)
            .or_else(|| b.metric_scales.get(&metric))
            .unwrap_or(&MetricScale::Continuous);
        let choice = selection.test.unwrap_or(TestChoice::Auto);
        let choice = match (choice, scale) {
            (TestChoice::Auto, MetricScale::Binary) => TestChoice::Mcnemar,
            (TestChoice::Auto, MetricScale::Likert) => TestChoice::Wilcoxon,
            (TestChoice::Auto, MetricScale::Continuous) => TestChoice::Ttest,
            (c, _) => c,
        };
        let test = match choice {
            TestChoice::Mcnemar => {
                let paired: Vec<(u8, u8)> = xs
                    .iter()
                    .zip(&ys)
                    .map(|(&x, &y)| {
                        let to_bin = |v: f64| -> Result<u8> {
                            if v == 0.0 || v == 1.0 {
                                Ok(v as u8)
                            } else {
                                Err(EvalError::Incomparable(format!(
                                    "mcnemar needs 0/1 scores; metric {metric:?} has {v}"
                                )))
                            }
                        };
                        Ok((to_bin(x)?, to_bin(y)?))
                    })
                    .collect::<Result<_>>()?;
                mcnemar(&paired)?
            }
            TestChoice::Wilcoxon => wilcoxon_signed_rank(&xs, &ys)?,
            TestChoice::Ttest => paired_t(&xs, &ys)?,
            TestChoice::Auto => unreachable!("auto resolved above"),
        };
        let mean_a = xs.iter().sum::<f64>() / xs.len() as f64;
        let mean_b = ys.iter().sum::<f64>() / ys.len() as f64;
        let significant = test.significant(selection.alpha);
        let regression = significant && mean_b < mean_a;
        let effect = test
            .effect_size
            .as_ref()
            .map(|e| format!("{} = {:.4}", e.label, e.value))
            .unwrap_or_else(|| "no effect size".into());
        let direction = if mean_b > mean_a {
            "B above A"
        } else if mean_b < mean_a {
            "B below A"
        } else {
            "no mean difference"
        };
        let verdict = format!(
            "{metric}: {direction} ({mean_a:.4} -> {mean_b:.4}), {} p = {:.4}, {effect}; \
             a low p-value does not indicate the magnitude of the difference — \
             judge practical significance from the effect size",
            test.test_name, test.p_value
        );
        results.push(ComparisonResult {
            metric,
            scale,
            mean_a,
            mean_b,
            test,
            n_paired: xs.len(),
            excluded_items: excluded,
            regression,
            verdict,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{Aggregate, ItemRecord, MethodologySections, Timing};
    use crate::stats::mean_ci;

    fn report(name: &str, version: u64, metric: &str, scale: MetricScale, scores: &[(&str, f64)]) -> EvalReport {
        let items: Vec<ItemRecord> = scores
            .iter()
            .map(|(id, v)| ItemRecord {
                id: id.to_string(),
                response: Some("r".into()),
                provider: Some("mock".into()),
                metrics: BTreeMap::from([(metric.to_string(), *v)]),
                failures: Vec::new(),
            })
            .collect();
        let vals: Vec<f64> = scores.iter().map(|(_, v)| *v).collect();
        EvalReport {
            report_version: 1,
            run_id: "t".into(),
            dataset_name: name.into(),
            dataset_version: version,
            config_hash: "deadbeef".into(),
            seed: 0,
            metrics: vec![metric.to_string()],
            metric_scales: BTreeMap::from([(metric.to_string(), scale)]),
            aggregates: BTreeMap::from([(
                metric.to_string(),
                Aggregate {
                    ci: mean_ci(&vals, 0.95).unwrap(),
                    coverage: 1.0,
                },
            )]),
            items,
            methodology: MethodologySections::default(),
            timing: Timing { wall_ms: 0 },
        }
    }

    #[test]
    fn identical_reports_p_one() {
        let a = report("d", 1, "rouge1", MetricScale::Continuous, &[("a", 0.5), ("b", 0.7), ("c", 0.9)]);
        let res = compare_runs(&a, &a, &ComparisonSelection::default()).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].test.p_value, 1.0);
        assert!(!res[0].regression);
    }

    #[test]
    fn version_mismatch_is_hard_error() {
        let a = report("d", 1, "rouge1", MetricScale::Continuous, &[("a", 0.5)]);
        let b = report("d", 2, "rouge1", MetricScale::Continuous, &[("a", 0.5)]);
        assert!(matches!(
            compare_runs(&a, &b, &ComparisonSelection::default()),
            Err(EvalError::Incomparable(_))
        ));
    }

    #[test]
    fn constant_shift_flagged_degenerate_zero_p() {
        let scores_a = [("a", 0.1), ("b", 0.3), ("c", 0.5), ("d", 0.2)];
        let scores_b: Vec<(&str, f64)> =
            scores_a.iter().map(|(id, v)| (*id, v + 0.2)).collect();
        let a = report("d", 1, "rouge1", MetricScale::Continuous, &scores_a);
        let b = report("d", 1, "rouge1", MetricScale::Continuous, &scores_b);
        let res = compare_runs(&a, &b, &ComparisonSelection::default()).unwrap();
        assert_eq!(res[0].test.p_value, 0.0);
        assert!(res[0].test.method_note.contains("zero-variance"));
        assert!(!res[0].regression); // improvement, not regression
        let res = compare_runs(&b, &a, &ComparisonSelection::default()).unwrap();
        assert!(res[0].regression);
    }

    #[test]
    fn binary_scale_selects_mcnemar() {
        // b = 15 (A right, B wrong), c = 5
        let mut scores_a = Vec::new();
        let mut scores_b = Vec::new();
        let mut ids = Vec::new();
        for i in 0..40 {
            ids.push(format!("i{i}"));
        }
        for (i, id) in ids.iter().enumerate() {
            let (x, y) = if i < 15 {
                (1.0, 0.0)
            } else if i < 20 {
                (0.0, 1.0)
            } else if i < 30 {
                (1.0, 1.0)
            } else {
                (0.0, 0.0)
            };
            scores_a.push((id.as_str(), x));
            scores_b.push((id.as_str(), y));
        }
        let a = report("d", 1, "autorater_pointwise", MetricScale::Binary, &scores_a);
        let b = report("d", 1, "autorater_pointwise", MetricScale::Binary, &scores_b);
        let res = compare_runs(&a, &b, &ComparisonSelection::default()).unwrap();
        assert!(res[0].test.test_name.starts_with("mcnemar"));
        assert!((res[0].test.p_value - 0.0414).abs() < 0.0005);
        // antisymmetry: swapping runs preserves the p-value
        let rev = compare_runs(&b, &a, &ComparisonSelection::default()).unwrap();
        assert_eq!(res[0].test.p_value, rev[0].test.p_value);
    }

    #[test]
    fn likert_scale_selects_wilcoxon() {
        let a = report("d", 1, "autorater_pointwise", MetricScale::Likert, &[("a", 3.0), ("b", 4.0), ("c", 2.0), ("d", 5.0), ("e", 3.0), ("f", 4.0)]);
        let b = report("d", 1, "autorater_pointwise", MetricScale::Likert, &[("a", 4.0), ("b", 4.0), ("c", 3.0), ("d", 5.0), ("e", 4.0), ("f", 5.0)]);
        let res = compare_runs(&a, &b, &ComparisonSelection::default()).unwrap();
        assert!(res[0].test.test_name.starts_with("wilcoxon"));
    }

    #[test]
    fn missing_items_excluded_and_counted() {
        let a = report("d", 1, "rouge1", MetricScale::Continuous, &[("a", 0.5), ("b", 0.7), ("c", 0.9)]);
        let b = report("d", 1, "rouge1", MetricScale::Continuous, &[("a", 0.5), ("b", 0.7), ("x", 0.1)]);
        let res = compare_runs(&a, &b, &ComparisonSelection::default()).unwrap();
        assert_eq!(res[0].n_paired, 2);
        assert_eq!(res[0].excluded_items, 2);
    }

    #[test]
    fn text_rendering_contract() {
        let mut r = report("d", 3, "rouge1", MetricScale::Continuous, &[("a", 0.5), ("b", 0.7)]);
        r.metrics.push("bleu".into()); // configured but never scored
        let text = render_report(&r, ReportFormat::Text).unwrap();
        assert!(text.contains("dataset d version 3"));
        assert!(text.contains("config hash deadbeef"));
        assert!(text.contains("bleu: no data"));
        assert!(!text.contains("bleu: 0.0"));
        let json = render_report(&r, ReportFormat::Json).unwrap();
        let parsed: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.dataset_version, 3);
        // byte-stable
        assert_eq!(json, render_report(&r, ReportFormat::Json).unwrap());
    }
}
