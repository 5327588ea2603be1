//! Command-line entry points. Exit codes: 0 success, 1 validation/config
//! error, 2 runtime failure, 3 significant regression found by compare.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evalframe::corpus::{load_dataset, validate_dataset};
use evalframe::harness::run::{run_eval, EvalReport, RunConfig};
use evalframe::quality::diversity::{diversity_report, DiversityParams};
use evalframe::quality::index::load_index;
use evalframe::quality::scan::{contamination_scan, ScanParams};
use evalframe::report::{
    compare_runs, render_report, ComparisonSelection, ReportFormat, TestChoice,
};
use evalframe::robustness::{
    default_refusal_patterns, generate_probes, hallucination_and_nonresponse,
};
use evalframe::stats::{required_sample_size, SampleSizeSpec};
use evalframe::EvalError;

#[derive(Parser)]
#[command(name = "evalframe", version, about = "Batch evaluation harness for LLM-reliant systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset against its invariants and list violations.
    Validate { dataset: PathBuf },
    /// Diversity and (optionally) contamination reporting for a dataset.
    Quality {
        dataset: PathBuf,
        /// Pre-built training-corpus index for contamination scanning.
        #[arg(long)]
        train_index: Option<PathBuf>,
    },
    /// Sample size for a target margin of error (normal approximation).
    Samplesize {
        #[arg(long)]
        confidence: f64,
        /// Anticipated metric value m-hat in [0,1].
        #[arg(long)]
        expected: f64,
        #[arg(long)]
        margin: f64,
    },
    /// Execute a full evaluation run from a JSON config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Compare two completed run reports with paired tests.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long, default_value = "auto")]
        test: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Run hallucination / non-response probes from a run config.
    Probe { config: PathBuf },
    /// Run perturbation sensitivity analysis from a run config.
    Sensitivity { config: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_REGRESSION: u8 = 3;

fn classify(err: &EvalError) -> u8 {
    match err {
        EvalError::Parse { .. }
        | EvalError::InvalidDataset(_)
        | EvalError::InvalidConfig(_)
        | EvalError::InvalidInput(_)
        | EvalError::Incomparable(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<u8, EvalError> {
    match cli.command {
        Command::Validate { dataset } => {
            let ds = load_dataset(&dataset)?;
            let violations = validate_dataset(&ds);
            if violations.is_empty() {
                println!("ok: {} v{} ({} items)", ds.name, ds.version, ds.items.len());
                Ok(0)
            } else {
                for v in &violations {
                    match &v.item_id {
                        Some(id) => println!("violation [{}] item {}: {}", v.rule, id, v.detail),
                        None => println!("violation [{}]: {}", v.rule, v.detail),
                    }
                }
                Ok(EXIT_CONFIG)
            }
        }
        Command::Quality {
            dataset,
            train_index,
        } => {
            let ds = load_dataset(&dataset)?;
            let div = diversity_report(&ds, &DiversityParams::default())?;
            println!("dataset {} v{} ({} items)", ds.name, ds.version, ds.items.len());
            match &div.pairwise_similarity {
                Some(p) => println!(
                    "pairwise similarity: mean {:.4} median {:.4} p95 {:.4} over {} pairs{}",
                    p.mean,
                    p.median,
                    p.p95,
                    p.n_pairs,
                    if p.sampled { " (sampled)" } else { "" }
                ),
                None => println!("pairwise similarity: no data (fewer than 2 items)"),
            }
            println!("near-duplicate pairs: {}", div.near_duplicate_pairs.len());
            println!("clusters: {}", div.cluster_count);
            println!("tag entropy: {:.4}", div.tag_entropy);
            if let Some(path) = train_index {
                let index = load_index(&path)?;
                let flags = contamination_scan(&ds, &index, &ScanParams::default())?;
                println!("contamination flags: {}", flags.len());
                for f in &flags {
                    println!(
                        "  {} [{:?}]{}: {}",
                        f.item_id,
                        f.evidence,
                        if f.advisory { " (advisory)" } else { "" },
                        f.detail
                    );
                }
            }
            Ok(0)
        }
        Command::Samplesize {
            confidence,
            expected,
            margin,
        } => {
            let spec = SampleSizeSpec {
                confidence: Some(confidence),
                z: None,
                expected_metric: expected,
                margin,
            };
            let n = required_sample_size(&spec)?;
            println!("{}", n.n);
            if n.degenerate {
                eprintln!("note: expected metric at a boundary; variance estimate degenerate");
            }
            Ok(0)
        }
        Command::Run { config, format } => {
            let format = ReportFormat::parse(&format)?;
            let cfg = RunConfig::from_path(&config)?;
            let report = run_eval(&cfg)?;
            print!("{}", render_report(&report, format)?);
            Ok(0)
        }
        Command::Compare {
            report_a,
            report_b,
            metric,
            test,
            alpha,
        } => {
            let a = EvalReport::from_path(&report_a)?;
            let b = EvalReport::from_path(&report_b)?;
            let selection = ComparisonSelection {
                metric,
                test: Some(TestChoice::parse(&test)?),
                alpha,
            };
            let results = compare_runs(&a, &b, &selection)?;
            let mut regression = false;
            for r in &results {
                println!("{}", r.verdict);
                if r.regression {
                    regression = true;
                    println!("  REGRESSION at alpha {alpha}");
                }
            }
            Ok(if regression { EXIT_REGRESSION } else { 0 })
        }
        Command::Probe { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let params = cfg.methodology.probes.clone().ok_or_else(|| {
                EvalError::InvalidConfig("config has no methodology.probes section".into())
            })?;
            let providers = evalframe::harness::run::build_providers(&cfg.providers, cfg.seed)?;
            let generator = providers.generator.as_deref().ok_or_else(|| {
                EvalError::InvalidConfig("providers.generator is required".into())
            })?;
            let probes = generate_probes(&params)?;
            let report =
                hallucination_and_nonresponse(&probes, generator, None, &default_refusal_patterns())?;
            println!("hallucination rate: {:.3}", report.hallucination_rate);
            println!(
                "undesirable non-response rate: {:.3}",
                report.undesirable_nonresponse_rate
            );
            println!("provider failures: {}", report.provider_failures);
            Ok(0)
        }
        Command::Sensitivity { config } => {
            let cfg = RunConfig::from_path(&config)?;
            let sens = cfg.methodology.sensitivity.clone().ok_or_else(|| {
                EvalError::InvalidConfig("config has no methodology.sensitivity section".into())
            })?;
            let dataset = load_dataset(&cfg.dataset.path)?;
            let metrics = cfg
                .metrics
                .iter()
                .map(|s| evalframe::metric::MetricKind::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            let providers = evalframe::harness::run::build_providers(&cfg.providers, cfg.seed)?;
            let generator = providers.generator.as_deref().ok_or_else(|| {
                EvalError::InvalidConfig("providers.generator is required".into())
            })?;
            let ctx = evalframe::metric::MetricContext::default();
            let opts = evalframe::robustness::SensitivityOptions {
                top_n: sens.top_n,
                ..Default::default()
            };
            let report = evalframe::robustness::sensitivity_analysis(
                &dataset,
                generator,
                &metrics,
                &sens.perturbations,
                &ctx,
                &opts,
            )?;
            println!("coverage: {:.1}%", report.coverage * 100.0);
            for (metric, kinds) in &report.per_metric {
                for (kind, delta) in kinds {
                    println!(
                        "{metric} / {kind}: {:.4} -> {:.4} (delta {:+.4})",
                        delta.baseline, delta.perturbed, delta.delta
                    );
                }
            }
            for item in &report.most_affected {
                println!(
                    "  most affected: {} {} {} {:+.4}",
                    item.item_id, item.metric, item.kind, item.delta
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
