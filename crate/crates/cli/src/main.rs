//! `das`: run detector-aware synthesis experiments and export prompts.
//!
//! Exit codes: 0 success, 1 configuration, load or output error, 2 some cells
//! failed (the report is still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use das_core::detectors::DetectorKind;
use das_core::enhance::AnchorMode;
use das_core::harness::config::{parse_detectors, parse_seeds, DatasetSource, EmitFormats};
use das_core::harness::report::{parse_cells_csv, recompute_aggregates};
use das_core::harness::{self, emit_report, ExperimentConfig, RunReport};
use das_core::prompt::{assemble_prompt_mode, builtin_policy_text, PromptMode};
use das_core::synthesis::GeneratorTag;

#[derive(Parser, Debug)]
#[command(name = "das", version, about = "Detector-aware hard-anomaly synthesis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Baseline vs enhanced detector with the configured generator.
    Run(RunArgs),
    /// Compare DAS with the Gaussian, uniform and SMOTE generators.
    CompareSynthesis(RunArgs),
    /// Compare DAS with its Generic, Simple and Random ablations.
    Ablation(RunArgs),
    /// Enhance one base detector with every kind's policy.
    CrossDetector(CrossArgs),
    /// Print or export the prompt bundle for a detector.
    Prompt(PromptArgs),
    /// Summarize a written report and check its aggregates.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path or `builtin:<name>` / `builtin:suite`; repeatable or comma separated.
    #[arg(long)]
    dataset: Vec<String>,
    #[arg(long)]
    label_col: Option<String>,
    /// Detector kinds, comma separated.
    #[arg(long)]
    detector: Option<String>,
    /// Generator tag for `run`.
    #[arg(long)]
    synthesis: Option<String>,
    /// Seed list (`0,1,2`) or a count (`5`).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    n_syn_frac: Option<f64>,
    #[arg(long)]
    train_frac: Option<f64>,
    /// `batch` or `train`.
    #[arg(long)]
    anchor_mode: Option<String>,
    /// Policy document replacing the built-in policy for its detector kind; repeatable.
    #[arg(long)]
    policy: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats: json, csv.
    #[arg(long)]
    emit: Option<String>,
    /// Write per-cell score files under `<out>/scores`.
    #[arg(long)]
    export_scores: bool,
}

#[derive(Args, Debug)]
struct CrossArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Base detector.
    #[arg(long, default_value = "ocsvm")]
    base: String,
    /// Policy kinds, comma separated.
    #[arg(long, default_value = "iforest,pca,ocsvm")]
    policies: String,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[arg(long)]
    detector: String,
    /// Withhold the detector description.
    #[arg(long)]
    generic: bool,
    /// Replace the built-in description with this file's text.
    #[arg(long)]
    description: Option<PathBuf>,
    /// Print the built-in policy document instead of the prompt.
    #[arg(long)]
    policy: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding report.json or cells.csv.
    #[arg(long)]
    from: PathBuf,
    /// Re-emit into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit: Option<String>,
}

/// A failure that maps to exit code 1.
#[derive(Debug)]
struct ConfigFailure(anyhow::Error);

fn config_err<T>(r: Result<T>) -> std::result::Result<T, ConfigFailure> {
    r.map_err(ConfigFailure)
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if !args.dataset.is_empty() {
        let mut sources = Vec::new();
        for d in &args.dataset {
            sources.extend(DatasetSource::parse_list(d, None)?);
        }
        cfg.datasets = sources;
    }
    if let Some(v) = &args.label_col {
        cfg.label_column = v.clone();
    }
    if let Some(v) = &args.detector {
        cfg.detectors = parse_detectors(v)?;
    }
    if let Some(v) = &args.synthesis {
        cfg.synthesis = GeneratorTag::parse(v).with_context(|| format!("unknown synthesis tag {v:?}"))?;
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = parse_seeds(v)?;
    }
    if let Some(v) = args.n_syn_frac {
        cfg.n_syn_fraction = v;
    }
    if let Some(v) = args.train_frac {
        cfg.train_fraction = v;
    }
    if let Some(v) = &args.anchor_mode {
        cfg.anchor_mode = AnchorMode::parse(v).with_context(|| format!("unknown anchor mode {v:?}"))?;
    }
    for p in &args.policy {
        cfg.load_policy_file(p)?;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &args.emit {
        cfg.emit = EmitFormats::parse(v)?;
    }
    if args.export_scores {
        cfg.export_scores = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_and_summarize(report: &RunReport, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let written = emit_report(report, &cfg.out_dir, cfg.emit, cfg.export_scores)?;
    print!("{}", report.summary_text());
    println!("wrote {} file(s) to {}", written.len(), cfg.out_dir.display());
    let failed = report.failed_cells();
    if failed > 0 {
        for c in report.cells.iter().filter(|c| !c.is_ok()) {
            eprintln!(
                "cell {}/{}/seed {}/{} failed: {}",
                c.dataset,
                c.detector,
                c.seed,
                c.tag,
                c.error.as_deref().unwrap_or("unknown error")
            );
        }
        eprintln!("{failed} of {} cells failed", report.cells.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

type Runner = fn(&ExperimentConfig) -> std::result::Result<RunReport, harness::HarnessError>;

fn run_experiment(args: &RunArgs, runner: Runner) -> std::result::Result<Result<ExitCode>, ConfigFailure> {
    let cfg = config_err(build_config(args))?;
    let report = config_err(runner(&cfg).map_err(anyhow::Error::from))?;
    Ok(write_and_summarize(&report, &cfg))
}

fn cross_detector(args: &CrossArgs) -> std::result::Result<Result<ExitCode>, ConfigFailure> {
    let mut cfg = config_err(build_config(&args.run))?;
    let base: DetectorKind = config_err(args.base.parse::<DetectorKind>().map_err(anyhow::Error::from))?;
    let policies = config_err(parse_detectors(&args.policies).map_err(anyhow::Error::from))?;
    if policies.is_empty() {
        return Err(ConfigFailure(anyhow::anyhow!("--policies needs at least one kind")));
    }
    cfg.detectors = vec![base];
    let report = config_err(harness::run_cross_detector(&cfg, base, &policies).map_err(anyhow::Error::from))?;
    Ok(write_and_summarize(&report, &cfg))
}

fn prompt(args: &PromptArgs) -> std::result::Result<Result<ExitCode>, ConfigFailure> {
    let kind: DetectorKind = config_err(args.detector.parse::<DetectorKind>().map_err(anyhow::Error::from))?;
    let description = match &args.description {
        Some(p) => Some(config_err(
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        )?),
        None => None,
    };
    let text = if args.policy {
        builtin_policy_text(kind).to_string()
    } else {
        let mode = if args.generic { PromptMode::Generic } else { PromptMode::Full };
        assemble_prompt_mode(kind, description.as_deref(), mode).to_text()
    };
    Ok(match &args.out {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map(|_| ExitCode::SUCCESS),
        None => {
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    })
}

fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RunReport::from_json(&text)?)
}

fn report(args: &ReportArgs) -> std::result::Result<Result<ExitCode>, ConfigFailure> {
    let emit = match &args.emit {
        Some(v) => config_err(EmitFormats::parse(v).map_err(anyhow::Error::from))?,
        None => EmitFormats::default(),
    };
    Ok((|| {
        let report = load_report(&args.from)?;
        let recomputed = recompute_aggregates(&report.cells);
        if recomputed != report.aggregates {
            bail!("aggregates in report.json do not match its cell rows");
        }
        let cells_path = args.from.join("cells.csv");
        if cells_path.exists() {
            let cells = parse_cells_csv(&std::fs::read_to_string(&cells_path)?)?;
            if recompute_aggregates(&cells) != report.aggregates {
                bail!("aggregates recomputed from cells.csv differ from report.json");
            }
        }
        print!("{}", report.summary_text());
        println!("aggregates match cell rows");
        if let Some(out) = &args.out {
            let written = emit_report(&report, out, emit, false)?;
            println!("wrote {} file(s) to {}", written.len(), out.display());
        }
        Ok(if report.failed_cells() > 0 {
            ExitCode::from(2)
        } else {
            ExitCode::SUCCESS
        })
    })())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => run_experiment(a, harness::run_pipeline),
        Command::CompareSynthesis(a) => run_experiment(a, harness::run_synthesis_comparison),
        Command::Ablation(a) => run_experiment(a, harness::run_ablation),
        Command::CrossDetector(a) => cross_detector(a),
        Command::Prompt(a) => prompt(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(ConfigFailure(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
    }
}
