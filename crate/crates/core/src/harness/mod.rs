//! Experiment runner.
//!
//! A run is a grid of cells, one per (dataset, detector, seed, generator
//! tag). Cells sharing (dataset, detector, seed) share the split and the base
//! detector, and form one work unit on the rayon pool; results are assembled
//! in grid order, so the report does not depend on the number of workers.
//!
//! Per-seed randomness: the split uses the seed itself, and the detector,
//! synthesis and forest use `derive_seed(seed, 1..=3)`.

pub mod benchmark;
pub mod config;
pub mod report;

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{self, DataError, Dataset};
use crate::detectors::{DetectorKind, FittedDetector};
use crate::enhance::{augment, fuse, AnchorMode, EnhancedDetector, ForestParams};
use crate::rng::derive_seed;
use crate::stats::{evaluate, MetricResult};
use crate::synthesis::{
    ablation_variant, gaussian_noise_synthesis, generate_hard_anomalies, random_uniform_synthesis, smote_synthesis,
    Ablation, GeneratorTag, SynthesizedSet,
};
pub use config::{ConfigError, DatasetSource, EmitFormats, ExperimentConfig};
pub use report::{emit_report, recompute_aggregates, AggregateRow, CellResult, CrossTable, RunKind, RunReport, ScoreDump};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset {dataset}: {source}")]
    Load { dataset: String, source: DataError },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot read report: {0}")]
    Report(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset {
    pub name: String,
    pub source: DatasetSource,
    pub data: Dataset,
}

pub fn load_dataset(source: &DatasetSource, label_column: &str) -> Result<NamedDataset, HarnessError> {
    let data = match source {
        DatasetSource::Builtin(name) => {
            let spec = benchmark::suite_spec(name).ok_or_else(|| {
                HarnessError::Config(ConfigError::BadValue {
                    key: "datasets".into(),
                    value: format!("builtin:{name}"),
                    reason: "unknown builtin dataset".into(),
                })
            })?;
            benchmark::planted_dataset(&spec)
        }
        DatasetSource::Csv(path) => data::load_csv(path, Some(label_column)).map_err(|source| HarnessError::Load {
            dataset: path.display().to_string(),
            source,
        })?,
    };
    Ok(NamedDataset {
        name: source.name(),
        source: source.clone(),
        data,
    })
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<NamedDataset>, HarnessError> {
    cfg.datasets.iter().map(|s| load_dataset(s, &cfg.label_column)).collect()
}

/// One synthesis variant evaluated against a shared base detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub tag: GeneratorTag,
    /// For cross-detector runs: whose policy drives DAS synthesis.
    pub policy_kind: Option<DetectorKind>,
}

impl Variant {
    pub fn tag(tag: GeneratorTag) -> Self {
        Self { tag, policy_kind: None }
    }
}

pub const SYNTHESIS_TAGS: [GeneratorTag; 4] = [
    GeneratorTag::Das,
    GeneratorTag::Gaussian,
    GeneratorTag::RandomUniform,
    GeneratorTag::Smote,
];

pub const ABLATION_TAGS: [GeneratorTag; 4] = [
    GeneratorTag::Das,
    GeneratorTag::AblationGeneric,
    GeneratorTag::AblationSimple,
    GeneratorTag::AblationRandom,
];

/// Seed for a per-cell component.
pub fn component_seed(seed: u64, component: Component) -> u64 {
    derive_seed(seed, component as u64)
}

#[derive(Debug, Clone, Copy)]
pub enum Component {
    Detector = 1,
    Synthesis = 2,
    Forest = 3,
}

fn synthesize(
    cfg: &ExperimentConfig,
    variant: Variant,
    det: &FittedDetector,
    train: &Dataset,
    n: usize,
    seed: u64,
) -> Result<SynthesizedSet, String> {
    let syn_seed = component_seed(seed, Component::Synthesis);
    let policy = cfg.policy(variant.policy_kind.unwrap_or(det.kind())).with_seed(syn_seed);
    let out = match variant.tag {
        GeneratorTag::Das => generate_hard_anomalies(n, det, train, &policy),
        GeneratorTag::Gaussian => gaussian_noise_synthesis(train, n, cfg.sigma_scale, syn_seed),
        GeneratorTag::RandomUniform => random_uniform_synthesis(train, n, cfg.uniform_expansion, syn_seed),
        GeneratorTag::Smote => smote_synthesis(train, n, cfg.smote_k, syn_seed),
        GeneratorTag::AblationGeneric => ablation_variant(Ablation::Generic, n, det, train, &policy),
        GeneratorTag::AblationSimple => ablation_variant(Ablation::Simple, n, det, train, &policy),
        GeneratorTag::AblationRandom => ablation_variant(Ablation::Random, n, det, train, &policy),
    };
    out.map_err(|e| e.to_string())
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)))
}

/// Fraction of synthesized rows identical to some training row.
fn duplicate_fraction(points: ArrayView2<'_, f64>, train: ArrayView2<'_, f64>) -> f64 {
    if points.nrows() == 0 {
        return 0.0;
    }
    let dup = points
        .rows()
        .into_iter()
        .filter(|p| train.rows().into_iter().any(|t| t == *p))
        .count();
    dup as f64 / points.nrows() as f64
}

/// Classifier AUC-ROC within this distance of 0.5 marks the synthesis as
/// degenerate.
pub const DEGENERATE_AUC_MARGIN: f64 = 0.05;

struct UnitContext<'a> {
    cfg: &'a ExperimentConfig,
    dataset: &'a NamedDataset,
    detector: DetectorKind,
    seed: u64,
}

impl UnitContext<'_> {
    fn blank(&self, variant: Variant) -> CellResult {
        CellResult::empty(&self.dataset.name, self.detector, self.seed, variant.tag, variant.policy_kind)
    }

    fn failed(&self, variant: Variant, msg: &str) -> CellResult {
        CellResult {
            error: Some(msg.to_string()),
            ..self.blank(variant)
        }
    }

    fn run(&self, variants: &[Variant]) -> Vec<CellResult> {
        let cfg = self.cfg;
        let split = match data::split_one_class(&self.dataset.data, cfg.train_fraction, self.seed) {
            Ok(s) => s,
            Err(e) => return variants.iter().map(|&v| self.failed(v, &format!("split: {e}"))).collect(),
        };
        let params = cfg
            .detector_params
            .clone()
            .with_seed(component_seed(self.seed, Component::Detector));
        let det = match FittedDetector::fit(self.detector, &split.train, &params) {
            Ok(d) => d,
            Err(e) => return variants.iter().map(|&v| self.failed(v, &format!("detector: {e}"))).collect(),
        };
        let test_labels = split.test.labels().expect("split keeps labels").to_vec();
        let baseline = det
            .predict_score(&split.test)
            .map_err(|e| e.to_string())
            .and_then(|s| evaluate(&s, &test_labels).map(|m| (s, m)).map_err(|e| e.to_string()));
        let (base_scores, base_metrics) = match baseline {
            Ok(b) => b,
            Err(e) => return variants.iter().map(|&v| self.failed(v, &format!("baseline: {e}"))).collect(),
        };
        variants
            .iter()
            .map(|&v| {
                self.cell(v, &det, &split.train, &split.test, &test_labels, &base_scores, base_metrics)
                    .unwrap_or_else(|e| self.failed(v, &e))
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn cell(
        &self,
        variant: Variant,
        det: &FittedDetector,
        train: &Dataset,
        test: &Dataset,
        test_labels: &[u8],
        base_scores: &[f64],
        base_metrics: MetricResult,
    ) -> Result<CellResult, String> {
        let cfg = self.cfg;
        let n_syn = cfg.n_syn(train.n_rows());
        let syn = synthesize(cfg, variant, det, train, n_syn, self.seed).map_err(|e| format!("synthesis: {e}"))?;
        let syn_base = det.score_matrix(syn.points.view()).map_err(|e| e.to_string())?;
        let train_scores = det.predict_score(train).map_err(|e| e.to_string())?;
        let mut sorted_train = train_scores.clone();
        sorted_train.sort_by(f64::total_cmp);
        let hardness_rank = (!syn_base.is_empty()).then(|| {
            let n = sorted_train.len() as f64;
            syn_base
                .iter()
                .map(|s| sorted_train.partition_point(|t| t <= s) as f64 / n)
                .sum::<f64>()
                / syn_base.len() as f64
        });
        let mean_hardness = (!syn_base.is_empty()).then(|| syn_base.iter().sum::<f64>() / syn_base.len() as f64);

        let aug = augment(train, &syn).map_err(|e| format!("augment: {e}"))?;
        let forest = ForestParams {
            n_trees: cfg.forest_trees,
            seed: component_seed(self.seed, Component::Forest),
            ..ForestParams::default()
        };
        let enhanced = EnhancedDetector::fit(det.clone(), &aug, &forest).map_err(|e| format!("enhance: {e}"))?;
        let comp = enhanced
            .component_scores(test.features(), cfg.anchor_mode)
            .map_err(|e| e.to_string())?;
        debug_assert_eq!(comp.base, base_scores);
        let enh_metrics = evaluate(&comp.fused, test_labels).map_err(|e| e.to_string())?;
        let clf_metrics = evaluate(&comp.classifier, test_labels).map_err(|e| e.to_string())?;
        let dup = duplicate_fraction(syn.points.view(), train.features());
        let degenerate = syn.is_empty() || dup >= 0.5 || (clf_metrics.auc_roc - 0.5).abs() < DEGENERATE_AUC_MARGIN;

        let scores = cfg
            .export_scores
            .then(|| {
                let (ba, ca) = match cfg.anchor_mode {
                    AnchorMode::Batch => (extremes(&comp.base), extremes(&comp.classifier)),
                    AnchorMode::Train => (enhanced.base_norm, enhanced.clf_norm),
                };
                let syn_clf = enhanced.classifier.score(syn.points.view()).map_err(|e| e.to_string())?;
                let syn_fused = fuse(&syn_base, &syn_clf, Some(ba), Some(ca));
                Ok::<_, String>(ScoreDump {
                    base: comp.base.iter().chain(&syn_base).copied().collect(),
                    fused: comp.fused.iter().chain(&syn_fused).copied().collect(),
                    label: test_labels.iter().copied().chain(std::iter::repeat_n(1, syn.len())).collect(),
                    is_synth: std::iter::repeat_n(0, test_labels.len())
                        .chain(std::iter::repeat_n(1, syn.len()))
                        .collect(),
                })
            })
            .transpose()?;

        Ok(CellResult {
            baseline: Some(base_metrics),
            enhanced: Some(enh_metrics),
            classifier: Some(clf_metrics),
            n_train: train.n_rows(),
            n_test: test.n_rows(),
            n_syn_requested: n_syn,
            n_syn_produced: syn.len(),
            shortfall: syn.shortfall.is_some(),
            mean_hardness,
            hardness_rank,
            score_calls: syn.score_calls,
            degenerate,
            scores,
            ..self.blank(variant)
        })
    }
}

/// Run the grid datasets x detectors x seeds x variants.
pub fn run_grid(
    cfg: &ExperimentConfig,
    datasets: &[NamedDataset],
    detectors: &[DetectorKind],
    variants: &[Variant],
) -> Vec<CellResult> {
    let units: Vec<(usize, DetectorKind, u64)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            detectors
                .iter()
                .flat_map(move |&k| cfg.seeds.iter().map(move |&s| (i, k, s)))
        })
        .collect();
    units
        .into_par_iter()
        .map(|(i, detector, seed)| {
            UnitContext {
                cfg,
                dataset: &datasets[i],
                detector,
                seed,
            }
            .run(variants)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn finish(kind: RunKind, cfg: &ExperimentConfig, datasets: &[NamedDataset], cells: Vec<CellResult>) -> RunReport {
    RunReport::new(kind, cfg, datasets, cells)
}

fn prepare(cfg: &ExperimentConfig) -> Result<Vec<NamedDataset>, HarnessError> {
    cfg.validate()?;
    load_datasets(cfg)
}

/// The configured generator for every (dataset, detector, seed).
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let datasets = prepare(cfg)?;
    let cells = run_grid(cfg, &datasets, &cfg.detectors, &[Variant::tag(cfg.synthesis)]);
    Ok(finish(RunKind::Pipeline, cfg, &datasets, cells))
}

/// DAS against the Gaussian, uniform and SMOTE baselines.
pub fn run_synthesis_comparison(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let datasets = prepare(cfg)?;
    let variants: Vec<Variant> = SYNTHESIS_TAGS.into_iter().map(Variant::tag).collect();
    let cells = run_grid(cfg, &datasets, &cfg.detectors, &variants);
    Ok(finish(RunKind::CompareSynthesis, cfg, &datasets, cells))
}

/// DAS against its Generic, Simple and Random ablations.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let datasets = prepare(cfg)?;
    let variants: Vec<Variant> = ABLATION_TAGS.into_iter().map(Variant::tag).collect();
    let cells = run_grid(cfg, &datasets, &cfg.detectors, &variants);
    Ok(finish(RunKind::Ablation, cfg, &datasets, cells))
}

/// One base detector enhanced with each kind's DAS policy.
pub fn run_cross_detector(
    cfg: &ExperimentConfig,
    base_kind: DetectorKind,
    policy_kinds: &[DetectorKind],
) -> Result<RunReport, HarnessError> {
    let datasets = prepare(cfg)?;
    let variants: Vec<Variant> = policy_kinds
        .iter()
        .map(|&k| Variant {
            tag: GeneratorTag::Das,
            policy_kind: Some(k),
        })
        .collect();
    let cells = run_grid(cfg, &datasets, &[base_kind], &variants);
    let mut report = finish(RunKind::CrossDetector, cfg, &datasets, cells);
    report.cross = Some(CrossTable::from_cells(base_kind, policy_kinds, &report.cells, &report.datasets));
    Ok(report)
}
