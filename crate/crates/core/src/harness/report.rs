//! Run reports: per-cell rows, aggregates and their JSON/CSV forms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EmitFormats, ExperimentConfig};
use super::{HarnessError, NamedDataset};
use crate::detectors::DetectorKind;
use crate::prompt;
use crate::stats::{aggregate, AggregateSummary, MetricResult};
use crate::synthesis::GeneratorTag;

pub const REPORT_FORMAT: &str = "das-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Pipeline,
    CompareSynthesis,
    Ablation,
    CrossDetector,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pipeline => "pipeline",
            Self::CompareSynthesis => "compare_synthesis",
            Self::Ablation => "ablation",
            Self::CrossDetector => "cross_detector",
        }
    }
}

/// Base score, fused score and label for the test rows followed by the
/// synthesized rows of one cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreDump {
    pub base: Vec<f64>,
    pub fused: Vec<f64>,
    pub label: Vec<u8>,
    pub is_synth: Vec<u8>,
}

impl ScoreDump {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("score_base,score_fused,label,is_synth\n");
        for i in 0..self.base.len() {
            let _ = writeln!(out, "{},{},{},{}", self.base[i], self.fused[i], self.label[i], self.is_synth[i]);
        }
        out
    }
}

/// One (dataset, detector, seed, tag) cell. Failed cells carry `error` and
/// no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub detector: DetectorKind,
    pub seed: u64,
    pub tag: GeneratorTag,
    pub policy_kind: Option<DetectorKind>,
    pub baseline: Option<MetricResult>,
    pub enhanced: Option<MetricResult>,
    /// The enhancement classifier alone.
    pub classifier: Option<MetricResult>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_syn_requested: usize,
    pub n_syn_produced: usize,
    pub shortfall: bool,
    /// Mean base-detector score of the synthesized points.
    pub mean_hardness: Option<f64>,
    /// Mean empirical CDF of those scores among the training scores.
    pub hardness_rank: Option<f64>,
    /// Detector queries made during synthesis.
    pub score_calls: usize,
    pub degenerate: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub scores: Option<ScoreDump>,
}

impl CellResult {
    pub fn empty(dataset: &str, detector: DetectorKind, seed: u64, tag: GeneratorTag, policy_kind: Option<DetectorKind>) -> Self {
        Self {
            dataset: dataset.to_string(),
            detector,
            seed,
            tag,
            policy_kind,
            baseline: None,
            enhanced: None,
            classifier: None,
            n_train: 0,
            n_test: 0,
            n_syn_requested: 0,
            n_syn_produced: 0,
            shortfall: false,
            mean_hardness: None,
            hardness_rank: None,
            score_calls: 0,
            degenerate: false,
            error: None,
            scores: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.baseline.is_some() && self.enhanced.is_some()
    }

    /// Enhanced minus baseline AUC-PR.
    pub fn delta_auc_pr(&self) -> Option<f64> {
        Some(self.enhanced?.auc_pr - self.baseline?.auc_pr)
    }

    fn group_key(&self) -> (DetectorKind, GeneratorTag, Option<DetectorKind>) {
        (self.detector, self.tag, self.policy_kind)
    }
}

/// Summary over datasets for one (detector, tag, policy kind); each dataset
/// contributes its mean over successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub detector: DetectorKind,
    pub tag: GeneratorTag,
    pub policy_kind: Option<DetectorKind>,
    pub n_datasets: usize,
    pub n_cells: usize,
    pub n_failed: usize,
    /// AUC-PR summary; `None` when every cell failed.
    pub auc_pr: Option<AggregateSummary>,
    pub baseline_auc_roc: Option<f64>,
    pub enhanced_auc_roc: Option<f64>,
    pub mean_hardness_rank: Option<f64>,
    pub score_calls: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Aggregates from cell rows; groups and datasets in first-seen order.
pub fn recompute_aggregates(cells: &[CellResult]) -> Vec<AggregateRow> {
    first_seen(cells.iter().map(CellResult::group_key))
        .into_iter()
        .map(|key| {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.group_key() == key).collect();
            let mut pairs = Vec::new();
            let mut roc = (Vec::new(), Vec::new());
            for ds in first_seen(group.iter().map(|c| c.dataset.clone())) {
                let ok: Vec<&&CellResult> = group.iter().filter(|c| c.dataset == ds && c.is_ok()).collect();
                if ok.is_empty() {
                    continue;
                }
                let b: Vec<f64> = ok.iter().map(|c| c.baseline.unwrap().auc_pr).collect();
                let e: Vec<f64> = ok.iter().map(|c| c.enhanced.unwrap().auc_pr).collect();
                pairs.push((mean(&b).unwrap(), mean(&e).unwrap()));
                let br: Vec<f64> = ok.iter().map(|c| c.baseline.unwrap().auc_roc).collect();
                let er: Vec<f64> = ok.iter().map(|c| c.enhanced.unwrap().auc_roc).collect();
                roc.0.push(mean(&br).unwrap());
                roc.1.push(mean(&er).unwrap());
            }
            let ranks: Vec<f64> = group.iter().filter(|c| c.is_ok()).filter_map(|c| c.hardness_rank).collect();
            AggregateRow {
                detector: key.0,
                tag: key.1,
                policy_kind: key.2,
                n_datasets: pairs.len(),
                n_cells: group.len(),
                n_failed: group.iter().filter(|c| !c.is_ok()).count(),
                auc_pr: aggregate(&pairs).ok(),
                baseline_auc_roc: mean(&roc.0),
                enhanced_auc_roc: mean(&roc.1),
                mean_hardness_rank: mean(&ranks),
                score_calls: group.iter().map(|c| c.score_calls).sum(),
            }
        })
        .collect()
}

/// Enhanced minus baseline AUC-PR for one base detector under several
/// policies: `deltas[p][d]` averages over seeds, `per_seed[p][s]` averages
/// over datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTable {
    pub base: DetectorKind,
    pub policy_kinds: Vec<DetectorKind>,
    pub datasets: Vec<String>,
    pub seeds: Vec<u64>,
    pub deltas: Vec<Vec<Option<f64>>>,
    pub row_average: Vec<Option<f64>>,
    pub per_seed: Vec<Vec<Option<f64>>>,
}

impl CrossTable {
    pub fn from_cells(base: DetectorKind, policy_kinds: &[DetectorKind], cells: &[CellResult], datasets: &[DatasetInfo]) -> Self {
        let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
        let seeds = first_seen(cells.iter().map(|c| c.seed));
        let deltas_for = |p: DetectorKind, pred: &dyn Fn(&CellResult) -> bool| -> Vec<f64> {
            cells
                .iter()
                .filter(|c| c.detector == base && c.policy_kind == Some(p) && pred(c))
                .filter_map(CellResult::delta_auc_pr)
                .collect()
        };
        let deltas: Vec<Vec<Option<f64>>> = policy_kinds
            .iter()
            .map(|&p| names.iter().map(|n| mean(&deltas_for(p, &|c| &c.dataset == n))).collect())
            .collect();
        let row_average = deltas
            .iter()
            .map(|row| mean(&row.iter().flatten().copied().collect::<Vec<_>>()))
            .collect();
        let per_seed = policy_kinds
            .iter()
            .map(|&p| {
                seeds
                    .iter()
                    .map(|&s| {
                        // dataset means within the seed, in dataset order
                        let by_ds: Vec<f64> = names
                            .iter()
                            .filter_map(|n| mean(&deltas_for(p, &|c| &c.dataset == n && c.seed == s)))
                            .collect();
                        mean(&by_ds)
                    })
                    .collect()
            })
            .collect();
        Self {
            base,
            policy_kinds: policy_kinds.to_vec(),
            datasets: names,
            seeds,
            deltas,
            row_average,
            per_seed,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("base,policy_kind");
        for d in &self.datasets {
            let _ = write!(out, ",{d}");
        }
        out.push_str(",average\n");
        for (p, row) in self.policy_kinds.iter().zip(&self.deltas) {
            let _ = write!(out, "{},{}", self.base, p);
            for v in row.iter().chain(std::iter::once(&self.row_average[self.policy_index(*p)])) {
                let _ = write!(out, ",{}", opt(*v));
            }
            out.push('\n');
        }
        out
    }

    fn policy_index(&self, p: DetectorKind) -> usize {
        self.policy_kinds.iter().position(|&k| k == p).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub source: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_anomalies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub run_kind: RunKind,
    pub template_version: String,
    pub template_hash: String,
    /// SHA-256 of the echoed configuration's JSON form.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub datasets: Vec<DatasetInfo>,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
    pub cross: Option<CrossTable>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunReport {
    pub fn new(kind: RunKind, cfg: &ExperimentConfig, datasets: &[NamedDataset], cells: Vec<CellResult>) -> Self {
        let config_json = serde_json::to_string(cfg).expect("config serializes");
        Self {
            format: REPORT_FORMAT.to_string(),
            version: REPORT_VERSION,
            run_kind: kind,
            template_version: prompt::TEMPLATE_VERSION.to_string(),
            template_hash: prompt::template_hash(),
            config_hash: sha256_hex(config_json.as_bytes()),
            config: cfg.clone(),
            datasets: datasets
                .iter()
                .map(|d| DatasetInfo {
                    name: d.name.clone(),
                    source: d.source.describe(),
                    n_rows: d.data.n_rows(),
                    n_features: d.data.n_features(),
                    n_anomalies: d.data.n_anomalies(),
                })
                .collect(),
            aggregates: recompute_aggregates(&cells),
            cells,
            cross: None,
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }

    pub fn aggregate(&self, detector: DetectorKind, tag: GeneratorTag) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.detector == detector && a.tag == tag && a.policy_kind.is_none())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let r: Self = serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(HarnessError::Report(format!("unsupported format {} v{}", r.format, r.version)));
        }
        Ok(r)
    }

    /// Fixed-width aggregate table for terminals.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<17} {:<7} {:>8} {:>8} {:>8} {:>9} {:>5} {:>8} {:>6}",
            "detector", "tag", "policy", "base_pr", "enh_pr", "delta", "improv%", "wins", "p", "failed"
        );
        for a in &self.aggregates {
            let (b, e, d, pct, wins, p) = match &a.auc_pr {
                Some(s) => (
                    format!("{:.4}", s.baseline_mean),
                    format!("{:.4}", s.enhanced_mean),
                    format!("{:+.4}", s.improv_abs),
                    s.improv_pct.map_or("-".into(), |v| format!("{v:.2}")),
                    format!("{}/{}", s.win_count, s.total),
                    s.p_value.map_or("-".into(), |v| format!("{v:.4}")),
                ),
                None => Default::default(),
            };
            let _ = writeln!(
                out,
                "{:<8} {:<17} {:<7} {:>8} {:>8} {:>8} {:>9} {:>5} {:>8} {:>6}",
                a.detector.as_str(),
                a.tag.as_str(),
                a.policy_kind.map_or("-", DetectorKind::as_str),
                b,
                e,
                d,
                pct,
                wins,
                p,
                a.n_failed
            );
        }
        if let Some(x) = &self.cross {
            let _ = writeln!(out, "\ncross-detector deltas (AUC-PR), base {}:", x.base);
            out.push_str(&x.to_csv_string());
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CELL_COLUMNS: [&str; 23] = [
    "dataset",
    "detector",
    "seed",
    "tag",
    "policy_kind",
    "status",
    "baseline_auc_roc",
    "baseline_auc_pr",
    "enhanced_auc_roc",
    "enhanced_auc_pr",
    "delta_auc_pr",
    "classifier_auc_roc",
    "classifier_auc_pr",
    "n_train",
    "n_test",
    "n_syn_requested",
    "n_syn_produced",
    "shortfall",
    "mean_hardness",
    "hardness_rank",
    "score_calls",
    "degenerate",
    "error",
];

pub fn cells_csv(cells: &[CellResult]) -> String {
    let mut out = CELL_COLUMNS.join(",") + "\n";
    for c in cells {
        let m = |r: Option<MetricResult>, f: fn(&MetricResult) -> f64| opt(r.as_ref().map(f));
        let row = [
            csv_field(&c.dataset),
            c.detector.to_string(),
            c.seed.to_string(),
            c.tag.to_string(),
            c.policy_kind.map_or(String::new(), |k| k.to_string()),
            if c.is_ok() { "ok".into() } else { "error".into() },
            m(c.baseline, |r| r.auc_roc),
            m(c.baseline, |r| r.auc_pr),
            m(c.enhanced, |r| r.auc_roc),
            m(c.enhanced, |r| r.auc_pr),
            opt(c.delta_auc_pr()),
            m(c.classifier, |r| r.auc_roc),
            m(c.classifier, |r| r.auc_pr),
            c.n_train.to_string(),
            c.n_test.to_string(),
            c.n_syn_requested.to_string(),
            c.n_syn_produced.to_string(),
            c.shortfall.to_string(),
            opt(c.mean_hardness),
            opt(c.hardness_rank),
            c.score_calls.to_string(),
            c.degenerate.to_string(),
            csv_field(c.error.as_deref().unwrap_or("")),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub const AGGREGATE_COLUMNS: [&str; 17] = [
    "detector",
    "tag",
    "policy_kind",
    "n_datasets",
    "n_cells",
    "n_failed",
    "baseline_auc_pr",
    "enhanced_auc_pr",
    "improv_abs",
    "improv_pct",
    "win_count",
    "total",
    "t_stat",
    "p_value",
    "baseline_auc_roc",
    "enhanced_auc_roc",
    "mean_hardness_rank",
];

pub fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut out = AGGREGATE_COLUMNS.join(",") + "\n";
    for a in rows {
        let s = a.auc_pr.as_ref();
        let row = [
            a.detector.to_string(),
            a.tag.to_string(),
            a.policy_kind.map_or(String::new(), |k| k.to_string()),
            a.n_datasets.to_string(),
            a.n_cells.to_string(),
            a.n_failed.to_string(),
            opt(s.map(|s| s.baseline_mean)),
            opt(s.map(|s| s.enhanced_mean)),
            opt(s.map(|s| s.improv_abs)),
            opt(s.and_then(|s| s.improv_pct)),
            s.map_or(String::new(), |s| s.win_count.to_string()),
            s.map_or(String::new(), |s| s.total.to_string()),
            opt(s.and_then(|s| s.t_stat)),
            opt(s.and_then(|s| s.p_value)),
            opt(a.baseline_auc_roc),
            opt(a.enhanced_auc_roc),
            opt(a.mean_hardness_rank),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Split one CSV line, honouring double-quoted fields.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    fields.push(cur);
    fields
}

/// Read `cells.csv` back into cell rows (score dumps are not part of it).
pub fn parse_cells_csv(text: &str) -> Result<Vec<CellResult>, HarnessError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Report("empty cells file".into()))?;
    if split_csv_line(header) != CELL_COLUMNS {
        return Err(HarnessError::Report("unexpected cells.csv header".into()));
    }
    let bad = |row: usize, what: &str| HarnessError::Report(format!("cells.csv row {row}: bad {what}"));
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let row = i + 1;
        let f = split_csv_line(line);
        if f.len() != CELL_COLUMNS.len() {
            return Err(bad(row, "field count"));
        }
        let num = |k: usize| -> Result<Option<f64>, HarnessError> {
            if f[k].is_empty() {
                Ok(None)
            } else {
                f[k].parse().map(Some).map_err(|_| bad(row, CELL_COLUMNS[k]))
            }
        };
        let int = |k: usize| -> Result<usize, HarnessError> { f[k].parse().map_err(|_| bad(row, CELL_COLUMNS[k])) };
        let flag = |k: usize| -> Result<bool, HarnessError> { f[k].parse().map_err(|_| bad(row, CELL_COLUMNS[k])) };
        let kind = |k: usize| -> Result<DetectorKind, HarnessError> { f[k].parse().map_err(|_| bad(row, CELL_COLUMNS[k])) };
        let metric = |roc: usize, pr: usize| -> Result<Option<MetricResult>, HarnessError> {
            Ok(match (num(roc)?, num(pr)?) {
                (Some(auc_roc), Some(auc_pr)) => Some(MetricResult {
                    auc_roc,
                    auc_pr,
                    n_pos: 0,
                    n_neg: 0,
                }),
                _ => None,
            })
        };
        let mut c = CellResult::empty(
            &f[0],
            kind(1)?,
            f[2].parse().map_err(|_| bad(row, "seed"))?,
            GeneratorTag::parse(&f[3]).ok_or_else(|| bad(row, "tag"))?,
            if f[4].is_empty() { None } else { Some(kind(4)?) },
        );
        c.baseline = metric(6, 7)?;
        c.enhanced = metric(8, 9)?;
        c.classifier = metric(11, 12)?;
        c.n_train = int(13)?;
        c.n_test = int(14)?;
        c.n_syn_requested = int(15)?;
        c.n_syn_produced = int(16)?;
        c.shortfall = flag(17)?;
        c.mean_hardness = num(18)?;
        c.hardness_rank = num(19)?;
        c.score_calls = int(20)?;
        c.degenerate = flag(21)?;
        c.error = match (f[5].as_str(), f[22].as_str()) {
            ("ok", _) => None,
            (_, "") => Some("error".into()),
            (_, e) => Some(e.to_string()),
        };
        out.push(c);
    }
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-cell score file name.
pub fn score_file_name(c: &CellResult) -> String {
    let mut name = format!("{}__{}__s{}__{}", c.dataset, c.detector, c.seed, c.tag);
    if let Some(p) = c.policy_kind {
        let _ = write!(name, "__{p}");
    }
    name.replace(['/', '\\', ' '], "_") + ".csv"
}

/// Write `report.json`, `cells.csv` and `aggregates.csv` as requested, plus
/// `cross_detector.csv` for cross-detector runs and one score file per cell
/// under `scores/` when `export_scores` is set. Returns the written paths.
pub fn emit_report(
    report: &RunReport,
    out_dir: &Path,
    formats: EmitFormats,
    export_scores: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(io)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<(), HarnessError> {
        let p = out_dir.join(name);
        write_file(&p, &text)?;
        written.push(p);
        Ok(())
    };
    if formats.json {
        put("report.json", report.to_json())?;
    }
    if formats.csv {
        put("cells.csv", cells_csv(&report.cells))?;
        put("aggregates.csv", aggregates_csv(&report.aggregates))?;
        if let Some(x) = &report.cross {
            put("cross_detector.csv", x.to_csv_string())?;
        }
    }
    if export_scores {
        let dir = out_dir.join("scores");
        std::fs::create_dir_all(&dir).map_err(io)?;
        for c in &report.cells {
            if let Some(s) = &c.scores {
                let p = dir.join(score_file_name(c));
                write_file(&p, &s.to_csv_string())?;
                written.push(p);
            }
        }
    }
    Ok(written)
}
