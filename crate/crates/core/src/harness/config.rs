//! Experiment configuration and its `key = value` file format.
//!
//! Recognised keys:
//!
//! | key | value |
//! |---|---|
//! | `datasets` | comma list of CSV paths or `builtin:<name>`; `builtin:suite` expands to the six planted datasets |
//! | `label_col` | label column name (default `label`) |
//! | `detectors` | comma list of `iforest`, `pca`, `ecod`, `ocsvm` |
//! | `synthesis` | generator tag (default `das`) |
//! | `seeds` | comma list of integers, or `n` alone for seeds `0..n` |
//! | `n_syn_frac`, `train_frac` | fractions in (0, 1] |
//! | `anchor_mode` | `batch` or `train` |
//! | `out` | output directory |
//! | `emit` | comma list of `json`, `csv` |
//! | `export_scores` | `true` / `false` |
//! | `sigma_scale`, `uniform_expansion`, `smote_k` | baseline generator parameters |
//! | `forest_trees`, `iforest_trees`, `pca_variance`, `ocsvm_nu` | model hyperparameters |
//! | `policy_file` | comma list of policy documents, each replacing the built-in policy for its detector kind |
//! | `policy_<key>` | override of a policy parameter for every detector |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{DetectorHyperparams, DetectorKind};
use crate::enhance::{AnchorMode, ForestParams};
use crate::kv::{self, KvEntry, KvError};
use crate::prompt::{self, PolicyDocError};
use crate::synthesis::{GeneratorTag, SynthesisPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("line {line}: unknown config key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("{key}: invalid value {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("policy document {path}: {source}")]
    Policy { path: String, source: PolicyDocError },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("configuration needs at least one {0}")]
    Missing(&'static str),
}

fn bad(key: &str, value: impl ToString, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv(PathBuf),
    /// A planted suite dataset by name.
    Builtin(String),
}

impl DatasetSource {
    /// Parse one entry; `builtin:suite` expands to the whole suite.
    pub fn parse_list(value: &str, base_dir: Option<&Path>) -> Result<Vec<Self>, ConfigError> {
        let mut out = Vec::new();
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some(name) = item.strip_prefix("builtin:") {
                if name == "suite" {
                    out.extend(super::benchmark::suite_specs().iter().map(|s| Self::Builtin(s.name())));
                } else if super::benchmark::suite_spec(name).is_some() {
                    out.push(Self::Builtin(name.to_string()));
                } else {
                    return Err(bad("datasets", item, "unknown builtin dataset"));
                }
            } else {
                let p = PathBuf::from(item);
                let p = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                };
                out.push(Self::Csv(p));
            }
        }
        Ok(out)
    }

    /// Name used in reports: the builtin name or the file stem.
    pub fn name(&self) -> String {
        match self {
            Self::Builtin(n) => n.clone(),
            Self::Csv(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Builtin(n) => format!("builtin:{n}"),
            Self::Csv(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitFormats {
    pub json: bool,
    pub csv: bool,
}

impl Default for EmitFormats {
    fn default() -> Self {
        Self { json: true, csv: true }
    }
}

impl EmitFormats {
    pub fn parse(value: &str) -> Result<Self, ConfigError> {
        let mut f = Self { json: false, csv: false };
        for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "json" => f.json = true,
                "csv" => f.csv = true,
                other => return Err(bad("emit", other, "expected json or csv")),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub label_column: String,
    pub detectors: Vec<DetectorKind>,
    pub synthesis: GeneratorTag,
    /// Per-kind policies after policy files and overrides are applied.
    pub policies: BTreeMap<DetectorKind, SynthesisPolicy>,
    pub n_syn_fraction: f64,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub anchor_mode: AnchorMode,
    pub out_dir: PathBuf,
    pub emit: EmitFormats,
    pub export_scores: bool,
    pub sigma_scale: f64,
    pub uniform_expansion: f64,
    pub smote_k: usize,
    pub forest_trees: usize,
    pub detector_params: DetectorHyperparams,
}

pub const DEFAULT_SEED_COUNT: u64 = 5;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            label_column: crate::data::DEFAULT_LABEL_COLUMN.to_string(),
            detectors: DetectorKind::ALL.to_vec(),
            synthesis: GeneratorTag::Das,
            policies: DetectorKind::ALL
                .into_iter()
                .map(|k| (k, prompt::builtin_policy(k).1))
                .collect(),
            n_syn_fraction: 0.10,
            train_fraction: 0.5,
            seeds: (0..DEFAULT_SEED_COUNT).collect(),
            anchor_mode: AnchorMode::Batch,
            out_dir: PathBuf::from("das-out"),
            emit: EmitFormats::default(),
            export_scores: false,
            sigma_scale: 0.5,
            uniform_expansion: 0.1,
            smote_k: 5,
            forest_trees: ForestParams::default().n_trees,
            detector_params: DetectorHyperparams::default(),
        }
    }
}

pub fn parse_detectors(value: &str) -> Result<Vec<DetectorKind>, ConfigError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: DetectorKind = item.parse().map_err(|_| bad("detectors", item, "unknown detector kind"))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>, ConfigError> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let nums: Vec<u64> = items
        .iter()
        .map(|s| s.parse::<u64>().map_err(|_| bad("seeds", s, "expected non-negative integers")))
        .collect::<Result<_, _>>()?;
    // a lone count means seeds 0..n, written as "n" without a trailing comma
    if nums.len() == 1 && !value.contains(',') {
        return Ok((0..nums[0]).collect());
    }
    Ok(nums)
}

fn fraction(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| bad(key, value, "expected a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must lie in (0, 1]"))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "expected a number"))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path.parent())?;
        Ok(cfg)
    }

    pub fn from_text(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text, base_dir)?;
        Ok(cfg)
    }

    /// Apply every entry of a config document on top of the current values.
    /// Policy files are applied before `policy_*` overrides regardless of
    /// their order in the document.
    pub fn apply_text(&mut self, text: &str, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        let entries = kv::parse(text)?;
        let (overrides, rest): (Vec<&KvEntry>, Vec<&KvEntry>) = entries
            .iter()
            .partition(|e| e.key.starts_with("policy_") && e.key != "policy_file");
        for e in rest {
            self.set(e, base_dir)?;
        }
        for e in overrides {
            self.set(e, base_dir)?;
        }
        self.validate_policies()
    }

    fn validate_policies(&self) -> Result<(), ConfigError> {
        for (kind, p) in &self.policies {
            p.validate().map_err(|v| ConfigError::Policy {
                path: format!("<{kind} policy>"),
                source: v.into(),
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, e: &KvEntry, base_dir: Option<&Path>) -> Result<(), ConfigError> {
        let v = e.value.as_str();
        match e.key.as_str() {
            "datasets" | "dataset" => self.datasets = DatasetSource::parse_list(v, base_dir)?,
            "label_col" => self.label_column = v.to_string(),
            "detectors" | "detector" => self.detectors = parse_detectors(v)?,
            "synthesis" => self.synthesis = GeneratorTag::parse(v).ok_or_else(|| bad("synthesis", v, "unknown tag"))?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "n_syn_frac" => self.n_syn_fraction = fraction("n_syn_frac", v)?,
            "train_frac" => self.train_fraction = fraction("train_frac", v)?,
            "anchor_mode" => {
                self.anchor_mode = AnchorMode::parse(v).ok_or_else(|| bad("anchor_mode", v, "expected batch or train"))?
            }
            "out" => {
                let p = PathBuf::from(v);
                self.out_dir = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                };
            }
            "emit" => self.emit = EmitFormats::parse(v)?,
            "export_scores" => self.export_scores = v.parse().map_err(|_| bad("export_scores", v, "expected true or false"))?,
            "sigma_scale" => self.sigma_scale = parse_num("sigma_scale", v)?,
            "uniform_expansion" => self.uniform_expansion = parse_num("uniform_expansion", v)?,
            "smote_k" => self.smote_k = parse_num("smote_k", v)?,
            "forest_trees" => self.forest_trees = parse_num("forest_trees", v)?,
            "iforest_trees" => self.detector_params.iforest.n_trees = parse_num("iforest_trees", v)?,
            "pca_variance" => self.detector_params.pca.variance_retained = parse_num("pca_variance", v)?,
            "ocsvm_nu" => self.detector_params.ocsvm.nu = parse_num("ocsvm_nu", v)?,
            "policy_file" => {
                for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let path = match base_dir {
                        Some(b) if Path::new(item).is_relative() => b.join(item),
                        _ => PathBuf::from(item),
                    };
                    self.load_policy_file(&path)?;
                }
            }
            key => {
                let Some(pkey) = key.strip_prefix("policy_") else {
                    return Err(ConfigError::UnknownKey {
                        line: e.line,
                        key: key.to_string(),
                    });
                };
                for policy in self.policies.values_mut() {
                    let known = prompt::apply_policy_entry(policy, e, pkey).map_err(|source| ConfigError::Policy {
                        path: "<config>".into(),
                        source,
                    })?;
                    if !known {
                        return Err(ConfigError::UnknownKey {
                            line: e.line,
                            key: key.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load_policy_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let (doc, policy) = prompt::parse_policy_spec(&text).map_err(|source| ConfigError::Policy {
            path: path.display().to_string(),
            source,
        })?;
        self.policies.insert(doc.detector_kind, policy);
        Ok(())
    }

    pub fn policy(&self, kind: DetectorKind) -> SynthesisPolicy {
        self.policies
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| SynthesisPolicy::for_kind(kind))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.datasets.is_empty() {
            return Err(ConfigError::Missing("dataset"));
        }
        if self.detectors.is_empty() {
            return Err(ConfigError::Missing("detector"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Missing("seed"));
        }
        for (key, v) in [("n_syn_frac", self.n_syn_fraction), ("train_frac", self.train_fraction)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(bad(key, v, "must lie in (0, 1]"));
            }
        }
        if !(self.sigma_scale >= 0.0 && self.sigma_scale.is_finite()) {
            return Err(bad("sigma_scale", self.sigma_scale, "must be >= 0"));
        }
        if !(self.uniform_expansion >= 0.0 && self.uniform_expansion.is_finite()) {
            return Err(bad("uniform_expansion", self.uniform_expansion, "must be >= 0"));
        }
        if self.smote_k == 0 {
            return Err(bad("smote_k", 0, "must be >= 1"));
        }
        if self.forest_trees == 0 {
            return Err(bad("forest_trees", 0, "must be >= 1"));
        }
        self.detector_params
            .validate()
            .map_err(|e| bad("detector hyperparameters", "", e))?;
        self.validate_policies()
    }

    /// Synthesis request size: `ceil(n_syn_fraction * n_train)`.
    pub fn n_syn(&self, n_train: usize) -> usize {
        // guard against 0.1 * 200 = 20.000000000000004
        let raw = self.n_syn_fraction * n_train as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
    }

    /// A config document reproducing this configuration (policies written
    /// out as per-kind sections are not expressible in the flat format, so
    /// they are echoed as comments).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: Vec<String>| v.join(",");
        let _ = writeln!(out, "datasets = {}", list(self.datasets.iter().map(DatasetSource::describe).collect()));
        let _ = writeln!(out, "label_col = {}", kv::quote(&self.label_column));
        let _ = writeln!(out, "detectors = {}", list(self.detectors.iter().map(|k| k.as_str().to_string()).collect()));
        let _ = writeln!(out, "synthesis = {}", self.synthesis);
        let _ = writeln!(out, "seeds = {},", list(self.seeds.iter().map(u64::to_string).collect()));
        let _ = writeln!(out, "n_syn_frac = {}", self.n_syn_fraction);
        let _ = writeln!(out, "train_frac = {}", self.train_fraction);
        let _ = writeln!(out, "anchor_mode = {}", self.anchor_mode.as_str());
        let _ = writeln!(out, "sigma_scale = {}", self.sigma_scale);
        let _ = writeln!(out, "uniform_expansion = {}", self.uniform_expansion);
        let _ = writeln!(out, "smote_k = {}", self.smote_k);
        let _ = writeln!(out, "forest_trees = {}", self.forest_trees);
        let _ = writeln!(out, "iforest_trees = {}", self.detector_params.iforest.n_trees);
        let _ = writeln!(out, "pca_variance = {}", self.detector_params.pca.variance_retained);
        let _ = writeln!(out, "ocsvm_nu = {}", self.detector_params.ocsvm.nu);
        for (kind, p) in &self.policies {
            let _ = writeln!(out, "# policy {kind}: {}", serde_json::to_string(p).unwrap_or_default());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.n_syn_fraction, 0.10);
        assert_eq!(c.train_fraction, 0.5);
        assert_eq!(c.detectors.len(), 4);
        assert!(matches!(c.validate(), Err(ConfigError::Missing("dataset"))));
    }

    #[test]
    fn ten_percent_of_two_hundred_is_twenty() {
        let c = ExperimentConfig::default();
        assert_eq!(c.n_syn(200), 20);
        assert_eq!(c.n_syn(201), 21);
        assert_eq!(c.n_syn(5), 1);
    }

    #[test]
    fn parses_a_document() {
        let c = ExperimentConfig::from_text(
            "datasets = builtin:fringe_d6, data/x.csv\ndetectors = pca,ocsvm\nseeds = 3\nn_syn_frac = 0.2\npolicy_max_steps = 7\n",
            Some(Path::new("/base")),
        )
        .unwrap();
        assert_eq!(c.datasets[0], DatasetSource::Builtin("fringe_d6".into()));
        assert_eq!(c.datasets[1], DatasetSource::Csv(PathBuf::from("/base/data/x.csv")));
        assert_eq!(c.detectors, vec![DetectorKind::Pca, DetectorKind::Ocsvm]);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert!(c.policies.values().all(|p| p.max_steps == 7));
        c.validate().unwrap();
    }

    #[test]
    fn explicit_seed_lists() {
        assert_eq!(parse_seeds("7,").unwrap(), vec![7]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn suite_expands_to_six() {
        let c = ExperimentConfig::from_text("datasets = builtin:suite", None).unwrap();
        assert_eq!(c.datasets.len(), 6);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            ExperimentConfig::from_text("colour = red", None),
            Err(ConfigError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_text("policy_colour = red", None),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(ExperimentConfig::from_text("n_syn_frac = 0", None).is_err());
        assert!(ExperimentConfig::from_text("train_frac = 1.5", None).is_err());
        assert!(ExperimentConfig::from_text("datasets = builtin:nothing", None).is_err());
        assert!(ExperimentConfig::from_text("detectors = knn", None).is_err());
    }

    #[test]
    fn text_echo_reparses() {
        let c = ExperimentConfig::from_text("datasets = builtin:local_d6\nseeds = 1,5\nanchor_mode = train", None).unwrap();
        let again = ExperimentConfig::from_text(&c.to_text(), None).unwrap();
        assert_eq!(again.datasets, c.datasets);
        assert_eq!(again.seeds, c.seeds);
        assert_eq!(again.anchor_mode, c.anchor_mode);
    }
}
