//! Prompt assembly and policy documents.
//!
//! Nothing here takes a [`Dataset`](crate::data::Dataset): prompts only name
//! the symbolic handles `model.predict_score()` and `X_train`, and policies
//! come back as flat `key = value` documents rather than program text.
//!
//! The templates are reconstructions; their version string travels with every
//! bundle so that identical versions render identical text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detectors::DetectorKind;
use crate::kv::{self, KvError};
use crate::synthesis::{DirectionStrategy, MinDistance, PolicyViolation, SynthesisPolicy};

pub const TEMPLATE_VERSION: &str = "das-prompt-v1";

const INITIAL: &str = include_str!("../../templates/initial.txt");
const OBJECTIVE: &str = include_str!("../../templates/objective.txt");
const REQUIREMENTS: &str = include_str!("../../templates/requirements.txt");
const DESC_IFOREST: &str = include_str!("../../templates/iforest.txt");
const DESC_PCA: &str = include_str!("../../templates/pca.txt");
const DESC_ECOD: &str = include_str!("../../templates/ecod.txt");
const DESC_OCSVM: &str = include_str!("../../templates/ocsvm.txt");

const POLICY_IFOREST: &str = include_str!("../../policies/iforest.policy");
const POLICY_PCA: &str = include_str!("../../policies/pca.policy");
const POLICY_ECOD: &str = include_str!("../../policies/ecod.policy");
const POLICY_OCSVM: &str = include_str!("../../policies/ocsvm.policy");

/// The three-part code-generation prompt plus the prompt that elicits the
/// detector description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub kind: DetectorKind,
    pub template_version: String,
    pub description: String,
    pub objective: String,
    pub requirements: String,
    pub initial: String,
}

impl PromptBundle {
    /// Description, objective and requirements, in that order. An empty
    /// description contributes nothing.
    pub fn render(&self) -> String {
        let parts = [&self.description, &self.objective, &self.requirements];
        parts
            .iter()
            .map(|s| s.trim_end())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
            + "\n"
    }

    /// Plain-text export with section headers.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# template_version: {}", self.template_version);
        let _ = writeln!(out, "# detector: {}\n", self.kind);
        for (name, body) in [
            ("initial", &self.initial),
            ("description", &self.description),
            ("objective", &self.objective),
            ("requirements", &self.requirements),
        ] {
            let _ = writeln!(out, "## {name}\n{}\n", body.trim_end());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PromptMode {
    #[default]
    Full,
    /// The detector's principles are withheld: empty description.
    Generic,
}

fn fill(template: &str, kind: DetectorKind) -> String {
    template.replace("{display}", kind.display_name())
}

/// Built-in detector summary and pseudo-code.
pub fn builtin_description(kind: DetectorKind) -> &'static str {
    match kind {
        DetectorKind::IForest => DESC_IFOREST,
        DetectorKind::Pca => DESC_PCA,
        DetectorKind::Ecod => DESC_ECOD,
        DetectorKind::Ocsvm => DESC_OCSVM,
    }
}

pub fn assemble_prompt(kind: DetectorKind, description_override: Option<&str>) -> PromptBundle {
    assemble_prompt_mode(kind, description_override, PromptMode::Full)
}

pub fn assemble_prompt_mode(kind: DetectorKind, description_override: Option<&str>, mode: PromptMode) -> PromptBundle {
    let description = match mode {
        PromptMode::Generic => String::new(),
        PromptMode::Full => description_override.unwrap_or(builtin_description(kind)).to_string(),
    };
    PromptBundle {
        kind,
        template_version: TEMPLATE_VERSION.to_string(),
        description,
        objective: fill(OBJECTIVE, kind),
        requirements: REQUIREMENTS.to_string(),
        initial: fill(INITIAL, kind),
    }
}

/// SHA-256 over the version string and every shipped template and policy.
pub fn template_hash() -> String {
    let mut h = Sha256::new();
    h.update(TEMPLATE_VERSION.as_bytes());
    for part in [
        INITIAL,
        OBJECTIVE,
        REQUIREMENTS,
        DESC_IFOREST,
        DESC_PCA,
        DESC_ECOD,
        DESC_OCSVM,
        POLICY_IFOREST,
        POLICY_PCA,
        POLICY_ECOD,
        POLICY_OCSVM,
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyDocError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key} = {value:?} is not {expected}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        expected: String,
    },
    #[error("{key} = {value} is out of range (allowed: {allowed})")]
    OutOfRange { key: String, value: String, allowed: String },
    #[error("missing required key detector_kind")]
    MissingKind,
    #[error("min_seed_distance and min_seed_distance_factor are mutually exclusive")]
    ConflictingDistance,
}

impl From<PolicyViolation> for PolicyDocError {
    fn from(v: PolicyViolation) -> Self {
        Self::OutOfRange {
            key: v.key.to_string(),
            value: v.value,
            allowed: v.allowed.to_string(),
        }
    }
}

/// Keys accepted in a policy document.
pub const POLICY_KEYS: [&str; 15] = [
    "detector_kind",
    "policy_text",
    "explanation_text",
    "seed_percentile",
    "step_init",
    "step_growth",
    "max_steps",
    "score_band_lo",
    "score_band_hi",
    "min_seed_distance_factor",
    "min_seed_distance",
    "direction_strategy",
    "swap_fraction",
    "draw_budget",
    "rng_seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpecDoc {
    pub detector_kind: DetectorKind,
    pub policy_text: String,
    pub explanation_text: String,
    /// The numeric and strategy entries as written, excluding kind and texts.
    pub parameters: BTreeMap<String, String>,
}

fn number<T: std::str::FromStr>(e: &kv::KvEntry, expected: &str) -> Result<T, PolicyDocError> {
    e.value.parse::<T>().map_err(|_| PolicyDocError::BadValue {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        expected: expected.to_string(),
    })
}

/// Override policy fields from `key = value` entries. Shared with the
/// experiment config, which accepts the same keys with a `policy_` prefix.
pub fn apply_policy_entry(policy: &mut SynthesisPolicy, e: &kv::KvEntry, key: &str) -> Result<bool, PolicyDocError> {
    match key {
        "seed_percentile" => policy.seed_percentile = number(e, "a number")?,
        "step_init" => policy.step_init = number(e, "a number")?,
        "step_growth" => policy.step_growth = number(e, "a number")?,
        "max_steps" => policy.max_steps = number(e, "a non-negative integer")?,
        "score_band_lo" => policy.score_band.0 = number(e, "a number")?,
        "score_band_hi" => policy.score_band.1 = number(e, "a number")?,
        "min_seed_distance_factor" => policy.min_seed_distance = MinDistance::NnMultiple(number(e, "a number")?),
        "min_seed_distance" => policy.min_seed_distance = MinDistance::Absolute(number(e, "a number")?),
        "direction_strategy" => {
            policy.direction = e.value.parse::<DirectionStrategy>().map_err(|expected| PolicyDocError::BadValue {
                line: e.line,
                key: e.key.clone(),
                value: e.value.clone(),
                expected,
            })?
        }
        "swap_fraction" => policy.swap_fraction = number(e, "a number")?,
        "draw_budget" => policy.draw_budget = number(e, "a non-negative integer")?,
        "rng_seed" => policy.seed = number(e, "a non-negative integer")?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parse a policy document. Omitted parameters take the detector kind's
/// defaults; the result is validated before it is returned.
pub fn parse_policy_spec(document: &str) -> Result<(PolicySpecDoc, SynthesisPolicy), PolicyDocError> {
    let entries = kv::parse(document)?;
    if let Some(e) = entries.iter().find(|e| !POLICY_KEYS.contains(&e.key.as_str())) {
        return Err(PolicyDocError::UnknownKey {
            line: e.line,
            key: e.key.clone(),
        });
    }
    let kind_entry = entries.iter().find(|e| e.key == "detector_kind").ok_or(PolicyDocError::MissingKind)?;
    let kind: DetectorKind = kind_entry.value.parse().map_err(|_| PolicyDocError::BadValue {
        line: kind_entry.line,
        key: "detector_kind".into(),
        value: kind_entry.value.clone(),
        expected: "one of iforest, pca, ecod, ocsvm".into(),
    })?;
    let has = |k: &str| entries.iter().any(|e| e.key == k);
    if has("min_seed_distance") && has("min_seed_distance_factor") {
        return Err(PolicyDocError::ConflictingDistance);
    }

    let mut policy = SynthesisPolicy::for_kind(kind);
    let mut doc = PolicySpecDoc {
        detector_kind: kind,
        policy_text: String::new(),
        explanation_text: String::new(),
        parameters: BTreeMap::new(),
    };
    for e in &entries {
        match e.key.as_str() {
            "detector_kind" => {}
            "policy_text" => doc.policy_text = e.value.clone(),
            "explanation_text" => doc.explanation_text = e.value.clone(),
            key => {
                apply_policy_entry(&mut policy, e, key)?;
                doc.parameters.insert(key.to_string(), e.value.clone());
            }
        }
    }
    policy.validate()?;
    Ok((doc, policy))
}

/// Write a document that parses back to `policy`; every parameter is
/// written explicitly.
pub fn serialize_policy_spec(doc: &PolicySpecDoc, policy: &SynthesisPolicy) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("detector_kind", doc.detector_kind.as_str().to_string());
    line("policy_text", kv::quote(&doc.policy_text));
    line("explanation_text", kv::quote(&doc.explanation_text));
    line("seed_percentile", policy.seed_percentile.to_string());
    line("step_init", policy.step_init.to_string());
    line("step_growth", policy.step_growth.to_string());
    line("max_steps", policy.max_steps.to_string());
    line("score_band_lo", policy.score_band.0.to_string());
    line("score_band_hi", policy.score_band.1.to_string());
    match policy.min_seed_distance {
        MinDistance::NnMultiple(f) => line("min_seed_distance_factor", f.to_string()),
        MinDistance::Absolute(d) => line("min_seed_distance", d.to_string()),
    }
    line("direction_strategy", policy.direction.as_str().to_string());
    line("swap_fraction", policy.swap_fraction.to_string());
    line("draw_budget", policy.draw_budget.to_string());
    line("rng_seed", policy.seed.to_string());
    out
}

/// Text of the shipped policy document for `kind`.
pub fn builtin_policy_text(kind: DetectorKind) -> &'static str {
    match kind {
        DetectorKind::IForest => POLICY_IFOREST,
        DetectorKind::Pca => POLICY_PCA,
        DetectorKind::Ecod => POLICY_ECOD,
        DetectorKind::Ocsvm => POLICY_OCSVM,
    }
}

pub fn builtin_policy(kind: DetectorKind) -> (PolicySpecDoc, SynthesisPolicy) {
    parse_policy_spec(builtin_policy_text(kind)).expect("shipped policy documents are valid")
}
