//! Normalized dataset ingestion and split handling.
//!
//! Datasets arrive in one normalized line-delimited JSON schema:
//! `{id, text, label, evidence: [{source, text}], domain}`. A manifest per
//! dataset names the split files, the source-label mapping, and which
//! labels to drop (e.g. a "not enough info" class that would break the
//! binary label space).

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::model::{Evidence, NewsCase, Verdict};

/// Which split of a dataset to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

/// Per-dataset manifest: split file paths, label mapping, drop list.
/// Relative split paths resolve against the manifest file's directory.
#[derive(Debug, Clone, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub splits: SplitPaths,
    /// Source label string -> verdict.
    pub label_map: BTreeMap<String, Verdict>,
    #[serde(default)]
    pub drop_labels: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            DatasetError::Manifest(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut manifest: DatasetManifest = toml::from_str(&text)
            .map_err(|e| DatasetError::Manifest(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            for split_path in [
                &mut manifest.splits.train,
                &mut manifest.splits.val,
                &mut manifest.splits.test,
            ] {
                if split_path.is_relative() {
                    *split_path = dir.join(&split_path);
                }
            }
        }
        Ok(manifest)
    }

    pub fn split_path(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.splits.train,
            Split::Val => &self.splits.val,
            Split::Test => &self.splits.test,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawEvidence {
    #[serde(default)]
    source: String,
    text: String,
}

#[derive(Debug, Deserialize)]
struct RawCase {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    evidence: Vec<RawEvidence>,
    #[serde(default)]
    domain: Option<String>,
}

/// Load one split through a manifest: rows with dropped labels are
/// removed, remaining labels are mapped, ids must be unique.
pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<NewsCase>, DatasetError> {
    load_cases(
        manifest.split_path(split),
        Some(&manifest.label_map),
        &manifest.drop_labels,
    )
}

fn convert_raw(
    raw: RawCase,
    label_map: Option<&BTreeMap<String, Verdict>>,
    drop_labels: &[String],
    path: &str,
    lineno: usize,
) -> Result<Option<NewsCase>, DatasetError> {
    let gold_label = match &raw.label {
        None => None,
        Some(label) if drop_labels.iter().any(|d| d == label) => return Ok(None),
        Some(label) => match label_map {
            Some(map) => Some(*map.get(label).ok_or_else(|| DatasetError::UnknownLabel {
                path: path.to_string(),
                line: lineno,
                label: label.clone(),
            })?),
            None => Some(Verdict::from_label_token(label).ok_or_else(|| {
                DatasetError::UnknownLabel {
                    path: path.to_string(),
                    line: lineno,
                    label: label.clone(),
                }
            })?),
        },
    };
    if raw.id.trim().is_empty() || raw.text.trim().is_empty() {
        return Err(DatasetError::Schema {
            path: path.to_string(),
            line: lineno,
            message: "id and text must be nonempty".into(),
        });
    }
    Ok(Some(NewsCase {
        id: raw.id,
        text: raw.text,
        evidence: raw
            .evidence
            .into_iter()
            .map(|e| Evidence {
                source: if e.source.is_empty() {
                    "unknown".into()
                } else {
                    e.source
                },
                text: e.text,
            })
            .collect(),
        gold_label,
        domain_tag: raw.domain,
    }))
}

/// Parse one case in the normalized schema. Labels are verdict tokens
/// (`true`/`false`/`real`/`fake`); an absent label leaves the gold label
/// unset.
pub fn parse_case_json(json: &str) -> Result<NewsCase, DatasetError> {
    let raw: RawCase = serde_json::from_str(json).map_err(|e| DatasetError::Schema {
        path: "<inline>".into(),
        line: 1,
        message: e.to_string(),
    })?;
    convert_raw(raw, None, &[], "<inline>", 1)?.ok_or_else(|| DatasetError::Schema {
        path: "<inline>".into(),
        line: 1,
        message: "case was dropped".into(),
    })
}

/// Load a normalized JSONL file directly. Without a label map, labels are
/// interpreted as verdict tokens (`true`/`false`/`real`/`fake`) and an
/// absent label leaves the gold label unset.
pub fn load_cases(
    path: &Path,
    label_map: Option<&BTreeMap<String, Verdict>>,
    drop_labels: &[String],
) -> Result<Vec<NewsCase>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let path_str = path.display().to_string();
    let mut cases = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCase = serde_json::from_str(line).map_err(|e| DatasetError::Schema {
            path: path_str.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        let Some(case) = convert_raw(raw, label_map, drop_labels, &path_str, lineno)? else {
            continue;
        };
        if !seen_ids.insert(case.id.clone()) {
            return Err(DatasetError::Schema {
                path: path_str.clone(),
                line: lineno,
                message: format!("duplicate id {}", case.id),
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

/// Gold labels keyed by case id, for joining against traces.
pub fn gold_labels(cases: &[NewsCase]) -> BTreeMap<String, Verdict> {
    cases
        .iter()
        .filter_map(|c| c.gold_label.map(|v| (c.id.clone(), v)))
        .collect()
}

/// Converting the public datasets' native formats is left to operators;
/// the engine consumes only the normalized schema above.
pub fn convert_native(dataset: &str, _input: &Path, _output: &Path) -> Result<(), DatasetError> {
    Err(DatasetError::ConverterUnavailable(dataset.to_string()))
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown label {label:?}")]
    UnknownLabel {
        path: String,
        line: usize,
        label: String,
    },
    #[error("no converter for dataset {0:?}; provide files in the normalized JSONL schema")]
    ConverterUnavailable(String),
}
