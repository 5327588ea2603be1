//! Dataset data model, newline-delimited JSON persistence, validation,
//! and version-controlled mutation.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingDoc {
    pub doc_id: String,
    pub text: String,
    /// Graded relevance; JSON booleans load as 0/1.
    pub relevant: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalItem {
    pub id: String,
    pub prompt: String,
    pub references: Vec<String>,
    pub tags: BTreeSet<String>,
    pub grounding: Vec<GroundingDoc>,
    pub expected_terms: Vec<String>,
    pub meta: BTreeMap<String, String>,
}

impl EvalItem {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        EvalItem {
            id: id.into(),
            prompt: prompt.into(),
            references: Vec::new(),
            tags: BTreeSet::new(),
            grounding: Vec::new(),
            expected_terms: Vec::new(),
            meta: BTreeMap::new(),
        }
    }
}

// Unknown top-level fields are folded into `meta` so files written by newer
// tooling survive a round trip.
impl<'de> Deserialize<'de> for EvalItem {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as DeError;
        let mut obj = match Value::deserialize(deserializer)? {
            Value::Object(m) => m,
            other => return Err(D::Error::custom(format!("expected object, got {other}"))),
        };
        let id = match obj.remove("id") {
            Some(Value::String(s)) => s,
            _ => return Err(D::Error::custom("missing or non-string 'id'")),
        };
        let prompt = match obj.remove("prompt") {
            Some(Value::String(s)) => s,
            _ => return Err(D::Error::custom("missing or non-string 'prompt'")),
        };
        let references = match obj.remove("references") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
        };
        let tags = match obj.remove("tags") {
            None | Some(Value::Null) => BTreeSet::new(),
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
        };
        let grounding = match obj.remove("grounding") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(arr)) => {
                let mut docs = Vec::new();
                for v in arr {
                    let mut m = match v {
                        Value::Object(m) => m,
                        other => {
                            return Err(D::Error::custom(format!(
                                "grounding entry must be object, got {other}"
                            )))
                        }
                    };
                    let doc_id = match m.remove("doc_id") {
                        Some(Value::String(s)) => s,
                        _ => return Err(D::Error::custom("grounding doc missing 'doc_id'")),
                    };
                    let text = match m.remove("text") {
                        Some(Value::String(s)) => s,
                        _ => return Err(D::Error::custom("grounding doc missing 'text'")),
                    };
                    let relevant = match m.remove("relevant") {
                        None | Some(Value::Null) => None,
                        Some(Value::Bool(b)) => Some(b as u32),
                        Some(Value::Number(n)) => Some(
                            n.as_u64()
                                .ok_or_else(|| D::Error::custom("relevant must be >= 0"))?
                                as u32,
                        ),
                        Some(other) => {
                            return Err(D::Error::custom(format!(
                                "relevant must be bool or integer, got {other}"
                            )))
                        }
                    };
                    docs.push(GroundingDoc {
                        doc_id,
                        text,
                        relevant,
                    });
                }
                docs
            }
            Some(other) => {
                return Err(D::Error::custom(format!(
                    "grounding must be array, got {other}"
                )))
            }
        };
        let expected_terms = match obj.remove("expected_terms") {
            None | Some(Value::Null) => Vec::new(),
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
        };
        let mut meta: BTreeMap<String, String> = match obj.remove("meta") {
            None | Some(Value::Null) => BTreeMap::new(),
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
        };
        for (k, v) in obj {
            let s = match v {
                Value::String(s) => s,
                other => other.to_string(),
            };
            meta.insert(k, s);
        }
        Ok(EvalItem {
            id,
            prompt,
            references,
            tags,
            grounding,
            expected_terms,
            meta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeAction {
    Add,
    Remove,
    Update,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEntry {
    /// Unix epoch seconds.
    pub timestamp: u64,
    pub action: ChangeAction,
    pub item_id: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub version: u64,
    #[serde(skip)]
    pub items: Vec<EvalItem>,
    pub changelog: Vec<ChangeEntry>,
}

#[derive(Debug, Clone)]
pub enum ChangeRequest {
    Add { item: EvalItem, note: String },
    Remove { id: String, note: String },
    Update { item: EvalItem, note: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub item_id: Option<String>,
    pub detail: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>) -> Self {
        Dataset {
            name: name.into(),
            version: 1,
            items: Vec::new(),
            changelog: Vec::new(),
        }
    }

    pub fn item(&self, id: &str) -> Option<&EvalItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

/// Load a dataset from newline-delimited JSON: line 1 is the manifest,
/// each following line one item. Fails on any invariant violation.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| EvalError::Parse {
            line: 1,
            msg: "empty file, expected manifest line".into(),
        })??;
    let mut dataset: Dataset = serde_json::from_str(&header).map_err(|e| EvalError::Parse {
        line: 1,
        msg: format!("bad manifest: {e}"),
    })?;
    let mut seen: HashSet<String> = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: EvalItem = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if item.prompt.trim().is_empty() {
            return Err(EvalError::Parse {
                line: line_no,
                msg: format!("item {:?} has empty prompt", item.id),
            });
        }
        if !seen.insert(item.id.clone()) {
            return Err(EvalError::Parse {
                line: line_no,
                msg: format!("duplicate id {:?}", item.id),
            });
        }
        dataset.items.push(item);
    }
    Ok(dataset)
}

/// Write a dataset as newline-delimited JSON. Output is byte-stable for a
/// given dataset value.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, dataset).map_err(|e| EvalError::InvalidDataset(e.to_string()))?;
    out.push(b'\n');
    for item in &dataset.items {
        serde_json::to_writer(&mut out, item)
            .map_err(|e| EvalError::InvalidDataset(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(&out)?;
    Ok(())
}

/// Check every type invariant; violations are data, not errors.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for item in &dataset.items {
        if !seen.insert(&item.id) {
            violations.push(Violation {
                rule: "duplicate_id".into(),
                item_id: Some(item.id.clone()),
                detail: format!("id {:?} occurs more than once", item.id),
            });
        }
        if item.prompt.trim().is_empty() {
            violations.push(Violation {
                rule: "empty_prompt".into(),
                item_id: Some(item.id.clone()),
                detail: "prompt is empty after trimming".into(),
            });
        }
        let mut term_seen = HashSet::new();
        for term in &item.expected_terms {
            if term.trim().is_empty() {
                violations.push(Violation {
                    rule: "empty_expected_term".into(),
                    item_id: Some(item.id.clone()),
                    detail: "expected_terms contains an empty entry".into(),
                });
            } else if !term_seen.insert(term.as_str()) {
                violations.push(Violation {
                    rule: "duplicate_expected_term".into(),
                    item_id: Some(item.id.clone()),
                    detail: format!("expected term {term:?} duplicated"),
                });
            }
        }
        let mut doc_seen = HashSet::new();
        for doc in &item.grounding {
            if !doc_seen.insert(doc.doc_id.as_str()) {
                violations.push(Violation {
                    rule: "duplicate_grounding_doc_id".into(),
                    item_id: Some(item.id.clone()),
                    detail: format!("grounding doc_id {:?} duplicated", doc.doc_id),
                });
            }
            if doc.text.trim().is_empty() {
                violations.push(Violation {
                    rule: "empty_grounding_text".into(),
                    item_id: Some(item.id.clone()),
                    detail: format!("grounding doc {:?} has empty text", doc.doc_id),
                });
            }
        }
    }
    violations
}

fn now_epoch() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Apply one change, returning a new dataset with version + 1 and one
/// appended changelog entry. The original is untouched.
pub fn mutate_dataset(dataset: &Dataset, change: ChangeRequest) -> Result<Dataset> {
    mutate_dataset_at(dataset, change, now_epoch())
}

/// Same as [`mutate_dataset`] with an explicit timestamp, for reproducible
/// changelogs.
pub fn mutate_dataset_at(
    dataset: &Dataset,
    change: ChangeRequest,
    timestamp: u64,
) -> Result<Dataset> {
    let mut next = dataset.clone();
    next.version = dataset.version + 1;
    let entry = match change {
        ChangeRequest::Add { item, note } => {
            if next.item(&item.id).is_some() {
                return Err(EvalError::InvalidDataset(format!(
                    "add: id {:?} already exists",
                    item.id
                )));
            }
            let id = item.id.clone();
            next.items.push(item);
            ChangeEntry {
                timestamp,
                action: ChangeAction::Add,
                item_id: id,
                note,
            }
        }
        ChangeRequest::Remove { id, note } => {
            let before = next.items.len();
            next.items.retain(|i| i.id != id);
            if next.items.len() == before {
                return Err(EvalError::InvalidDataset(format!(
                    "remove: unknown id {id:?}"
                )));
            }
            ChangeEntry {
                timestamp,
                action: ChangeAction::Remove,
                item_id: id,
                note,
            }
        }
        ChangeRequest::Update { item, note } => {
            let slot = next
                .items
                .iter_mut()
                .find(|i| i.id == item.id)
                .ok_or_else(|| {
                    EvalError::InvalidDataset(format!("update: unknown id {:?}", item.id))
                })?;
            let id = item.id.clone();
            *slot = item;
            ChangeEntry {
                timestamp,
                action: ChangeAction::Update,
                item_id: id,
                note,
            }
        }
    };
    next.changelog.push(entry);
    Ok(next)
}
