use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::Path;

use super::{is_ab_name, Literal, Predicate, Rule, RuleSet};
use crate::error::{Error, Result};
use crate::interchange::{csv_error, csv_writer, is_identifier};

/// Injective kernel id → semantic label mapping.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMap {
    entries: BTreeMap<u32, String>,
}

impl LabelMap {
    pub fn new(entries: BTreeMap<u32, String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (k, label) in &entries {
            if !is_identifier(label) || is_ab_name(label) {
                return Err(Error::InvalidData(format!(
                    "kernel {k}: `{label}` is not a valid predicate label"
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Collision(format!(
                    "label `{label}` assigned to more than one kernel"
                )));
            }
        }
        Ok(LabelMap { entries })
    }

    pub fn get(&self, kernel_id: u32) -> Option<&str> {
        self.entries.get(&kernel_id).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<u32, String> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Renames labelled kernel predicates; exception predicates and class labels are untouched.
pub fn apply_labels(rs: &RuleSet, labels: &LabelMap) -> Result<RuleSet> {
    let mut bindings = rs.bindings().clone();
    for (&k, label) in labels.entries() {
        let used_raw = rs
            .rules()
            .iter()
            .flat_map(|r| &r.body)
            .any(|l| l.predicate == Predicate::Kernel(k));
        if !used_raw {
            continue;
        }
        match bindings.get(label) {
            Some(&other) if other != k => {
                return Err(Error::Collision(format!(
                    "label `{label}` for kernel {k} already names kernel {other}"
                )))
            }
            _ => {}
        }
        let clashes_unbound = rs.rules().iter().flat_map(|r| &r.body).any(|l| {
            matches!(&l.predicate, Predicate::Concept(name) if name == label && !rs.bindings().contains_key(name))
        });
        if clashes_unbound {
            return Err(Error::Collision(format!(
                "label `{label}` for kernel {k} already used by another predicate"
            )));
        }
        bindings.insert(label.clone(), k);
    }

    let rules = rs
        .rules()
        .iter()
        .map(|rule| Rule {
            head: rule.head.clone(),
            coverage: rule.coverage,
            body: rule
                .body
                .iter()
                .map(|lit| match &lit.predicate {
                    Predicate::Kernel(k) => match labels.get(*k) {
                        Some(label) => Literal {
                            predicate: Predicate::Concept(label.to_string()),
                            negated: lit.negated,
                        },
                        None => lit.clone(),
                    },
                    _ => lit.clone(),
                })
                .collect(),
        })
        .collect();
    rs.with_renamed(rules, bindings)
}

pub fn write_label_map(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    writer.write_record(["kernel_id", "label"]).map_err(|e| csv_error(path, e))?;
    for (k, label) in labels.entries() {
        writer
            .write_record([k.to_string(), label.clone()])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["kernel_id", "label"] {
        return Err(Error::format(path, "header must be `kernel_id,label`"));
    }
    let mut entries = BTreeMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let k = record[0]
            .trim()
            .parse::<u32>()
            .map_err(|_| Error::format(path, format!("row {}: bad kernel id", row + 1)))?;
        if entries.insert(k, record[1].to_string()).is_some() {
            return Err(Error::format(path, format!("kernel {k} listed twice")));
        }
    }
    match LabelMap::new(entries) {
        Err(Error::InvalidData(msg)) => Err(Error::format(path, msg)),
        other => other,
    }
}
