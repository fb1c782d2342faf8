//! Parameter mapping between two versions of one API and per-parameter
//! change classification.
//!
//! Mapping proceeds in three passes over shrinking work lists:
//! 1. same-kind name matches (positional matches also checked for reordering),
//! 2. cross-kind name matches (positional to keyword-only and back),
//! 3. leftover positionals by (index, annotation), leftover keyword-only by annotation.
//!
//! Whatever remains on the old side was removed; whatever remains on the new
//! side was added.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};

use crate::sigmodel::{normalize_annotation, ApiSignature, ParamKind, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Unchanged,
    Removal,
    Rename,
    Reorder,
    KeyToPos,
    PosToKey,
    TypeChange,
    AddedRequired,
    AddedOptional,
}

impl ChangeKind {
    pub const ALL: [ChangeKind; 9] = [
        ChangeKind::Unchanged,
        ChangeKind::Removal,
        ChangeKind::Rename,
        ChangeKind::Reorder,
        ChangeKind::KeyToPos,
        ChangeKind::PosToKey,
        ChangeKind::TypeChange,
        ChangeKind::AddedRequired,
        ChangeKind::AddedOptional,
    ];

    /// Short symbol used in reports (Δd, Δr, ...).
    pub fn symbol(self) -> &'static str {
        match self {
            ChangeKind::Unchanged => "=",
            ChangeKind::Removal => "Δd",
            ChangeKind::Rename => "Δr",
            ChangeKind::Reorder => "Δo",
            ChangeKind::KeyToPos => "Δp",
            ChangeKind::PosToKey => "Δk",
            ChangeKind::TypeChange => "Δt",
            ChangeKind::AddedRequired => "Δu",
            ChangeKind::AddedOptional => "Δv",
        }
    }

    pub fn is_addition(self) -> bool {
        matches!(self, ChangeKind::AddedRequired | ChangeKind::AddedOptional)
    }
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamChange {
    pub kind: ChangeKind,
    pub old_name: String,
    pub new_name: Option<String>,
    pub old_index: usize,
    pub new_index: Option<usize>,
    pub detail: String,
}

/// Key of a change-dictionary entry: old parameter name and its index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey {
    pub name: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeEntry {
    pub key: ParamKey,
    /// Kind of the parameter in the old signature.
    pub old_kind: ParamKind,
    /// Name of the parameter this one maps to in the new signature.
    pub mapped_to: Option<String>,
    pub changes: Vec<ParamChange>,
    /// The mapped new parameter lost its default; callers not passing it now fail.
    pub became_required: bool,
}

impl ChangeEntry {
    pub fn has(&self, kind: ChangeKind) -> bool {
        self.changes.iter().any(|c| c.kind == kind)
    }

    pub fn is_unchanged(&self) -> bool {
        self.changes.iter().all(|c| c.kind == ChangeKind::Unchanged) && !self.became_required
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeDict {
    /// One entry per old-signature parameter, in old-signature order.
    pub entries: Vec<ChangeEntry>,
    /// Added parameters (Δu / Δv), in new-signature order.
    pub additions: Vec<ParamChange>,
    pub new_has_var_positional: bool,
    pub new_has_var_keyword: bool,
    /// Step 3 resolved an ambiguous leftover set; the mapping is a guess.
    pub low_confidence: bool,
}

impl ChangeDict {
    pub fn entry(&self, old_name: &str) -> Option<&ChangeEntry> {
        self.entries.iter().find(|e| e.key.name == old_name)
    }

    pub fn is_identity(&self) -> bool {
        self.additions.is_empty() && self.entries.iter().all(ChangeEntry::is_unchanged)
    }

    /// Old-name to new-name mapping for every mapped parameter.
    pub fn mapping(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .filter_map(|e| e.mapped_to.as_deref().map(|to| (e.key.name.as_str(), to)))
            .collect()
    }
}

/// Pairs of annotation texts (old, new) that the user declares incompatible.
/// Type changes are only reported for listed pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeChangeRules {
    pairs: BTreeSet<(String, String)>,
}

impl TypeChangeRules {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_pair(mut self, old: &str, new: &str) -> Self {
        self.insert(old, new);
        self
    }

    pub fn insert(&mut self, old: &str, new: &str) {
        self.pairs.insert((normalize_annotation(old), normalize_annotation(new)));
    }

    fn is_incompatible(&self, old: &str, new: &str) -> bool {
        self.pairs.contains(&(normalize_annotation(old), normalize_annotation(new)))
    }
}

fn annotations_match(a: &Parameter, b: &Parameter) -> bool {
    match (&a.annotation_text, &b.annotation_text) {
        (Some(x), Some(y)) => normalize_annotation(x) == normalize_annotation(y),
        _ => true,
    }
}

fn type_change(a: &Parameter, b: &Parameter, rules: &TypeChangeRules) -> Option<String> {
    let (Some(x), Some(y)) = (&a.annotation_text, &b.annotation_text) else {
        return None;
    };
    if normalize_annotation(x) != normalize_annotation(y) && rules.is_incompatible(x, y) {
        Some(format!("type {x} -> {y}"))
    } else {
        None
    }
}

fn default_detail(a: &Parameter, b: &Parameter) -> Option<String> {
    if a.default_text != b.default_text {
        Some(format!(
            "default {} -> {}",
            a.default_text.as_deref().unwrap_or("<none>"),
            b.default_text.as_deref().unwrap_or("<none>")
        ))
    } else {
        None
    }
}

/// Map parameters of `old` onto `new` with no type-change rules.
pub fn establish_mapping(old: &ApiSignature, new: &ApiSignature) -> ChangeDict {
    establish_mapping_with(old, new, &TypeChangeRules::default())
}

pub fn establish_mapping_with(old: &ApiSignature, new: &ApiSignature, rules: &TypeChangeRules) -> ChangeDict {
    let mut old_left: Vec<&Parameter> = old.parameters.iter().filter(|p| !p.kind.is_variadic()).collect();
    let mut new_left: Vec<&Parameter> = new.parameters.iter().filter(|p| !p.kind.is_variadic()).collect();
    let mut matched: BTreeMap<&str, Vec<ParamChange>> = BTreeMap::new();
    let mut targets: BTreeMap<&str, &Parameter> = BTreeMap::new();
    let mut low_confidence = false;

    let change = |kind: ChangeKind, o: &Parameter, n: Option<&Parameter>, detail: String| ParamChange {
        kind,
        old_name: o.name.clone(),
        new_name: n.map(|n| n.name.clone()),
        old_index: o.index,
        new_index: n.map(|n| n.index),
        detail,
    };

    // Step 1: same kind, same name.
    for o in old_left.clone() {
        let Some(n) = new_left.iter().copied().find(|n| n.kind == o.kind && n.name == o.name) else {
            continue;
        };
        let mut changes = Vec::new();
        if o.kind == ParamKind::Positional && o.index != n.index {
            changes.push(change(
                ChangeKind::Reorder,
                o,
                Some(n),
                format!("position {} -> {}", o.index, n.index),
            ));
        }
        if let Some(detail) = type_change(o, n, rules) {
            changes.push(change(ChangeKind::TypeChange, o, Some(n), detail));
        }
        if changes.is_empty() {
            changes.push(change(ChangeKind::Unchanged, o, Some(n), default_detail(o, n).unwrap_or_default()));
        }
        matched.insert(&o.name, changes);
        targets.insert(&o.name, n);
        old_left.retain(|p| p.name != o.name);
        new_left.retain(|p| p.name != n.name);
    }

    // Step 2: same name across kinds.
    for o in old_left.clone() {
        let Some(n) = new_left.iter().copied().find(|n| n.name == o.name) else {
            continue;
        };
        let kind = if o.kind == ParamKind::Positional {
            ChangeKind::PosToKey
        } else {
            ChangeKind::KeyToPos
        };
        let detail = format!("{} -> {}", o.kind, n.kind);
        matched.insert(&o.name, vec![change(kind, o, Some(n), detail)]);
        targets.insert(&o.name, n);
        old_left.retain(|p| p.name != o.name);
        new_left.retain(|p| p.name != n.name);
    }

    // Step 3: positionals by (index, annotation); keyword-only by annotation.
    for o in old_left.clone() {
        let candidates: Vec<&Parameter> = new_left
            .iter()
            .copied()
            .filter(|n| n.kind == o.kind && annotations_match(o, n))
            .filter(|n| o.kind != ParamKind::Positional || n.index == o.index)
            .collect();
        let Some(n) = candidates.iter().copied().min_by_key(|n| n.index) else {
            continue;
        };
        if candidates.len() > 1 {
            low_confidence = true;
        }
        let mut detail = format!("{} -> {}", o.name, n.name);
        if let Some(d) = default_detail(o, n) {
            detail.push_str("; ");
            detail.push_str(&d);
        }
        matched.insert(&o.name, vec![change(ChangeKind::Rename, o, Some(n), detail)]);
        targets.insert(&o.name, n);
        old_left.retain(|p| p.name != o.name);
        new_left.retain(|p| p.name != n.name);
    }
    if !old_left.is_empty() && !new_left.is_empty() {
        // Leftovers on both sides: some could be unmatched renames.
        low_confidence = true;
    }

    let mut entries = Vec::with_capacity(old.parameters.len());
    for o in &old.parameters {
        let key = ParamKey {
            name: o.name.clone(),
            index: o.index,
        };
        let entry = if o.kind.is_variadic() {
            match new.parameters.iter().find(|n| n.kind == o.kind) {
                Some(n) => ChangeEntry {
                    key,
                    old_kind: o.kind,
                    mapped_to: Some(n.name.clone()),
                    changes: vec![change(ChangeKind::Unchanged, o, Some(n), String::new())],
                    became_required: false,
                },
                None => ChangeEntry {
                    key,
                    old_kind: o.kind,
                    mapped_to: None,
                    changes: vec![change(ChangeKind::Removal, o, None, format!("{} removed", o.kind))],
                    became_required: false,
                },
            }
        } else if let Some(changes) = matched.remove(o.name.as_str()) {
            let target = targets[o.name.as_str()];
            ChangeEntry {
                key,
                old_kind: o.kind,
                mapped_to: Some(target.name.clone()),
                changes,
                became_required: o.has_default && target.is_required(),
            }
        } else {
            ChangeEntry {
                key,
                old_kind: o.kind,
                mapped_to: None,
                changes: vec![change(ChangeKind::Removal, o, None, String::new())],
                became_required: false,
            }
        };
        entries.push(entry);
    }

    let added: HashSet<&str> = new_left.iter().map(|p| p.name.as_str()).collect();
    let additions = new
        .parameters
        .iter()
        .filter(|p| added.contains(p.name.as_str()))
        .map(|n| ParamChange {
            kind: if n.has_default {
                ChangeKind::AddedOptional
            } else {
                ChangeKind::AddedRequired
            },
            old_name: String::new(),
            new_name: Some(n.name.clone()),
            old_index: 0,
            new_index: Some(n.index),
            detail: n.kind.to_string(),
        })
        .collect();

    ChangeDict {
        entries,
        additions,
        new_has_var_positional: new.var_positional().is_some(),
        new_has_var_keyword: new.var_keyword().is_some(),
        low_confidence,
    }
}

impl Serialize for ParamChange {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ParamChange", 4)?;
        s.serialize_field("kind", &self.kind)?;
        s.serialize_field("to", &self.new_name)?;
        s.serialize_field("new_index", &self.new_index)?;
        s.serialize_field("detail", &self.detail)?;
        s.end()
    }
}

impl Serialize for ChangeEntry {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ChangeEntry", 3)?;
        s.serialize_field("old", &(&self.key.name, self.key.index))?;
        s.serialize_field("changes", &self.changes)?;
        s.serialize_field("became_required", &self.became_required)?;
        s.end()
    }
}

impl Serialize for ChangeDict {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ChangeDict", 5)?;
        s.serialize_field("entries", &self.entries)?;
        s.serialize_field("additions", &self.additions)?;
        s.serialize_field("new_has_var_positional", &self.new_has_var_positional)?;
        s.serialize_field("new_has_var_keyword", &self.new_has_var_keyword)?;
        s.serialize_field("low_confidence", &self.low_confidence)?;
        s.end()
    }
}
