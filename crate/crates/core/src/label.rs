//! Hierarchical labels and the index that resolves them to modules.
//!
//! A label is a `/`-separated path such as `/myString/extremities/1`. Every
//! module owns one permanent system label (`/sys/<KIND>/<id>`) and any number
//! of user labels. A *radical* is a segment-wise prefix; the modules reachable
//! under a radical form a sub-network. Sub-networks may overlap freely.
//!
//! The index keeps a segment trie next to the flat maps so radical and glob
//! queries only visit the relevant part of the namespace.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::kind::ModuleKind;
use crate::network::ModuleId;

/// Characters that may not appear inside a label segment.
pub const RESERVED: &[char] = &['/', '*', '?', '[', ']', '(', ')', '+', '&', '-', '|'];

/// Root segment reserved for system labels.
pub const SYSTEM_ROOT: &str = "sys";

pub type ModuleSet = BTreeSet<ModuleId>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("malformed label `{label}`: {reason}")]
    Malformed { label: String, reason: &'static str },
    #[error("label `{label}` already targets module {owner}")]
    Taken { label: String, owner: ModuleId },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("system label `{0}` cannot be removed")]
    SystemLabelProtected(String),
    #[error("labels under `/{SYSTEM_ROOT}` are reserved for the system: `{0}`")]
    Reserved(String),
    #[error("unknown module {0}")]
    UnknownModule(ModuleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    System,
    User,
}

/// A well-formed label string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(String);

impl Label {
    pub fn parse(text: &str) -> Result<Label, LabelError> {
        check_path(text)?;
        Ok(Label(text.to_string()))
    }

    pub fn system(kind: ModuleKind, id: ModuleId) -> Label {
        Label(format!("/{SYSTEM_ROOT}/{kind}/{id}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        segments(&self.0)
    }

    pub fn is_system_path(&self) -> bool {
        self.segments().next() == Some(SYSTEM_ROOT)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn segments(path: &str) -> impl Iterator<Item = &str> {
    path[1..].split('/')
}

fn check_path(text: &str) -> Result<(), LabelError> {
    let bad = |reason| Err(LabelError::Malformed { label: text.to_string(), reason });
    if !text.starts_with('/') {
        return bad("must begin with `/`");
    }
    if text.len() == 1 {
        return bad("needs at least one segment");
    }
    if text.ends_with('/') {
        return bad("trailing `/`");
    }
    for seg in segments(text) {
        if seg.is_empty() {
            return bad("empty segment");
        }
        if seg.chars().any(char::is_whitespace) {
            return bad("whitespace in segment");
        }
        if seg.chars().any(|c| RESERVED.contains(&c)) {
            return bad("reserved character in segment");
        }
    }
    Ok(())
}

#[derive(Debug, Default, Clone, PartialEq)]
struct Node {
    children: BTreeMap<Box<str>, Node>,
    target: Option<ModuleId>,
}

impl Node {
    fn collect(&self, out: &mut ModuleSet) {
        if let Some(id) = self.target {
            out.insert(id);
        }
        for child in self.children.values() {
            child.collect(out);
        }
    }

    fn is_empty(&self) -> bool {
        self.target.is_none() && self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct ModuleLabels {
    system: String,
    user: BTreeSet<String>,
}

/// Bidirectional label ↔ module index.
#[derive(Debug, Clone, Default)]
pub struct LabelIndex {
    by_label: HashMap<String, ModuleId>,
    by_module: HashMap<ModuleId, ModuleLabels>,
    root: Node,
}

impl PartialEq for LabelIndex {
    fn eq(&self, other: &Self) -> bool {
        // the trie is derived from the maps
        self.by_label == other.by_label && self.by_module == other.by_module
    }
}

impl LabelIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a module with its system label.
    pub fn register_module(&mut self, id: ModuleId, kind: ModuleKind) {
        let system = Label::system(kind, id);
        self.insert_path(system.as_str(), id);
        self.by_label.insert(system.0.clone(), id);
        self.by_module.insert(id, ModuleLabels { system: system.0, user: BTreeSet::new() });
    }

    /// Drops a module and every label targeting it.
    pub fn unregister_module(&mut self, id: ModuleId) {
        if let Some(labels) = self.by_module.remove(&id) {
            for l in labels.user.iter().chain(std::iter::once(&labels.system)) {
                self.by_label.remove(l);
                self.remove_path(l);
            }
        }
    }

    pub fn contains_module(&self, id: ModuleId) -> bool {
        self.by_module.contains_key(&id)
    }

    pub fn check_add(&self, id: ModuleId, label: &Label) -> Result<(), LabelError> {
        if !self.by_module.contains_key(&id) {
            return Err(LabelError::UnknownModule(id));
        }
        if let Some(&owner) = self.by_label.get(label.as_str()) {
            if owner == id {
                return Ok(());
            }
            return Err(LabelError::Taken { label: label.to_string(), owner });
        }
        if label.is_system_path() {
            return Err(LabelError::Reserved(label.to_string()));
        }
        Ok(())
    }

    /// Adds a user label. Re-adding a label the module already owns is a no-op
    /// and returns `false`.
    pub fn add(&mut self, id: ModuleId, label: &Label) -> Result<bool, LabelError> {
        self.check_add(id, label)?;
        if self.by_label.contains_key(label.as_str()) {
            return Ok(false);
        }
        self.by_label.insert(label.0.clone(), id);
        self.by_module.get_mut(&id).expect("checked").user.insert(label.0.clone());
        self.insert_path(label.as_str(), id);
        Ok(true)
    }

    pub fn check_remove(&self, label: &str) -> Result<ModuleId, LabelError> {
        let &id = self
            .by_label
            .get(label)
            .ok_or_else(|| LabelError::UnknownLabel(label.to_string()))?;
        if self.by_module[&id].system == label {
            return Err(LabelError::SystemLabelProtected(label.to_string()));
        }
        Ok(id)
    }

    /// Removes a user label; returns the module it targeted.
    pub fn remove(&mut self, label: &str) -> Result<ModuleId, LabelError> {
        let id = self.check_remove(label)?;
        self.by_label.remove(label);
        self.by_module.get_mut(&id).expect("indexed").user.remove(label);
        self.remove_path(label);
        Ok(id)
    }

    pub fn target(&self, label: &str) -> Option<ModuleId> {
        self.by_label.get(label).copied()
    }

    /// System label first, then user labels in lexicographic order.
    pub fn labels_of(&self, id: ModuleId) -> Result<Vec<String>, LabelError> {
        let labels = self.by_module.get(&id).ok_or(LabelError::UnknownModule(id))?;
        let mut out = Vec::with_capacity(1 + labels.user.len());
        out.push(labels.system.clone());
        out.extend(labels.user.iter().cloned());
        Ok(out)
    }

    pub fn system_label(&self, id: ModuleId) -> Option<&str> {
        self.by_module.get(&id).map(|l| l.system.as_str())
    }

    pub fn user_labels(&self, id: ModuleId) -> impl Iterator<Item = &str> {
        self.by_module.get(&id).into_iter().flat_map(|l| l.user.iter().map(String::as_str))
    }

    /// All (label, module, origin) triples, sorted by label.
    pub fn entries(&self) -> Vec<(&str, ModuleId, Origin)> {
        let mut out: Vec<_> = self
            .by_label
            .iter()
            .map(|(l, &id)| {
                let origin = if self.by_module[&id].system == *l { Origin::System } else { Origin::User };
                (l.as_str(), id, origin)
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn label_count(&self) -> usize {
        self.by_label.len()
    }

    pub fn module_count(&self) -> usize {
        self.by_module.len()
    }

    /// Modules with at least one label whose segment-wise prefix equals `radical`.
    pub fn resolve_radical(&self, radical: &str) -> Result<ModuleSet, LabelError> {
        check_path(radical)?;
        let mut out = ModuleSet::new();
        if let Some(node) = self.node(radical) {
            node.collect(&mut out);
        }
        Ok(out)
    }

    /// Modules having a label that matches every segment matcher in turn.
    pub(crate) fn match_segments(&self, pattern: &[SegmentMatcher]) -> ModuleSet {
        let mut out = ModuleSet::new();
        let mut seen = HashSet::new();
        walk(&self.root, pattern, 0, &mut out, &mut seen);
        out
    }

    fn node(&self, path: &str) -> Option<&Node> {
        let mut node = &self.root;
        for seg in segments(path) {
            node = node.children.get(seg)?;
        }
        Some(node)
    }

    fn insert_path(&mut self, path: &str, id: ModuleId) {
        let mut node = &mut self.root;
        for seg in segments(path) {
            node = node.children.entry(seg.into()).or_default();
        }
        node.target = Some(id);
    }

    fn remove_path(&mut self, path: &str) {
        fn prune<'a>(node: &mut Node, mut segs: impl Iterator<Item = &'a str>) {
            match segs.next() {
                None => node.target = None,
                Some(seg) => {
                    if let Some(child) = node.children.get_mut(seg) {
                        prune(child, segs);
                        if child.is_empty() {
                            node.children.remove(seg);
                        }
                    }
                }
            }
        }
        prune(&mut self.root, segments(path));
    }
}

/// One compiled pattern segment.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SegmentMatcher {
    Literal(String),
    Glob(crate::picker::Glob),
    /// Zero or more whole segments.
    Any,
}

fn walk(
    node: &Node,
    pattern: &[SegmentMatcher],
    at: usize,
    out: &mut ModuleSet,
    seen: &mut HashSet<(*const Node, usize)>,
) {
    if !seen.insert((node as *const Node, at)) {
        return;
    }
    let Some(seg) = pattern.get(at) else {
        if let Some(id) = node.target {
            out.insert(id);
        }
        return;
    };
    match seg {
        SegmentMatcher::Literal(s) => {
            if let Some(child) = node.children.get(s.as_str()) {
                walk(child, pattern, at + 1, out, seen);
            }
        }
        SegmentMatcher::Glob(g) => {
            for (key, child) in &node.children {
                if g.matches(key) {
                    walk(child, pattern, at + 1, out, seen);
                }
            }
        }
        SegmentMatcher::Any => {
            walk(node, pattern, at + 1, out, seen);
            for child in node.children.values() {
                walk(child, pattern, at, out, seen);
            }
        }
    }
}
