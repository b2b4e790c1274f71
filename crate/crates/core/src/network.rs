//! The physics network: module instances, their parameters and initial state,
//! and the material ↔ interaction topology.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kind::{Family, ModuleKind, ParamName};
use crate::label::{Label, LabelError, LabelIndex, ModuleSet};
use crate::params::{self, check_value, ParamMap, ParamValue, TableError, ValueError};

/// Opaque module identifier. Assigned from 1 and never reused in a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModuleId(pub u64);

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Workbench coordinates. No physical effect.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchPos {
    pub x: f64,
    pub y: f64,
}

impl BenchPos {
    pub fn new(x: f64, y: f64) -> Self {
        BenchPos { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialState {
    pub x0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateVar {
    X0,
    V0,
}

impl std::str::FromStr for StateVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "X0" | "x0" => Ok(StateVar::X0),
            "V0" | "v0" => Ok(StateVar::V0),
            _ => Err(format!("unknown state variable `{s}`")),
        }
    }
}

/// Topological links owned by a module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wiring {
    None,
    /// Ordered endpoint pair of an interaction; slots may be empty while editing.
    Endpoints([Option<ModuleId>; 2]),
    /// Target of an observer or a force input.
    Target(Option<ModuleId>),
}

impl Wiring {
    fn for_kind(kind: ModuleKind) -> Wiring {
        if kind.family() == Family::Lia {
            Wiring::Endpoints([None, None])
        } else if kind.attaches() {
            Wiring::Target(None)
        } else {
            Wiring::None
        }
    }

    fn refs(&self) -> impl Iterator<Item = ModuleId> + '_ {
        let (a, b) = match *self {
            Wiring::None => (None, None),
            Wiring::Endpoints([a, b]) => (a, b),
            Wiring::Target(t) => (t, None),
        };
        a.into_iter().chain(b)
    }

    fn forget(&mut self, id: ModuleId) {
        match self {
            Wiring::None => {}
            Wiring::Endpoints(slots) => {
                for s in slots.iter_mut() {
                    if *s == Some(id) {
                        *s = None;
                    }
                }
            }
            Wiring::Target(t) => {
                if *t == Some(id) {
                    *t = None;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub id: ModuleId,
    pub kind: ModuleKind,
    pub params: ParamMap,
    pub init: Option<InitialState>,
    pub bench: BenchPos,
    pub signal: Option<String>,
    pub wiring: Wiring,
}

impl Module {
    pub fn param(&self, name: ParamName) -> Option<&ParamValue> {
        self.params.get(&name)
    }

    pub fn scalar(&self, name: ParamName) -> Option<f64> {
        self.params.get(&name).and_then(ParamValue::as_scalar)
    }

    pub fn endpoints(&self) -> Option<[Option<ModuleId>; 2]> {
        match self.wiring {
            Wiring::Endpoints(e) => Some(e),
            _ => None,
        }
    }

    pub fn target(&self) -> Option<ModuleId> {
        match self.wiring {
            Wiring::Target(t) => t,
            _ => None,
        }
    }
}

/// Declared input signal, resolved to a buffer at simulation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalDecl {
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("unknown module id {0}")]
    UnknownId(ModuleId),
    #[error("kind mismatch: {0}")]
    KindMismatch(String),
    #[error("interaction {lia} cannot link module {mat} to itself")]
    SelfLink { lia: ModuleId, mat: ModuleId },
    #[error("parameter {name} is not defined for {kind} module {id}")]
    NoSuchParamForKind { id: ModuleId, kind: ModuleKind, name: ParamName },
    #[error("inertia must be positive, got {0}")]
    NonPositiveInertia(f64),
    #[error("malformed table: {0}")]
    MalformedTable(TableError),
    #[error("invalid value: {0}")]
    InvalidValue(ValueError),
    #[error("non-finite value")]
    NonFinite,
    #[error("{kind} module {id} has no initial state")]
    NoInitialState { id: ModuleId, kind: ModuleKind },
    #[error("{kind} module {id} takes no input signal")]
    NoSignalInput { id: ModuleId, kind: ModuleKind },
    #[error(transparent)]
    Label(#[from] LabelError),
}

impl From<ValueError> for NetworkError {
    fn from(e: ValueError) -> Self {
        match e {
            ValueError::NonPositiveInertia(v) => NetworkError::NonPositiveInertia(v),
            ValueError::MalformedTable(t) => NetworkError::MalformedTable(t),
            other => NetworkError::InvalidValue(other),
        }
    }
}

/// How `set_param`/`set_state` treat targets that do not accept the name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Fail before mutating anything.
    #[default]
    Strict,
    /// Skip illegal targets.
    Lenient,
}

/// One problem found by [`Network::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    DanglingLink(ModuleId),
    DanglingAttachment(ModuleId),
    IllegalParam { id: ModuleId, name: ParamName, reason: String },
    MalformedTable { id: ModuleId, name: ParamName, reason: String },
    UnresolvedSignal { id: ModuleId, signal: Option<String> },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DanglingLink(id) => write!(f, "interaction {id} is not connected to two materials"),
            Issue::DanglingAttachment(id) => write!(f, "module {id} is not attached to a target"),
            Issue::IllegalParam { id, name, reason } => write!(f, "module {id} parameter {name}: {reason}"),
            Issue::MalformedTable { id, name, reason } => write!(f, "module {id} table {name}: {reason}"),
            Issue::UnresolvedSignal { id, signal: Some(s) } => write!(f, "module {id} input signal `{s}` is not declared"),
            Issue::UnresolvedSignal { id, signal: None } => write!(f, "module {id} has no input signal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// The authoritative model graph, including its label index.
#[derive(Debug, Clone, Default)]
pub struct Network {
    modules: BTreeMap<ModuleId, Module>,
    // target -> modules whose wiring references it
    referrers: HashMap<ModuleId, BTreeSet<ModuleId>>,
    labels: LabelIndex,
    signals: BTreeMap<String, SignalDecl>,
    next_id: u64,
    revision: u64,
}

/// Structural equality; the edit counter is not part of the model.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.modules == other.modules
            && self.labels == other.labels
            && self.signals == other.signals
            && self.next_id() == other.next_id()
    }
}

impl Network {
    pub fn new() -> Self {
        Network { next_id: 1, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Id the next `add_module` will assign.
    pub fn next_id(&self) -> u64 {
        self.next_id.max(1)
    }

    pub fn labels(&self) -> &LabelIndex {
        &self.labels
    }

    pub fn signals(&self) -> &BTreeMap<String, SignalDecl> {
        &self.signals
    }

    pub fn get(&self, id: ModuleId) -> Result<&Module, NetworkError> {
        self.modules.get(&id).ok_or(NetworkError::UnknownId(id))
    }

    pub fn contains(&self, id: ModuleId) -> bool {
        self.modules.contains_key(&id)
    }

    /// Modules in ascending id order.
    pub fn modules(&self) -> impl Iterator<Item = &Module> {
        self.modules.values()
    }

    pub fn ids(&self) -> ModuleSet {
        self.modules.keys().copied().collect()
    }

    /// Modules whose wiring references `id`.
    pub fn referrers(&self, id: ModuleId) -> impl Iterator<Item = ModuleId> + '_ {
        self.referrers.get(&id).into_iter().flatten().copied()
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    pub fn add_module(&mut self, kind: ModuleKind, bench: BenchPos) -> Result<ModuleId, NetworkError> {
        if !bench.is_finite() {
            return Err(NetworkError::NonFinite);
        }
        let id = ModuleId(self.next_id());
        self.next_id = id.0 + 1;
        self.insert_module(Module {
            id,
            kind,
            params: params::defaults_for(kind),
            init: kind.has_initial_state().then(InitialState::default),
            bench,
            signal: None,
            wiring: Wiring::for_kind(kind),
        });
        self.bump();
        Ok(id)
    }

    fn insert_module(&mut self, module: Module) {
        self.labels.register_module(module.id, module.kind);
        for r in module.wiring.refs() {
            self.referrers.entry(r).or_default().insert(module.id);
        }
        self.modules.insert(module.id, module);
    }

    fn mat(&self, id: ModuleId) -> Result<&Module, NetworkError> {
        let m = self.get(id)?;
        if !m.kind.is_positional() {
            return Err(NetworkError::KindMismatch(format!(
                "module {id} is {}, expected a material with a position (MAS, CEL, SOL, ENX)",
                m.kind
            )));
        }
        Ok(m)
    }

    fn set_wiring(&mut self, id: ModuleId, wiring: Wiring) {
        let m = self.modules.get_mut(&id).expect("caller checked id");
        let old = std::mem::replace(&mut m.wiring, wiring);
        for r in old.refs() {
            if let Some(set) = self.referrers.get_mut(&r) {
                set.remove(&id);
                if set.is_empty() {
                    self.referrers.remove(&r);
                }
            }
        }
        for r in wiring.refs() {
            self.referrers.entry(r).or_default().insert(id);
        }
    }

    /// Sets the ordered endpoint pair of an interaction.
    pub fn connect(&mut self, lia: ModuleId, a: ModuleId, b: ModuleId) -> Result<(), NetworkError> {
        let l = self.get(lia)?;
        if l.kind.family() != Family::Lia {
            return Err(NetworkError::KindMismatch(format!(
                "module {lia} is {}, expected an interaction",
                l.kind
            )));
        }
        self.mat(a)?;
        self.mat(b)?;
        if a == b {
            return Err(NetworkError::SelfLink { lia, mat: a });
        }
        self.set_wiring(lia, Wiring::Endpoints([Some(a), Some(b)]));
        self.bump();
        Ok(())
    }

    /// Clears both endpoints of an interaction.
    pub fn disconnect(&mut self, lia: ModuleId) -> Result<(), NetworkError> {
        let l = self.get(lia)?;
        if l.kind.family() != Family::Lia {
            return Err(NetworkError::KindMismatch(format!("module {lia} is {}, expected an interaction", l.kind)));
        }
        self.set_wiring(lia, Wiring::Endpoints([None, None]));
        self.bump();
        Ok(())
    }

    /// Attaches an observer (SOX→MAT, SOF→LIA) or a force input (ENF→MAT).
    pub fn attach(&mut self, module: ModuleId, target: ModuleId) -> Result<(), NetworkError> {
        let m = self.get(module)?;
        let t = self.get(target)?;
        if !m.kind.attaches() || !m.kind.accepts_target(t.kind) {
            return Err(NetworkError::KindMismatch(format!(
                "{} module {module} cannot attach to {} module {target}",
                m.kind, t.kind
            )));
        }
        self.set_wiring(module, Wiring::Target(Some(target)));
        self.bump();
        Ok(())
    }

    pub fn remove_module(&mut self, id: ModuleId) -> Result<(), NetworkError> {
        if !self.modules.contains_key(&id) {
            return Err(NetworkError::UnknownId(id));
        }
        self.set_wiring(id, Wiring::None);
        if let Some(refs) = self.referrers.remove(&id) {
            for r in refs {
                if let Some(m) = self.modules.get_mut(&r) {
                    m.wiring.forget(id);
                }
            }
        }
        self.modules.remove(&id);
        self.labels.unregister_module(id);
        self.bump();
        Ok(())
    }

    /// Sets a parameter on every target that accepts it; returns how many were
    /// updated. Nothing is mutated if an error is returned.
    pub fn set_param<'a>(
        &mut self,
        targets: impl IntoIterator<Item = &'a ModuleId>,
        name: ParamName,
        value: ParamValue,
        mode: Strictness,
    ) -> Result<usize, NetworkError> {
        check_value(name, &value)?;
        let mut hits = Vec::new();
        for &id in targets {
            let m = self.get(id)?;
            if m.kind.accepts(name) {
                hits.push(id);
            } else if mode == Strictness::Strict {
                return Err(NetworkError::NoSuchParamForKind { id, kind: m.kind, name });
            }
        }
        for id in &hits {
            self.modules.get_mut(id).expect("checked").params.insert(name, value.clone());
        }
        if !hits.is_empty() {
            self.bump();
        }
        Ok(hits.len())
    }

    /// Stores a parameter without value checks. Loaders use this so that
    /// [`Network::validate`] can report bad values instead of refusing the file.
    pub fn set_param_unchecked(&mut self, id: ModuleId, name: ParamName, value: ParamValue) -> Result<(), NetworkError> {
        let m = self.modules.get_mut(&id).ok_or(NetworkError::UnknownId(id))?;
        if !m.kind.accepts(name) {
            return Err(NetworkError::NoSuchParamForKind { id, kind: m.kind, name });
        }
        m.params.insert(name, value);
        self.bump();
        Ok(())
    }

    pub fn param(&self, id: ModuleId, name: ParamName) -> Result<&ParamValue, NetworkError> {
        let m = self.get(id)?;
        m.param(name).ok_or(NetworkError::NoSuchParamForKind { id, kind: m.kind, name })
    }

    pub fn set_state<'a>(
        &mut self,
        targets: impl IntoIterator<Item = &'a ModuleId>,
        var: StateVar,
        value: f64,
        mode: Strictness,
    ) -> Result<usize, NetworkError> {
        if !value.is_finite() {
            return Err(NetworkError::NonFinite);
        }
        let mut hits = Vec::new();
        for &id in targets {
            let m = self.get(id)?;
            if m.init.is_some() {
                hits.push(id);
            } else if mode == Strictness::Strict {
                return Err(NetworkError::NoInitialState { id, kind: m.kind });
            }
        }
        for id in &hits {
            let init = self.modules.get_mut(id).and_then(|m| m.init.as_mut()).expect("checked");
            match var {
                StateVar::X0 => init.x0 = value,
                StateVar::V0 => init.v0 = value,
            }
        }
        if !hits.is_empty() {
            self.bump();
        }
        Ok(hits.len())
    }

    pub fn state(&self, id: ModuleId, var: StateVar) -> Result<f64, NetworkError> {
        let m = self.get(id)?;
        let init = m.init.ok_or(NetworkError::NoInitialState { id, kind: m.kind })?;
        Ok(match var {
            StateVar::X0 => init.x0,
            StateVar::V0 => init.v0,
        })
    }

    pub fn move_to(&mut self, id: ModuleId, pos: BenchPos) -> Result<(), NetworkError> {
        if !pos.is_finite() {
            return Err(NetworkError::NonFinite);
        }
        self.modules.get_mut(&id).ok_or(NetworkError::UnknownId(id))?.bench = pos;
        self.bump();
        Ok(())
    }

    pub fn translate<'a>(&mut self, targets: impl IntoIterator<Item = &'a ModuleId>, dx: f64, dy: f64) -> Result<usize, NetworkError> {
        let ids: Vec<ModuleId> = targets.into_iter().copied().collect();
        let mut moved = Vec::with_capacity(ids.len());
        for &id in &ids {
            let b = self.get(id)?.bench;
            let pos = BenchPos::new(b.x + dx, b.y + dy);
            if !pos.is_finite() {
                return Err(NetworkError::NonFinite);
            }
            moved.push((id, pos));
        }
        for (id, pos) in &moved {
            self.modules.get_mut(id).expect("checked").bench = *pos;
        }
        if !moved.is_empty() {
            self.bump();
        }
        Ok(moved.len())
    }

    /// Binds an ENX/ENF module to a named input signal.
    pub fn set_signal(&mut self, id: ModuleId, signal: Option<String>) -> Result<(), NetworkError> {
        let m = self.modules.get_mut(&id).ok_or(NetworkError::UnknownId(id))?;
        if !m.kind.takes_signal() {
            return Err(NetworkError::NoSignalInput { id, kind: m.kind });
        }
        m.signal = signal;
        self.bump();
        Ok(())
    }

    pub fn declare_signal(&mut self, name: &str, decl: SignalDecl) {
        self.signals.insert(name.to_string(), decl);
        self.bump();
    }

    pub fn add_label(&mut self, id: ModuleId, label: &str) -> Result<(), NetworkError> {
        let label = Label::parse(label)?;
        if !self.modules.contains_key(&id) {
            return Err(NetworkError::UnknownId(id));
        }
        if self.labels.add(id, &label)? {
            self.bump();
        }
        Ok(())
    }

    pub fn remove_label(&mut self, label: &str) -> Result<ModuleId, NetworkError> {
        let id = self.labels.remove(label)?;
        self.bump();
        Ok(id)
    }

    pub fn labels_of(&self, id: ModuleId) -> Result<Vec<String>, NetworkError> {
        if !self.modules.contains_key(&id) {
            return Err(NetworkError::UnknownId(id));
        }
        Ok(self.labels.labels_of(id)?)
    }

    pub fn resolve_radical(&self, radical: &str) -> Result<ModuleSet, NetworkError> {
        Ok(self.labels.resolve_radical(radical)?)
    }

    /// Re-creates a module with a fixed id, as read from a persisted document.
    pub(crate) fn restore_module(&mut self, module: Module) {
        self.next_id = self.next_id().max(module.id.0 + 1);
        self.insert_module(module);
    }

    pub(crate) fn restore_next_id(&mut self, next: u64) {
        self.next_id = self.next_id().max(next);
    }

    pub(crate) fn reset_revision(&mut self) {
        self.revision = 0;
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for m in self.modules.values() {
            match m.wiring {
                Wiring::Endpoints([Some(_), Some(_)]) | Wiring::None | Wiring::Target(Some(_)) => {}
                Wiring::Endpoints(_) => issues.push(Issue::DanglingLink(m.id)),
                Wiring::Target(None) => issues.push(Issue::DanglingAttachment(m.id)),
            }
            for (&name, value) in &m.params {
                match check_value(name, value) {
                    Ok(()) => {}
                    Err(ValueError::MalformedTable(e)) => {
                        issues.push(Issue::MalformedTable { id: m.id, name, reason: e.to_string() })
                    }
                    Err(e) => issues.push(Issue::IllegalParam { id: m.id, name, reason: e.to_string() }),
                }
            }
            if m.kind.takes_signal() {
                let declared = m.signal.as_ref().is_some_and(|s| self.signals.contains_key(s));
                if !declared {
                    issues.push(Issue::UnresolvedSignal { id: m.id, signal: m.signal.clone() });
                }
            }
        }
        ValidationReport { issues }
    }

    /// Module count per kind, in kind order.
    pub fn kind_counts(&self) -> BTreeMap<ModuleKind, usize> {
        let mut out = BTreeMap::new();
        for m in self.modules.values() {
            *out.entry(m.kind).or_insert(0) += 1;
        }
        out
    }
}
