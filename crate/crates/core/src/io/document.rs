//! The persisted model: network, labels, bench layout, notes and sim settings.
//!
//! Saved as pretty-printed JSON with sorted object keys and modules in id
//! order, so saving the same document always produces the same bytes.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::kind::{ModuleKind, ParamName};
use crate::network::{BenchPos, InitialState, Module, ModuleId, Network, SignalDecl, Wiring};
use crate::params::{self, ParamValue, Table};
use crate::sim::SimConfig;

use super::note::BenchNote;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u64),
    #[error("integrity error: {0}")]
    IntegrityError(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelDocument {
    pub network: Network,
    pub notes: Vec<BenchNote>,
    pub sim: SimConfig,
    /// Script libraries the model expects to be loaded, as given by the user.
    pub scripts: Vec<String>,
}

impl ModelDocument {
    pub fn new(network: Network) -> Self {
        ModelDocument { network, ..Default::default() }
    }

    pub fn save(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.to_json()).expect("document values are serializable");
        out.push(b'\n');
        out
    }

    pub fn load(bytes: &[u8]) -> Result<ModelDocument, DocumentError> {
        let value: Value = serde_json::from_slice(bytes).map_err(|e| DocumentError::ParseError {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        from_json(&value)
    }

    fn to_json(&self) -> Value {
        let net = &self.network;
        let mut modules = Vec::with_capacity(net.len());
        let mut bench = Map::new();
        for m in net.modules() {
            modules.push(module_json(m));
            bench.insert(m.id.to_string(), json!([m.bench.x, m.bench.y]));
        }
        let mut labels = Map::new();
        for (label, id, origin) in net.labels().entries() {
            if origin == crate::label::Origin::User {
                labels.insert(label.to_string(), json!(id.0));
            }
        }
        let signals: Map<String, Value> =
            net.signals().iter().map(|(name, d)| (name.clone(), json!({ "path": d.path }))).collect();
        let notes: Vec<Value> = self
            .notes
            .iter()
            .map(|n| json!({ "id": n.id, "bench": [n.bench.x, n.bench.y], "html": n.html }))
            .collect();
        json!({
            "format_version": FORMAT_VERSION,
            "network": { "modules": modules, "next_id": net.next_id(), "signals": signals },
            "labels": labels,
            "bench": bench,
            "notes": notes,
            "sim": serde_json::to_value(&self.sim).expect("sim config serializes"),
            "scripts": self.scripts,
        })
    }
}

fn param_json(v: &ParamValue) -> Value {
    match v {
        ParamValue::Scalar(x) => json!(x),
        ParamValue::Table(t) => Value::Array(t.points().iter().map(|&(x, y)| json!([x, y])).collect()),
    }
}

fn module_json(m: &Module) -> Value {
    let mut o = Map::new();
    o.insert("id".into(), json!(m.id.0));
    o.insert("kind".into(), json!(m.kind.as_str()));
    let params: Map<String, Value> = m.params.iter().map(|(n, v)| (n.as_str().to_string(), param_json(v))).collect();
    o.insert("params".into(), Value::Object(params));
    if let Some(init) = m.init {
        o.insert("x0".into(), json!(init.x0));
        o.insert("v0".into(), json!(init.v0));
    }
    if let Some(s) = &m.signal {
        o.insert("signal".into(), json!(s));
    }
    match m.wiring {
        Wiring::None => {}
        Wiring::Endpoints([a, b]) => {
            o.insert("endpoints".into(), json!([a.map(|i| i.0), b.map(|i| i.0)]));
        }
        Wiring::Target(t) => {
            o.insert("target".into(), json!(t.map(|i| i.0)));
        }
    }
    Value::Object(o)
}

fn bad(msg: impl Into<String>) -> DocumentError {
    DocumentError::IntegrityError(msg.into())
}

fn field<'a>(o: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value, DocumentError> {
    o.get(key).ok_or_else(|| bad(format!("{ctx}: missing `{key}`")))
}

fn object<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>, DocumentError> {
    v.as_object().ok_or_else(|| bad(format!("{ctx}: expected an object")))
}

fn array<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>, DocumentError> {
    v.as_array().ok_or_else(|| bad(format!("{ctx}: expected an array")))
}

fn number(v: &Value, ctx: &str) -> Result<f64, DocumentError> {
    v.as_f64().ok_or_else(|| bad(format!("{ctx}: expected a number")))
}

fn id(v: &Value, ctx: &str) -> Result<u64, DocumentError> {
    v.as_u64().filter(|&i| i > 0).ok_or_else(|| bad(format!("{ctx}: expected a module id")))
}

fn opt_id(v: &Value, ctx: &str) -> Result<Option<ModuleId>, DocumentError> {
    if v.is_null() {
        Ok(None)
    } else {
        id(v, ctx).map(|i| Some(ModuleId(i)))
    }
}

fn point(v: &Value, ctx: &str) -> Result<(f64, f64), DocumentError> {
    match array(v, ctx)?.as_slice() {
        [x, y] => Ok((number(x, ctx)?, number(y, ctx)?)),
        _ => Err(bad(format!("{ctx}: expected a pair"))),
    }
}

fn param_value(name: ParamName, v: &Value, ctx: &str) -> Result<ParamValue, DocumentError> {
    if name.is_table() {
        let pts = array(v, ctx)?.iter().map(|p| point(p, ctx)).collect::<Result<Vec<_>, _>>()?;
        Ok(ParamValue::Table(Table::new_unchecked(pts)))
    } else {
        Ok(ParamValue::Scalar(number(v, ctx)?))
    }
}

fn read_module(v: &Value) -> Result<Module, DocumentError> {
    let o = object(v, "module")?;
    let mid = ModuleId(id(field(o, "id", "module")?, "module id")?);
    let ctx = format!("module {mid}");
    let kind: ModuleKind = field(o, "kind", &ctx)?
        .as_str()
        .ok_or_else(|| bad(format!("{ctx}: kind must be a string")))?
        .parse()
        .map_err(|e| bad(format!("{ctx}: {e}")))?;
    let mut params = params::defaults_for(kind);
    if let Some(p) = o.get("params") {
        for (name, value) in object(p, &ctx)? {
            let name: ParamName = name.parse().map_err(|e| bad(format!("{ctx}: {e}")))?;
            if !kind.accepts(name) {
                return Err(bad(format!("{ctx}: {kind} has no parameter {name}")));
            }
            params.insert(name, param_value(name, value, &ctx)?);
        }
    }
    let init = if kind.has_initial_state() {
        let get = |k| o.get(k).map(|v| number(v, &ctx)).transpose().map(Option::unwrap_or_default);
        Some(InitialState { x0: get("x0")?, v0: get("v0")? })
    } else {
        if o.contains_key("x0") || o.contains_key("v0") {
            return Err(bad(format!("{ctx}: {kind} has no initial state")));
        }
        None
    };
    let signal = match o.get("signal") {
        None | Some(Value::Null) => None,
        Some(_) if !kind.takes_signal() => return Err(bad(format!("{ctx}: {kind} takes no input signal"))),
        Some(s) => Some(s.as_str().ok_or_else(|| bad(format!("{ctx}: signal must be a string")))?.to_string()),
    };
    let wiring = match (o.get("endpoints"), o.get("target")) {
        (Some(_), _) if kind.family() != crate::kind::Family::Lia => {
            return Err(bad(format!("{ctx}: {kind} has no endpoints")))
        }
        (_, Some(_)) if !kind.attaches() => return Err(bad(format!("{ctx}: {kind} has no target"))),
        (Some(e), _) => match array(e, &ctx)?.as_slice() {
            [a, b] => Wiring::Endpoints([opt_id(a, &ctx)?, opt_id(b, &ctx)?]),
            _ => return Err(bad(format!("{ctx}: endpoints must be a pair"))),
        },
        (None, Some(t)) => Wiring::Target(opt_id(t, &ctx)?),
        (None, None) if kind.family() == crate::kind::Family::Lia => Wiring::Endpoints([None, None]),
        (None, None) if kind.attaches() => Wiring::Target(None),
        (None, None) => Wiring::None,
    };
    Ok(Module { id: mid, kind, params, init, bench: BenchPos::default(), signal, wiring })
}

fn from_json(root: &Value) -> Result<ModelDocument, DocumentError> {
    let root = object(root, "document")?;
    let version = field(root, "format_version", "document")?
        .as_u64()
        .ok_or_else(|| bad("format_version must be an integer"))?;
    if version != FORMAT_VERSION {
        return Err(DocumentError::VersionUnsupported(version));
    }
    let network = object(field(root, "network", "document")?, "network")?;

    let mut modules: BTreeMap<ModuleId, Module> = BTreeMap::new();
    for v in array(field(network, "modules", "network")?, "modules")? {
        let m = read_module(v)?;
        if modules.insert(m.id, m).is_some() {
            return Err(bad(format!("duplicate module id {}", v["id"])));
        }
    }
    for m in modules.values() {
        let check = |t: ModuleId, ok: fn(ModuleKind, ModuleKind) -> bool| match modules.get(&t) {
            None => Err(bad(format!("module {} refers to missing module {t}", m.id))),
            Some(target) if !ok(m.kind, target.kind) => {
                Err(bad(format!("module {} ({}) cannot refer to {t} ({})", m.id, m.kind, target.kind)))
            }
            Some(_) => Ok(()),
        };
        match m.wiring {
            Wiring::Endpoints(slots) => {
                for t in slots.into_iter().flatten() {
                    check(t, |_, k| k.is_positional())?;
                }
                if let [Some(a), Some(b)] = slots {
                    if a == b {
                        return Err(bad(format!("module {} links {a} to itself", m.id)));
                    }
                }
            }
            Wiring::Target(Some(t)) => check(t, |k, t| k.accepts_target(t))?,
            _ => {}
        }
    }

    if let Some(bench) = root.get("bench") {
        for (key, v) in object(bench, "bench")? {
            let mid = key.parse().map(ModuleId).map_err(|_| bad(format!("bench: bad module id `{key}`")))?;
            let m = modules.get_mut(&mid).ok_or_else(|| bad(format!("bench: missing module {mid}")))?;
            let (x, y) = point(v, "bench")?;
            m.bench = BenchPos::new(x, y);
        }
    }

    let max_id = modules.keys().next_back().map_or(0, |m| m.0);
    let next_id = match network.get("next_id") {
        Some(v) => v.as_u64().ok_or_else(|| bad("next_id must be an integer"))?,
        None => max_id + 1,
    };
    if next_id <= max_id {
        return Err(bad(format!("next_id {next_id} is not above module id {max_id}")));
    }

    let mut net = Network::new();
    for m in modules.into_values() {
        net.restore_module(m);
    }
    net.restore_next_id(next_id);
    if let Some(signals) = network.get("signals") {
        for (name, v) in object(signals, "signals")? {
            let path = field(object(v, "signal")?, "path", "signal")?
                .as_str()
                .ok_or_else(|| bad(format!("signal `{name}`: path must be a string")))?;
            net.declare_signal(name, SignalDecl { path: path.to_string() });
        }
    }
    if let Some(labels) = root.get("labels") {
        for (label, v) in object(labels, "labels")? {
            let target = ModuleId(id(v, "label target")?);
            net.add_label(target, label).map_err(|e| bad(format!("label `{label}`: {e}")))?;
        }
    }
    net.reset_revision();

    let mut notes = Vec::new();
    if let Some(v) = root.get("notes") {
        for n in array(v, "notes")? {
            let o = object(n, "note")?;
            let nid = field(o, "id", "note")?.as_u64().ok_or_else(|| bad("note id must be an integer"))?;
            let (x, y) = point(field(o, "bench", "note")?, "note")?;
            let html = field(o, "html", "note")?.as_str().ok_or_else(|| bad("note html must be a string"))?;
            notes.push(BenchNote::new(nid, BenchPos::new(x, y), html));
        }
    }
    let sim = match root.get("sim") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| bad(format!("sim: {e}")))?,
        None => SimConfig::default(),
    };
    let scripts = match root.get("scripts") {
        Some(v) => array(v, "scripts")?
            .iter()
            .map(|s| s.as_str().map(str::to_string).ok_or_else(|| bad("scripts must be strings")))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    Ok(ModelDocument { network: net, notes, sim, scripts })
}
