//! The standard packages: model building, labels, parameters, simulation and
//! output, bound to a [`Workspace`].
//!
//! Arguments naming modules ("targets") are either a picker expression, when
//! they start with `/` or `(`, or a list of numeric ids. Every command checks
//! its whole input before it mutates the model, so a failing command leaves
//! the model as it found it.

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use pnet_core::io::{
    export_wav, import_signal, BenchNote, ChannelLayout, ModelDocument, SampleFormat, WavOptions, write_trace_csv,
};
use pnet_core::network::SignalDecl;
use pnet_core::sim::{
    compile, stability_check, stiffness_for_frequency, frequency_for_stiffness, Engine, ReferenceEngine, RunControl,
    RunOutput, SignalBank, SimState, TraceSelection, Verdict,
};
use pnet_core::{BenchPos, Family, ModuleId, ModuleKind, Network, ParamName, ParamValue, Picker, StateVar, Strictness, Table};

use crate::interp::{float_arg, int_arg, list_arg, CommandSpec, Interp, Package, ScriptError};
use crate::list;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The model a script session works on.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub doc: ModelDocument,
    /// Input signals loaded for ENX/ENF modules, by declared name.
    pub signals: SignalBank,
    pub last_run: Option<RunOutput>,
    /// Bumped whenever the whole document is replaced.
    pub generation: u64,
}

impl Workspace {
    pub fn new(doc: ModelDocument) -> Self {
        Workspace { doc, ..Default::default() }
    }

    pub fn net(&self) -> &Network {
        &self.doc.network
    }
}

type I = Interp<Workspace>;
type R = Result<String, ScriptError>;

/// An interpreter with all standard packages registered.
pub fn session(ws: Workspace) -> I {
    let mut i = Interp::new(ws);
    for p in standard_packages() {
        i.register_package(p).expect("standard package names are distinct");
    }
    i
}

const fn cmd(name: &'static str, usage: &'static str, min: usize, max: Option<usize>, handler: fn(&mut I, &[String]) -> R) -> CommandSpec<Workspace> {
    CommandSpec::new(name, usage, min, max, handler)
}

pub fn standard_packages() -> Vec<Package<Workspace>> {
    vec![
        Package {
            name: "module",
            commands: vec![
                cmd("create", "KIND ?count? ?x y?", 1, Some(4), module_create),
                cmd("delete", "TARGETS", 1, Some(1), module_delete),
                cmd("list", "?TARGETS?", 0, Some(1), module_list),
                cmd("kind", "ID", 1, Some(1), module_kind),
                cmd("count", "?KIND?", 0, Some(1), module_count),
                cmd("info", "ID", 1, Some(1), module_info),
            ],
        },
        Package {
            name: "link",
            commands: vec![
                cmd("create", "KIND A B", 3, Some(3), link_create),
                cmd("connect", "LINK A B", 3, Some(3), link_connect),
                cmd("disconnect", "LINK", 1, Some(1), link_disconnect),
                cmd("ends", "LINK", 1, Some(1), link_ends),
                cmd("attach", "ID TARGET", 2, Some(2), link_attach),
                cmd("of", "ID", 1, Some(1), link_of),
            ],
        },
        Package {
            name: "label",
            commands: vec![
                cmd("add", "ID LABEL", 2, Some(2), label_add),
                cmd("remove", "LABEL", 1, Some(1), label_remove),
                cmd("of", "ID", 1, Some(1), label_of),
                cmd("target", "LABEL", 1, Some(1), label_target),
                cmd("radical", "RADICAL", 1, Some(1), label_radical),
            ],
        },
        Package {
            name: "picker",
            commands: vec![
                cmd("eval", "EXPR", 1, Some(1), picker_eval),
                cmd("count", "EXPR", 1, Some(1), picker_count),
                cmd("check", "EXPR", 1, Some(1), picker_check),
            ],
        },
        Package {
            name: "param",
            commands: vec![
                cmd("set", "TARGETS NAME VALUE ?-lenient?", 3, Some(4), param_set),
                cmd("get", "ID NAME", 2, Some(2), param_get),
                cmd("list", "ID", 1, Some(1), param_list),
            ],
        },
        Package {
            name: "state",
            commands: vec![
                cmd("set", "TARGETS X0|V0 VALUE ?-lenient?", 3, Some(4), state_set),
                cmd("get", "ID X0|V0", 2, Some(2), state_get),
            ],
        },
        Package {
            name: "bench",
            commands: vec![
                cmd("move", "ID X Y", 3, Some(3), bench_move),
                cmd("pos", "ID", 1, Some(1), bench_pos),
                cmd("translate", "TARGETS DX DY", 3, Some(3), bench_translate),
            ],
        },
        Package {
            name: "note",
            commands: vec![
                cmd("add", "X Y HTML", 3, Some(3), note_add),
                cmd("remove", "NOTE", 1, Some(1), note_remove),
                cmd("list", "", 0, Some(0), note_list),
                cmd("html", "NOTE", 1, Some(1), note_html),
                cmd("problems", "NOTE", 1, Some(1), note_problems),
            ],
        },
        Package {
            name: "model",
            commands: vec![
                cmd("new", "", 0, Some(0), model_new),
                cmd("load", "PATH", 1, Some(1), model_load),
                cmd("save", "PATH", 1, Some(1), model_save),
                cmd("stats", "", 0, Some(0), model_stats),
                cmd("validate", "", 0, Some(0), model_validate),
                cmd("signal", "NAME PATH", 2, Some(2), model_signal),
                cmd("bind", "ID ?NAME?", 1, Some(2), model_bind),
            ],
        },
        Package {
            name: "sim",
            commands: vec![
                cmd("config", "?option value ...?", 0, None, sim_config),
                cmd("run", "?-steps N? ?-seconds S?", 0, Some(2), sim_run),
                cmd("stability", "", 0, Some(0), sim_stability),
            ],
        },
        Package {
            name: "out",
            commands: vec![
                cmd("wav", "PATH ?-pcm16? ?-normalize? ?-split? ?-channels IDS?", 1, Some(7), out_wav),
                cmd("trace", "PATH", 1, Some(1), out_trace),
                cmd("peak", "ID", 1, Some(1), out_peak),
            ],
        },
        Package {
            name: "info",
            commands: vec![
                cmd("kinds", "?FAMILY?", 0, Some(1), info_kinds),
                cmd("params", "KIND", 1, Some(1), info_params),
                cmd("packages", "", 0, Some(0), info_packages),
                cmd("commands", "PACKAGE", 1, Some(1), info_commands),
                cmd("version", "", 0, Some(0), info_version),
            ],
        },
        Package {
            name: "util",
            commands: vec![
                cmd("range", "FROM TO ?STEP?", 2, Some(3), util_range),
                cmd("format", "FORMAT ?arg ...?", 1, None, util_format),
                cmd("stiffness", "HZ MASS ?RATE?", 2, Some(3), util_stiffness),
                cmd("frequency", "K MASS ?RATE?", 2, Some(3), util_frequency),
            ],
        },
    ]
}

// ---- argument helpers ----

fn id_arg(s: &str) -> Result<ModuleId, ScriptError> {
    s.trim().parse().map(ModuleId).map_err(|_| ScriptError::runtime(format!("expected module id but got \"{s}\"")))
}

fn known_id(i: &I, s: &str) -> Result<ModuleId, ScriptError> {
    let id = id_arg(s)?;
    i.ctx.net().get(id)?;
    Ok(id)
}

fn picker(text: &str) -> Result<Picker, ScriptError> {
    Picker::parse(text).map_err(|e| ScriptError::runtime(e.to_string()))
}

/// Picker or id list, in ascending id order without duplicates.
fn targets(i: &I, text: &str) -> Result<Vec<ModuleId>, ScriptError> {
    let t = text.trim_start();
    if t.starts_with('/') || t.starts_with('(') {
        return Ok(picker(t)?.eval(i.ctx.net().labels()).into_iter().collect());
    }
    let mut ids = list_arg(t)?.iter().map(|s| id_arg(s)).collect::<Result<Vec<_>, _>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn ids(set: impl IntoIterator<Item = ModuleId>) -> String {
    list::join(set.into_iter().map(|id| id.to_string()))
}

fn kind_arg(s: &str) -> Result<ModuleKind, ScriptError> {
    s.parse().map_err(|e: pnet_core::kind::UnknownKind| ScriptError::runtime(e.to_string()))
}

fn param_name(s: &str) -> Result<ParamName, ScriptError> {
    s.parse().map_err(|e: pnet_core::kind::UnknownParam| ScriptError::runtime(e.to_string()))
}

fn state_var(s: &str) -> Result<StateVar, ScriptError> {
    s.parse().map_err(ScriptError::runtime)
}

fn strictness(flag: Option<&String>) -> Result<Strictness, ScriptError> {
    match flag.map(String::as_str) {
        None => Ok(Strictness::Strict),
        Some("-lenient") => Ok(Strictness::Lenient),
        Some(other) => Err(ScriptError::runtime(format!("unknown option \"{other}\""))),
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn pairs<K: AsRef<str>, V: AsRef<str>>(items: impl IntoIterator<Item = (K, V)>) -> String {
    list::join(items.into_iter().flat_map(|(k, v)| [k.as_ref().to_string(), v.as_ref().to_string()]))
}

/// A single number is a scalar; an even-length list of numbers is a table of `x y` points.
fn param_value(name: ParamName, s: &str) -> Result<ParamValue, ScriptError> {
    let items = list_arg(s)?;
    let nums = items.iter().map(|x| float_arg(x)).collect::<Result<Vec<_>, _>>()?;
    if name.is_table() {
        if nums.is_empty() || nums.len() % 2 != 0 {
            return Err(ScriptError::runtime(format!("{name} expects a list of x y points")));
        }
        let table = Table::new(nums.chunks(2).map(|p| (p[0], p[1])).collect())
            .map_err(|e| ScriptError::runtime(format!("malformed table: {e}")))?;
        Ok(table.into())
    } else if let [v] = nums.as_slice() {
        Ok((*v).into())
    } else {
        Err(ScriptError::runtime(format!("{name} expects a single number")))
    }
}

fn net_mut(i: &mut I) -> &mut Network {
    &mut i.ctx.doc.network
}

// ---- module ----

fn module_create(i: &mut I, a: &[String]) -> R {
    let kind = kind_arg(&a[0])?;
    let (count, at) = match a.len() {
        1 => (1, (0.0, 0.0)),
        2 => (int_arg(&a[1])?, (0.0, 0.0)),
        4 => (int_arg(&a[1])?, (float_arg(&a[2])?, float_arg(&a[3])?)),
        _ => return Err(ScriptError::runtime("expected KIND ?count? ?x y?")),
    };
    if count < 0 {
        return Err(ScriptError::runtime(format!("count must be non-negative, got {count}")));
    }
    if !(at.0.is_finite() && at.1.is_finite()) {
        return Err(ScriptError::runtime("bench position must be finite"));
    }
    let net = net_mut(i);
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        out.push(net.add_module(kind, BenchPos::new(at.0 + k as f64, at.1))?);
    }
    Ok(ids(out))
}

fn module_delete(i: &mut I, a: &[String]) -> R {
    let t = targets(i, &a[0])?;
    for id in &t {
        i.ctx.net().get(*id)?;
    }
    for id in &t {
        net_mut(i).remove_module(*id)?;
    }
    Ok(t.len().to_string())
}

fn module_list(i: &mut I, a: &[String]) -> R {
    match a.first() {
        Some(t) => Ok(ids(targets(i, t)?)),
        None => Ok(ids(i.ctx.net().ids())),
    }
}

fn module_kind(i: &mut I, a: &[String]) -> R {
    Ok(i.ctx.net().get(id_arg(&a[0])?)?.kind.to_string())
}

fn module_count(i: &mut I, a: &[String]) -> R {
    match a.first() {
        Some(k) => {
            let kind = kind_arg(k)?;
            Ok(i.ctx.net().kind_counts().get(&kind).copied().unwrap_or(0).to_string())
        }
        None => Ok(i.ctx.net().len().to_string()),
    }
}

fn module_info(i: &mut I, a: &[String]) -> R {
    let net = i.ctx.net();
    let m = net.get(id_arg(&a[0])?)?;
    let mut items: Vec<(String, String)> = vec![
        ("id".into(), m.id.to_string()),
        ("kind".into(), m.kind.to_string()),
        ("labels".into(), list::join(net.labels_of(m.id)?)),
        ("params".into(), pairs(m.params.iter().map(|(n, v)| (n.to_string(), v.to_string())))),
        ("bench".into(), list::join([num(m.bench.x), num(m.bench.y)])),
    ];
    if let Some(s) = m.init {
        items.push(("X0".into(), num(s.x0)));
        items.push(("V0".into(), num(s.v0)));
    }
    if let Some(e) = m.endpoints() {
        items.push(("ends".into(), list::join(e.iter().map(|x| x.map(|id| id.to_string()).unwrap_or_default()))));
    }
    if let Some(t) = m.target() {
        items.push(("target".into(), t.to_string()));
    }
    if let Some(s) = &m.signal {
        items.push(("signal".into(), s.clone()));
    }
    Ok(pairs(items))
}

// ---- link ----

fn link_create(i: &mut I, a: &[String]) -> R {
    let kind = kind_arg(&a[0])?;
    if kind.family() != Family::Lia {
        return Err(ScriptError::runtime(format!("{kind} is not an interaction kind")));
    }
    let (x, y) = (known_id(i, &a[1])?, known_id(i, &a[2])?);
    let net = i.ctx.net();
    for end in [x, y] {
        let k = net.get(end)?.kind;
        if !k.is_positional() {
            return Err(ScriptError::runtime(format!("module {end} ({k}) cannot be an interaction endpoint")));
        }
    }
    if x == y {
        return Err(ScriptError::runtime(format!("an interaction cannot link module {x} to itself")));
    }
    let (ba, bb) = (net.get(x)?.bench, net.get(y)?.bench);
    let mid = BenchPos::new((ba.x + bb.x) / 2.0, (ba.y + bb.y) / 2.0);
    let net = net_mut(i);
    let id = net.add_module(kind, mid)?;
    net.connect(id, x, y)?;
    Ok(id.to_string())
}

fn link_connect(i: &mut I, a: &[String]) -> R {
    let (l, x, y) = (id_arg(&a[0])?, id_arg(&a[1])?, id_arg(&a[2])?);
    net_mut(i).connect(l, x, y)?;
    Ok(String::new())
}

fn link_disconnect(i: &mut I, a: &[String]) -> R {
    net_mut(i).disconnect(id_arg(&a[0])?)?;
    Ok(String::new())
}

fn link_ends(i: &mut I, a: &[String]) -> R {
    let id = id_arg(&a[0])?;
    let m = i.ctx.net().get(id)?;
    let e = m.endpoints().ok_or_else(|| ScriptError::runtime(format!("module {id} ({}) is not an interaction", m.kind)))?;
    Ok(list::join(e.iter().map(|x| x.map(|id| id.to_string()).unwrap_or_default())))
}

fn link_attach(i: &mut I, a: &[String]) -> R {
    let (m, t) = (id_arg(&a[0])?, id_arg(&a[1])?);
    net_mut(i).attach(m, t)?;
    Ok(String::new())
}

fn link_of(i: &mut I, a: &[String]) -> R {
    let id = known_id(i, &a[0])?;
    let mut r: Vec<ModuleId> = i.ctx.net().referrers(id).collect();
    r.sort_unstable();
    Ok(ids(r))
}

// ---- label ----

fn label_add(i: &mut I, a: &[String]) -> R {
    net_mut(i).add_label(id_arg(&a[0])?, &a[1])?;
    Ok(String::new())
}

fn label_remove(i: &mut I, a: &[String]) -> R {
    Ok(net_mut(i).remove_label(&a[0])?.to_string())
}

fn label_of(i: &mut I, a: &[String]) -> R {
    Ok(list::join(i.ctx.net().labels_of(id_arg(&a[0])?)?))
}

fn label_target(i: &mut I, a: &[String]) -> R {
    i.ctx
        .net()
        .labels()
        .target(&a[0])
        .map(|id| id.to_string())
        .ok_or_else(|| ScriptError::runtime(format!("unknown label \"{}\"", a[0])))
}

fn label_radical(i: &mut I, a: &[String]) -> R {
    Ok(ids(i.ctx.net().resolve_radical(&a[0])?))
}

// ---- picker ----

fn picker_eval(i: &mut I, a: &[String]) -> R {
    Ok(ids(picker(&a[0])?.eval(i.ctx.net().labels())))
}

fn picker_count(i: &mut I, a: &[String]) -> R {
    Ok(picker(&a[0])?.eval(i.ctx.net().labels()).len().to_string())
}

fn picker_check(_: &mut I, a: &[String]) -> R {
    Ok(if Picker::parse(&a[0]).is_ok() { "1" } else { "0" }.to_string())
}

// ---- param / state ----

fn param_set(i: &mut I, a: &[String]) -> R {
    let t = targets(i, &a[0])?;
    let name = param_name(&a[1])?;
    let value = param_value(name, &a[2])?;
    let mode = strictness(a.get(3))?;
    Ok(net_mut(i).set_param(&t, name, value, mode)?.to_string())
}

fn param_get(i: &mut I, a: &[String]) -> R {
    Ok(i.ctx.net().param(id_arg(&a[0])?, param_name(&a[1])?)?.to_string())
}

fn param_list(i: &mut I, a: &[String]) -> R {
    let m = i.ctx.net().get(id_arg(&a[0])?)?;
    Ok(pairs(m.params.iter().map(|(n, v)| (n.to_string(), v.to_string()))))
}

fn state_set(i: &mut I, a: &[String]) -> R {
    let t = targets(i, &a[0])?;
    let var = state_var(&a[1])?;
    let v = float_arg(&a[2])?;
    let mode = strictness(a.get(3))?;
    Ok(net_mut(i).set_state(&t, var, v, mode)?.to_string())
}

fn state_get(i: &mut I, a: &[String]) -> R {
    Ok(num(i.ctx.net().state(id_arg(&a[0])?, state_var(&a[1])?)?))
}

// ---- bench ----

fn bench_move(i: &mut I, a: &[String]) -> R {
    let id = id_arg(&a[0])?;
    let p = BenchPos::new(float_arg(&a[1])?, float_arg(&a[2])?);
    net_mut(i).move_to(id, p)?;
    Ok(String::new())
}

fn bench_pos(i: &mut I, a: &[String]) -> R {
    let b = i.ctx.net().get(id_arg(&a[0])?)?.bench;
    Ok(list::join([num(b.x), num(b.y)]))
}

fn bench_translate(i: &mut I, a: &[String]) -> R {
    let t = targets(i, &a[0])?;
    let (dx, dy) = (float_arg(&a[1])?, float_arg(&a[2])?);
    Ok(net_mut(i).translate(&t, dx, dy)?.to_string())
}

// ---- note ----

fn note_index(i: &I, s: &str) -> Result<usize, ScriptError> {
    let id = int_arg(s)?;
    i.ctx
        .doc
        .notes
        .iter()
        .position(|n| n.id as i64 == id)
        .ok_or_else(|| ScriptError::runtime(format!("unknown note {s}")))
}

fn note_add(i: &mut I, a: &[String]) -> R {
    let pos = BenchPos::new(float_arg(&a[0])?, float_arg(&a[1])?);
    if !pos.is_finite() {
        return Err(ScriptError::runtime("bench position must be finite"));
    }
    let id = i.ctx.doc.notes.iter().map(|n| n.id).max().map_or(1, |m| m + 1);
    i.ctx.doc.notes.push(BenchNote::new(id, pos, a[2].clone()));
    Ok(id.to_string())
}

fn note_remove(i: &mut I, a: &[String]) -> R {
    let k = note_index(i, &a[0])?;
    i.ctx.doc.notes.remove(k);
    Ok(String::new())
}

fn note_list(i: &mut I, _: &[String]) -> R {
    Ok(list::join(i.ctx.doc.notes.iter().map(|n| n.id.to_string())))
}

fn note_html(i: &mut I, a: &[String]) -> R {
    let k = note_index(i, &a[0])?;
    Ok(i.ctx.doc.notes[k].html.clone())
}

fn note_problems(i: &mut I, a: &[String]) -> R {
    let k = note_index(i, &a[0])?;
    Ok(list::join(&i.ctx.doc.notes[k].problems))
}

// ---- model ----

fn model_new(i: &mut I, _: &[String]) -> R {
    i.ctx = Workspace { generation: i.ctx.generation + 1, ..Default::default() };
    Ok(String::new())
}

fn model_load(i: &mut I, a: &[String]) -> R {
    let path = i.resolve_path(&a[0]);
    let bytes = std::fs::read(&path).map_err(|e| ScriptError::runtime(format!("couldn't read \"{}\": {e}", path.display())))?;
    let doc = ModelDocument::load(&bytes).map_err(|e| ScriptError::runtime(e.to_string()))?;
    install_document(i, doc)?;
    Ok(i.ctx.net().len().to_string())
}

/// Replaces the session document, importing its declared input signals first
/// so that a failure leaves the old document in place.
pub fn install_document(i: &mut I, doc: ModelDocument) -> Result<(), ScriptError> {
    let mut signals = SignalBank::new();
    for (name, decl) in doc.network.signals() {
        let p = i.resolve_path(&decl.path);
        let samples = import_signal(&p, doc.sim.sample_rate).map_err(|e| ScriptError::runtime(format!("signal `{name}`: {e}")))?;
        signals.insert(name.clone(), samples.into());
    }
    i.ctx = Workspace { doc, signals, last_run: None, generation: i.ctx.generation + 1 };
    Ok(())
}

fn model_save(i: &mut I, a: &[String]) -> R {
    let path = i.resolve_path(&a[0]);
    std::fs::write(&path, i.ctx.doc.save()).map_err(|e| ScriptError::runtime(format!("couldn't write \"{}\": {e}", path.display())))?;
    Ok(path.display().to_string())
}

fn model_stats(i: &mut I, _: &[String]) -> R {
    let net = i.ctx.net();
    let mut items = vec![
        ("modules".to_string(), net.len().to_string()),
        ("labels".to_string(), net.labels().label_count().to_string()),
        ("notes".to_string(), i.ctx.doc.notes.len().to_string()),
        ("revision".to_string(), net.revision().to_string()),
    ];
    let counts = net.kind_counts();
    for k in ModuleKind::ALL {
        items.push((k.to_string(), counts.get(&k).copied().unwrap_or(0).to_string()));
    }
    Ok(pairs(items))
}

fn model_validate(i: &mut I, _: &[String]) -> R {
    Ok(list::join(i.ctx.net().validate().issues.iter().map(|x| x.to_string())))
}

fn model_signal(i: &mut I, a: &[String]) -> R {
    let path = i.resolve_path(&a[1]);
    let samples = import_signal(&path, i.ctx.doc.sim.sample_rate).map_err(|e| ScriptError::runtime(e.to_string()))?;
    let n = samples.len();
    i.ctx.signals.insert(a[0].clone(), samples.into());
    net_mut(i).declare_signal(&a[0], SignalDecl { path: a[1].clone() });
    Ok(n.to_string())
}

fn model_bind(i: &mut I, a: &[String]) -> R {
    let id = id_arg(&a[0])?;
    net_mut(i).set_signal(id, a.get(1).cloned())?;
    Ok(String::new())
}

// ---- sim ----

fn config_pairs(i: &I) -> String {
    let c = &i.ctx.doc.sim;
    let trace = match &c.trace {
        TraceSelection::All => "all".to_string(),
        TraceSelection::None => "none".to_string(),
        TraceSelection::Picker(p) => p.clone(),
    };
    pairs([
        ("rate", c.sample_rate.to_string()),
        ("duration", c.duration.to_string()),
        ("decimation", c.trace_decimation.to_string()),
        ("threads", c.threads.to_string()),
        ("trace", trace),
    ])
}

fn sim_config(i: &mut I, a: &[String]) -> R {
    if a.len() % 2 != 0 {
        return Err(ScriptError::runtime("options come in name value pairs"));
    }
    let mut c = i.ctx.doc.sim.clone();
    let positive = |s: &str| -> Result<u64, ScriptError> {
        match int_arg(s)? {
            v if v > 0 => Ok(v as u64),
            v => Err(ScriptError::runtime(format!("expected a positive integer but got {v}"))),
        }
    };
    for kv in a.chunks(2) {
        let v = kv[1].as_str();
        match kv[0].trim_start_matches('-') {
            "rate" => c.sample_rate = u32::try_from(positive(v)?).map_err(|_| ScriptError::runtime("rate too large"))?,
            "duration" | "steps" => c.duration = int_arg(v)?.try_into().map_err(|_| ScriptError::runtime("duration must be non-negative"))?,
            "seconds" => {
                let s = float_arg(v)?;
                if s < 0.0 {
                    return Err(ScriptError::runtime("seconds must be non-negative"));
                }
                c.duration = c.steps_for(s);
            }
            "decimation" => c.trace_decimation = u32::try_from(positive(v)?).map_err(|_| ScriptError::runtime("decimation too large"))?,
            "threads" => c.threads = positive(v)? as usize,
            "trace" => {
                c.trace = match v {
                    "all" => TraceSelection::All,
                    "none" => TraceSelection::None,
                    p => {
                        picker(p)?;
                        TraceSelection::Picker(p.to_string())
                    }
                }
            }
            other => return Err(ScriptError::runtime(format!("unknown sim option \"{other}\""))),
        }
    }
    c.check().map_err(ScriptError::runtime)?;
    i.ctx.doc.sim = c;
    Ok(config_pairs(i))
}

fn sim_run(i: &mut I, a: &[String]) -> R {
    let mut config = i.ctx.doc.sim.clone();
    match a {
        [] => {}
        [flag, v] if flag == "-steps" => config.duration = int_arg(v)?.try_into().map_err(|_| ScriptError::runtime("steps must be non-negative"))?,
        [flag, v] if flag == "-seconds" => config.duration = config.steps_for(float_arg(v)?),
        _ => return Err(ScriptError::runtime("expected ?-steps N? or ?-seconds S?")),
    }
    let program = compile(i.ctx.net(), &config, &i.ctx.signals).map_err(|e| ScriptError::runtime(e.to_string()))?;
    let mut state = SimState::new(&program);
    let cancel: Arc<AtomicBool> = i.cancel_flag();
    let mut control = RunControl::default().with_cancel(cancel);
    let out = ReferenceEngine.run(&program, &mut state, &config, &mut control).map_err(|e| ScriptError::runtime(e.to_string()))?;
    let peak = out.sound.channels.iter().map(|c| c.peak()).fold(0.0, f64::max);
    let summary = pairs([
        ("steps", out.stats.steps.to_string()),
        ("channels", out.sound.channels.len().to_string()),
        ("frames", out.trace.frame_count().to_string()),
        ("peak", num(peak)),
    ]);
    i.ctx.last_run = Some(out);
    Ok(summary)
}

fn sim_stability(i: &mut I, _: &[String]) -> R {
    let program = compile(i.ctx.net(), &i.ctx.doc.sim, &i.ctx.signals).map_err(|e| ScriptError::runtime(e.to_string()))?;
    let report = stability_check(&program);
    let of = |v: Verdict| ids(report.entries.iter().filter(|e| e.verdict == v).map(|e| e.module));
    Ok(pairs([
        ("stable", if report.is_stable() { "1".to_string() } else { "0".to_string() }),
        ("unstable", of(Verdict::Unstable)),
        ("marginal", of(Verdict::Marginal)),
    ]))
}

// ---- out ----

fn last_run(i: &I) -> Result<&RunOutput, ScriptError> {
    i.ctx.last_run.as_ref().ok_or_else(|| ScriptError::runtime("no simulation has been run"))
}

fn out_wav(i: &mut I, a: &[String]) -> R {
    let path = i.resolve_path(&a[0]);
    let mut options = WavOptions::default();
    let mut k = 1;
    while k < a.len() {
        match a[k].as_str() {
            "-pcm16" => options.format = SampleFormat::Pcm16,
            "-normalize" => options.normalize = true,
            "-split" => options.layout = ChannelLayout::Split,
            "-channels" => {
                k += 1;
                let list = a.get(k).ok_or_else(|| ScriptError::runtime("-channels needs a list of ids"))?;
                options.channels = Some(targets(i, list)?);
            }
            other => return Err(ScriptError::runtime(format!("unknown option \"{other}\""))),
        }
        k += 1;
    }
    let report = export_wav(&last_run(i)?.sound, &path, &options).map_err(|e| ScriptError::runtime(e.to_string()))?;
    Ok(list::join(report.files.iter().map(|p| p.display().to_string())))
}

fn out_trace(i: &mut I, a: &[String]) -> R {
    let path = i.resolve_path(&a[0]);
    let trace = &last_run(i)?.trace;
    write_trace_csv(trace, &path).map_err(|e| ScriptError::runtime(format!("couldn't write \"{}\": {e}", path.display())))?;
    Ok(trace.frame_count().to_string())
}

fn out_peak(i: &mut I, a: &[String]) -> R {
    let id = id_arg(&a[0])?;
    let ch = last_run(i)?.sound.channel(id).ok_or_else(|| ScriptError::runtime(format!("no sound channel for module {id}")))?;
    Ok(num(ch.peak()))
}

// ---- info ----

fn info_kinds(_: &mut I, a: &[String]) -> R {
    let family = match a.first().map(|s| s.to_ascii_uppercase()) {
        None => None,
        Some(f) if f == "MAT" => Some(Family::Mat),
        Some(f) if f == "LIA" => Some(Family::Lia),
        Some(f) if f == "OBS" || f == "OBSERVER" => Some(Family::Observer),
        Some(f) => return Err(ScriptError::runtime(format!("unknown family \"{f}\""))),
    };
    Ok(list::join(ModuleKind::ALL.iter().filter(|k| family.is_none_or(|f| k.family() == f)).map(|k| k.to_string())))
}

fn info_params(_: &mut I, a: &[String]) -> R {
    Ok(list::join(kind_arg(&a[0])?.legal_params().iter().map(|p| p.to_string())))
}

fn info_packages(i: &mut I, _: &[String]) -> R {
    Ok(list::join(i.package_names()))
}

fn info_commands(i: &mut I, a: &[String]) -> R {
    i.package_commands(&a[0])
        .map(list::join)
        .ok_or_else(|| ScriptError::runtime(format!("unknown package \"{}\"", a[0])))
}

fn info_version(_: &mut I, _: &[String]) -> R {
    Ok(VERSION.to_string())
}

// ---- util ----

fn util_range(_: &mut I, a: &[String]) -> R {
    let (from, to) = (int_arg(&a[0])?, int_arg(&a[1])?);
    let step = a.get(2).map(|s| int_arg(s)).transpose()?.unwrap_or(1);
    if step == 0 {
        return Err(ScriptError::runtime("step must not be zero"));
    }
    let (span, stride) = if step > 0 { ((to - from).max(0), step) } else { ((from - to).max(0), -step) };
    let n = (span + stride - 1) / stride;
    if n > 10_000_000 {
        return Err(ScriptError::runtime("range too long"));
    }
    Ok(list::join((0..n).map(|k| (from + k * step).to_string())))
}

/// `%d %s %f %g %e %%` with optional width and precision.
fn util_format(_: &mut I, a: &[String]) -> R {
    let fmt = &a[0];
    let mut args = a[1..].iter();
    let mut out = String::new();
    let mut chars = fmt.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let mut spec = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_ascii_digit() || d == '.' || d == '-' {
                spec.push(d);
                chars.next();
            } else {
                break;
            }
        }
        let conv = chars.next().ok_or_else(|| ScriptError::runtime("format string ends in the middle of a conversion"))?;
        if conv == '%' {
            out.push('%');
            continue;
        }
        let left = spec.starts_with('-');
        let spec = spec.trim_start_matches('-');
        let (width, prec) = match spec.split_once('.') {
            Some((w, p)) => (w.parse::<usize>().unwrap_or(0), Some(p.parse::<usize>().unwrap_or(0))),
            None => (spec.parse::<usize>().unwrap_or(0), None),
        };
        let arg = args.next().ok_or_else(|| ScriptError::runtime("not enough arguments for all format specifiers"))?;
        let text = match conv {
            'd' => int_arg(arg).or_else(|_| float_arg(arg).map(|f| f.trunc() as i64))?.to_string(),
            's' => arg.clone(),
            'f' => format!("{:.*}", prec.unwrap_or(6), float_arg(arg)?),
            'e' => format!("{:.*e}", prec.unwrap_or(6), float_arg(arg)?),
            'g' => match prec {
                Some(p) => format!("{:.*}", p, float_arg(arg)?),
                None => num(float_arg(arg)?),
            },
            other => return Err(ScriptError::runtime(format!("bad conversion \"%{other}\""))),
        };
        let pad = width.saturating_sub(text.chars().count());
        if left {
            out.push_str(&text);
            out.extend(std::iter::repeat_n(' ', pad));
        } else {
            out.extend(std::iter::repeat_n(' ', pad));
            out.push_str(&text);
        }
    }
    Ok(out)
}

fn rate_arg(i: &I, a: Option<&String>) -> Result<f64, ScriptError> {
    match a {
        Some(s) => float_arg(s),
        None => Ok(i.ctx.doc.sim.sample_rate as f64),
    }
}

fn util_stiffness(i: &mut I, a: &[String]) -> R {
    let (hz, mass) = (float_arg(&a[0])?, float_arg(&a[1])?);
    Ok(num(stiffness_for_frequency(hz, mass, rate_arg(i, a.get(2))?)))
}

fn util_frequency(i: &mut I, a: &[String]) -> R {
    let (k, mass) = (float_arg(&a[0])?, float_arg(&a[1])?);
    frequency_for_stiffness(k, mass, rate_arg(i, a.get(2))?)
        .map(num)
        .ok_or_else(|| ScriptError::runtime("K/M must lie strictly between 0 and 4"))
}
