//! Structured edits sent by the workbench. A batch is applied to a copy of
//! the document and committed only if every op succeeds.

use pnet_core::io::{BenchNote, ModelDocument};
use pnet_core::{BenchPos, ModuleId, ModuleKind, ParamName, ParamValue, Picker, StateVar, Strictness, Table};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::session::ServiceError;

/// Modules named by explicit ids or by a picker expression.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    Ids(Vec<u64>),
    Picker(String),
}

/// A number, or a table given as `[[x, y], ...]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ParamInput {
    Scalar(f64),
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Add {
        kind: String,
        #[serde(default)]
        x: f64,
        #[serde(default)]
        y: f64,
    },
    Remove {
        id: u64,
    },
    Connect {
        link: u64,
        a: u64,
        b: u64,
    },
    Disconnect {
        link: u64,
    },
    Attach {
        id: u64,
        target: u64,
    },
    SetParam {
        targets: Targets,
        name: String,
        value: ParamInput,
        #[serde(default)]
        lenient: bool,
    },
    SetState {
        targets: Targets,
        var: String,
        value: f64,
        #[serde(default)]
        lenient: bool,
    },
    Move {
        id: u64,
        x: f64,
        y: f64,
    },
    Translate {
        targets: Targets,
        dx: f64,
        dy: f64,
    },
    LabelAdd {
        id: u64,
        label: String,
    },
    LabelRemove {
        label: String,
    },
    NoteAdd {
        x: f64,
        y: f64,
        html: String,
    },
    NoteRemove {
        note: u64,
    },
    Bind {
        id: u64,
        #[serde(default)]
        signal: Option<String>,
    },
}

fn bad(msg: impl Into<String>) -> ServiceError {
    ServiceError::BadPayload(msg.into())
}

fn resolve(doc: &ModelDocument, t: &Targets) -> Result<Vec<ModuleId>, ServiceError> {
    Ok(match t {
        Targets::Ids(ids) => {
            let mut v: Vec<ModuleId> = ids.iter().map(|&i| ModuleId(i)).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
        Targets::Picker(src) => Picker::parse(src).map_err(|e| bad(e.to_string()))?.eval(doc.network.labels()).into_iter().collect(),
    })
}

fn strictness(lenient: bool) -> Strictness {
    if lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    }
}

fn pos(x: f64, y: f64) -> Result<BenchPos, ServiceError> {
    let p = BenchPos::new(x, y);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(bad("bench position must be finite"))
    }
}

/// Applies one op; the returned value is the op's result (new id, count, ...).
pub fn apply(doc: &mut ModelDocument, op: &EditOp) -> Result<Value, ServiceError> {
    let net = &mut doc.network;
    Ok(match op {
        EditOp::Add { kind, x, y } => {
            let kind: ModuleKind = kind.parse().map_err(|e: pnet_core::kind::UnknownKind| bad(e.to_string()))?;
            json!({ "id": net.add_module(kind, pos(*x, *y)?)?.0 })
        }
        EditOp::Remove { id } => {
            net.remove_module(ModuleId(*id))?;
            Value::Null
        }
        EditOp::Connect { link, a, b } => {
            net.connect(ModuleId(*link), ModuleId(*a), ModuleId(*b))?;
            Value::Null
        }
        EditOp::Disconnect { link } => {
            net.disconnect(ModuleId(*link))?;
            Value::Null
        }
        EditOp::Attach { id, target } => {
            net.attach(ModuleId(*id), ModuleId(*target))?;
            Value::Null
        }
        EditOp::SetParam { targets, name, value, lenient } => {
            let name: ParamName = name.parse().map_err(|e: pnet_core::kind::UnknownParam| bad(e.to_string()))?;
            let value: ParamValue = match value {
                ParamInput::Scalar(v) if !name.is_table() => (*v).into(),
                ParamInput::Table(points) if name.is_table() => {
                    Table::new(points.clone()).map_err(|e| bad(format!("malformed table: {e}")))?.into()
                }
                _ if name.is_table() => return Err(bad(format!("{name} expects a list of [x, y] points"))),
                _ => return Err(bad(format!("{name} expects a single number"))),
            };
            let ids = resolve(doc, targets)?;
            json!({ "updated": doc.network.set_param(&ids, name, value, strictness(*lenient))? })
        }
        EditOp::SetState { targets, var, value, lenient } => {
            let var: StateVar = var.parse().map_err(bad)?;
            let ids = resolve(doc, targets)?;
            json!({ "updated": doc.network.set_state(&ids, var, *value, strictness(*lenient))? })
        }
        EditOp::Move { id, x, y } => {
            net.move_to(ModuleId(*id), pos(*x, *y)?)?;
            Value::Null
        }
        EditOp::Translate { targets, dx, dy } => {
            if !dx.is_finite() || !dy.is_finite() {
                return Err(bad("offset must be finite"));
            }
            let ids = resolve(doc, targets)?;
            json!({ "moved": doc.network.translate(&ids, *dx, *dy)? })
        }
        EditOp::LabelAdd { id, label } => {
            net.add_label(ModuleId(*id), label)?;
            Value::Null
        }
        EditOp::LabelRemove { label } => json!({ "id": net.remove_label(label)?.0 }),
        EditOp::NoteAdd { x, y, html } => {
            let p = pos(*x, *y)?;
            let id = doc.notes.iter().map(|n| n.id).max().map_or(1, |m| m + 1);
            doc.notes.push(BenchNote::new(id, p, html.clone()));
            json!({ "note": id })
        }
        EditOp::NoteRemove { note } => {
            let k = doc.notes.iter().position(|n| n.id == *note).ok_or_else(|| bad(format!("unknown note {note}")))?;
            doc.notes.remove(k);
            Value::Null
        }
        EditOp::Bind { id, signal } => {
            net.set_signal(ModuleId(*id), signal.clone())?;
            Value::Null
        }
    })
}

/// Applies every op in order. On failure the error names the op's index and
/// `doc` may be partially edited; callers pass a scratch copy.
pub fn apply_all(doc: &mut ModelDocument, ops: &[EditOp]) -> Result<Vec<Value>, ServiceError> {
    ops.iter()
        .enumerate()
        .map(|(index, op)| apply(doc, op).map_err(|e| ServiceError::Edit { index, source: Box::new(e) }))
        .collect()
}
