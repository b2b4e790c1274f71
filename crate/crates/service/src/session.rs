//! The session: one writer thread owns the document and answers requests in
//! arrival order; simulations run on their own thread and report back
//! through the same queue, so every response and event follows one total
//! order of mutations.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use pnet_core::io::{BenchNote, DocumentError, ModelDocument};
use pnet_core::sim::{compile, Engine, ReferenceEngine, RunControl, RunFailure, RunOutput, SimConfig, SimError, SimState};
use pnet_core::{ModuleId, NetworkError, Picker};
use pnsl::{Interp, ScriptError, Workspace};
use serde_json::{json, Map, Value};

use crate::edit;
use crate::protocol::{ErrorBody, Event, EventKind, Request, Response, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unknown verb `{0}`")]
    BadVerb(String),
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("a simulation is already running")]
    ConflictingSimulation,
    #[error("no sound channel for module {0}")]
    NoSuchChannel(u64),
    #[error("no simulation result is available")]
    NoResult,
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Compile(String),
    #[error("op {index}: {source}")]
    Edit { index: usize, source: Box<ServiceError> },
    #[error("session has shut down")]
    Closed,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::BadVerb(_) => "BadVerb",
            ServiceError::BadPayload(_) => "BadPayload",
            ServiceError::ConflictingSimulation => "ConflictingSimulation",
            ServiceError::NoSuchChannel(_) => "NoSuchChannel",
            ServiceError::NoResult => "NoResult",
            ServiceError::Script(_) => "ScriptError",
            ServiceError::Network(_) => "NetworkError",
            ServiceError::Document(_) => "DocumentError",
            ServiceError::Io(_) => "IoError",
            ServiceError::Compile(_) => "CompileError",
            ServiceError::Edit { source, .. } => source.code(),
            ServiceError::Closed => "Closed",
        }
    }

    pub fn body(&self) -> ErrorBody {
        let pos = match self {
            ServiceError::Script(e) => e.pos(),
            _ => None,
        };
        let message = match self {
            ServiceError::Script(e) => e.message(),
            other => other.to_string(),
        };
        ErrorBody { code: self.code().to_string(), message, line: pos.map(|p| p.line), column: pos.map(|p| p.column) }
    }
}

struct Subscriber {
    kinds: BTreeSet<EventKind>,
    tx: Sender<Event>,
}

#[derive(Default)]
struct BusState {
    revision: u64,
    subs: Vec<Subscriber>,
}

/// Fan-out of events, and the owner of the session revision. Stamping and
/// sending happen under one lock, so every subscriber sees the same sequence
/// in revision order; subscribers that hung up are dropped on the next send.
#[derive(Default)]
struct Bus {
    state: Mutex<BusState>,
}

impl Bus {
    fn lock(&self) -> std::sync::MutexGuard<'_, BusState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn revision(&self) -> u64 {
        self.lock().revision
    }

    /// Sends an event stamped with the current revision, after first adding
    /// `mutations` to it.
    fn emit(&self, mutations: u64, kind: EventKind, payload: Value) {
        let mut st = self.lock();
        st.revision += mutations;
        let event = Event { kind, revision: st.revision, payload };
        st.subs.retain(|s| !s.kinds.contains(&event.kind) || s.tx.send(event.clone()).is_ok());
    }

    fn subscribe(&self, kinds: &[EventKind]) -> Receiver<Event> {
        let (tx, rx) = mpsc::channel();
        let kinds = kinds.iter().copied().collect();
        self.lock().subs.push(Subscriber { kinds, tx });
        rx
    }
}

enum Msg {
    Request(Request, Sender<Response>),
    SimDone(u64, Box<Result<RunOutput, RunFailure>>),
    Shutdown,
}

/// Shared by every clone of a [`Service`]; tells the writer to stop when the
/// last one goes away.
struct ShutdownGuard(Sender<Msg>);

impl Drop for ShutdownGuard {
    fn drop(&mut self) {
        let _ = self.0.send(Msg::Shutdown);
    }
}

/// Handle to a running session. Cheap to clone; the session stops, cancelling
/// any running simulation, when the last handle is dropped.
#[derive(Clone)]
pub struct Service {
    tx: Sender<Msg>,
    bus: Arc<Bus>,
    script_cancel: Arc<AtomicBool>,
    _guard: Arc<ShutdownGuard>,
}

/// Progress events are sent at least this often while a run lasts...
const PROGRESS_PERIOD: Duration = Duration::from_millis(100);
/// ...and at least at every eighth of the run.
const PROGRESS_SLICES: u64 = 8;

impl Service {
    pub fn start(ws: Workspace) -> Service {
        Service::with_interp(pnsl::session(ws))
    }

    pub fn with_interp(interp: Interp<Workspace>) -> Service {
        let (tx, rx) = mpsc::channel();
        let bus = Arc::new(Bus::default());
        let script_cancel = interp.cancel_flag();
        let mut writer = Writer { interp, running: None, next_run: 0, tx: tx.clone(), bus: bus.clone() };
        std::thread::Builder::new()
            .name("pnet-session".into())
            .spawn(move || {
                while let Ok(msg) = rx.recv() {
                    if let Msg::Shutdown = msg {
                        writer.sim_cancel();
                        break;
                    }
                    writer.dispatch(msg);
                }
            })
            .expect("spawn session thread");
        let guard = Arc::new(ShutdownGuard(tx.clone()));
        Service { tx, bus, script_cancel, _guard: guard }
    }

    pub fn handle(&self, request: Request) -> Response {
        let id = request.id.clone();
        if request.verb == "script.cancel" {
            self.script_cancel.store(true, Ordering::Relaxed);
            return Response::ok(id, json!({}));
        }
        let (tx, rx) = mpsc::channel();
        if self.tx.send(Msg::Request(request, tx)).is_err() {
            return Response::error(id, ServiceError::Closed.body());
        }
        rx.recv().unwrap_or_else(|_| Response::error(id, ServiceError::Closed.body()))
    }

    /// Parses one JSON request and handles it.
    pub fn handle_line(&self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(r) => self.handle(r),
            Err(e) => {
                let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").cloned()).unwrap_or(Value::Null);
                Response::error(id, ServiceError::BadRequest(e.to_string()).body())
            }
        }
    }

    pub fn subscribe(&self, kinds: &[EventKind]) -> Receiver<Event> {
        self.bus.subscribe(kinds)
    }
}

struct Running {
    id: u64,
    cancel: Arc<AtomicBool>,
}

struct Writer {
    interp: Interp<Workspace>,
    running: Option<Running>,
    next_run: u64,
    tx: Sender<Msg>,
    bus: Arc<Bus>,
}

/// Counters from which the number of atomic mutations of a request is derived.
struct Mark {
    generation: u64,
    net_revision: u64,
    notes: Vec<BenchNote>,
    sim: SimConfig,
}

type Outcome = Result<Value, ServiceError>;

impl Writer {
    fn dispatch(&mut self, msg: Msg) {
        match msg {
            Msg::Request(req, reply) => {
                let response = self.request(req);
                let _ = reply.send(response);
            }
            Msg::SimDone(id, result) => self.sim_done(id, *result),
            Msg::Shutdown => {}
        }
    }

    fn mark(&self) -> Mark {
        let ws = &self.interp.ctx;
        Mark {
            generation: ws.generation,
            net_revision: ws.doc.network.revision(),
            notes: ws.doc.notes.clone(),
            sim: ws.doc.sim.clone(),
        }
    }

    fn mutations_since(&self, m: &Mark) -> u64 {
        let ws = &self.interp.ctx;
        let net = if ws.generation != m.generation {
            1 + ws.doc.network.revision()
        } else {
            ws.doc.network.revision() - m.net_revision
        };
        net + (ws.doc.notes != m.notes) as u64 + (ws.doc.sim != m.sim) as u64
    }

    fn request(&mut self, req: Request) -> Response {
        let mark = self.mark();
        let outcome = self.verb(&req.verb, &req.payload);
        let mutations = self.mutations_since(&mark);
        if mutations > 0 {
            self.bus.emit(mutations, EventKind::ModelChanged, json!({ "verb": req.verb, "mutations": mutations }));
        }
        match outcome {
            Ok(mut payload) => {
                if let Value::Object(map) = &mut payload {
                    map.insert("revision".into(), json!(self.bus.revision()));
                }
                Response::ok(req.id, payload)
            }
            Err(e) => Response::error(req.id, e.body()),
        }
    }

    fn verb(&mut self, verb: &str, p: &Value) -> Outcome {
        match verb {
            "model.load" => self.model_load(p),
            "model.save" => self.model_save(p),
            "edit.apply" => self.edit_apply(p),
            "script.run" => self.script_run(p),
            "picker.eval" => self.picker_eval(p),
            "sim.start" => self.sim_start(p),
            "sim.cancel" => Ok(self.sim_cancel()),
            "result.wave" => self.result_wave(p),
            "result.trace" => self.result_trace(p),
            "info.stats" => Ok(self.stats()),
            other => Err(ServiceError::BadVerb(other.to_string())),
        }
    }

    fn model_load(&mut self, p: &Value) -> Outcome {
        let doc = if let Some(path) = p.get("path").and_then(Value::as_str) {
            let path = self.interp.resolve_path(path);
            let bytes = std::fs::read(&path).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
            ModelDocument::load(&bytes)?
        } else if let Some(doc) = p.get("document") {
            ModelDocument::load(&serde_json::to_vec(doc).expect("json value serializes"))?
        } else {
            return Err(ServiceError::BadPayload("model.load needs `path` or `document`".into()));
        };
        pnsl::install_document(&mut self.interp, doc)?;
        Ok(json!({ "modules": self.interp.ctx.doc.network.len() }))
    }

    fn model_save(&mut self, p: &Value) -> Outcome {
        let bytes = self.interp.ctx.doc.save();
        match p.get("path").and_then(Value::as_str) {
            Some(path) => {
                let path = self.interp.resolve_path(path);
                std::fs::write(&path, &bytes).map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
                Ok(json!({ "path": path.display().to_string(), "bytes": bytes.len() }))
            }
            None => {
                let doc: Value = serde_json::from_slice(&bytes).expect("saved document is json");
                Ok(json!({ "document": doc }))
            }
        }
    }

    fn edit_apply(&mut self, p: &Value) -> Outcome {
        let ops = p.get("ops").ok_or_else(|| ServiceError::BadPayload("edit.apply needs `ops`".into()))?;
        let ops: Vec<edit::EditOp> = serde_json::from_value(ops.clone()).map_err(|e| ServiceError::BadPayload(e.to_string()))?;
        let mut doc = self.interp.ctx.doc.clone();
        let results = edit::apply_all(&mut doc, &ops)?;
        self.interp.ctx.doc = doc;
        Ok(json!({ "results": results }))
    }

    fn script_run(&mut self, p: &Value) -> Outcome {
        let src = p.get("source").and_then(Value::as_str).ok_or_else(|| ServiceError::BadPayload("script.run needs `source`".into()))?;
        let r = self.interp.eval(src);
        let output = self.interp.take_output();
        let result = r?;
        Ok(json!({ "result": result, "output": output }))
    }

    fn picker_eval(&mut self, p: &Value) -> Outcome {
        let expr = p.get("expr").and_then(Value::as_str).ok_or_else(|| ServiceError::BadPayload("picker.eval needs `expr`".into()))?;
        let picker = Picker::parse(expr).map_err(|e| ServiceError::BadPayload(e.to_string()))?;
        let ids: Vec<u64> = picker.eval(self.interp.ctx.doc.network.labels()).into_iter().map(|id| id.0).collect();
        Ok(json!({ "ids": ids }))
    }

    fn sim_start(&mut self, p: &Value) -> Outcome {
        if self.running.is_some() {
            return Err(ServiceError::ConflictingSimulation);
        }
        let ws = &self.interp.ctx;
        let mut config = ws.doc.sim.clone();
        if let Some(s) = p.get("steps").and_then(Value::as_u64) {
            config.duration = s;
        }
        if let Some(s) = p.get("seconds").and_then(Value::as_f64) {
            config.duration = config.steps_for(s);
        }
        if let Some(t) = p.get("threads").and_then(Value::as_u64) {
            config.threads = t as usize;
        }
        config.check().map_err(ServiceError::BadPayload)?;
        let program = compile(&ws.doc.network, &config, &ws.signals).map_err(|e| ServiceError::Compile(e.to_string()))?;
        self.next_run += 1;
        let id = self.next_run;
        let cancel = Arc::new(AtomicBool::new(false));
        self.running = Some(Running { id, cancel: cancel.clone() });
        let (bus, tx, total) = (self.bus.clone(), self.tx.clone(), config.duration);
        std::thread::Builder::new()
            .name("pnet-sim".into())
            .spawn(move || {
                let mut state = SimState::new(&program);
                let slice = (total / PROGRESS_SLICES).max(1);
                let mut last = Instant::now();
                let progress = |pr: pnet_core::sim::Progress| {
                    let now = Instant::now();
                    if now - last >= PROGRESS_PERIOD || pr.step % slice == 0 || pr.step == total {
                        last = now;
                        let payload = json!({ "run": id, "step": pr.step, "total": pr.total, "elapsed_ms": pr.elapsed.as_secs_f64() * 1e3 });
                        bus.emit(0, EventKind::SimProgress, payload);
                    }
                };
                let mut control = RunControl::default().with_cancel(cancel).with_progress(progress);
                control.progress_interval = Duration::ZERO;
                let result = ReferenceEngine.run(&program, &mut state, &config, &mut control);
                drop(control);
                let _ = tx.send(Msg::SimDone(id, Box::new(result)));
            })
            .expect("spawn simulation thread");
        Ok(json!({ "run": id, "steps": total }))
    }

    fn sim_cancel(&mut self) -> Value {
        match &self.running {
            Some(r) => {
                r.cancel.store(true, Ordering::Relaxed);
                json!({ "cancelled": true, "run": r.id })
            }
            None => json!({ "cancelled": false }),
        }
    }

    fn sim_done(&mut self, id: u64, result: Result<RunOutput, RunFailure>) {
        if self.running.as_ref().map(|r| r.id) != Some(id) {
            return;
        }
        self.running = None;
        match result {
            Ok(out) => {
                let s = &out.stats;
                let peaks: Map<String, Value> = s.peaks.iter().map(|(m, p)| (m.to_string(), json!(p))).collect();
                let payload = json!({
                    "run": id,
                    "steps": s.steps,
                    "wall_ms": s.wall.as_secs_f64() * 1e3,
                    "steps_per_sec": if s.steps_per_sec().is_finite() { json!(s.steps_per_sec()) } else { Value::Null },
                    "threads": s.threads,
                    "modules": s.modules,
                    "channels": out.sound.channels.iter().map(|c| c.module.0).collect::<Vec<_>>(),
                    "frames": out.trace.frame_count(),
                    "peaks": peaks,
                });
                self.interp.ctx.last_run = Some(out);
                self.bus.emit(0, EventKind::SimFinished, payload);
            }
            Err(f) => {
                let mut payload = json!({ "run": id, "error": f.error.to_string(), "steps": f.partial.stats.steps });
                match f.error {
                    SimError::NumericBlowup { step, module } => {
                        payload["step"] = json!(step);
                        payload["module"] = json!(module.0);
                    }
                    SimError::Cancelled { step } => {
                        payload["step"] = json!(step);
                        payload["cancelled"] = json!(true);
                    }
                    _ => {}
                }
                self.bus.emit(0, EventKind::SimFailed, payload);
            }
        }
    }

    fn last_run(&self) -> Result<&RunOutput, ServiceError> {
        self.interp.ctx.last_run.as_ref().ok_or(ServiceError::NoResult)
    }

    fn result_wave(&self, p: &Value) -> Outcome {
        let channel = p.get("channel").and_then(Value::as_u64).ok_or_else(|| ServiceError::BadPayload("result.wave needs `channel`".into()))?;
        let run = self.last_run()?;
        let ch = run.sound.channel(ModuleId(channel)).ok_or(ServiceError::NoSuchChannel(channel))?;
        let (start, end) = range(p, ch.samples.len());
        let samples = &ch.samples[start..end];
        match p.get("columns").and_then(Value::as_u64) {
            Some(0) => Err(ServiceError::BadPayload("columns must be positive".into())),
            Some(cols) => {
                let (min, max) = min_max_columns(samples, cols as usize);
                Ok(json!({ "channel": channel, "start": start, "end": end, "sample_rate": run.sound.sample_rate, "min": min, "max": max }))
            }
            None => Ok(json!({ "channel": channel, "start": start, "end": end, "sample_rate": run.sound.sample_rate, "samples": samples })),
        }
    }

    fn result_trace(&self, p: &Value) -> Outcome {
        let trace = &self.last_run()?.trace;
        let (start, end) = range(p, trace.frame_count());
        let frames: Vec<&[f64]> = (start..end).map(|f| trace.frame(f)).collect();
        Ok(json!({
            "decimation": trace.decimation,
            "modules": trace.modules.iter().map(|m| m.0).collect::<Vec<_>>(),
            "start": start,
            "end": end,
            "steps": &trace.steps[start..end],
            "positions": frames,
        }))
    }

    fn stats(&self) -> Value {
        let ws = &self.interp.ctx;
        let net = &ws.doc.network;
        let kinds: Map<String, Value> = net.kind_counts().iter().map(|(k, n)| (k.to_string(), json!(n))).collect();
        let last = ws.last_run.as_ref().map(|r| {
            json!({ "steps": r.stats.steps, "channels": r.sound.channels.iter().map(|c| c.module.0).collect::<Vec<_>>(), "frames": r.trace.frame_count() })
        });
        json!({
            "protocol": PROTOCOL_VERSION,
            "modules": net.len(),
            "labels": net.labels().label_count(),
            "notes": ws.doc.notes.len(),
            "kinds": kinds,
            "running": self.running.as_ref().map(|r| r.id),
            "last_run": last,
        })
    }
}

/// `start`/`end` from the payload, clamped to `0..len`.
fn range(p: &Value, len: usize) -> (usize, usize) {
    let get = |k: &str, d: usize| p.get(k).and_then(Value::as_u64).map_or(d, |v| (v as usize).min(len));
    let start = get("start", 0);
    (start, get("end", len).max(start))
}

/// Per-column extremes, column `c` covering `[c·n/cols, (c+1)·n/cols)`.
/// Empty columns (more columns than samples) repeat the sample under them.
pub fn min_max_columns(samples: &[f64], cols: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let mut min = Vec::with_capacity(cols);
    let mut max = Vec::with_capacity(cols);
    if n == 0 {
        return (min, max);
    }
    for c in 0..cols {
        let lo = c * n / cols;
        let hi = ((c + 1) * n / cols).max(lo + 1).min(n);
        let s = &samples[lo.min(n - 1)..hi.max(lo.min(n - 1) + 1)];
        min.push(s.iter().copied().fold(f64::INFINITY, f64::min));
        max.push(s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    (min, max)
}
