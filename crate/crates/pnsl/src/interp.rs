//! Evaluation: variable frames, procedures, builtins and the package registry.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use pnet_core::NetworkError;

use crate::expr::{self, ExprError, Num};
use crate::list;
use crate::parse::{self, ParseError, Part, Pos, Script, Word, WordForm};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{pos}: invalid command name \"{name}\"")]
    UnknownCommand { name: String, pos: Pos },
    #[error("{pos}: wrong # args: should be \"{usage}\"")]
    WrongArity { command: String, usage: String, pos: Pos },
    #[error("{pos}: {message}")]
    Runtime { message: String, pos: Pos, cause: Option<NetworkError> },
    #[error("{pos}: {message}")]
    ExprSyntax { message: String, pos: Pos },
    #[error("{pos}: {what} limit of {limit} exceeded")]
    LimitExceeded { what: &'static str, limit: u64, pos: Pos },
    #[error("{pos}: script cancelled")]
    Cancelled { pos: Pos },
    #[error("package `{0}` is already registered")]
    DuplicatePackage(String),
    #[error("{pos}: ambiguous command name \"{name}\": {}", packages.join(", "))]
    AmbiguousCommand { name: String, packages: Vec<String>, pos: Pos },
}

impl ScriptError {
    pub fn runtime(message: impl Into<String>) -> ScriptError {
        ScriptError::Runtime { message: message.into(), pos: Pos::default(), cause: None }
    }

    /// Position of the failing command, when known.
    pub fn pos(&self) -> Option<Pos> {
        match self {
            ScriptError::Parse(e) => Some(e.pos()),
            ScriptError::UnknownCommand { pos, .. }
            | ScriptError::WrongArity { pos, .. }
            | ScriptError::Runtime { pos, .. }
            | ScriptError::ExprSyntax { pos, .. }
            | ScriptError::LimitExceeded { pos, .. }
            | ScriptError::Cancelled { pos }
            | ScriptError::AmbiguousCommand { pos, .. } => Some(*pos),
            ScriptError::DuplicatePackage(_) => None,
        }
    }

    /// The error text without its position prefix.
    pub fn message(&self) -> String {
        let full = self.to_string();
        match self.pos() {
            Some(p) if !matches!(self, ScriptError::Parse(_)) => full.strip_prefix(&format!("{p}: ")).map(str::to_string).unwrap_or(full),
            _ => full,
        }
    }

    fn locate(mut self, at: Pos) -> ScriptError {
        match &mut self {
            ScriptError::UnknownCommand { pos, .. }
            | ScriptError::WrongArity { pos, .. }
            | ScriptError::Runtime { pos, .. }
            | ScriptError::ExprSyntax { pos, .. }
            | ScriptError::LimitExceeded { pos, .. }
            | ScriptError::Cancelled { pos }
            | ScriptError::AmbiguousCommand { pos, .. } => {
                if *pos == Pos::default() {
                    *pos = at;
                }
            }
            ScriptError::Parse(_) | ScriptError::DuplicatePackage(_) => {}
        }
        self
    }
}

impl From<NetworkError> for ScriptError {
    fn from(e: NetworkError) -> Self {
        ScriptError::Runtime { message: e.to_string(), pos: Pos::default(), cause: Some(e) }
    }
}

impl From<ExprError> for ScriptError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Syntax { .. } => ScriptError::ExprSyntax { message: e.to_string(), pos: Pos::default() },
            ExprError::Runtime(m) => ScriptError::runtime(m),
        }
    }
}

/// Non-local exits travel alongside errors until a loop or procedure takes them.
enum Flow {
    Error(ScriptError),
    Return(String),
    Break,
    Continue,
}

impl From<ScriptError> for Flow {
    fn from(e: ScriptError) -> Self {
        Flow::Error(e)
    }
}

type Step = Result<String, Flow>;

pub type CommandFn<C> = fn(&mut Interp<C>, &[String]) -> Result<String, ScriptError>;
type BuiltinFn<C> = fn(&mut Interp<C>, &[String]) -> Step;

pub struct CommandSpec<C> {
    pub name: &'static str,
    /// Argument synopsis, without the command words.
    pub usage: &'static str,
    pub min_args: usize,
    pub max_args: Option<usize>,
    pub handler: CommandFn<C>,
}

impl<C> Clone for CommandSpec<C> {
    fn clone(&self) -> Self {
        CommandSpec { ..*self }
    }
}

impl<C> CommandSpec<C> {
    pub const fn new(name: &'static str, usage: &'static str, min_args: usize, max_args: Option<usize>, handler: CommandFn<C>) -> Self {
        CommandSpec { name, usage, min_args, max_args, handler }
    }
}

pub struct Package<C> {
    pub name: &'static str,
    pub commands: Vec<CommandSpec<C>>,
}

struct Builtin<C> {
    usage: &'static str,
    min: usize,
    max: Option<usize>,
    run: BuiltinFn<C>,
}

struct Proc {
    params: Vec<(String, Option<String>)>,
    variadic: bool,
    body: String,
}

#[derive(Default)]
struct Frame {
    vars: HashMap<String, String>,
    globals: HashSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Command evaluations per top-level `eval`.
    pub max_commands: u64,
    /// Nested procedure, `eval` and `source` calls.
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_commands: 10_000_000, max_depth: 1000 }
    }
}

const STACK_BYTES: usize = 512 << 20;
const CACHE_ENTRIES: usize = 4096;
const PROGRESS_EVERY: u64 = 10_000;

pub struct Interp<C> {
    pub ctx: C,
    pub limits: Limits,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
    packages: BTreeMap<&'static str, BTreeMap<&'static str, CommandSpec<C>>>,
    bare: HashMap<&'static str, Vec<&'static str>>,
    builtins: HashMap<&'static str, Builtin<C>>,
    procs: HashMap<String, Arc<Proc>>,
    frames: Vec<Frame>,
    steps: u64,
    depth: usize,
    cancel: Arc<AtomicBool>,
    progress: Option<Box<dyn FnMut(u64) + Send>>,
    scripts: HashMap<String, Arc<Script>>,
    substs: HashMap<String, Arc<Vec<Part>>>,
    output: String,
    echo: bool,
}

impl<C: Send> Interp<C> {
    pub fn new(ctx: C) -> Self {
        let mut i = Interp {
            ctx,
            limits: Limits::default(),
            base_dir: PathBuf::from("."),
            packages: BTreeMap::new(),
            bare: HashMap::new(),
            builtins: HashMap::new(),
            procs: HashMap::new(),
            frames: vec![Frame::default()],
            steps: 0,
            depth: 0,
            cancel: Arc::new(AtomicBool::new(false)),
            progress: None,
            scripts: HashMap::new(),
            substs: HashMap::new(),
            output: String::new(),
            echo: false,
        };
        i.install_builtins();
        i
    }

    pub fn register_package(&mut self, package: Package<C>) -> Result<(), ScriptError> {
        if self.packages.contains_key(package.name) {
            return Err(ScriptError::DuplicatePackage(package.name.to_string()));
        }
        let mut table = BTreeMap::new();
        for spec in package.commands {
            if table.insert(spec.name, spec.clone()).is_some() {
                return Err(ScriptError::runtime(format!("command `{} {}` defined twice", package.name, spec.name)));
            }
        }
        for name in table.keys() {
            self.bare.entry(name).or_default().push(package.name);
        }
        self.packages.insert(package.name, table);
        Ok(())
    }

    pub fn package_names(&self) -> Vec<&'static str> {
        self.packages.keys().copied().collect()
    }

    pub fn package_commands(&self, package: &str) -> Option<Vec<&'static str>> {
        self.packages.get(package).map(|t| t.keys().copied().collect())
    }

    pub fn command_usage(&self, package: &str, command: &str) -> Option<&'static str> {
        self.packages.get(package)?.get(command).map(|s| s.usage)
    }

    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        self.cancel.clone()
    }

    /// Called with the running command count every few thousand commands.
    pub fn set_progress(&mut self, f: impl FnMut(u64) + Send + 'static) {
        self.progress = Some(Box::new(f));
    }

    /// When set, `puts` also writes to standard output.
    pub fn set_echo(&mut self, echo: bool) {
        self.echo = echo;
    }

    /// Text printed by `puts` since the last call.
    pub fn take_output(&mut self) -> String {
        std::mem::take(&mut self.output)
    }

    pub fn var(&self, name: &str) -> Option<&str> {
        self.frame_for(name).vars.get(name).map(String::as_str)
    }

    pub fn set_var(&mut self, name: &str, value: impl Into<String>) {
        self.frame_for_mut(name).vars.insert(name.to_string(), value.into());
    }

    pub fn resolve_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Evaluates source text on a thread with a deep stack. The command budget
    /// starts afresh; variables and procedures persist between calls.
    pub fn eval(&mut self, src: &str) -> Result<String, ScriptError> {
        let script = parse::parse(src)?;
        self.eval_script(&script)
    }

    pub fn eval_script(&mut self, script: &Script) -> Result<String, ScriptError> {
        self.steps = 0;
        self.depth = 0;
        self.frames.truncate(1);
        self.cancel.store(false, Ordering::Relaxed);
        let outcome = std::thread::scope(|s| {
            std::thread::Builder::new()
                .name("pnsl-eval".into())
                .stack_size(STACK_BYTES)
                .spawn_scoped(s, || self.run_top(script))
                .expect("spawn evaluation thread")
                .join()
        });
        match outcome {
            Ok(r) => r,
            Err(panic) => std::panic::resume_unwind(panic),
        }
    }

    pub fn source_file(&mut self, path: &Path) -> Result<String, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScriptError::runtime(format!("couldn't read file \"{}\": {e}", path.display())))?;
        self.eval(&text)
    }

    /// Sources every file of a script library directory in name order.
    pub fn load_library(&mut self, dir: &Path) -> Result<Vec<PathBuf>, ScriptError> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| ScriptError::runtime(format!("couldn't read directory \"{}\": {e}", dir.display())))?;
        let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_file()).collect();
        files.sort();
        for f in &files {
            self.source_file(f)?;
        }
        Ok(files)
    }

    fn run_top(&mut self, script: &Script) -> Result<String, ScriptError> {
        match self.run_script(script) {
            Ok(v) | Err(Flow::Return(v)) => Ok(v),
            Err(Flow::Error(e)) => Err(e),
            Err(Flow::Break) => Err(ScriptError::runtime("invoked \"break\" outside of a loop")),
            Err(Flow::Continue) => Err(ScriptError::runtime("invoked \"continue\" outside of a loop")),
        }
    }

    // ---- evaluation ----

    fn frame_for(&self, name: &str) -> &Frame {
        let top = self.frames.last().expect("global frame");
        if top.globals.contains(name) {
            &self.frames[0]
        } else {
            top
        }
    }

    fn frame_for_mut(&mut self, name: &str) -> &mut Frame {
        let global = self.frames.last().expect("global frame").globals.contains(name);
        if global {
            &mut self.frames[0]
        } else {
            self.frames.last_mut().expect("global frame")
        }
    }

    fn read_var(&self, name: &str) -> Result<String, ScriptError> {
        self.var(name)
            .map(str::to_string)
            .ok_or_else(|| ScriptError::runtime(format!("can't read \"{name}\": no such variable")))
    }

    fn tick(&mut self) -> Result<(), ScriptError> {
        self.steps += 1;
        if self.steps > self.limits.max_commands {
            return Err(ScriptError::LimitExceeded { what: "command", limit: self.limits.max_commands, pos: Pos::default() });
        }
        if self.cancel.load(Ordering::Relaxed) {
            return Err(ScriptError::Cancelled { pos: Pos::default() });
        }
        if self.steps % PROGRESS_EVERY == 0 {
            if let Some(p) = self.progress.as_mut() {
                p(self.steps);
            }
        }
        Ok(())
    }

    fn run_script(&mut self, script: &Script) -> Step {
        let mut result = String::new();
        for cmd in &script.commands {
            let r = self.tick().map_err(Flow::from).and_then(|()| {
                let mut words = Vec::with_capacity(cmd.words.len());
                for w in &cmd.words {
                    words.push(self.subst_word(w)?);
                }
                self.invoke(&words)
            });
            result = r.map_err(|f| match f {
                Flow::Error(e) => Flow::Error(e.locate(cmd.pos)),
                other => other,
            })?;
        }
        Ok(result)
    }

    fn subst_parts(&mut self, parts: &[Part]) -> Step {
        let mut out = String::new();
        for p in parts {
            match p {
                Part::Text(t) => out.push_str(t),
                Part::Var(v) => out.push_str(&self.read_var(v)?),
                Part::Script(s) => out.push_str(&self.run_script(s)?),
            }
        }
        Ok(out)
    }

    fn subst_word(&mut self, w: &Word) -> Step {
        match &w.form {
            WordForm::Literal(t) | WordForm::Brace(t) => Ok(t.clone()),
            WordForm::Var(v) => Ok(self.read_var(v)?),
            WordForm::Bracket(s) => self.run_script(s),
            WordForm::Quoted(parts) | WordForm::Compound(parts) => self.subst_parts(parts),
        }
    }

    fn invoke(&mut self, words: &[String]) -> Step {
        let name = words[0].as_str();
        if let Some(proc) = self.procs.get(name).cloned() {
            return self.call_proc(name, &proc, &words[1..]);
        }
        if let Some(b) = self.builtins.get(name) {
            let args = &words[1..];
            if args.len() < b.min || b.max.is_some_and(|m| args.len() > m) {
                return Err(arity(name, b.usage).into());
            }
            return (b.run)(self, args);
        }
        let (package, command, args) = match (self.packages.get(name), words.get(1)) {
            (Some(table), Some(cmd)) if table.contains_key(cmd.as_str()) => (name, cmd.as_str(), &words[2..]),
            _ => match self.bare.get(name).map(Vec::as_slice) {
                Some([only]) => (*only, name, &words[1..]),
                Some(many) => {
                    return Err(ScriptError::AmbiguousCommand {
                        name: name.to_string(),
                        packages: many.iter().map(|p| p.to_string()).collect(),
                        pos: Pos::default(),
                    }
                    .into())
                }
                None if self.packages.contains_key(name) => {
                    let sub = words.get(1).map(String::as_str).unwrap_or("");
                    return Err(ScriptError::UnknownCommand { name: format!("{name} {sub}").trim_end().to_string(), pos: Pos::default() }.into());
                }
                None => return Err(ScriptError::UnknownCommand { name: name.to_string(), pos: Pos::default() }.into()),
            },
        };
        let spec = &self.packages[package][command];
        if args.len() < spec.min_args || spec.max_args.is_some_and(|m| args.len() > m) {
            return Err(arity(&format!("{package} {command}"), spec.usage).into());
        }
        let handler = spec.handler;
        Ok(handler(self, args)?)
    }

    fn enter(&mut self) -> Result<(), ScriptError> {
        if self.depth >= self.limits.max_depth {
            return Err(ScriptError::LimitExceeded { what: "recursion", limit: self.limits.max_depth as u64, pos: Pos::default() });
        }
        self.depth += 1;
        Ok(())
    }

    fn call_proc(&mut self, name: &str, proc: &Proc, args: &[String]) -> Step {
        let required = proc.params.iter().filter(|(_, d)| d.is_none()).count();
        if args.len() < required || (!proc.variadic && args.len() > proc.params.len()) {
            let mut usage = name.to_string();
            for (p, d) in &proc.params {
                usage.push(' ');
                usage.push_str(&if d.is_some() { format!("?{p}?") } else { p.clone() });
            }
            if proc.variadic {
                usage.push_str(" ?arg ...?");
            }
            return Err(arity(name, &usage).into());
        }
        self.enter()?;
        let mut frame = Frame::default();
        for (i, (p, default)) in proc.params.iter().enumerate() {
            let v = args.get(i).or(default.as_ref()).cloned().unwrap_or_default();
            frame.vars.insert(p.clone(), v);
        }
        if proc.variadic {
            let rest = args.get(proc.params.len()..).unwrap_or(&[]);
            frame.vars.insert("args".into(), list::join(rest));
        }
        self.frames.push(frame);
        let r = self.eval_text(&proc.body);
        self.frames.pop();
        self.depth -= 1;
        match r {
            Ok(v) | Err(Flow::Return(v)) => Ok(v),
            Err(Flow::Break) => Err(ScriptError::runtime("invoked \"break\" outside of a loop").into()),
            Err(Flow::Continue) => Err(ScriptError::runtime("invoked \"continue\" outside of a loop").into()),
            Err(e) => Err(e),
        }
    }

    fn parsed(&mut self, text: &str) -> Result<Arc<Script>, ScriptError> {
        if let Some(s) = self.scripts.get(text) {
            return Ok(s.clone());
        }
        let s = Arc::new(parse::parse(text)?);
        if self.scripts.len() >= CACHE_ENTRIES {
            self.scripts.clear();
        }
        self.scripts.insert(text.to_string(), s.clone());
        Ok(s)
    }

    fn eval_text(&mut self, text: &str) -> Step {
        let script = self.parsed(text)?;
        self.run_script(&script)
    }

    /// Evaluates a script from inside a command, sharing the caller's frame.
    pub fn eval_nested(&mut self, text: &str) -> Result<String, ScriptError> {
        self.enter()?;
        let r = self.eval_text(text);
        self.depth -= 1;
        match r {
            Ok(v) | Err(Flow::Return(v)) => Ok(v),
            Err(Flow::Error(e)) => Err(e),
            Err(_) => Err(ScriptError::runtime("break or continue escaped a nested script")),
        }
    }

    fn expr_num(&mut self, text: &str) -> Result<Num, Flow> {
        let substituted = if text.contains(['$', '[', '\\']) {
            let parts = match self.substs.get(text) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(parse::parse_subst(text).map_err(ScriptError::from)?);
                    if self.substs.len() >= CACHE_ENTRIES {
                        self.substs.clear();
                    }
                    self.substs.insert(text.to_string(), p.clone());
                    p
                }
            };
            self.subst_parts(&parts)?
        } else {
            text.to_string()
        };
        Ok(expr::evaluate(&substituted).map_err(ScriptError::from)?)
    }

    fn condition(&mut self, text: &str) -> Result<bool, Flow> {
        Ok(self.expr_num(text)?.as_f64() != 0.0)
    }

    // ---- builtins ----

    fn builtin(&mut self, name: &'static str, usage: &'static str, min: usize, max: Option<usize>, run: BuiltinFn<C>) {
        self.builtins.insert(name, Builtin { usage, min, max, run });
    }

    pub fn builtin_names(&self) -> Vec<&'static str> {
        let mut v: Vec<_> = self.builtins.keys().copied().collect();
        v.sort_unstable();
        v
    }

    fn install_builtins(&mut self) {
        self.builtin("set", "set varName ?newValue?", 1, Some(2), |i, a| {
            if let Some(v) = a.get(1) {
                i.set_var(&a[0], v.clone());
                Ok(v.clone())
            } else {
                Ok(i.read_var(&a[0])?)
            }
        });
        self.builtin("unset", "unset varName ?varName ...?", 1, None, |i, a| {
            for name in a {
                if i.frame_for_mut(name).vars.remove(name).is_none() {
                    return Err(ScriptError::runtime(format!("can't unset \"{name}\": no such variable")).into());
                }
            }
            Ok(String::new())
        });
        self.builtin("incr", "incr varName ?increment?", 1, Some(2), |i, a| {
            let by = a.get(1).map(|s| int_arg(s)).transpose()?.unwrap_or(1);
            let cur = match i.var(&a[0]) {
                Some(v) => int_arg(v)?,
                None => 0,
            };
            let next = cur.checked_add(by).ok_or_else(|| ScriptError::runtime("integer overflow"))?;
            i.set_var(&a[0], next.to_string());
            Ok(next.to_string())
        });
        self.builtin("expr", "expr arg ?arg ...?", 1, None, |i, a| Ok(i.expr_num(&a.join(" "))?.to_string()));
        self.builtin("if", "if expr1 ?then? body1 elseif expr2 ?then? body2 elseif ... ?else? ?bodyN?", 2, None, |i, a| {
            let mut k = 0;
            loop {
                let cond = &a[k];
                k += 1;
                if a.get(k).map(String::as_str) == Some("then") {
                    k += 1;
                }
                let body = a.get(k).ok_or_else(|| ScriptError::runtime(format!("wrong # args: no script following \"{cond}\" argument")))?;
                k += 1;
                if i.condition(cond)? {
                    return i.eval_text(body);
                }
                match a.get(k).map(String::as_str) {
                    None => return Ok(String::new()),
                    Some("elseif") => {
                        k += 1;
                        if k >= a.len() {
                            return Err(ScriptError::runtime("wrong # args: no expression after \"elseif\" argument").into());
                        }
                    }
                    Some("else") => {
                        let body = a.get(k + 1).ok_or_else(|| ScriptError::runtime("wrong # args: no script following \"else\" argument"))?;
                        return i.eval_text(body);
                    }
                    Some(_) if k + 1 == a.len() => return i.eval_text(&a[k]),
                    Some(other) => return Err(ScriptError::runtime(format!("invalid word \"{other}\" in if")).into()),
                }
            }
        });
        self.builtin("while", "while test command", 2, Some(2), |i, a| {
            while i.condition(&a[0])? {
                i.tick()?;
                match i.eval_text(&a[1]) {
                    Ok(_) | Err(Flow::Continue) => {}
                    Err(Flow::Break) => break,
                    Err(e) => return Err(e),
                }
            }
            Ok(String::new())
        });
        self.builtin("for", "for start test next command", 4, Some(4), |i, a| {
            i.eval_text(&a[0])?;
            while i.condition(&a[1])? {
                i.tick()?;
                match i.eval_text(&a[3]) {
                    Ok(_) | Err(Flow::Continue) => {}
                    Err(Flow::Break) => break,
                    Err(e) => return Err(e),
                }
                i.eval_text(&a[2])?;
            }
            Ok(String::new())
        });
        self.builtin("foreach", "foreach varList list command", 3, Some(3), |i, a| {
            let vars = list_arg(&a[0])?;
            if vars.is_empty() {
                return Err(ScriptError::runtime("foreach varlist is empty").into());
            }
            let items = list_arg(&a[1])?;
            for chunk in items.chunks(vars.len()) {
                i.tick()?;
                for (k, v) in vars.iter().enumerate() {
                    i.set_var(v, chunk.get(k).cloned().unwrap_or_default());
                }
                match i.eval_text(&a[2]) {
                    Ok(_) | Err(Flow::Continue) => {}
                    Err(Flow::Break) => break,
                    Err(e) => return Err(e),
                }
            }
            Ok(String::new())
        });
        self.builtin("break", "break", 0, Some(0), |_, _| Err(Flow::Break));
        self.builtin("continue", "continue", 0, Some(0), |_, _| Err(Flow::Continue));
        self.builtin("return", "return ?value?", 0, Some(1), |_, a| Err(Flow::Return(a.first().cloned().unwrap_or_default())));
        self.builtin("error", "error message", 1, Some(1), |_, a| Err(ScriptError::runtime(a[0].clone()).into()));
        self.builtin("catch", "catch script ?resultVarName?", 1, Some(2), |i, a| {
            let (code, value) = match i.eval_nested(&a[0]) {
                Ok(v) => (0, v),
                Err(e) => (1, e.message()),
            };
            if let Some(var) = a.get(1) {
                i.set_var(var, value);
            }
            Ok(code.to_string())
        });
        self.builtin("proc", "proc name args body", 3, Some(3), |i, a| {
            let mut params = Vec::new();
            let mut variadic = false;
            let spec = list_arg(&a[1])?;
            for (k, p) in spec.iter().enumerate() {
                let parts = list_arg(p)?;
                match parts.as_slice() {
                    [n] if n == "args" && k + 1 == spec.len() => variadic = true,
                    [n] => params.push((n.clone(), None)),
                    [n, d] => params.push((n.clone(), Some(d.clone()))),
                    _ => return Err(ScriptError::runtime(format!("bad argument specifier \"{p}\"")).into()),
                }
            }
            i.procs.insert(a[0].clone(), Arc::new(Proc { params, variadic, body: a[2].clone() }));
            Ok(String::new())
        });
        self.builtin("global", "global varName ?varName ...?", 1, None, |i, a| {
            if i.frames.len() > 1 {
                let top = i.frames.last_mut().expect("frame");
                for name in a {
                    top.vars.remove(name);
                    top.globals.insert(name.clone());
                }
            }
            Ok(String::new())
        });
        self.builtin("eval", "eval arg ?arg ...?", 1, None, |i, a| {
            i.enter()?;
            let r = i.eval_text(&a.join(" "));
            i.depth -= 1;
            r
        });
        self.builtin("source", "source fileName", 1, Some(1), |i, a| {
            let path = i.resolve_path(&a[0]);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScriptError::runtime(format!("couldn't read file \"{}\": {e}", path.display())))?;
            i.enter()?;
            let r = i.eval_text(&text);
            i.depth -= 1;
            match r {
                Err(Flow::Return(v)) => Ok(v),
                other => other,
            }
        });
        self.builtin("puts", "puts ?-nonewline? string", 1, Some(2), |i, a| {
            let (text, newline) = match a {
                [flag, text] if flag == "-nonewline" => (text, false),
                [text] => (text, true),
                _ => return Err(arity("puts", "puts ?-nonewline? string").into()),
            };
            let mut s = text.clone();
            if newline {
                s.push('\n');
            }
            if i.echo {
                use std::io::Write;
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(s.as_bytes());
                let _ = out.flush();
            }
            i.output.push_str(&s);
            Ok(String::new())
        });
        self.builtin("list", "list ?arg ...?", 0, None, |_, a| Ok(list::join(a)));
        self.builtin("llength", "llength list", 1, Some(1), |_, a| Ok(list_arg(&a[0])?.len().to_string()));
        self.builtin("lindex", "lindex list index", 2, Some(2), |_, a| {
            let items = list_arg(&a[0])?;
            Ok(index_arg(&a[1], items.len())?.and_then(|k| items.get(k).cloned()).unwrap_or_default())
        });
        self.builtin("lrange", "lrange list first last", 3, Some(3), |_, a| {
            let items = list_arg(&a[0])?;
            let first = index_arg(&a[1], items.len())?.unwrap_or(0);
            let last = match index_arg(&a[2], items.len())? {
                Some(l) => l.min(items.len().saturating_sub(1)),
                None => return Ok(String::new()),
            };
            Ok(if first > last || items.is_empty() { String::new() } else { list::join(&items[first..=last]) })
        });
        self.builtin("lappend", "lappend varName ?value ...?", 1, None, |i, a| {
            let mut items = match i.var(&a[0]) {
                Some(v) => list_arg(v)?,
                None => Vec::new(),
            };
            items.extend(a[1..].iter().cloned());
            let v = list::join(&items);
            i.set_var(&a[0], v.clone());
            Ok(v)
        });
        self.builtin("concat", "concat ?arg ...?", 0, None, |_, a| {
            Ok(a.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" "))
        });
    }
}

fn arity(command: &str, usage: &str) -> ScriptError {
    let usage = if usage.starts_with(command) { usage.to_string() } else { format!("{command} {usage}").trim_end().to_string() };
    ScriptError::WrongArity { command: command.to_string(), usage, pos: Pos::default() }
}

pub fn int_arg(s: &str) -> Result<i64, ScriptError> {
    s.trim().parse().map_err(|_| ScriptError::runtime(format!("expected integer but got \"{s}\"")))
}

pub fn float_arg(s: &str) -> Result<f64, ScriptError> {
    expr::parse_num(s)
        .map(Num::as_f64)
        .ok_or_else(|| ScriptError::runtime(format!("expected number but got \"{s}\"")))
}

pub fn list_arg(s: &str) -> Result<Vec<String>, ScriptError> {
    list::split(s).map_err(ScriptError::runtime)
}

fn index_arg(s: &str, len: usize) -> Result<Option<usize>, ScriptError> {
    if s == "end" {
        return Ok(len.checked_sub(1));
    }
    let i = int_arg(s)?;
    Ok(usize::try_from(i).ok())
}
