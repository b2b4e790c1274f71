//! The `pnet` command line. Every subcommand is a thin shell over the
//! library crates: it loads, calls, and prints.
//!
//! Exit codes: 0 success, 1 domain error (bad script, invalid model, blow-up,
//! I/O), 2 usage error.

pub mod bench;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Args, Parser, Subcommand};
use pnet_core::io::{export_wav, write_trace_csv, ChannelLayout, ModelDocument, SampleFormat, WavOptions};
use pnet_core::sim::{compile, stability_check, Engine, ReferenceEngine, RunControl, RunOutput, SimState, TraceSelection};
use pnet_core::{Picker, StateVar};
use pnsl::{Interp, Workspace};

#[derive(Debug, Parser)]
#[command(name = "pnet", version, about = "Build, script, render and serve mass-interaction networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a script, optionally against a model, and print its result
    Run(RunArgs),
    /// Render a model document to WAV
    Simulate(SimulateArgs),
    /// List the modules a picker selects
    Inspect(InspectArgs),
    /// Time chain networks of the given sizes and print CSV
    Bench(BenchArgs),
    /// Serve the session API over WebSocket, or stdin/stdout with --stdio
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub script: PathBuf,
    /// Model to load before the script runs
    #[arg(long, env = "PNET_MODEL")]
    pub model: Option<PathBuf>,
    /// Where to save the model afterwards
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    pub wav: PathBuf,
    /// Seconds to render; defaults to the document's duration
    #[arg(long, env = "PNET_DURATION")]
    pub duration: Option<f64>,
    #[arg(long, env = "PNET_THREADS")]
    pub threads: Option<usize>,
    /// Scale the output so its peak sits just below full scale
    #[arg(long, env = "PNET_NORMALIZE")]
    pub normalize: bool,
    /// Refuse to run when the stability check finds an unstable module
    #[arg(long, env = "PNET_CHECK")]
    pub check: bool,
    /// Write the motion trace as CSV
    #[arg(long, env = "PNET_TRACE")]
    pub trace: Option<PathBuf>,
    /// 16-bit PCM instead of 32-bit float
    #[arg(long)]
    pub pcm16: bool,
    /// One file per channel
    #[arg(long)]
    pub split: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub model: PathBuf,
    pub picker: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Network sizes, in modules
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    pub modules: Vec<usize>,
    #[arg(long, default_value_t = 44_100)]
    pub steps: u64,
    #[arg(long, env = "PNET_THREADS")]
    pub threads: Option<usize>,
    /// Also append the rows to this CSV file (header written when new)
    #[arg(long, env = "PNET_BENCH_CSV")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PNET_PORT", default_value_t = 7464)]
    pub port: u16,
    #[arg(long, env = "PNET_HOST", default_value = "127.0.0.1")]
    pub host: String,
    /// Line-delimited JSON on stdin/stdout instead of WebSocket
    #[arg(long)]
    pub stdio: bool,
    /// Model to load at start
    #[arg(long, env = "PNET_MODEL")]
    pub model: Option<PathBuf>,
}

/// A failure of the requested work, as opposed to a malformed invocation.
#[derive(Debug)]
pub struct Failure(pub String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Run(a) => run(&a, out),
        Command::Simulate(a) => simulate(&a, out),
        Command::Inspect(a) => inspect(&a, out),
        Command::Bench(a) => bench_cmd(&a, out),
        Command::Serve(a) => serve(&a, err),
    }
}

fn read_document(path: &Path) -> Result<ModelDocument, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure(format!("IoError: {}: {e}", path.display())))?;
    ModelDocument::load(&bytes).map_err(|e| Failure(format!("DocumentError: {}: {e}", path.display())))
}

/// A script session holding the document at `path`. Signal paths in the
/// document resolve against the document's directory.
pub fn load_session(path: &Path) -> Result<Interp<Workspace>, Failure> {
    let doc = read_document(path)?;
    let mut i = pnsl::session(Workspace::default());
    let cwd = std::mem::replace(&mut i.base_dir, path.parent().map(Path::to_path_buf).unwrap_or_default());
    pnsl::install_document(&mut i, doc).map_err(|e| Failure(e.message()))?;
    i.base_dir = cwd;
    Ok(i)
}

fn run(a: &RunArgs, out: &mut dyn Write) -> Outcome {
    let src = std::fs::read_to_string(&a.script).map_err(|e| Failure(format!("IoError: {}: {e}", a.script.display())))?;
    let mut i = match &a.model {
        Some(m) => load_session(m)?,
        None => pnsl::session(Workspace::default()),
    };
    let result = i.eval(&src);
    out.write_all(i.take_output().as_bytes())?;
    let result = result.map_err(|e| Failure(format!("{}: {e}", a.script.display())))?;
    if !result.is_empty() {
        writeln!(out, "{result}")?;
    }
    if let Some(path) = &a.out {
        std::fs::write(path, i.ctx.doc.save()).map_err(|e| Failure(format!("IoError: {}: {e}", path.display())))?;
    }
    Ok(())
}

/// What `simulate` renders, before anything is written.
pub fn render_document(i: &Interp<Workspace>, a: &SimulateArgs) -> Result<RunOutput, Failure> {
    let ws = &i.ctx;
    let mut config = ws.doc.sim.clone();
    if let Some(s) = a.duration {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Failure(format!("duration must be a non-negative number of seconds, got {s}")));
        }
        config.duration = config.steps_for(s);
    }
    config.threads = a.threads.unwrap_or_else(default_threads).max(1);
    if a.trace.is_none() {
        config.trace = TraceSelection::None;
    }
    let program = compile(&ws.doc.network, &config, &ws.signals)?;
    if a.check {
        let report = stability_check(&program);
        if !report.is_stable() {
            return Err(Failure(format!("stability check failed\n{report}")));
        }
    }
    let mut state = SimState::new(&program);
    ReferenceEngine.run(&program, &mut state, &config, &mut RunControl::default()).map_err(|f| Failure(f.error.to_string()))
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Outcome {
    let i = load_session(&a.model)?;
    let run = render_document(&i, a)?;
    let options = WavOptions {
        format: if a.pcm16 { SampleFormat::Pcm16 } else { SampleFormat::Float32 },
        normalize: a.normalize,
        layout: if a.split { ChannelLayout::Split } else { ChannelLayout::Interleaved },
        channels: None,
    };
    let report = export_wav(&run.sound, &a.wav, &options)?;
    if let Some(path) = &a.trace {
        write_trace_csv(&run.trace, path).map_err(|e| Failure(format!("IoError: {}: {e}", path.display())))?;
    }
    let s = &run.stats;
    let mut text = String::new();
    let _ = writeln!(text, "steps {}", s.steps);
    let _ = writeln!(text, "wall_ms {:.3}", s.wall.as_secs_f64() * 1e3);
    let _ = writeln!(text, "steps_per_sec {:.1}", s.steps_per_sec());
    let _ = writeln!(text, "threads {}", s.threads);
    for (m, p) in &s.peaks {
        let _ = writeln!(text, "peak {m} {p:?}");
    }
    for f in &report.files {
        let _ = writeln!(text, "wrote {}", f.display());
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// One tab-separated row per module: id, kind, labels, parameters.
pub fn inspect_rows(doc: &ModelDocument, picker: &str) -> Result<Vec<String>, Failure> {
    let picker = Picker::parse(picker).map_err(|e| Failure(format!("PickerSyntaxError: {e}")))?;
    let net = &doc.network;
    let mut rows = Vec::new();
    for id in picker.eval(net.labels()) {
        let m = net.get(id)?;
        let labels = net.labels_of(id)?.join(",");
        let mut params: Vec<String> = m.kind.legal_params().iter().filter_map(|&p| m.param(p).map(|v| format!("{p}={v}"))).collect();
        if m.kind.has_initial_state() {
            for var in [StateVar::X0, StateVar::V0] {
                params.push(format!("{var:?}={:?}", net.state(id, var)?));
            }
        }
        rows.push(format!("{id}\t{}\t{labels}\t{}", m.kind, params.join(" ")));
    }
    Ok(rows)
}

fn inspect(a: &InspectArgs, out: &mut dyn Write) -> Outcome {
    let doc = read_document(&a.model)?;
    for row in inspect_rows(&doc, &a.picker)? {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn bench_cmd(a: &BenchArgs, out: &mut dyn Write) -> Outcome {
    let threads = a.threads.unwrap_or_else(default_threads).max(1);
    let mut file = match &a.csv {
        Some(p) => {
            let fresh = !p.exists();
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(p)?;
            if fresh {
                writeln!(f, "{}", bench::CSV_HEADER)?;
            }
            Some(f)
        }
        None => None,
    };
    writeln!(out, "{}", bench::CSV_HEADER)?;
    for &n in &a.modules {
        let row = bench::run_chain(n, a.steps, threads)?;
        writeln!(out, "{}", row.csv())?;
        if let Some(f) = &mut file {
            writeln!(f, "{}", row.csv())?;
        }
    }
    Ok(())
}

fn serve(a: &ServeArgs, err: &mut dyn Write) -> Outcome {
    let i = match &a.model {
        Some(m) => load_session(m)?,
        None => pnsl::session(Workspace::default()),
    };
    let service = pnet_service::Service::with_interp(i);
    if a.stdio {
        let stdin = std::io::stdin();
        pnet_service::serve_stdio(&service, stdin.lock(), std::io::stdout())?;
        return Ok(());
    }
    let listener = TcpListener::bind((a.host.as_str(), a.port))?;
    writeln!(err, "listening on ws://{}", listener.local_addr()?)?;
    let stop = AtomicBool::new(false);
    pnet_service::serve_ws(&service, listener, &stop)?;
    Ok(())
}
