use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::kind::ModuleKind;

use super::program::{LiaLaw, MatLaw, Probe, SimProgram, B_SIDE};
use super::{Channel, MotionTrace, RunFailure, RunOutput, RunStats, SimConfig, SimError, SimState, SoundBuffers};

/// Version of the compile/step/run contract engines must implement.
pub const CONTRACT_VERSION: u32 = 1;

// Below this many elements a phase runs on the calling thread.
const PAR_THRESHOLD: usize = 4096;

#[inline]
fn signal_at(buf: &[f64], n: u64) -> Option<f64> {
    buf.get(n as usize).copied()
}

#[inline]
pub(crate) fn lia_force(p: &SimProgram, x: &[f64], xp: &[f64], i: usize) -> f64 {
    let a = p.lia_a[i] as usize;
    let b = p.lia_b[i] as usize;
    let dx = x[a] - x[b];
    let dv = (x[a] - xp[a]) - (x[b] - xp[b]);
    match p.lia_laws[i] {
        LiaLaw::Spring { k } => -k * dx,
        LiaLaw::Damper { z } => -z * dv,
        LiaLaw::SpringDamper { k, z } => -k * dx - z * dv,
        LiaLaw::Buffer { k, z, s } => {
            if dx < s {
                k * (s - dx) - z * dv
            } else {
                0.0
            }
        }
        LiaLaw::Table(t) => {
            let (fk, fz) = &p.tables[t as usize];
            fk.eval(dx) + fz.eval(dv)
        }
    }
}

/// Sum of ENF injections into material `i` at step `n`, in ascending module order.
#[inline]
pub(crate) fn injected(p: &SimProgram, i: usize, n: u64, mut total: f64) -> f64 {
    for &s in p.injections_of(i) {
        total += signal_at(&p.signals[s as usize], n).unwrap_or(0.0);
    }
    total
}

/// Next position of material `i` given its summed force.
#[inline]
pub(crate) fn advance(p: &SimProgram, i: usize, x: f64, xp: f64, force: f64, n: u64) -> f64 {
    match p.mat_laws[i] {
        MatLaw::Dynamic { c1, c2, mass } => c1 * x + c2 * xp + force / mass,
        MatLaw::Fixed(x0) => x0,
        MatLaw::Input(s) => {
            let buf = &p.signals[s as usize];
            signal_at(buf, n).or_else(|| buf.last().copied()).unwrap_or(x)
        }
    }
}

#[inline]
fn gather(p: &SimProgram, force: &[f64], i: usize, n: u64) -> f64 {
    let mut total = 0.0;
    for &e in p.incident_of(i) {
        let f = force[(e & !B_SIDE) as usize];
        if e & B_SIDE == 0 {
            total += f;
        } else {
            total -= f;
        }
    }
    injected(p, i, n, total)
}

fn check_state(p: &SimProgram, st: &SimState) -> Result<(), SimError> {
    if st.x.len() != p.mat_count() || st.x_prev.len() != p.mat_count() || st.force.len() != p.lia_count() {
        return Err(SimError::StateMismatch);
    }
    Ok(())
}

/// Advances `state` by one step without recording anything.
pub fn step(program: &SimProgram, state: &mut SimState) -> Result<(), SimError> {
    check_state(program, state)?;
    step_phases(program, state, None)
}

fn step_phases(p: &SimProgram, st: &mut SimState, chunk: Option<usize>) -> Result<(), SimError> {
    let n = st.n;
    {
        let (x, xp) = (&st.x, &st.x_prev);
        match chunk {
            Some(ch) if p.lia_count() >= PAR_THRESHOLD => {
                st.force.par_chunks_mut(ch).enumerate().for_each(|(c, out)| {
                    let base = c * ch;
                    for (j, f) in out.iter_mut().enumerate() {
                        *f = lia_force(p, x, xp, base + j);
                    }
                });
            }
            _ => {
                for (i, f) in st.force.iter_mut().enumerate() {
                    *f = lia_force(p, x, xp, i);
                }
            }
        }
    }
    let bad = {
        let (x, force) = (&st.x, &st.force);
        // x_prev is overwritten in place with x(n+1); the buffers swap afterwards
        let update = |base: usize, out: &mut [f64]| {
            let mut bad = None;
            for (j, slot) in out.iter_mut().enumerate() {
                let i = base + j;
                let next = advance(p, i, x[i], *slot, gather(p, force, i, n), n);
                if bad.is_none() && !next.is_finite() {
                    bad = Some(i);
                }
                *slot = next;
            }
            bad
        };
        match chunk {
            Some(ch) if p.mat_count() >= PAR_THRESHOLD => st
                .x_prev
                .par_chunks_mut(ch)
                .enumerate()
                .filter_map(|(c, out)| update(c * ch, out))
                .min(),
            _ => update(0, &mut st.x_prev),
        }
    };
    std::mem::swap(&mut st.x, &mut st.x_prev);
    st.n += 1;
    match bad {
        Some(i) => Err(SimError::NumericBlowup { step: n, module: p.mat_ids[i] }),
        None => Ok(()),
    }
}

/// Progress report emitted during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub step: u64,
    pub total: u64,
    pub elapsed: Duration,
}

/// Cancellation and progress hooks for a run.
pub struct RunControl<'a> {
    pub cancel: Option<Arc<AtomicBool>>,
    pub progress: Option<Box<dyn FnMut(Progress) + Send + 'a>>,
    pub progress_interval: Duration,
}

impl Default for RunControl<'_> {
    fn default() -> Self {
        RunControl { cancel: None, progress: None, progress_interval: Duration::from_millis(100) }
    }
}

impl<'a> RunControl<'a> {
    pub fn with_cancel(mut self, flag: Arc<AtomicBool>) -> Self {
        self.cancel = Some(flag);
        self
    }

    pub fn with_progress(mut self, f: impl FnMut(Progress) + Send + 'a) -> Self {
        self.progress = Some(Box::new(f));
        self
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

struct Recorder {
    channels: Vec<Vec<f64>>,
    trace: MotionTrace,
    steps: u64,
}

impl Recorder {
    fn new(p: &SimProgram, steps: u64) -> Self {
        let cap = steps.min(1 << 24) as usize;
        Recorder {
            channels: p.observers.iter().map(|_| Vec::with_capacity(cap)).collect(),
            trace: MotionTrace {
                decimation: p.trace_decimation,
                modules: p.trace.iter().map(|&i| p.mat_ids[i as usize]).collect(),
                steps: Vec::new(),
                positions: Vec::new(),
            },
            steps: 0,
        }
    }

    /// Records step `n` from positions x(n) and forces f(n).
    fn record(&mut self, p: &SimProgram, x: &[f64], force: &[f64], n: u64) {
        for (obs, ch) in p.observers.iter().zip(&mut self.channels) {
            let v = match obs.probe {
                Probe::Position(i) => x[i as usize],
                Probe::Force(i) => force[i as usize],
            };
            ch.push(obs.gain * v);
        }
        if !p.trace.is_empty() && n % p.trace_decimation as u64 == 0 {
            self.trace.steps.push(n);
            self.trace.positions.extend(p.trace.iter().map(|&i| x[i as usize]));
        }
        self.steps += 1;
    }

    fn finish(self, p: &SimProgram, started: Instant, threads: usize) -> RunOutput {
        let channels: Vec<Channel> = p
            .observers
            .iter()
            .zip(self.channels)
            .map(|(o, samples)| Channel { module: o.id, kind: o.kind(), samples })
            .collect();
        let stats = RunStats {
            steps: self.steps,
            wall: started.elapsed(),
            threads,
            modules: p.mat_count() + p.lia_count() + p.observers.len(),
            peaks: channels.iter().map(|c| (c.module, c.peak())).collect(),
        };
        RunOutput {
            sound: SoundBuffers { sample_rate: p.sample_rate, length: self.steps as usize, channels },
            trace: self.trace,
            stats,
        }
    }
}

/// Capabilities an engine declares when it is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineContract {
    pub version: u32,
    pub kinds: Vec<ModuleKind>,
    /// Outputs are identical for every thread count.
    pub deterministic: bool,
}

impl EngineContract {
    pub fn full() -> Self {
        EngineContract { version: CONTRACT_VERSION, kinds: ModuleKind::ALL.to_vec(), deterministic: true }
    }
}

/// A simulation engine: consumes a compiled program and advances a state.
pub trait Engine: Send + Sync {
    fn name(&self) -> &str;

    fn contract(&self) -> EngineContract;

    fn run(
        &self,
        program: &SimProgram,
        state: &mut SimState,
        config: &SimConfig,
        control: &mut RunControl<'_>,
    ) -> Result<RunOutput, RunFailure>;
}

fn drive(
    p: &SimProgram,
    st: &mut SimState,
    config: &SimConfig,
    control: &mut RunControl<'_>,
    threads: usize,
    mut step_fn: impl FnMut(&SimProgram, &mut SimState, &mut Recorder) -> Result<(), SimError>,
) -> Result<RunOutput, RunFailure> {
    let started = Instant::now();
    let mut rec = Recorder::new(p, config.duration);
    let fail = |error, rec: Recorder| RunFailure { error, partial: Box::new(rec.finish(p, started, threads)) };
    if let Err(e) = config.check().map_err(SimError::Config).and_then(|_| check_state(p, st)) {
        return Err(fail(e, rec));
    }
    let mut last_report = started;
    for i in 0..config.duration {
        if control.cancelled() {
            return Err(fail(SimError::Cancelled { step: st.n }, rec));
        }
        if let Err(e) = step_fn(p, st, &mut rec) {
            return Err(fail(e, rec));
        }
        if let Some(report) = control.progress.as_mut() {
            let now = Instant::now();
            if now - last_report >= control.progress_interval {
                last_report = now;
                report(Progress { step: i + 1, total: config.duration, elapsed: now - started });
            }
        }
    }
    Ok(rec.finish(p, started, threads))
}

/// The embedded off-line engine: barrier-phased, parallel over interactions
/// and materials, bit-identical for any thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEngine;

impl Engine for ReferenceEngine {
    fn name(&self) -> &str {
        "reference"
    }

    fn contract(&self) -> EngineContract {
        EngineContract::full()
    }

    fn run(
        &self,
        p: &SimProgram,
        st: &mut SimState,
        config: &SimConfig,
        control: &mut RunControl<'_>,
    ) -> Result<RunOutput, RunFailure> {
        let threads = config.threads.max(1);
        let body = |st: &mut SimState, control: &mut RunControl<'_>| {
            let chunk = (threads > 1).then(|| {
                let widest = p.mat_count().max(p.lia_count());
                (widest / (threads * 4)).max(1024)
            });
            drive(p, st, config, control, threads, |p, st, rec| {
                let n = st.n;
                let res = step_phases(p, st, chunk);
                // after the swap, x_prev holds x(n)
                rec.record(p, &st.x_prev, &st.force, n);
                res
            })
        };
        if threads == 1 {
            return body(st, control);
        }
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| body(st, control)),
            Err(_) => body(st, control),
        }
    }
}

/// Straightforward single-threaded engine that scatters each interaction's
/// force into per-material accumulators. Used as a differential check of the
/// reference engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveEngine;

impl Engine for NaiveEngine {
    fn name(&self) -> &str {
        "naive"
    }

    fn contract(&self) -> EngineContract {
        EngineContract::full()
    }

    fn run(
        &self,
        p: &SimProgram,
        st: &mut SimState,
        config: &SimConfig,
        control: &mut RunControl<'_>,
    ) -> Result<RunOutput, RunFailure> {
        let mut acc = vec![0.0; p.mat_count()];
        let mut next = vec![0.0; p.mat_count()];
        drive(p, st, config, control, 1, |p, st, rec| {
            let n = st.n;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for i in 0..p.lia_count() {
                let f = lia_force(p, &st.x, &st.x_prev, i);
                st.force[i] = f;
                acc[p.lia_a[i] as usize] += f;
                acc[p.lia_b[i] as usize] -= f;
            }
            let mut bad = None;
            for i in 0..p.mat_count() {
                let total = injected(p, i, n, acc[i]);
                next[i] = advance(p, i, st.x[i], st.x_prev[i], total, n);
                if bad.is_none() && !next[i].is_finite() {
                    bad = Some(i);
                }
            }
            rec.record(p, &st.x, &st.force, n);
            std::mem::swap(&mut st.x_prev, &mut st.x);
            std::mem::swap(&mut st.x, &mut next);
            st.n += 1;
            match bad {
                Some(i) => Err(SimError::NumericBlowup { step: n, module: p.mat_ids[i] }),
                None => Ok(()),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("engine `{name}` does not satisfy the engine contract: {reason}")]
    ContractViolation { name: String, reason: String },
    #[error("no engine named `{0}`")]
    UnknownEngine(String),
}

/// Engine registry. The reference engine is always present.
#[derive(Clone)]
pub struct Simulator {
    engines: Vec<Arc<dyn Engine>>,
    active: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator { engines: vec![Arc::new(ReferenceEngine)], active: 0 }
    }
}

impl std::fmt::Debug for Simulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator")
            .field("engines", &self.engine_names())
            .field("active", &self.active().name())
            .finish()
    }
}

impl Simulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an engine and makes it active. Attaching an engine with an
    /// existing name replaces it.
    pub fn attach_engine(&mut self, engine: Arc<dyn Engine>) -> Result<(), EngineError> {
        let c = engine.contract();
        let violation = |reason: String| EngineError::ContractViolation { name: engine.name().to_string(), reason };
        if c.version != CONTRACT_VERSION {
            return Err(violation(format!("contract version {} (expected {CONTRACT_VERSION})", c.version)));
        }
        if let Some(k) = ModuleKind::ALL.iter().find(|k| !c.kinds.contains(k)) {
            return Err(violation(format!("does not support {k}")));
        }
        if !c.deterministic {
            return Err(violation("outputs depend on thread count".into()));
        }
        match self.engines.iter().position(|e| e.name() == engine.name()) {
            Some(i) => {
                self.engines[i] = engine;
                self.active = i;
            }
            None => {
                self.engines.push(engine);
                self.active = self.engines.len() - 1;
            }
        }
        Ok(())
    }

    pub fn select(&mut self, name: &str) -> Result<(), EngineError> {
        self.active = self
            .engines
            .iter()
            .position(|e| e.name() == name)
            .ok_or_else(|| EngineError::UnknownEngine(name.to_string()))?;
        Ok(())
    }

    pub fn active(&self) -> &dyn Engine {
        self.engines[self.active].as_ref()
    }

    pub fn engine_names(&self) -> Vec<&str> {
        self.engines.iter().map(|e| e.name()).collect()
    }

    pub fn run(
        &self,
        program: &SimProgram,
        state: &mut SimState,
        config: &SimConfig,
        control: &mut RunControl<'_>,
    ) -> Result<RunOutput, RunFailure> {
        self.active().run(program, state, config, control)
    }
}
