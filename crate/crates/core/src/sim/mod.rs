//! Off-line, fixed-rate simulation.
//!
//! Positions follow the central-difference recurrence with the time step folded
//! into the parameters (one step = one sample). Each step runs three phases
//! separated by barriers:
//!
//! 1. every interaction computes its force from the current and previous
//!    positions of its two endpoints into a per-interaction slot;
//! 2. every material sums the forces of its incident interactions in ascending
//!    interaction order, adds force injections, and advances its position;
//! 3. observers and the motion trace record the step.
//!
//! Forces are never accumulated concurrently, so the result does not depend on
//! how the phases are split across threads.

mod engine;
mod program;
mod stability;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::kind::ModuleKind;
use crate::network::ModuleId;

pub use engine::{
    step, Engine, EngineContract, EngineError, NaiveEngine, Progress, ReferenceEngine, RunControl, Simulator,
    CONTRACT_VERSION,
};
pub use program::{compile, CompileError, LiaLaw, MatLaw, Observer, Probe, SignalBank, SimProgram};
pub use stability::{companion_radius, stability_check, StabilityEntry, StabilityReport, Verdict, STABILITY_TOLERANCE};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_TRACE_DECIMATION: u32 = 64;

/// Which materials the motion trace records.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSelection {
    #[default]
    All,
    None,
    Picker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sample_rate: u32,
    /// Number of steps.
    pub duration: u64,
    pub trace_decimation: u32,
    pub trace: TraceSelection,
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration: DEFAULT_SAMPLE_RATE as u64,
            trace_decimation: DEFAULT_TRACE_DECIMATION,
            trace: TraceSelection::All,
            threads: 1,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.sample_rate == 0 {
            return Err("sample_rate must be positive".into());
        }
        if self.trace_decimation == 0 {
            return Err("trace_decimation must be at least 1".into());
        }
        if self.threads == 0 {
            return Err("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Steps covering `seconds` at the configured rate, rounded to nearest.
    pub fn steps_for(&self, seconds: f64) -> u64 {
        (seconds * self.sample_rate as f64).round().max(0.0) as u64
    }
}

/// Stiffness giving a MAS–RES–SOL oscillator the frequency `hz`.
pub fn stiffness_for_frequency(hz: f64, mass: f64, sample_rate: f64) -> f64 {
    2.0 * mass * (1.0 - (std::f64::consts::TAU * hz / sample_rate).cos())
}

/// Frequency of a MAS–RES–SOL oscillator; `None` outside `0 < K/M < 4`.
pub fn frequency_for_stiffness(k: f64, mass: f64, sample_rate: f64) -> Option<f64> {
    let r = k / mass;
    (r > 0.0 && r < 4.0).then(|| sample_rate * (1.0 - r / 2.0).acos() / std::f64::consts::TAU)
}

/// Mutable simulation state: positions at steps n and n − 1 and the force slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub force: Vec<f64>,
    pub n: u64,
}

impl SimState {
    /// Positions start at X0 with `x(−1) = X0 − V0`.
    pub fn new(program: &SimProgram) -> SimState {
        SimState {
            x: program.x0.clone(),
            x_prev: program.x0.iter().zip(&program.v0).map(|(x, v)| x - v).collect(),
            force: vec![0.0; program.lia_count()],
            n: 0,
        }
    }
}

/// One recorded sound channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub module: ModuleId,
    pub kind: ModuleKind,
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |p, s| p.max(s.abs()))
    }
}

/// Sound output of a run. `length` is the number of steps, which is also the
/// length of every channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SoundBuffers {
    pub sample_rate: u32,
    pub length: usize,
    pub channels: Vec<Channel>,
}

impl SoundBuffers {
    pub fn channel(&self, module: ModuleId) -> Option<&Channel> {
        self.channels.iter().find(|c| c.module == module)
    }
}

/// Decimated position snapshots for the 2D+1 view, frame-major.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionTrace {
    pub decimation: u32,
    pub modules: Vec<ModuleId>,
    /// Step index of each frame.
    pub steps: Vec<u64>,
    pub positions: Vec<f64>,
}

impl MotionTrace {
    pub fn frame_count(&self) -> usize {
        self.steps.len()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let w = self.modules.len();
        &self.positions[i * w..(i + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub steps: u64,
    pub wall: Duration,
    pub threads: usize,
    pub modules: usize,
    pub peaks: Vec<(ModuleId, f64)>,
}

impl RunStats {
    pub fn steps_per_sec(&self) -> f64 {
        let s = self.wall.as_secs_f64();
        if s > 0.0 {
            self.steps as f64 / s
        } else {
            f64::INFINITY
        }
    }
}

impl fmt::Display for RunStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "steps: {}", self.steps)?;
        writeln!(f, "wall_ms: {:.3}", self.wall.as_secs_f64() * 1e3)?;
        writeln!(f, "steps_per_sec: {:.1}", self.steps_per_sec())?;
        writeln!(f, "threads: {}", self.threads)?;
        writeln!(f, "modules: {}", self.modules)?;
        for (id, peak) in &self.peaks {
            writeln!(f, "peak[{id}]: {peak:?}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub sound: SoundBuffers,
    pub trace: MotionTrace,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("numeric blow-up at step {step} in module {module}")]
    NumericBlowup { step: u64, module: ModuleId },
    #[error("simulation cancelled at step {step}")]
    Cancelled { step: u64 },
    #[error("state does not match program")]
    StateMismatch,
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: SimError,
    pub partial: Box<RunOutput>,
}

/// Error from [`render`]: either the network did not compile or the run failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Run(#[from] RunFailure),
}

/// Compiles `net` and runs it from its initial state on the reference engine.
pub fn render(net: &crate::Network, config: &SimConfig, signals: &SignalBank) -> Result<RunOutput, RenderError> {
    let program = compile(net, config, signals)?;
    let mut state = SimState::new(&program);
    Ok(ReferenceEngine.run(&program, &mut state, config, &mut RunControl::default())?)
}
