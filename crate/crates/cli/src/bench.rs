//! Chain benchmark: a script builds a fixed-end chain of masses and springs,
//! then the network is compiled and rendered with tracing off.

use std::time::{Duration, Instant};

use pnet_core::sim::{compile, Engine, ReferenceEngine, RunControl, SimState};
use pnsl::Workspace;

use crate::Failure;

pub const CSV_HEADER: &str = "module_count,steps,wall_ms,steps_per_sec,bytes_peak";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub module_count: usize,
    pub steps: u64,
    /// Building the network by script, not part of `wall`.
    pub build: Duration,
    /// Compile plus simulate.
    pub wall: Duration,
    pub steps_per_sec: f64,
    /// Peak resident set of the process so far, 0 where unknown.
    pub bytes_peak: u64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.3},{:.1},{}",
            self.module_count,
            self.steps,
            self.wall.as_secs_f64() * 1e3,
            self.steps_per_sec,
            self.bytes_peak
        )
    }
}

/// Script for a chain of about `modules` modules: one fixed end, then
/// mass/spring pairs, and a position observer on the free end.
pub fn chain_script(modules: usize, steps: u64, threads: usize) -> String {
    let pairs = modules.saturating_sub(2) / 2;
    format!(
        "set prev [module create SOL]
for {{set i 0}} {{$i < {pairs}}} {{incr i}} {{
    set m [module create MAS]
    link create RES $prev $m
    set prev $m
}}
param set /sys/RES/** K 0.01
state set $prev X0 0.5
link attach [module create SOX] $prev
sim config steps {steps} threads {threads} trace none
module count"
    )
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_rss_bytes() -> u64 {
    let Ok(status) = std::fs::read_to_string("/proc/self/status") else {
        return 0;
    };
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
        .map_or(0, |kb| kb * 1024)
}

pub fn run_chain(modules: usize, steps: u64, threads: usize) -> Result<BenchRow, Failure> {
    let started = Instant::now();
    let mut i = pnsl::session(Workspace::default());
    let count: usize = i.eval(&chain_script(modules, steps, threads)).map_err(|e| Failure(e.to_string()))?.parse()?;
    let build = started.elapsed();

    let started = Instant::now();
    let ws = &i.ctx;
    let program = compile(&ws.doc.network, &ws.doc.sim, &ws.signals)?;
    let mut state = SimState::new(&program);
    let out = ReferenceEngine.run(&program, &mut state, &ws.doc.sim, &mut RunControl::default()).map_err(|f| Failure(f.error.to_string()))?;
    let wall = started.elapsed();
    Ok(BenchRow {
        module_count: count,
        steps: out.stats.steps,
        build,
        wall,
        steps_per_sec: out.stats.steps as f64 / wall.as_secs_f64().max(1e-9),
        bytes_peak: peak_rss_bytes(),
    })
}
