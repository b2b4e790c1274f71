//! Motion trace as CSV: a `step` column, then one column per traced module.

use std::fmt::Write as _;
use std::path::Path;

use crate::sim::MotionTrace;

pub fn trace_csv(trace: &MotionTrace) -> String {
    let mut text = String::from("step");
    for m in &trace.modules {
        let _ = write!(text, ",{m}");
    }
    text.push('\n');
    for f in 0..trace.frame_count() {
        let _ = write!(text, "{}", trace.steps[f]);
        for x in trace.frame(f) {
            let _ = write!(text, ",{x:?}");
        }
        text.push('\n');
    }
    text
}

pub fn write_trace_csv(trace: &MotionTrace, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, trace_csv(trace))
}
