//! Comma-separated trace files.
//!
//! ```text
//! arrival_ms,task_id
//! # rng,chacha8,seed,7
//! # segment,0,2
//! 612.0512238417935,3
//! ```
//!
//! Times are written in shortest round-trip form, so a read followed by a
//! write reproduces the file byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ArrivalEvent, SegmentMark, WorkloadTrace};
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;

pub const TRACE_HEADER: &str = "arrival_ms,task_id";

pub fn write_trace_to<W: Write>(trace: &WorkloadTrace, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    writeln!(out, "# rng,{RNG_ALGORITHM},seed,{}", trace.seed)?;
    let mut marks = trace.segments.iter().peekable();
    for (i, ev) in trace.events.iter().enumerate() {
        while let Some(mark) = marks.next_if(|m| m.start_index == i) {
            writeln!(out, "# segment,{},{}", mark.start_index, mark.rate)?;
        }
        writeln!(out, "{},{}", ev.time_ms, ev.task_id)?;
    }
    Ok(())
}

pub fn write_trace(trace: &WorkloadTrace, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_trace_to(trace, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a trace file, checking order and task ids against `num_tasks`.
///
/// A file without `# segment` lines becomes a single segment whose rate is
/// the empirical arrival rate.
pub fn read_trace(path: &Path, num_tasks: usize) -> Result<WorkloadTrace> {
    let text = fs::read_to_string(path)?;
    parse_trace(&text, num_tasks, path)
}

pub(crate) fn parse_trace(text: &str, num_tasks: usize, path: &Path) -> Result<WorkloadTrace> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut trace = WorkloadTrace::default();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let fields: Vec<&str> = comment.trim().split(',').map(str::trim).collect();
            match fields.as_slice() {
                ["segment", start, rate] => {
                    let start_index = start
                        .parse()
                        .map_err(|_| err(line_no, format!("bad segment start `{start}`")))?;
                    let rate: f64 = rate
                        .parse()
                        .map_err(|_| err(line_no, format!("bad segment rate `{rate}`")))?;
                    if start_index != trace.events.len() {
                        return Err(err(
                            line_no,
                            format!("segment start {start_index} does not match row position {}", trace.events.len()),
                        ));
                    }
                    trace.segments.push(SegmentMark { start_index, rate });
                }
                ["rng", _, "seed", seed] => {
                    trace.seed = seed.parse().map_err(|_| err(line_no, format!("bad seed `{seed}`")))?;
                }
                _ => {}
            }
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(err(line_no, format!("expected header `{TRACE_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let (time, task) = line
            .split_once(',')
            .ok_or_else(|| err(line_no, "expected `arrival_ms,task_id`".into()))?;
        let time_ms: f64 = time
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("bad arrival time `{time}`")))?;
        let task_id: usize = task
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("bad task id `{task}`")))?;
        if !(time_ms >= 0.0 && time_ms.is_finite()) {
            return Err(err(line_no, format!("arrival time {time_ms} out of range")));
        }
        if task_id >= num_tasks {
            return Err(err(line_no, format!("unknown task id {task_id} (have {num_tasks} tasks)")));
        }
        if let Some(prev) = trace.events.last() {
            if time_ms < prev.time_ms {
                return Err(err(line_no, format!("arrival {time_ms} ms before previous {} ms", prev.time_ms)));
            }
        }
        trace.events.push(ArrivalEvent { time_ms, task_id });
    }
    if !saw_header {
        return Err(err(1, "missing header".into()));
    }
    if trace.segments.is_empty() && !trace.events.is_empty() {
        let n = trace.events.len();
        let span = trace.events[n - 1].time_ms - trace.events[0].time_ms;
        let rate = if n > 1 && span > 0.0 { (n - 1) as f64 * 1000.0 / span } else { 1.0 };
        trace.segments.push(SegmentMark { start_index: 0, rate });
    }
    if trace.segments.first().map_or(false, |m| m.start_index != 0) {
        return Err(err(1, "first segment must start at row 0".into()));
    }
    trace.validate(num_tasks).map_err(|e| err(0, e.to_string()))?;
    Ok(trace)
}
