//! JSONL traces: a header line with the run spec, one line per round and a
//! closing line with the result. Replaying a trace re-runs the spec and
//! checks every round against the recording.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::sim::{Protocol, RoundRecord, RunResult, RunSpec, Simulation};
use crate::ssync::{run_ssync_with, SsyncSpec};

/// What a trace was recorded from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum TracedSpec {
    Fsync(RunSpec),
    Ssync(SsyncSpec),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum TraceLine {
    Header { spec: TracedSpec },
    Round(RoundRecord),
    Result(RunResult),
}

/// A trace read back from disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub spec: TracedSpec,
    pub rounds: Vec<RoundRecord>,
    pub result: RunResult,
}

/// Runs `spec`, calling `sink` for every round.
pub fn run_traced(
    spec: &TracedSpec,
    sink: impl FnMut(&RoundRecord),
) -> Result<RunResult, crate::error::SimError> {
    match spec {
        TracedSpec::Fsync(spec) => {
            if matches!(spec.protocol, Protocol::Randomized(_)) && !spec.ids_distinct() {
                return crate::sim::run(spec.clone());
            }
            Simulation::new(spec.clone())?.run_with(sink)
        }
        TracedSpec::Ssync(spec) => run_ssync_with(spec, sink),
    }
}

/// Runs `spec` and writes its trace to `out`.
pub fn record<W: Write>(spec: &TracedSpec, out: W) -> Result<RunResult, TraceError> {
    let mut out = BufWriter::new(out);
    write_line(&mut out, &TraceLine::Header { spec: spec.clone() })?;
    let mut failed = None;
    let result = run_traced(spec, |r| {
        if failed.is_none() {
            if let Err(e) = write_line(&mut out, &TraceLine::Round(r.clone())) {
                failed = Some(e);
            }
        }
    })?;
    if let Some(e) = failed {
        return Err(e);
    }
    write_line(&mut out, &TraceLine::Result(result.clone()))?;
    out.flush()?;
    Ok(result)
}

/// Runs `spec` and writes its trace to the file at `path`.
pub fn record_to_file(spec: &TracedSpec, path: &Path) -> Result<RunResult, TraceError> {
    record(spec, File::create(path)?)
}

fn write_line<W: Write>(out: &mut W, line: &TraceLine) -> Result<(), TraceError> {
    serde_json::to_writer(&mut *out, line).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses a trace. Parse errors name the offending line (1-based).
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut spec = None;
    let mut rounds = Vec::new();
    let mut result = None;
    let mut last = 0;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        last = line_no;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let misplaced = |what: &str| TraceError::Parse {
            line: line_no,
            message: format!("unexpected {what} record"),
        };
        match parsed {
            TraceLine::Header { spec: s } => {
                if spec.is_some() || result.is_some() {
                    return Err(misplaced("header"));
                }
                spec = Some(s);
            }
            TraceLine::Round(r) => {
                if spec.is_none() || result.is_some() {
                    return Err(misplaced("round"));
                }
                rounds.push(r);
            }
            TraceLine::Result(r) => {
                if spec.is_none() || result.is_some() {
                    return Err(misplaced("result"));
                }
                result = Some(r);
            }
        }
    }
    let missing = |what: &str| TraceError::Parse {
        line: last,
        message: format!("trace has no {what} record"),
    };
    Ok(Trace {
        spec: spec.ok_or_else(|| missing("header"))?,
        rounds,
        result: result.ok_or_else(|| missing("result"))?,
    })
}

/// Re-runs a recorded trace and checks it round by round.
pub fn replay<R: BufRead>(input: R) -> Result<RunResult, TraceError> {
    let trace = read_trace(input)?;
    let mut divergence = None;
    let mut index = 0;
    let result = run_traced(&trace.spec, |r| {
        if divergence.is_none() {
            divergence = match trace.rounds.get(index) {
                None => Some((r.round, "replay runs longer than the recording".to_string())),
                Some(recorded) => compare(recorded, r).map(|d| (r.round, d)),
            };
        }
        index += 1;
    })?;
    if let Some((round, detail)) = divergence {
        return Err(TraceError::Divergence { round, detail });
    }
    if index < trace.rounds.len() {
        return Err(TraceError::Divergence {
            round: trace.rounds[index].round,
            detail: "recording runs longer than the replay".into(),
        });
    }
    if result != trace.result {
        return Err(TraceError::Divergence {
            round: result.rounds_termination.unwrap_or(index as u64),
            detail: "final results differ".into(),
        });
    }
    Ok(result)
}

/// Replays the trace stored at `path`.
pub fn replay_file(path: &Path) -> Result<RunResult, TraceError> {
    replay(BufReader::new(File::open(path)?))
}

fn compare(recorded: &RoundRecord, replayed: &RoundRecord) -> Option<String> {
    if recorded.round != replayed.round {
        return Some(format!(
            "round number {} recorded, {} replayed",
            recorded.round, replayed.round
        ));
    }
    if recorded.removed != replayed.removed {
        return Some(format!(
            "removed edges {:?} recorded, {:?} replayed",
            recorded.removed, replayed.removed
        ));
    }
    for (i, (a, b)) in recorded.robots.iter().zip(&replayed.robots).enumerate() {
        if a.position != b.position {
            return Some(format!(
                "robot {i} at node {} recorded, {} replayed",
                a.position, b.position
            ));
        }
        if a != b {
            return Some(format!("robot {i} state differs"));
        }
    }
    if recorded != replayed {
        return Some("round records differ".into());
    }
    None
}
