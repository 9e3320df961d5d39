//! `trajectory.csv`, `events.csv` and `summary.json`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::Scenario;
use super::run::{run, RunFailure, RunResult, Summary, TrajectorySample};
use crate::error::{Error, Result};
use crate::trigger::EventRecord;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// 17 significant digits, `.` radix.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_csv(n: usize, samples: &[TrajectorySample]) -> String {
    let mut out = String::from("t");
    for i in 0..n {
        let _ = write!(out, ",p_{i}");
    }
    for i in 0..n {
        let _ = write!(out, ",f_{i}");
    }
    out.push_str(",V,S\n");
    for s in samples {
        out.push_str(&num(s.t));
        for v in s.p.iter().chain(&s.f).chain([&s.v, &s.s]) {
            out.push(',');
            out.push_str(&num(*v));
        }
        out.push('\n');
    }
    out
}

pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = String::from("t,agent,f_hat,p_hat\n");
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", num(e.t), e.agent, num(e.f_hat), num(e.p_hat));
    }
    out
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary is always serialisable");
    s.push('\n');
    s
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn write_outputs(result: &RunResult, n: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (TRAJECTORY_FILE, trajectory_csv(n, &result.trajectory)),
        (EVENTS_FILE, events_csv(&result.events)),
        (SUMMARY_FILE, summary_json(&result.summary)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Outcome of one batch entry.
#[derive(Debug)]
pub enum BatchOutcome {
    Completed(Box<RunResult>),
    Failed(RunFailure),
    /// The run finished but writing its outputs did not.
    WriteFailed(Error),
}

/// Runs scenarios on separate threads, each writing into its own directory.
/// Duplicate output directories are rejected before anything runs.
pub fn run_batch(jobs: &[(Scenario, PathBuf)]) -> Result<Vec<BatchOutcome>> {
    let mut seen = HashSet::new();
    for (_, dir) in jobs {
        let key = normalize(dir);
        if !seen.insert(key) {
            return Err(Error::validation(
                "output",
                format!("output directory {} is used by more than one run", dir.display()),
            ));
        }
    }
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(scenario, dir)| {
                scope.spawn(move || match run(scenario) {
                    Ok(result) => match write_outputs(&result, scenario.n(), dir) {
                        Ok(_) => BatchOutcome::Completed(Box::new(result)),
                        Err(e) => BatchOutcome::WriteFailed(e),
                    },
                    Err(failure) => BatchOutcome::Failed(failure),
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("batch worker panicked"))
            .collect()
    });
    Ok(outcomes)
}

fn normalize(dir: &Path) -> PathBuf {
    let absolute = if dir.is_absolute() {
        dir.to_path_buf()
    } else {
        std::env::current_dir().unwrap_or_default().join(dir)
    };
    let mut out = PathBuf::new();
    for part in absolute.components() {
        match part {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}
