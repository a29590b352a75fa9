//! CSV and JSON output, and readers for both.
//!
//! Numbers are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit. Absent values are empty cells.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use super::batch::BatchStats;
use super::episode::{centroid_distance, TrajectoryLog};
use crate::error::HarnessError;
use crate::tasklib::{CONTROL_PER_AGENT, STATE_PER_AGENT};

type HResult<T> = std::result::Result<T, HarnessError>;

/// Header and rows of a CSV file; `None` is an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn trajectory_header(n_tasks: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "agent", "px", "py", "s", "theta", "a", "omega"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 1..=n_tasks {
        h.push(format!("task{k}_active"));
        h.push(format!("sigma{k}"));
    }
    h.extend(["ess", "minS", "unorm"].iter().map(|s| s.to_string()));
    h
}

/// One row per step and agent. `task{k}_active` / `sigma{k}` hold the
/// agent's own row for per-agent tasks (obstacle distance); otherwise the
/// task's flag and a scalar summary: goal distance for goal and centroid
/// tasks, `σ` for the spacing task.
pub fn trajectory_table(log: &TrajectoryLog, goal: [f64; 2]) -> Table {
    let header = trajectory_header(log.task_names.len());
    let mut rows = Vec::with_capacity(log.records.len() * log.agents);
    for r in &log.records {
        for i in 0..log.agents {
            let x = &r.state[STATE_PER_AGENT * i..STATE_PER_AGENT * (i + 1)];
            let u = &r.control[CONTROL_PER_AGENT * i..CONTROL_PER_AGENT * (i + 1)];
            let mut row = vec![Some(r.t), Some(i as f64 + 1.0)];
            row.extend(x.iter().map(|v| Some(*v)));
            row.extend(u.iter().map(|v| Some(*v)));
            for (k, task) in r.tasks.iter().enumerate() {
                let (active, sigma) = if log.per_agent_rows[k] {
                    (task.active[i], task.sigma[i])
                } else {
                    let sigma = match log.task_names[k].as_str() {
                        "goal" | "centroid" => centroid_distance(&r.state, log.agents, goal),
                        _ => task.sigma[0],
                    };
                    (task.active.iter().any(|a| *a), sigma)
                };
                row.push(Some(if active { 1.0 } else { 0.0 }));
                row.push(Some(sigma));
            }
            match &r.pi {
                Some(d) => row.extend([Some(d.ess), Some(d.min_cost), Some(d.control_norm)]),
                None => row.extend([None, None, None]),
            }
            rows.push(row);
        }
    }
    Table { header, rows }
}

pub fn batch_header() -> Vec<String> {
    ["t", "goal_mean", "goal_std", "spacing_mean", "spacing_std"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

pub fn batch_table(stats: &BatchStats) -> Table {
    let rows = (0..stats.t.len())
        .map(|k| {
            vec![
                Some(stats.t[k]),
                Some(stats.goal_mean[k]),
                Some(stats.goal_std[k]),
                stats.spacing_mean.as_ref().map(|v| v[k]),
                stats.spacing_std.as_ref().map(|v| v[k]),
            ]
        })
        .collect();
    Table {
        header: batch_header(),
        rows,
    }
}

pub fn write_table(table: &Table, path: impl AsRef<Path>) -> HResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_table(path: impl AsRef<Path>) -> HResult<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|e| HarnessError::Parse {
                        path: path.to_path_buf(),
                        line: rows.len() + 2,
                        column: col + 1,
                        message: format!("`{cell}`: {e}"),
                    })
                }
            })
            .collect::<HResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> HResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> HResult<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

pub fn export_log(log: &TrajectoryLog, goal: [f64; 2], path: impl AsRef<Path>, format: Format) -> HResult<()> {
    match format {
        Format::Csv => write_table(&trajectory_table(log, goal), path),
        Format::Json => write_json(log, path),
    }
}

pub fn export_stats(stats: &BatchStats, path: impl AsRef<Path>, format: Format) -> HResult<()> {
    match format {
        Format::Csv => write_table(&batch_table(stats), path),
        Format::Json => write_json(stats, path),
    }
}
