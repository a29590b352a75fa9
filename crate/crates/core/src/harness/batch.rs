//! Seeded batches of episodes and their per-step statistics.

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, TrajectoryLog};
use super::scenario::{Mode, Scenario};
use crate::error::HarnessError;
use crate::parallel::map_indexed;

/// Fraction of failed runs above which a batch as a whole fails.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub scenario: String,
    pub mode: Mode,
    pub base_seed: u64,
    pub runs: usize,
    /// Runs that completed; the statistics below are over these.
    pub completed: usize,
    pub t: Vec<f64>,
    /// Mean and population standard deviation of the goal (centroid)
    /// distance at each step.
    pub goal_mean: Vec<f64>,
    pub goal_std: Vec<f64>,
    pub spacing_mean: Option<Vec<f64>>,
    pub spacing_std: Option<Vec<f64>>,
    /// Completed runs ending within the success tolerance without ever
    /// entering the obstacle.
    pub success_count: usize,
    pub reached_count: usize,
    pub penetration_count: usize,
    pub oscillating_count: usize,
    /// Mean over runs of the time-averaged spacing error.
    pub mean_spacing_error: Option<f64>,
    pub final_distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub stats: BatchStats,
    /// Completed runs in seed order.
    pub logs: Vec<TrajectoryLog>,
    /// `(seed, message)` of each failed run.
    pub failures: Vec<(u64, String)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-step statistics of completed logs; `runs` counts failures too.
pub fn batch_stats(scn: &Scenario, mode: Mode, base_seed: u64, runs: usize, logs: &[TrajectoryLog]) -> BatchStats {
    let goal = scn.goal_point();
    let tol = scn.success_tolerance();
    let dists: Vec<Vec<f64>> = logs.iter().map(|l| l.goal_distances(goal)).collect();
    let steps = dists.first().map_or(0, Vec::len);
    let t = logs.first().map_or_else(Vec::new, |l| l.records.iter().map(|r| r.t).collect());
    let (goal_mean, goal_std) = (0..steps).map(|k| mean_std(dists.iter().map(move |d| d[k]))).unzip();
    let spacings: Option<Vec<Vec<f64>>> = logs.iter().map(|l| l.spacings()).collect();
    let (spacing_mean, spacing_std) = match spacings {
        Some(s) if !s.is_empty() => {
            let (m, sd): (Vec<f64>, Vec<f64>) = (0..steps).map(|k| mean_std(s.iter().map(move |d| d[k]))).unzip();
            (Some(m), Some(sd))
        }
        _ => (None, None),
    };
    let reached = |l: &TrajectoryLog| l.summary.final_goal_distance < tol;
    let errors: Option<Vec<f64>> = logs.iter().map(|l| l.summary.mean_spacing_error).collect();
    BatchStats {
        scenario: scn.name.clone(),
        mode,
        base_seed,
        runs,
        completed: logs.len(),
        t,
        goal_mean,
        goal_std,
        spacing_mean,
        spacing_std,
        success_count: logs.iter().filter(|l| reached(l) && !l.summary.penetrated).count(),
        reached_count: logs.iter().filter(|l| reached(l)).count(),
        penetration_count: logs.iter().filter(|l| l.summary.penetrated).count(),
        oscillating_count: logs.iter().filter(|l| l.summary.oscillating).count(),
        mean_spacing_error: errors.filter(|e| !e.is_empty()).map(|e| e.iter().sum::<f64>() / e.len() as f64),
        final_distances: logs.iter().map(|l| l.summary.final_goal_distance).collect(),
    }
}

/// Runs seeds `base_seed, base_seed + 1, …` concurrently. Individual failures
/// are recorded; the batch fails when more than 10% of runs error.
pub fn run_batch(scn: &Scenario, mode: Mode, n_runs: usize, base_seed: u64) -> Result<BatchResult, HarnessError> {
    if n_runs == 0 {
        return Err(HarnessError::validation("runs", "need at least one run"));
    }
    scn.validate()?;
    let outcomes = map_indexed(n_runs, |i| {
        let seed = base_seed.wrapping_add(i as u64);
        (seed, run_episode(scn, mode, seed))
    });
    let mut logs = Vec::with_capacity(n_runs);
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(log) => logs.push(log),
            Err(e) => {
                log::warn!("run with seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    if failures.len() as f64 > MAX_FAILED_FRACTION * n_runs as f64 {
        return Err(HarnessError::BatchFailed {
            failed: failures.len(),
            total: n_runs,
            first: failures[0].1.clone(),
        });
    }
    let stats = batch_stats(scn, mode, base_seed, n_runs, &logs);
    Ok(BatchResult { stats, logs, failures })
}
