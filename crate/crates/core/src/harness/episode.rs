//! Single closed-loop episodes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::scenario::{Mode, Scenario};
use crate::dynsim::{effective_dynamics, step_deterministic, DynamicsModel, HierarchyEval};
use crate::error::HarnessError;
use crate::parallel::derive_seed;
use crate::picore::{pi_controller_step, ControlEstimate};
use crate::tasklib::{TaskKind, TaskSpec, STATE_PER_AGENT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    /// Active flag per task row.
    pub active: Vec<bool>,
    pub sigma: Vec<f64>,
    /// `σ_d − σ`.
    pub error: Vec<f64>,
    /// This level's term of the composed control.
    pub contribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiDiagnostics {
    pub ess: f64,
    pub weight_entropy: f64,
    pub min_cost: f64,
    pub mean_cost: f64,
    /// `‖ũ‖` before projection.
    pub control_norm: f64,
    /// ESS fell below the sampler's minimum at this step.
    pub degenerate: bool,
    pub inert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: Vec<f64>,
    /// Composed control applied over `[t, t + Δt)`; zero on the last record.
    pub control: Vec<f64>,
    pub tasks: Vec<TaskRecord>,
    pub pi: Option<PiDiagnostics>,
    /// `max |Λ_1 u − command_1|` when the top task is active.
    pub top_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    /// Goal distance of the agents' mean position at `T`.
    pub final_goal_distance: f64,
    /// `min_t min_i ‖p_i − c‖`.
    pub min_obstacle_distance: f64,
    pub penetrated: bool,
    /// Strict sign changes of the goal-distance increments over the last
    /// 20% of the episode.
    pub oscillation_sign_changes: usize,
    pub oscillating: bool,
    /// Time average of `|‖p_1 − p_2‖ − l|`, two-agent runs only.
    pub mean_spacing_error: Option<f64>,
    pub degenerate_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub agents: usize,
    pub task_names: Vec<String>,
    /// Rows driven per agent for each task (`true` for the obstacle task).
    pub per_agent_rows: Vec<bool>,
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
    /// Number of sampler invocations; zero in pd-only mode.
    pub sampler_calls: usize,
}

impl TrajectoryLog {
    pub fn goal_distances(&self, goal: [f64; 2]) -> Vec<f64> {
        self.records.iter().map(|r| centroid_distance(&r.state, self.agents, goal)).collect()
    }

    pub fn spacings(&self) -> Option<Vec<f64>> {
        (self.agents == 2).then(|| self.records.iter().map(|r| spacing(&r.state)).collect())
    }
}

/// Sign changes needed to call a distance signal oscillating.
pub const OSCILLATION_MIN_CHANGES: usize = 3;

/// Strict sign changes of the increments of the last `fraction` of `series`.
/// Zero increments are skipped.
pub fn sign_changes_tail(series: &[f64], fraction: f64) -> usize {
    let n = series.len();
    let tail = ((n as f64) * fraction).round() as usize;
    let start = n.saturating_sub(tail.max(2));
    let mut last = 0.0_f64;
    let mut changes = 0;
    for w in series[start..].windows(2) {
        let d = w[1] - w[0];
        if d == 0.0 {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            changes += 1;
        }
        last = d;
    }
    changes
}

pub fn centroid_distance(state: &[f64], agents: usize, goal: [f64; 2]) -> f64 {
    let w = 1.0 / agents as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..agents {
        cx += w * state[STATE_PER_AGENT * i];
        cy += w * state[STATE_PER_AGENT * i + 1];
    }
    (cx - goal[0]).hypot(cy - goal[1])
}

pub fn spacing(state: &[f64]) -> f64 {
    (state[0] - state[STATE_PER_AGENT]).hypot(state[1] - state[STATE_PER_AGENT + 1])
}

fn task_records(eval: &HierarchyEval, t: f64, tasks: &[TaskSpec], pi: Option<&DVector<f64>>) -> Vec<TaskRecord> {
    eval.levels
        .iter()
        .zip(tasks)
        .map(|(level, task)| {
            let uk = match (&level.control, pi) {
                (Some(u), _) => Some(u),
                (None, Some(p)) if level.pi_slot => Some(p),
                _ => None,
            };
            let contribution = match uk {
                Some(u) => (&level.projector * u).iter().copied().collect(),
                None => vec![0.0; level.projector.nrows()],
            };
            let desired = task.desired.at(t).value;
            TaskRecord {
                active: level.eval.active.clone(),
                sigma: level.eval.sigma.iter().copied().collect(),
                error: (desired - &level.eval.sigma).iter().copied().collect(),
                contribution,
            }
        })
        .collect()
}

/// Runs one episode of `scn` in `mode`. The plant is integrated without
/// noise; the sampler's rollouts at step `k` use seed `derive_seed(seed, k)`.
pub fn run_episode(scn: &Scenario, mode: Mode, seed: u64) -> Result<TrajectoryLog, HarnessError> {
    scn.validate()?;
    let model = scn.fleet();
    let hierarchy = scn.hierarchy(mode)?;
    let pi_index = match mode {
        Mode::PdOnly => None,
        Mode::Hybrid => hierarchy.pi_index(),
    };
    let params = scn.pi_params()?;
    let cost = scn.pi_cost();
    let eff = match pi_index {
        Some(k) => Some(effective_dynamics(&model, &hierarchy, k)?),
        None => None,
    };
    let p = DynamicsModel::control_dim(&model);
    let agents = scn.agents();
    let goal = scn.goal_point();
    let obstacle = scn.obstacle_spec()?;
    let n = scn.steps();

    let mut x = DVector::from_vec(scn.x0.clone());
    let mut records = Vec::with_capacity(n + 1);
    let mut sampler_calls = 0;
    for k in 0..=n {
        let t = k as f64 * scn.dt;
        let eval = hierarchy.evaluate(&x, t, p);
        if k == n {
            records.push(StepRecord {
                t,
                state: x.iter().copied().collect(),
                control: vec![0.0; p],
                tasks: task_records(&eval, t, &hierarchy.tasks, None),
                pi: None,
                top_residual: None,
            });
            break;
        }
        let estimate: Option<ControlEstimate> = match &eff {
            Some(sys) => {
                sampler_calls += 1;
                let est = pi_controller_step(sys, &x, t, &params, &cost, derive_seed(seed, k as u64))
                    .map_err(|e| e.at_step(k, t))?;
                Some(est)
            }
            None => None,
        };
        let pi_control = estimate.as_ref().map(|e| &e.control);
        let u = eval.compose(pi_control);
        let top_residual = eval.levels[0]
            .lin
            .as_ref()
            .map(|lin| (&lin.input_map * &u - &lin.command).amax());
        let pi = estimate.as_ref().map(|e| {
            if e.ess < params.min_ess() {
                log::debug!("step {k}: effective sample size {:.3} below {}", e.ess, params.min_ess());
            }
            PiDiagnostics {
                ess: e.ess,
                weight_entropy: e.weight_entropy,
                min_cost: e.min_cost,
                mean_cost: e.mean_cost,
                control_norm: e.control.norm(),
                degenerate: e.ess < params.min_ess(),
                inert: e.inert,
            }
        });
        records.push(StepRecord {
            t,
            state: x.iter().copied().collect(),
            control: u.iter().copied().collect(),
            tasks: task_records(&eval, t, &hierarchy.tasks, pi_control),
            pi,
            top_residual,
        });
        x = step_deterministic(&model, &x, &u, scn.dt).map_err(|e| e.at_step(k, t))?;
    }

    let distances: Vec<f64> = records.iter().map(|r| centroid_distance(&r.state, agents, goal)).collect();
    let min_obstacle_distance = records
        .iter()
        .flat_map(|r| (0..agents).map(move |i| obstacle.center_distance(r.state[STATE_PER_AGENT * i], r.state[STATE_PER_AGENT * i + 1])))
        .fold(f64::INFINITY, f64::min);
    let changes = sign_changes_tail(&distances, 0.2);
    let mean_spacing_error = match (agents, scn.spacing_l) {
        (2, Some(l)) => {
            Some(records.iter().map(|r| (spacing(&r.state) - l).abs()).sum::<f64>() / records.len() as f64)
        }
        _ => None,
    };
    let summary = EpisodeSummary {
        final_goal_distance: *distances.last().expect("at least one record"),
        min_obstacle_distance,
        penetrated: min_obstacle_distance < obstacle.radius,
        oscillation_sign_changes: changes,
        oscillating: changes >= OSCILLATION_MIN_CHANGES,
        mean_spacing_error,
        degenerate_steps: records.iter().filter(|r| r.pi.as_ref().is_some_and(|d| d.degenerate)).count(),
    };
    Ok(TrajectoryLog {
        scenario: scn.name.clone(),
        mode,
        seed,
        agents,
        task_names: hierarchy.tasks.iter().map(|t| t.name.clone()).collect(),
        per_agent_rows: hierarchy
            .tasks
            .iter()
            .map(|t| matches!(t.kind, TaskKind::Obstacle { .. }))
            .collect(),
        records,
        summary,
        sampler_calls,
    })
}
