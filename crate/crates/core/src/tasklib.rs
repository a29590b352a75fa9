//! Task definitions for unicycle fleets and the closed-loop PD task law.
//!
//! A task is a map `σ = h(q)` of the agents' positions. For a fleet of
//! unicycles with state `(p_x, p_y, s, θ)` per agent and control `(a, ω)` per
//! agent, every task here satisfies `σ̈ = δ(x) + Λ(x) u`, which is what the
//! PD law inverts.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hiercore::{right_pseudoinverse, RANK_RTOL};

pub const STATE_PER_AGENT: usize = 4;
pub const CONTROL_PER_AGENT: usize = 2;
pub const CONFIG_PER_AGENT: usize = 3;

/// Read-only view of one agent's slice of the state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub px: f64,
    pub py: f64,
    pub s: f64,
    pub theta: f64,
}

impl Agent {
    #[inline]
    pub fn of(x: &DVector<f64>, i: usize) -> Self {
        let o = i * STATE_PER_AGENT;
        Agent {
            px: x[o],
            py: x[o + 1],
            s: x[o + 2],
            theta: x[o + 3],
        }
    }

    #[inline]
    pub fn velocity(&self) -> [f64; 2] {
        let (sin, cos) = self.theta.sin_cos();
        [self.s * cos, self.s * sin]
    }
}

/// Proportional and derivative gains, diagonal. A single entry is broadcast
/// to every task dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    kp: Vec<f64>,
    kd: Vec<f64>,
}

impl Gains {
    pub fn uniform(kp: f64, kd: f64) -> Result<Self> {
        Self::diagonal(vec![kp], vec![kd])
    }

    pub fn diagonal(kp: Vec<f64>, kd: Vec<f64>) -> Result<Self> {
        if kp.is_empty() || kd.is_empty() {
            return Err(Error::InvalidArgument("gains must not be empty".into()));
        }
        if kp.iter().chain(&kd).any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument("gains must be finite and nonnegative".into()));
        }
        Ok(Self { kp, kd })
    }

    pub fn kp(&self, i: usize) -> f64 {
        self.kp[i.min(self.kp.len() - 1)]
    }

    pub fn kd(&self, i: usize) -> f64 {
        self.kd[i.min(self.kd.len() - 1)]
    }
}

/// Circular obstacle with the distance below which its avoidance task may
/// engage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub threshold: f64,
}

impl ObstacleSpec {
    pub fn new(center: [f64; 2], radius: f64, threshold: f64) -> Result<Self> {
        if !(radius > 0.0) || !(threshold > radius) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "obstacle needs threshold > radius > 0, got radius {radius}, threshold {threshold}"
            )));
        }
        Ok(Self {
            center,
            radius,
            threshold,
        })
    }

    pub fn center_distance(&self, px: f64, py: f64) -> f64 {
        (px - self.center[0]).hypot(py - self.center[1])
    }
}

/// Desired task value and its first two time derivatives at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredSample {
    pub value: DVector<f64>,
    pub rate: DVector<f64>,
    pub accel: DVector<f64>,
}

pub type TrajectoryFn = Arc<dyn Fn(f64) -> DesiredSample + Send + Sync>;

#[derive(Clone)]
pub enum Desired {
    /// Set-point; its rate and acceleration are zero.
    Constant(DVector<f64>),
    Trajectory(TrajectoryFn),
}

impl Desired {
    pub fn at(&self, t: f64) -> DesiredSample {
        match self {
            Desired::Constant(v) => DesiredSample {
                value: v.clone(),
                rate: DVector::zeros(v.len()),
                accel: DVector::zeros(v.len()),
            },
            Desired::Trajectory(f) => f(t),
        }
    }
}

impl fmt::Debug for Desired {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Desired::Constant(v) => f.debug_tuple("Constant").field(&v.as_slice()).finish(),
            Desired::Trajectory(_) => f.write_str("Trajectory(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskKind {
    /// `σ_i = ‖p_i − c‖` for every agent, one row per agent. A row engages
    /// only inside the threshold distance while closing in on the obstacle.
    Obstacle { obstacle: ObstacleSpec, agents: usize },
    /// `σ = mean of the agents' positions`; with one agent this is the
    /// move-to-goal task.
    Centroid { agents: usize },
    /// `σ = ½‖p_1 − p_2‖²`.
    Spacing,
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub desired: Desired,
    pub gains: Gains,
}

/// Task quantities at one state. `active[i]` flags whether row `i` takes part
/// in control at this state.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEval {
    pub sigma: DVector<f64>,
    pub sigma_dot: DVector<f64>,
    pub input_map: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub active: Vec<bool>,
}

impl TaskEval {
    pub fn any_active(&self) -> bool {
        self.active.iter().any(|&a| a)
    }

    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }
}

/// Active part of a task linearized at one state: `Λ`, `Λ†` and the
/// commanded task acceleration minus drift, restricted to active rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub rows: Vec<usize>,
    pub input_map: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    pub command: DVector<f64>,
}

impl Linearization {
    /// `Λ† (σ̈_d + K_p σ̃ + K_d σ̃̇ − δ)`.
    pub fn control(&self) -> DVector<f64> {
        &self.pinv * &self.command
    }

    /// `I − Λ†Λ`.
    pub fn projector(&self) -> DMatrix<f64> {
        let p = self.input_map.ncols();
        DMatrix::identity(p, p) - &self.pinv * &self.input_map
    }
}

pub fn make_obstacle_task_single(obstacle: ObstacleSpec, gains: Gains) -> TaskSpec {
    make_obstacle_task(obstacle, gains, 1)
}

pub fn make_obstacle_task_pair(obstacle: ObstacleSpec, gains: Gains) -> TaskSpec {
    make_obstacle_task(obstacle, gains, 2)
}

fn make_obstacle_task(obstacle: ObstacleSpec, gains: Gains, agents: usize) -> TaskSpec {
    TaskSpec {
        name: "obstacle".into(),
        kind: TaskKind::Obstacle { obstacle, agents },
        desired: Desired::Constant(DVector::from_element(agents, obstacle.radius)),
        gains,
    }
}

pub fn make_goal_task_single(goal: [f64; 2], gains: Gains) -> TaskSpec {
    TaskSpec {
        name: "goal".into(),
        kind: TaskKind::Centroid { agents: 1 },
        desired: Desired::Constant(DVector::from_row_slice(&goal)),
        gains,
    }
}

pub fn make_centroid_task(goal: [f64; 2], gains: Gains) -> TaskSpec {
    TaskSpec {
        name: "centroid".into(),
        kind: TaskKind::Centroid { agents: 2 },
        desired: Desired::Constant(DVector::from_row_slice(&goal)),
        gains,
    }
}

pub fn make_distance_task(spacing: f64, gains: Gains) -> Result<TaskSpec> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing must be positive, got {spacing}")));
    }
    Ok(TaskSpec {
        name: "spacing".into(),
        kind: TaskKind::Spacing,
        desired: Desired::Constant(DVector::from_element(1, 0.5 * spacing * spacing)),
        gains,
    })
}

impl TaskSpec {
    pub fn dim(&self) -> usize {
        match self.kind {
            TaskKind::Obstacle { agents, .. } => agents,
            TaskKind::Centroid { .. } => 2,
            TaskKind::Spacing => 1,
        }
    }

    pub fn agents(&self) -> usize {
        match self.kind {
            TaskKind::Obstacle { agents, .. } | TaskKind::Centroid { agents } => agents,
            TaskKind::Spacing => 2,
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> TaskEval {
        match self.kind {
            TaskKind::Obstacle { obstacle, agents } => obstacle_eval(&obstacle, agents, x),
            TaskKind::Centroid { agents } => centroid_eval(agents, x),
            TaskKind::Spacing => spacing_eval(x),
        }
    }

    /// Jacobian of `σ` with respect to the configuration `(p_x, p_y, θ)` of
    /// every agent.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            TaskKind::Obstacle { obstacle, agents } => {
                let mut j = DMatrix::zeros(agents, CONFIG_PER_AGENT * agents);
                for i in 0..agents {
                    let a = Agent::of(x, i);
                    let dx = a.px - obstacle.center[0];
                    let dy = a.py - obstacle.center[1];
                    let n = dx.hypot(dy);
                    j[(i, CONFIG_PER_AGENT * i)] = dx / n;
                    j[(i, CONFIG_PER_AGENT * i + 1)] = dy / n;
                }
                j
            }
            TaskKind::Centroid { agents } => {
                let mut j = DMatrix::zeros(2, CONFIG_PER_AGENT * agents);
                let w = 1.0 / agents as f64;
                for i in 0..agents {
                    j[(0, CONFIG_PER_AGENT * i)] = w;
                    j[(1, CONFIG_PER_AGENT * i + 1)] = w;
                }
                j
            }
            TaskKind::Spacing => {
                let a = Agent::of(x, 0);
                let b = Agent::of(x, 1);
                let dx = a.px - b.px;
                let dy = a.py - b.py;
                DMatrix::from_row_slice(1, 6, &[dx, dy, 0.0, -dx, -dy, 0.0])
            }
        }
    }

    /// Linearizes the active rows at `x` and forms the PD command. Returns
    /// `Ok(None)` when no row is active.
    pub fn linearize(&self, x: &DVector<f64>, t: f64) -> Result<Option<Linearization>> {
        let eval = self.evaluate(x);
        self.linearize_eval(&eval, t)
    }

    pub fn linearize_eval(&self, eval: &TaskEval, t: f64) -> Result<Option<Linearization>> {
        let rows = eval.active_rows();
        if rows.is_empty() {
            return Ok(None);
        }
        let desired = self.desired.at(t);
        let p = eval.input_map.ncols();
        let mut map = DMatrix::zeros(rows.len(), p);
        let mut command = DVector::zeros(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            map.row_mut(r).copy_from(&eval.input_map.row(i));
            let err = desired.value[i] - eval.sigma[i];
            let err_rate = desired.rate[i] - eval.sigma_dot[i];
            command[r] = desired.accel[i] + self.gains.kp(i) * err + self.gains.kd(i) * err_rate
                - eval.drift[i];
        }
        let pinv = right_pseudoinverse(&map, RANK_RTOL)?;
        Ok(Some(Linearization {
            rows,
            input_map: map,
            pinv,
            command,
        }))
    }

    /// Task error `σ_d − σ`.
    pub fn error(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        self.desired.at(t).value - self.evaluate(x).sigma
    }
}

/// Closed-loop inverse-kinematics law
/// `u_k = Λ†(σ̈_d + K_p σ̃ + K_d σ̃̇ − δ)` over the task's active rows.
pub fn pd_task_control(task: &TaskSpec, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    match task.linearize(x, t)? {
        Some(lin) => Ok(lin.control()),
        None => Err(Error::Inactive(task.name.clone())),
    }
}

fn obstacle_eval(obstacle: &ObstacleSpec, agents: usize, x: &DVector<f64>) -> TaskEval {
    let p = CONTROL_PER_AGENT * agents;
    let mut sigma = DVector::zeros(agents);
    let mut sigma_dot = DVector::zeros(agents);
    let mut drift = DVector::zeros(agents);
    let mut input_map = DMatrix::zeros(agents, p);
    let mut active = vec![false; agents];
    for i in 0..agents {
        let a = Agent::of(x, i);
        let dx = a.px - obstacle.center[0];
        let dy = a.py - obstacle.center[1];
        let n = dx.hypot(dy);
        let (sin, cos) = a.theta.sin_cos();
        // Unit vectors along and across the heading, projected on p − c.
        let along = (dx * cos + dy * sin) / n;
        let across = (dy * cos - dx * sin) / n;
        sigma[i] = n;
        sigma_dot[i] = a.s * along;
        // d²‖p−c‖/dt² = (‖v‖² − (σ̇)²)/‖p−c‖ + (p−c)ᵀ v̇ / ‖p−c‖
        drift[i] = a.s * a.s * across * across / n;
        input_map[(i, CONTROL_PER_AGENT * i)] = along;
        input_map[(i, CONTROL_PER_AGENT * i + 1)] = a.s * across;
        active[i] = n < obstacle.threshold && sigma_dot[i] < 0.0;
    }
    TaskEval {
        sigma,
        sigma_dot,
        input_map,
        drift,
        active,
    }
}

fn centroid_eval(agents: usize, x: &DVector<f64>) -> TaskEval {
    let w = 1.0 / agents as f64;
    let mut sigma = DVector::zeros(2);
    let mut sigma_dot = DVector::zeros(2);
    let mut input_map = DMatrix::zeros(2, CONTROL_PER_AGENT * agents);
    for i in 0..agents {
        let a = Agent::of(x, i);
        let (sin, cos) = a.theta.sin_cos();
        sigma[0] += w * a.px;
        sigma[1] += w * a.py;
        sigma_dot[0] += w * a.s * cos;
        sigma_dot[1] += w * a.s * sin;
        let c = CONTROL_PER_AGENT * i;
        input_map[(0, c)] = w * cos;
        input_map[(0, c + 1)] = -w * a.s * sin;
        input_map[(1, c)] = w * sin;
        input_map[(1, c + 1)] = w * a.s * cos;
    }
    TaskEval {
        sigma,
        sigma_dot,
        input_map,
        drift: DVector::zeros(2),
        active: vec![true; 2],
    }
}

fn spacing_eval(x: &DVector<f64>) -> TaskEval {
    let a = Agent::of(x, 0);
    let b = Agent::of(x, 1);
    let dx = a.px - b.px;
    let dy = a.py - b.py;
    let (sa, ca) = a.theta.sin_cos();
    let (sb, cb) = b.theta.sin_cos();
    let dvx = a.s * ca - b.s * cb;
    let dvy = a.s * sa - b.s * sb;
    let sigma = 0.5 * (dx * dx + dy * dy);
    let sigma_dot = dx * dvx + dy * dvy;
    let drift = a.s * a.s - 2.0 * a.s * b.s * (ca * cb + sa * sb) + b.s * b.s;
    let input_map = DMatrix::from_row_slice(
        1,
        4,
        &[
            dx * ca + dy * sa,
            a.s * (dy * ca - dx * sa),
            -(dx * cb + dy * sb),
            b.s * (dx * sb - dy * cb),
        ],
    );
    TaskEval {
        sigma: DVector::from_element(1, sigma),
        sigma_dot: DVector::from_element(1, sigma_dot),
        input_map,
        drift: DVector::from_element(1, drift),
        active: vec![true],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hiercore::max_abs;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn state(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn gains() -> Gains {
        Gains::uniform(4.0, 4.0).unwrap()
    }

    fn obstacle() -> ObstacleSpec {
        ObstacleSpec::new([0.0, 0.0], 0.5, 1.0).unwrap()
    }

    #[test]
    fn obstacle_spec_validation() {
        assert!(ObstacleSpec::new([0.0, 0.0], 0.5, 0.5).is_err());
        assert!(ObstacleSpec::new([0.0, 0.0], 0.0, 1.0).is_err());
        assert!(ObstacleSpec::new([f64::NAN, 0.0], 0.5, 1.0).is_err());
    }

    #[test]
    fn gains_validation() {
        assert!(Gains::uniform(-1.0, 0.0).is_err());
        assert!(Gains::uniform(1.0, f64::NAN).is_err());
        let g = Gains::diagonal(vec![1.0, 2.0], vec![3.0]).unwrap();
        assert_eq!((g.kp(1), g.kd(1)), (2.0, 3.0));
    }

    #[test]
    fn obstacle_distance_is_euclidean() {
        let task = make_obstacle_task_single(obstacle(), gains());
        let e = task.evaluate(&state(&[3.0, 4.0, 1.0, 0.0]));
        assert_eq!(e.sigma[0], 5.0);
    }

    #[test]
    fn obstacle_error_vanishes_on_surface() {
        let task = make_obstacle_task_single(obstacle(), gains());
        let err = task.error(&state(&[0.3, 0.4, 1.0, 0.0]), 0.0);
        assert!(err[0].abs() < 1e-15);
    }

    #[test]
    fn obstacle_activation_boundary() {
        let task = make_obstacle_task_single(obstacle(), gains());
        // Heading toward the center from inside the threshold.
        assert!(task.evaluate(&state(&[-0.9, 0.0, 1.0, 0.0])).active[0]);
        // Moving away.
        assert!(!task.evaluate(&state(&[-0.9, 0.0, 1.0, PI])).active[0]);
        // Exactly at threshold: strict inequality.
        assert!(!task.evaluate(&state(&[-1.0, 0.0, 1.0, 0.0])).active[0]);
        // Tangential motion: range rate zero.
        assert!(!task.evaluate(&state(&[0.0, -0.9, 1.0, 0.0])).active[0]);
        // Outside threshold.
        assert!(!task.evaluate(&state(&[-1.5, 0.0, 1.0, 0.0])).active[0]);
    }

    #[test]
    fn obstacle_control_satisfies_commanded_acceleration() {
        let obs = ObstacleSpec::new([0.0, 0.0], 1.0, 3.0).unwrap();
        let task = make_obstacle_task_single(obs, Gains::uniform(1.0, 0.0).unwrap());
        let x = state(&[2.0, 0.0, 1.0, PI]);
        let eval = task.evaluate(&x);
        // Head-on approach: no curvature term, acceleration maps straight in.
        assert!(eval.drift[0].abs() < 1e-15);
        assert!((eval.input_map[(0, 0)] + 1.0).abs() < 1e-15);
        let u = pd_task_control(&task, &x, 0.0).unwrap();
        let err = 1.0 - eval.sigma[0];
        let achieved = (&eval.input_map * &u)[0] + eval.drift[0];
        assert!((achieved - err).abs() < 1e-9);
    }

    #[test]
    fn pd_control_is_zero_at_target() {
        let task = make_goal_task_single([1.0, 2.0], gains());
        let u = pd_task_control(&task, &state(&[1.0, 2.0, 1e-16, 0.3]), 0.0);
        // Zero speed makes the map singular.
        assert!(matches!(u, Err(Error::RankDeficient { .. })));
        // Track a set-point that moves with the agent: zero error and rate.
        let mut task = make_goal_task_single([0.0, 0.0], gains());
        task.desired = Desired::Trajectory(Arc::new(|t| DesiredSample {
            value: DVector::from_vec(vec![1.0 + t, 2.0]),
            rate: DVector::from_vec(vec![1.0, 0.0]),
            accel: DVector::zeros(2),
        }));
        let u = pd_task_control(&task, &state(&[1.0, 2.0, 1.0, 0.0]), 0.0).unwrap();
        assert!(u.amax() < 1e-15);
    }

    #[test]
    fn goal_map_reduces_to_identity_heading_east() {
        let task = make_goal_task_single([3.0, 0.0], gains());
        let x = state(&[0.5, -0.25, 1.0, 0.0]);
        let e = task.evaluate(&x);
        assert_eq!(e.input_map, DMatrix::identity(2, 2));
        let u = pd_task_control(&task, &x, 0.0).unwrap();
        // K_p σ̃ + K_d σ̃̇ with σ̃ = (2.5, 0.25), σ̃̇ = (−1, 0).
        let want = DVector::from_vec(vec![4.0 * 2.5 - 4.0, 4.0 * 0.25]);
        assert!((u - want).amax() < 1e-12);
    }

    #[test]
    fn goal_map_at_quarter_turn() {
        let task = make_goal_task_single([3.0, 0.0], gains());
        let e = task.evaluate(&state(&[0.0, 0.0, 2.0, FRAC_PI_2]));
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 1.0, 0.0]);
        assert!(max_abs(&(e.input_map - want)) < 1e-15);
    }

    #[test]
    fn goal_map_singular_at_rest() {
        let task = make_goal_task_single([3.0, 0.0], gains());
        assert!(matches!(
            pd_task_control(&task, &state(&[0.0, 0.0, 0.0, 0.4]), 0.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn pair_obstacle_values_and_omission() {
        let task = make_obstacle_task_pair(obstacle(), gains());
        let x = state(&[3.0, 4.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0]);
        let e = task.evaluate(&x);
        assert_eq!(e.sigma.as_slice(), &[5.0, 2.0]);
        assert!(!e.any_active());
        assert!(matches!(pd_task_control(&task, &x, 0.0), Err(Error::Inactive(_))));
    }

    #[test]
    fn pair_obstacle_block_inverse() {
        let task = make_obstacle_task_pair(obstacle(), gains());
        // Both agents inside the threshold and closing in.
        let x = state(&[-0.8, 0.1, 0.7, 0.2, 0.1, -0.75, 1.3, 1.4]);
        let e = task.evaluate(&x);
        assert_eq!(e.active, vec![true, true]);
        let lin = task.linearize_eval(&e, 0.0).unwrap().unwrap();
        let mut block = DMatrix::zeros(4, 2);
        for i in 0..2 {
            let row = e.input_map.view((i, 2 * i), (1, 2)).into_owned();
            let p = right_pseudoinverse(&row, RANK_RTOL).unwrap();
            block.view_mut((2 * i, i), (2, 1)).copy_from(&p);
        }
        assert!(max_abs(&(lin.pinv - block)) < 1e-12);
    }

    #[test]
    fn pair_obstacle_rows_are_independent() {
        let task = make_obstacle_task_pair(obstacle(), gains());
        let x1 = state(&[-0.8, 0.1, 0.7, 0.2, 0.1, -0.75, 1.3, 1.4]);
        let x2 = state(&[-0.8, 0.1, 0.7, 0.2, 0.2, -0.85, 1.1, 1.6]);
        let u1 = pd_task_control(&task, &x1, 0.0).unwrap();
        let u2 = pd_task_control(&task, &x2, 0.0).unwrap();
        assert_eq!(u1.rows(0, 2), u2.rows(0, 2));
        assert_ne!(u1.rows(2, 2), u2.rows(2, 2));
    }

    #[test]
    fn centroid_values() {
        let task = make_centroid_task([3.0, 0.0], gains());
        let e = task.evaluate(&state(&[0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0]));
        assert_eq!(e.sigma.as_slice(), &[1.0, 0.0]);
        let want = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]) * 0.5;
        assert_eq!(e.input_map, want);
    }

    #[test]
    fn spacing_values() {
        let task = make_distance_task(0.5, gains()).unwrap();
        let e = task.evaluate(&state(&[0.0, 0.0, 1.0, 0.2, 0.5, 0.0, 1.0, 0.2]));
        assert_eq!(e.sigma[0], 0.125);
        assert!(task.error(&state(&[0.0, 0.0, 1.0, 0.2, 0.5, 0.0, 1.0, 0.2]), 0.0)[0].abs() < 1e-15);
        // Equal velocity vectors: no relative curvature.
        assert!(e.drift[0].abs() < 1e-15);
        assert!(make_distance_task(0.0, gains()).is_err());
    }

    #[test]
    fn spacing_singular_when_coincident() {
        let task = make_distance_task(0.5, gains()).unwrap();
        let x = state(&[1.0, 1.0, 1.0, 0.3, 1.0, 1.0, 1.0, 0.3]);
        assert!(matches!(
            pd_task_control(&task, &x, 0.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn activation_is_bitwise_reproducible() {
        let task = make_obstacle_task_single(obstacle(), gains());
        let x = state(&[-0.7, 0.05, 0.9, 0.1]);
        let a = task.evaluate(&x);
        let b = task.evaluate(&x.clone());
        assert_eq!(a, b);
    }
}
