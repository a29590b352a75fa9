//! Independent reference computations: the scalar Riccati solution for the
//! linear-quadratic instance and finite-difference checks of task
//! derivatives.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dynsim::{unicycle_model, two_unicycle_model, DynamicsModel};
use crate::error::{Error, Result};
use crate::parallel::sample_rng;
use crate::picore::{pi_controller_step, PathIntegralParams, QuadraticCost};
use crate::tasklib::{
    make_centroid_task, make_distance_task, make_goal_task_single, make_obstacle_task_pair,
    make_obstacle_task_single, Gains, ObstacleSpec, TaskSpec, CONFIG_PER_AGENT, STATE_PER_AGENT,
};

/// `dx = u dt + ŝ dw` with cost `∫ ½ q x² + ½ α u² dt + ½ q_f x(T)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLq {
    pub q: f64,
    pub q_final: f64,
    pub alpha: f64,
}

impl ScalarLq {
    /// `P(t0)` from `−Ṗ = q − P²/α`, `P(T) = q_f`, integrated backward over
    /// `horizon = T − t0` with classical RK4.
    pub fn riccati(&self, horizon: f64, steps: usize) -> f64 {
        let rhs = |p: f64| self.q - p * p / self.alpha;
        let h = horizon / steps as f64;
        let mut p = self.q_final;
        for _ in 0..steps {
            let k1 = rhs(p);
            let k2 = rhs(p + 0.5 * h * k1);
            let k3 = rhs(p + 0.5 * h * k2);
            let k4 = rhs(p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        p
    }

    /// Optimal feedback `−P(t0) x / α`.
    pub fn feedback(&self, x: f64, horizon: f64) -> f64 {
        -self.riccati(horizon, 10_000) * x / self.alpha
    }
}

/// `dx = ũ dt` in one dimension; the sampler adds `ŝ dw`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarIntegrator;

impl DynamicsModel for ScalarIntegrator {
    fn state_dim(&self) -> usize {
        1
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn drift(&self, _: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn input_map(&self, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }

    fn noise_rows(&self) -> &[usize] {
        &[0]
    }
}

/// The linear-quadratic test problem: cost, noise level, step and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqInstance {
    pub lq: ScalarLq,
    pub s_hat: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for LqInstance {
    fn default() -> Self {
        Self {
            lq: ScalarLq {
                q: 1.0,
                q_final: 2.0,
                alpha: 1.0,
            },
            s_hat: 1.0,
            dt: 0.01,
            horizon: 0.5,
        }
    }
}

/// Test states for the linear-quadratic comparison.
pub const LQ_STATES: [f64; 5] = [-1.0, -0.5, 0.3, 0.7, 1.2];

impl LqInstance {
    pub fn params(&self, samples: usize) -> Result<PathIntegralParams> {
        PathIntegralParams::new(self.s_hat, self.lq.alpha, samples, self.dt, self.horizon)
    }

    pub fn reference(&self, x: f64) -> f64 {
        self.lq.feedback(x, self.horizon)
    }

    /// Sampled estimate at `x` (time 0) for one seed.
    pub fn estimate(&self, x: f64, samples: usize, seed: u64) -> Result<f64> {
        let params = self.params(samples)?;
        let cost = QuadraticCost {
            q: self.lq.q,
            q_final: self.lq.q_final,
        };
        let x0 = DVector::from_element(1, x);
        Ok(pi_controller_step(&ScalarIntegrator, &x0, 0.0, &params, &cost, seed)?.control[0])
    }
}

/// Relative error with a unit floor on the reference magnitude.
pub fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / exact.abs().max(1.0)
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

/// Errors of one task's analytic derivatives at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdErrors {
    /// `J` vs central differences of `σ` in the configuration.
    pub jacobian: f64,
    /// `σ̇` vs `J q̇`.
    pub rate: f64,
    /// `δ` vs the forward difference of `σ̇` along an uncontrolled step.
    pub drift: f64,
    /// `Λ` vs forward differences of `σ̇` along unit-input steps, less the
    /// uncontrolled one.
    pub input_map: f64,
}

impl FdErrors {
    pub fn max(&self) -> f64 {
        self.jacobian.max(self.rate).max(self.drift).max(self.input_map)
    }

    /// Errors of the one-step rollout check, which converge at first order.
    pub fn rollout(&self) -> f64 {
        self.drift.max(self.input_map)
    }
}

fn config_index(c: usize) -> usize {
    (c / CONFIG_PER_AGENT) * STATE_PER_AGENT
        + match c % CONFIG_PER_AGENT {
            0 => 0,
            1 => 1,
            _ => 3,
        }
}

/// Checks `(J, σ̇, δ, Λ)` of `task` at `x` against finite differences of
/// step `h`, the dynamics given by `model`.
pub fn fd_check<M: DynamicsModel + ?Sized>(
    task: &TaskSpec,
    model: &M,
    x: &DVector<f64>,
    h: f64,
) -> Result<FdErrors> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let eval = task.evaluate(x);
    let j = task.jacobian(x);
    let nq = j.ncols();

    let mut j_fd = DMatrix::zeros(j.nrows(), nq);
    for c in 0..nq {
        let i = config_index(c);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let d = (task.evaluate(&xp).sigma - task.evaluate(&xm).sigma) / (2.0 * h);
        j_fd.set_column(c, &d);
    }

    let f = model.drift(x);
    let qdot = DVector::from_fn(nq, |c, _| f[config_index(c)]);
    let rate_ref = &j * qdot;
    let rate = eval
        .sigma_dot
        .iter()
        .zip(rate_ref.iter())
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max);

    let g = model.input_map(x);
    let p = g.ncols();
    let sigma_dot_after = |u: &DVector<f64>| {
        let x1 = x + (&f + &g * u) * h;
        task.evaluate(&x1).sigma_dot
    };
    let base = (sigma_dot_after(&DVector::zeros(p)) - &eval.sigma_dot) / h;
    let mut lambda_fd = DMatrix::zeros(eval.input_map.nrows(), p);
    for c in 0..p {
        let mut u = DVector::zeros(p);
        u[c] = 1.0;
        let col = (sigma_dot_after(&u) - &eval.sigma_dot) / h - &base;
        lambda_fd.set_column(c, &col);
    }
    let drift = base
        .iter()
        .zip(eval.drift.iter())
        .map(|(a, b)| rel_err(*a, *b))
        .fold(0.0, f64::max);

    Ok(FdErrors {
        jacobian: max_rel(&j_fd, &j),
        rate,
        drift,
        input_map: max_rel(&lambda_fd, &eval.input_map),
    })
}

/// The five shipped task types with the default obstacle and goal.
pub fn fd_tasks() -> Vec<TaskSpec> {
    let obstacle = ObstacleSpec::new([0.0, 0.0], 0.5, 1.0).expect("valid obstacle");
    let g = Gains::uniform(4.0, 4.0).expect("valid gains");
    vec![
        make_obstacle_task_single(obstacle, g.clone()),
        make_goal_task_single([3.0, 0.0], g.clone()),
        make_obstacle_task_pair(obstacle, g.clone()),
        make_centroid_task([3.0, 0.0], g.clone()),
        make_distance_task(0.5, g).expect("valid spacing"),
    ]
}

/// Random state for `agents` unicycles: positions in `[−3, 3]²` at least
/// 0.2 from the origin and from each other, speeds in `[0.1, 2]`, headings
/// in `[−π, π)`.
pub fn random_state<R: Rng>(rng: &mut R, agents: usize) -> DVector<f64> {
    let mut x = DVector::zeros(STATE_PER_AGENT * agents);
    for i in 0..agents {
        let b = STATE_PER_AGENT * i;
        loop {
            let px = rng.random_range(-3.0..3.0);
            let py = rng.random_range(-3.0..3.0);
            let far_from_center = f64::hypot(px, py) >= 0.2;
            let far_from_others = (0..i).all(|j| {
                let o = STATE_PER_AGENT * j;
                f64::hypot(px - x[o], py - x[o + 1]) >= 0.2
            });
            if far_from_center && far_from_others {
                x[b] = px;
                x[b + 1] = py;
                break;
            }
        }
        x[b + 2] = rng.random_range(0.1..2.0);
        x[b + 3] = rng.random_range(-PI..PI);
    }
    x
}

/// Finite-difference results for one task over many states.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSummary {
    pub task: String,
    pub states: usize,
    /// Largest error of any checked quantity at step `h`.
    pub max_err: f64,
    /// Summed rollout-check errors at `h` over those at `h/2`. `None` when
    /// the errors at `h` are at roundoff level, as for maps that are exact
    /// under one Euler step.
    pub ratio: Option<f64>,
}

/// Below this summed error the rollout check is treated as exact.
pub const FD_EXACT_LEVEL: f64 = 1e-9;

/// Runs [`fd_check`] for every shipped task at `states` random states.
pub fn fd_suite(states: usize, seed: u64, h: f64) -> Result<Vec<FdSummary>> {
    let one = unicycle_model();
    let two = two_unicycle_model();
    let mut out = Vec::new();
    for (k, task) in fd_tasks().iter().enumerate() {
        let model: &dyn DynamicsModel = if task.agents() == 1 { &one } else { &two };
        let mut rng = sample_rng(seed, k as u64);
        let (mut max_err, mut sum_h, mut sum_half) = (0.0_f64, 0.0, 0.0);
        for _ in 0..states {
            let x = random_state(&mut rng, task.agents());
            let e = fd_check(task, model, &x, h)?;
            let e2 = fd_check(task, model, &x, 0.5 * h)?;
            max_err = max_err.max(e.max());
            sum_h += e.rollout();
            sum_half += e2.rollout();
        }
        let label = format!("{}/{}", task.name, task.agents());
        out.push(FdSummary {
            task: label,
            states,
            max_err,
            ratio: (sum_h > FD_EXACT_LEVEL * states as f64).then(|| sum_h / sum_half),
        });
    }
    Ok(out)
}
