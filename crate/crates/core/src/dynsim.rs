//! Control-affine models, Euler / Euler–Maruyama steps and the effective
//! dynamics seen by the path-integral task.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tasklib::{Agent, Linearization, TaskEval, TaskSpec, CONTROL_PER_AGENT, STATE_PER_AGENT};

/// `ẋ = f(x) + G(x) u`. Rows of `G` outside `noise_rows` must be zero.
pub trait DynamicsModel: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    fn input_map(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Coordinates driven directly by the control (and its noise).
    fn noise_rows(&self) -> &[usize];
}

/// A system as the sampler sees it: drift `f̃(x, t)` and input map
/// `G̃(x, t)`. Any [`DynamicsModel`] is one, with `f̃ = f` and `G̃ = G`.
pub trait ControlledSystem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn noise_rows(&self) -> &[usize];
    fn drift_and_input(&self, x: &DVector<f64>, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

impl<M: DynamicsModel> ControlledSystem for M {
    fn state_dim(&self) -> usize {
        DynamicsModel::state_dim(self)
    }

    fn control_dim(&self) -> usize {
        DynamicsModel::control_dim(self)
    }

    fn noise_rows(&self) -> &[usize] {
        DynamicsModel::noise_rows(self)
    }

    fn drift_and_input(&self, x: &DVector<f64>, _t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.drift(x), self.input_map(x)))
    }
}

/// `agents` independent unicycles, state `(p_x, p_y, s, θ)` and control
/// `(a, ω)` per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnicycleFleet {
    agents: usize,
    noise_rows: Vec<usize>,
}

impl UnicycleFleet {
    pub fn new(agents: usize) -> Self {
        let noise_rows = (0..agents)
            .flat_map(|i| [STATE_PER_AGENT * i + 2, STATE_PER_AGENT * i + 3])
            .collect();
        Self { agents, noise_rows }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }
}

pub fn unicycle_model() -> UnicycleFleet {
    UnicycleFleet::new(1)
}

pub fn two_unicycle_model() -> UnicycleFleet {
    UnicycleFleet::new(2)
}

impl DynamicsModel for UnicycleFleet {
    fn state_dim(&self) -> usize {
        STATE_PER_AGENT * self.agents
    }

    fn control_dim(&self) -> usize {
        CONTROL_PER_AGENT * self.agents
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(STATE_PER_AGENT * self.agents);
        for i in 0..self.agents {
            let [vx, vy] = Agent::of(x, i).velocity();
            f[STATE_PER_AGENT * i] = vx;
            f[STATE_PER_AGENT * i + 1] = vy;
        }
        f
    }

    fn input_map(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(STATE_PER_AGENT * self.agents, CONTROL_PER_AGENT * self.agents);
        for i in 0..self.agents {
            g[(STATE_PER_AGENT * i + 2, CONTROL_PER_AGENT * i)] = 1.0;
            g[(STATE_PER_AGENT * i + 3, CONTROL_PER_AGENT * i + 1)] = 1.0;
        }
        g
    }

    fn noise_rows(&self) -> &[usize] {
        &self.noise_rows
    }
}

fn check_finite(x: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Explicit Euler: `x + (f(x) + G(x) u) Δt`.
pub fn step_deterministic<M: DynamicsModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    if u.len() != model.control_dim() || x.len() != model.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state {} / control {} for a {}x{} model",
            x.len(),
            u.len(),
            model.state_dim(),
            model.control_dim()
        )));
    }
    let mut xdot = model.drift(x);
    xdot.gemv(1.0, &model.input_map(x), u, 1.0);
    let mut next = x.clone();
    next.axpy(dt, &xdot, 1.0);
    check_finite(next, "deterministic step")
}

/// Euler–Maruyama: `x + f̃Δt + G̃(ũΔt + ŝ ε √Δt)`.
#[allow(clippy::too_many_arguments)]
pub fn step_stochastic<S: ControlledSystem + ?Sized>(
    sys: &S,
    x: &DVector<f64>,
    t: f64,
    control: &DVector<f64>,
    s_hat: f64,
    dt: f64,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) || !(s_hat >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and s_hat >= 0, got dt {dt}, s_hat {s_hat}"
        )));
    }
    let (f, g) = sys.drift_and_input(x, t)?;
    let mut kick = noise * (s_hat * dt.sqrt());
    kick.axpy(dt, control, 1.0);
    let mut next = x.clone();
    next.axpy(dt, &f, 1.0);
    next.gemv(1.0, &g, &kick, 1.0);
    check_finite(next, "stochastic step")
}

/// Which controller owns a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Pd,
    PathIntegral,
}

/// Ordered task list with a controller assignment for each level.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub tasks: Vec<TaskSpec>,
    pub controllers: Vec<ControllerKind>,
}

/// One level of a hierarchy evaluated at a state.
#[derive(Debug, Clone)]
pub struct LevelEval {
    pub eval: TaskEval,
    /// Active part, absent when no row is active or the map was singular.
    pub lin: Option<Linearization>,
    /// The active rows' map was rank deficient; the level is skipped this step.
    pub singular: bool,
    /// PD control `u_k` (unprojected). `None` for the path-integral level or
    /// an inactive level.
    pub control: Option<DVector<f64>>,
    /// `N_k`, the projector applied to this level's control.
    pub projector: DMatrix<f64>,
    /// This level is driven by the path-integral controller.
    pub pi_slot: bool,
}

impl LevelEval {
    pub fn active(&self) -> bool {
        self.lin.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyEval {
    pub levels: Vec<LevelEval>,
}

impl HierarchyEval {
    /// `Σ_k N_k u_k`, with `pi_control` standing in for the path-integral
    /// level (skipped when `None`).
    pub fn compose(&self, pi_control: Option<&DVector<f64>>) -> DVector<f64> {
        let p = self.levels[0].projector.ncols();
        let mut u = DVector::zeros(p);
        for level in &self.levels {
            let uk = match (&level.control, pi_control) {
                (Some(uk), _) => uk,
                (None, Some(pc)) if level.pi_slot => pc,
                _ => continue,
            };
            u += &level.projector * uk;
        }
        u
    }

    /// `Σ_{i≠k} N_i u_i`, the part folded into the effective drift.
    pub fn pd_contribution(&self) -> DVector<f64> {
        self.compose(None)
    }
}

impl Hierarchy {
    pub fn new(tasks: Vec<TaskSpec>, controllers: Vec<ControllerKind>) -> Result<Self> {
        if tasks.len() != controllers.len() || tasks.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} tasks with {} controller assignments",
                tasks.len(),
                controllers.len()
            )));
        }
        let pi = controllers
            .iter()
            .filter(|c| **c == ControllerKind::PathIntegral)
            .count();
        if pi > 1 {
            return Err(Error::InvalidArgument(
                "at most one task may use the path-integral controller".into(),
            ));
        }
        Ok(Self { tasks, controllers })
    }

    pub fn all_pd(tasks: Vec<TaskSpec>) -> Self {
        let controllers = vec![ControllerKind::Pd; tasks.len()];
        Self { tasks, controllers }
    }

    pub fn pi_index(&self) -> Option<usize> {
        self.controllers
            .iter()
            .position(|c| *c == ControllerKind::PathIntegral)
    }

    /// Evaluates every level at `x`: activation, linearization, PD controls
    /// and the nested projectors `N_1 = I, N_{k+1} = N_k (I − Λ_k†Λ_k)`.
    /// A level whose active map is rank deficient is treated as inactive.
    pub fn evaluate(&self, x: &DVector<f64>, t: f64, control_dim: usize) -> HierarchyEval {
        let pi_index = self.pi_index();
        let last = self.tasks.len() - 1;
        let mut projector = DMatrix::<f64>::identity(control_dim, control_dim);
        let mut levels = Vec::with_capacity(self.tasks.len());
        for (k, task) in self.tasks.iter().enumerate() {
            let eval = task.evaluate(x);
            let is_pi = pi_index == Some(k);
            // The lowest path-integral level never needs its own projector.
            let (lin, singular) = if is_pi && k == last {
                (None, false)
            } else {
                match task.linearize_eval(&eval, t) {
                    Ok(lin) => (lin, false),
                    Err(_) => (None, true),
                }
            };
            let control = if is_pi { None } else { lin.as_ref().map(|l| l.control()) };
            let next = lin.as_ref().map(|l| &projector * l.projector());
            levels.push(LevelEval {
                eval,
                lin,
                singular,
                control,
                projector: projector.clone(),
                pi_slot: is_pi,
            });
            if let Some(next) = next {
                projector = next;
            }
        }
        HierarchyEval { levels }
    }
}

/// `f̃(x) = f(x) + G(x) Σ_{i≠k} N_i u_i(x)` and `G̃(x) = G(x) N_k`, with the
/// other levels' PD laws re-evaluated at every queried state.
#[derive(Debug, Clone)]
pub struct EffectiveDynamics<'a, M: DynamicsModel> {
    pub model: &'a M,
    pub hierarchy: &'a Hierarchy,
    pub pi_index: usize,
}

pub fn effective_dynamics<'a, M: DynamicsModel>(
    model: &'a M,
    hierarchy: &'a Hierarchy,
    k: usize,
) -> Result<EffectiveDynamics<'a, M>> {
    if hierarchy.pi_index() != Some(k) {
        return Err(Error::InvalidArgument(format!(
            "task {k} is not the hierarchy's path-integral task"
        )));
    }
    Ok(EffectiveDynamics {
        model,
        hierarchy,
        pi_index: k,
    })
}

impl<M: DynamicsModel> EffectiveDynamics<'_, M> {
    /// `(f̃, G̃)` from an already evaluated hierarchy.
    pub fn assemble(&self, x: &DVector<f64>, eval: &HierarchyEval) -> (DVector<f64>, DMatrix<f64>) {
        let g = self.model.input_map(x);
        let f = self.model.drift(x) + &g * eval.pd_contribution();
        let g_eff = g * &eval.levels[self.pi_index].projector;
        (f, g_eff)
    }
}

impl<M: DynamicsModel> ControlledSystem for EffectiveDynamics<'_, M> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    fn noise_rows(&self) -> &[usize] {
        self.model.noise_rows()
    }

    fn drift_and_input(&self, x: &DVector<f64>, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eval = self.hierarchy.evaluate(x, t, self.model.control_dim());
        Ok(self.assemble(x, &eval))
    }
}
