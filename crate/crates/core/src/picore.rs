//! Sampling-based path-integral controller for a single task.
//!
//! The controlled channel is perturbed as `ũ dt + ŝ dw`. With `λ = α ŝ²` the
//! optimal input is a ratio of expectations over *uncontrolled* rollouts,
//! which is estimated from `M` sampled trajectories:
//!
//! ```text
//! ũ* ≈ 𝒢(x) · Σ_j w_j ŝ G̃⁽²⁾(x) ε_j  /  (Σ_j w_j √Δt),   w_j = exp(−(S_j − min S)/λ)
//! ```
//!
//! where `S_j` is the state cost-to-go of rollout `j`, `ε_j` its first-step
//! noise draw, `G̃⁽²⁾` the noise-driven rows of the input map and `𝒢` its
//! minimal-norm right inverse.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::dynsim::{step_stochastic, ControlledSystem};
use crate::error::{Error, Result};
use crate::hiercore::{truncated_pseudoinverse, RANK_RTOL};
use crate::parallel::{sample_rng, try_map_indexed};

#[derive(Debug, Clone, PartialEq)]
pub struct PathIntegralParams {
    s_hat: f64,
    alpha: f64,
    samples: usize,
    dt: f64,
    horizon_end: f64,
    horizon_cap: Option<f64>,
    min_ess: f64,
}

impl PathIntegralParams {
    /// `s_hat` is the diffusion coefficient, `alpha` the control-cost weight,
    /// `samples` the rollout count `M`, `dt` the rollout step and
    /// `horizon_end` the final time `T` every rollout runs to.
    pub fn new(s_hat: f64, alpha: f64, samples: usize, dt: f64, horizon_end: f64) -> Result<Self> {
        if !(s_hat > 0.0 && s_hat.is_finite()) {
            return Err(Error::InvalidArgument(format!("s_hat must be positive, got {s_hat}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        if !(dt > 0.0) || !(horizon_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need dt > 0 and T > 0, got dt {dt}, T {horizon_end}"
            )));
        }
        Ok(Self {
            s_hat,
            alpha,
            samples,
            dt,
            horizon_end,
            horizon_cap: None,
            min_ess: 2.0,
        })
    }

    /// Truncates every rollout to at most `cap` seconds.
    pub fn with_horizon_cap(mut self, cap: Option<f64>) -> Result<Self> {
        if let Some(c) = cap {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("horizon cap must be positive, got {c}")));
            }
        }
        self.horizon_cap = cap;
        Ok(self)
    }

    pub fn with_min_ess(mut self, min_ess: f64) -> Self {
        self.min_ess = min_ess;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        self.samples = samples;
        Ok(self)
    }

    pub fn s_hat(&self) -> f64 {
        self.s_hat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `λ = α ŝ²`, always recomputed.
    pub fn lambda(&self) -> f64 {
        self.alpha * self.s_hat * self.s_hat
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon_end(&self) -> f64 {
        self.horizon_end
    }

    pub fn horizon_cap(&self) -> Option<f64> {
        self.horizon_cap
    }

    pub fn min_ess(&self) -> f64 {
        self.min_ess
    }

    /// Rollout length in steps from `t0`: `(T − t0)/Δt`, optionally capped.
    pub fn horizon_steps(&self, t0: f64) -> Result<usize> {
        let mut span = self.horizon_end - t0;
        if let Some(cap) = self.horizon_cap {
            span = span.min(cap);
        }
        let steps = (span / self.dt).round();
        if !(steps >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "no rollout horizon left at t = {t0} (T = {})",
                self.horizon_end
            )));
        }
        Ok(steps as usize)
    }
}

/// State-dependent running cost `L(x)` and terminal cost `φ(x)`. The
/// quadratic control cost is analytic and never part of this.
pub trait StateCost: Sync {
    fn running(&self, x: &DVector<f64>) -> f64;
    fn terminal(&self, x: &DVector<f64>) -> f64;
}

/// `L(x) = φ(x) = w ‖mean of agent positions − goal‖` over unicycle states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalDistanceCost {
    pub weight: f64,
    pub goal: [f64; 2],
    pub agents: usize,
}

impl GoalDistanceCost {
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        let w = 1.0 / self.agents as f64;
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..self.agents {
            cx += w * x[4 * i];
            cy += w * x[4 * i + 1];
        }
        (cx - self.goal[0]).hypot(cy - self.goal[1])
    }
}

impl StateCost for GoalDistanceCost {
    fn running(&self, x: &DVector<f64>) -> f64 {
        self.weight * self.distance(x)
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        self.running(x)
    }
}

/// `L(x) = ½ q ‖x‖²`, `φ(x) = ½ q_final ‖x‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub q: f64,
    pub q_final: f64,
}

impl StateCost for QuadraticCost {
    fn running(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.q * x.norm_squared()
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.q_final * x.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Cost-to-go `S = φ(x_τ) + Σ_{i<τ} L(x_i) Δt`.
    pub cost: f64,
    /// Standard normal draw of the first step, `ε_0`.
    pub first_noise: DVector<f64>,
    /// `exp(−(S − min S)/λ)`; zero until [`estimate_control`] fills it.
    pub weight: f64,
}

/// `φ(x_τ) + Σ_{i=0}^{τ−1} L(x_i) Δt` over the states `x_0 … x_τ`.
pub fn cost_to_go<C: StateCost + ?Sized>(traj: &[DVector<f64>], cost: &C, dt: f64) -> Result<f64> {
    let Some((last, head)) = traj.split_last() else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    let mut acc = 0.0;
    for x in head {
        acc += cost.running(x) * dt;
    }
    let s = acc + cost.terminal(last);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite("cost-to-go".into()))
    }
}

/// Rolls out the uncontrolled dynamics (`ũ = 0`) `M` times from `(x0, t0)`.
///
/// Sample `j` draws from its own stream keyed by `(seed, j)`; the result is
/// the same for any worker count.
pub fn sample_rollouts<S, C>(
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    params: &PathIntegralParams,
    cost: &C,
    seed: u64,
) -> Result<Vec<RolloutResult>>
where
    S: ControlledSystem + ?Sized,
    C: StateCost + ?Sized,
{
    params.horizon_steps(t0)?;
    try_map_indexed(params.samples(), |j| rollout(sys, x0, t0, params, cost, seed, j))
}

/// Sample `j` of [`sample_rollouts`].
pub fn rollout<S, C>(
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    params: &PathIntegralParams,
    cost: &C,
    seed: u64,
    j: usize,
) -> Result<RolloutResult>
where
    S: ControlledSystem + ?Sized,
    C: StateCost + ?Sized,
{
    let steps = params.horizon_steps(t0)?;
    let p = sys.control_dim();
    let zero = DVector::zeros(p);
    let dt = params.dt();
    let mut rng = sample_rng(seed, j as u64);
    let mut x = x0.clone();
    let mut acc = 0.0;
    let mut first_noise = None;
    let mut eps = DVector::zeros(p);
    for i in 0..steps {
        acc += cost.running(&x) * dt;
        eps.iter_mut().for_each(|e| *e = StandardNormal.sample(&mut rng));
        let t = t0 + i as f64 * dt;
        x = step_stochastic(sys, &x, t, &zero, params.s_hat(), dt, &eps)
            .map_err(|e| Error::NonFinite(format!("rollout {j}, step {i}: {e}")))?;
        if i == 0 {
            first_noise = Some(eps.clone());
        }
    }
    let s = acc + cost.terminal(&x);
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("cost of rollout {j}")));
    }
    Ok(RolloutResult {
        cost: s,
        first_noise: first_noise.expect("at least one step"),
        weight: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEstimate {
    pub control: DVector<f64>,
    /// Mean weight, the transformed value up to the `min S` shift.
    pub normalizer: f64,
    /// `(Σw)² / Σw²`, in `(0, M]`.
    pub ess: f64,
    /// Shannon entropy of the normalized weights (nats).
    pub weight_entropy: f64,
    pub min_cost: f64,
    pub mean_cost: f64,
    /// The noise-driven block of `G̃` vanished at `x0`; the estimate is zero.
    pub inert: bool,
}

/// Weighted estimate without the effective-sample-size gate.
pub fn estimate_control_unchecked<S: ControlledSystem + ?Sized>(
    rollouts: &mut [RolloutResult],
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    params: &PathIntegralParams,
) -> Result<ControlEstimate> {
    if rollouts.is_empty() {
        return Err(Error::InvalidArgument("no rollouts".into()));
    }
    let p = sys.control_dim();
    let lambda = params.lambda();
    let min_cost = rollouts.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_cost = 0.0;
    let mut weighted_noise = DVector::<f64>::zeros(p);
    for r in rollouts.iter_mut() {
        r.weight = (-(r.cost - min_cost) / lambda).exp();
        sum_w += r.weight;
        sum_w2 += r.weight * r.weight;
        sum_cost += r.cost;
        weighted_noise.axpy(r.weight, &r.first_noise, 1.0);
    }
    let m = rollouts.len() as f64;
    let ess = sum_w * sum_w / sum_w2;
    let weight_entropy = -rollouts
        .iter()
        .map(|r| r.weight / sum_w)
        .filter(|&q| q > 0.0)
        .map(|q| q * q.ln())
        .sum::<f64>();

    let (_, g_eff) = sys.drift_and_input(x0, t0)?;
    let rows = sys.noise_rows();
    let mut g2 = DMatrix::zeros(rows.len(), p);
    for (r, &i) in rows.iter().enumerate() {
        g2.row_mut(r).copy_from(&g_eff.row(i));
    }
    let (gain, rank) = truncated_pseudoinverse(&g2, RANK_RTOL);
    let inert = rank == 0;
    let control = if inert {
        log::warn!("path-integral channel has no free directions at t = {t0}; estimate is zero");
        DVector::zeros(p)
    } else {
        let scale = params.s_hat() / (sum_w * params.dt().sqrt());
        gain * (&g2 * weighted_noise) * scale
    };
    if !control.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("path-integral estimate".into()));
    }
    Ok(ControlEstimate {
        control,
        normalizer: sum_w / m,
        ess,
        weight_entropy,
        min_cost,
        mean_cost: sum_cost / m,
        inert,
    })
}

/// Weighted estimate; fails with [`Error::DegenerateWeights`] when more than
/// one sample was drawn yet the effective sample size is below the
/// configured minimum.
pub fn estimate_control<S: ControlledSystem + ?Sized>(
    rollouts: &mut [RolloutResult],
    sys: &S,
    x0: &DVector<f64>,
    t0: f64,
    params: &PathIntegralParams,
) -> Result<ControlEstimate> {
    let est = estimate_control_unchecked(rollouts, sys, x0, t0, params)?;
    if rollouts.len() > 1 && est.ess < params.min_ess() {
        return Err(Error::DegenerateWeights {
            ess: est.ess,
            min_ess: params.min_ess(),
        });
    }
    Ok(est)
}

/// Samples and estimates in one call, without the ESS gate (the estimate's
/// diagnostics carry the ESS for the caller to judge).
pub fn pi_controller_step<S, C>(
    sys: &S,
    x: &DVector<f64>,
    t: f64,
    params: &PathIntegralParams,
    cost: &C,
    seed: u64,
) -> Result<ControlEstimate>
where
    S: ControlledSystem + ?Sized,
    C: StateCost + ?Sized,
{
    let mut rollouts = sample_rollouts(sys, x, t, params, cost, seed)?;
    estimate_control_unchecked(&mut rollouts, sys, x, t, params)
}
