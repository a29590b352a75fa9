//! Scenario files: JSON with optional keys, filled from per-model defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynsim::{ControllerKind, Hierarchy, UnicycleFleet};
use crate::error::HarnessError;
use crate::picore::{GoalDistanceCost, PathIntegralParams};
use crate::tasklib::{
    make_centroid_task, make_distance_task, make_goal_task_single, make_obstacle_task_pair,
    make_obstacle_task_single, Gains, ObstacleSpec, STATE_PER_AGENT,
};

type HResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SingleUnicycle,
    TwoUnicycle,
}

impl ModelKind {
    pub fn agents(self) -> usize {
        match self {
            ModelKind::SingleUnicycle => 1,
            ModelKind::TwoUnicycle => 2,
        }
    }
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Stated in the source publication.
    Paper,
    /// Filled in by this tool; not a published value.
    Default,
    /// Given in the file without a provenance tag.
    User,
}

/// Run mode of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every task uses its PD law; the sampler is never called.
    PdOnly,
    /// The task marked `path_integral` uses the sampling controller.
    Hybrid,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pd" | "pd_only" => Ok(Mode::PdOnly),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(format!("unknown mode `{other}` (expected pd or hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleEntry {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalEntry {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    /// `obstacle`, `goal`, `centroid` or `spacing`.
    pub name: String,
    pub controller: ControllerKind,
    pub kp: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiSettings {
    pub s_hat: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub samples: usize,
    pub running_weight: f64,
    pub horizon_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSettings {
    pub base: u64,
    pub count: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPi {
    s_hat: Option<f64>,
    alpha: Option<f64>,
    #[serde(rename = "M")]
    samples: Option<usize>,
    running_weight: Option<f64>,
    #[serde(default, deserialize_with = "explicit_option")]
    horizon_cap: Option<Option<f64>>,
}

/// Distinguishes an explicit `null` from an absent key.
fn explicit_option<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    model: ModelKind,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    dt: Option<f64>,
    obstacle: Option<ObstacleEntry>,
    goal: Option<GoalEntry>,
    spacing_l: Option<f64>,
    x0: Option<Vec<f64>>,
    tasks: Option<Vec<TaskEntry>>,
    pi: Option<RawPi>,
    seeds: Option<SeedSettings>,
    #[serde(default)]
    provenance: BTreeMap<String, Provenance>,
}

/// Keys accepted in a scenario file; nested `pi` keys are written `pi.<key>`.
pub const SCENARIO_KEYS: [&str; 16] = [
    "name",
    "model",
    "T",
    "dt",
    "obstacle",
    "goal",
    "spacing_l",
    "x0",
    "tasks",
    "pi.s_hat",
    "pi.alpha",
    "pi.M",
    "pi.running_weight",
    "pi.horizon_cap",
    "seeds",
    "provenance",
];

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub model: ModelKind,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub obstacle: ObstacleEntry,
    pub goal: GoalEntry,
    pub spacing_l: Option<f64>,
    pub x0: Vec<f64>,
    pub tasks: Vec<TaskEntry>,
    pub pi: PiSettings,
    pub seeds: SeedSettings,
    pub provenance: BTreeMap<String, Provenance>,
}

/// Gains used when a scenario omits the task list.
pub const DEFAULT_OBSTACLE_GAINS: (f64, f64) = (4.0, 4.0);
pub const DEFAULT_GOAL_GAINS: (f64, f64) = (1.0, 2.0);
pub const DEFAULT_SPACING_GAINS: (f64, f64) = (4.0, 4.0);

fn default_tasks(model: ModelKind) -> Vec<TaskEntry> {
    let entry = |name: &str, controller, (kp, kd): (f64, f64)| TaskEntry {
        name: name.into(),
        controller,
        kp,
        kd,
    };
    match model {
        ModelKind::SingleUnicycle => vec![
            entry("obstacle", ControllerKind::Pd, DEFAULT_OBSTACLE_GAINS),
            entry("goal", ControllerKind::PathIntegral, DEFAULT_GOAL_GAINS),
        ],
        ModelKind::TwoUnicycle => vec![
            entry("obstacle", ControllerKind::Pd, DEFAULT_OBSTACLE_GAINS),
            entry("centroid", ControllerKind::PathIntegral, DEFAULT_GOAL_GAINS),
            entry("spacing", ControllerKind::Pd, DEFAULT_SPACING_GAINS),
        ],
    }
}

impl Scenario {
    /// The built-in scenario for `model` with every optional key defaulted.
    pub fn defaults(model: ModelKind) -> Self {
        let raw = RawScenario {
            name: None,
            model,
            t_final: None,
            dt: None,
            obstacle: None,
            goal: None,
            spacing_l: None,
            x0: None,
            tasks: None,
            pi: None,
            seeds: None,
            provenance: BTreeMap::new(),
        };
        resolve(raw).expect("built-in defaults are valid")
    }

    /// Parses and validates scenario text. `origin` only labels errors.
    pub fn from_json_str(text: &str, origin: &Path) -> HResult<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let scn = resolve(raw)?;
        scn.validate()?;
        Ok(scn)
    }

    /// The resolved scenario as JSON, provenance included.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn agents(&self) -> usize {
        self.model.agents()
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn obstacle_spec(&self) -> HResult<ObstacleSpec> {
        let o = self.obstacle;
        ObstacleSpec::new([o.cx, o.cy], o.r, o.threshold)
            .map_err(|e| HarnessError::validation("obstacle", e.to_string()))
    }

    pub fn goal_point(&self) -> [f64; 2] {
        [self.goal.x, self.goal.y]
    }

    pub fn fleet(&self) -> UnicycleFleet {
        UnicycleFleet::new(self.agents())
    }

    /// Checks every invariant; called by the loaders.
    pub fn validate(&self) -> HResult<()> {
        let bad = |field: &str, msg: String| Err(HarnessError::validation(field, msg));
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad("T", format!("must be positive, got {}", self.t_final));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad("dt", format!("does not divide T = {} (ratio {ratio})", self.t_final));
        }
        let obstacle = self.obstacle_spec()?;
        if !self.goal.x.is_finite() || !self.goal.y.is_finite() {
            return bad("goal", "must be finite".into());
        }
        let agents = self.agents();
        if self.x0.len() != STATE_PER_AGENT * agents {
            return bad(
                "x0",
                format!("expected {} entries for {agents} agent(s), got {}", STATE_PER_AGENT * agents, self.x0.len()),
            );
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0", "entries must be finite".into());
        }
        for i in 0..agents {
            let base = STATE_PER_AGENT * i;
            if self.x0[base + 2] == 0.0 {
                return bad("x0", format!("agent {} starts at zero speed", i + 1));
            }
            if obstacle.center_distance(self.x0[base], self.x0[base + 1]) < obstacle.radius {
                return bad("x0", format!("agent {} starts inside the obstacle", i + 1));
            }
        }
        if self.tasks.is_empty() {
            return bad("tasks", "at least one task is required".into());
        }
        let mut seen = Vec::new();
        for t in &self.tasks {
            let allowed = match self.model {
                ModelKind::SingleUnicycle => ["obstacle", "goal"].as_slice(),
                ModelKind::TwoUnicycle => ["obstacle", "centroid", "spacing"].as_slice(),
            };
            if !allowed.contains(&t.name.as_str()) {
                return bad("tasks", format!("unknown task `{}` for this model (allowed: {allowed:?})", t.name));
            }
            if seen.contains(&t.name) {
                return bad("tasks", format!("task `{}` listed twice", t.name));
            }
            seen.push(t.name.clone());
            if !(t.kp >= 0.0 && t.kd >= 0.0 && t.kp.is_finite() && t.kd.is_finite()) {
                return bad("tasks", format!("gains of `{}` must be finite and nonnegative", t.name));
            }
        }
        let pi_tasks = self
            .tasks
            .iter()
            .filter(|t| t.controller == ControllerKind::PathIntegral)
            .count();
        if pi_tasks > 1 {
            return bad("tasks", format!("{pi_tasks} tasks use path_integral; at most one may"));
        }
        if seen.iter().any(|n| n == "spacing") {
            match self.spacing_l {
                Some(l) if l > 0.0 && l.is_finite() => {}
                other => return bad("spacing_l", format!("must be positive, got {other:?}")),
            }
        }
        let pi = &self.pi;
        if !(pi.s_hat > 0.0 && pi.s_hat.is_finite()) {
            return bad("pi.s_hat", format!("must be positive, got {}", pi.s_hat));
        }
        if !(pi.alpha > 0.0 && pi.alpha.is_finite()) {
            return bad("pi.alpha", format!("must be positive, got {}", pi.alpha));
        }
        if pi.samples == 0 {
            return bad("pi.M", "must be at least 1".into());
        }
        if !(pi.running_weight >= 0.0 && pi.running_weight.is_finite()) {
            return bad("pi.running_weight", format!("must be nonnegative, got {}", pi.running_weight));
        }
        if let Some(cap) = pi.horizon_cap {
            if !(cap > 0.0) {
                return bad("pi.horizon_cap", format!("must be positive, got {cap}"));
            }
        }
        if self.seeds.count == 0 {
            return bad("seeds", "count must be at least 1".into());
        }
        Ok(())
    }

    /// Task hierarchy for `mode`. Hybrid mode needs exactly one
    /// `path_integral` task; pd-only mode turns it into a PD task.
    pub fn hierarchy(&self, mode: Mode) -> HResult<Hierarchy> {
        let obstacle = self.obstacle_spec()?;
        let mut tasks = Vec::with_capacity(self.tasks.len());
        let mut controllers = Vec::with_capacity(self.tasks.len());
        for entry in &self.tasks {
            let gains = Gains::uniform(entry.kp, entry.kd)
                .map_err(|e| HarnessError::validation("tasks", e.to_string()))?;
            let spec = match (self.model, entry.name.as_str()) {
                (ModelKind::SingleUnicycle, "obstacle") => make_obstacle_task_single(obstacle, gains),
                (ModelKind::SingleUnicycle, "goal") => make_goal_task_single(self.goal_point(), gains),
                (ModelKind::TwoUnicycle, "obstacle") => make_obstacle_task_pair(obstacle, gains),
                (ModelKind::TwoUnicycle, "centroid") => make_centroid_task(self.goal_point(), gains),
                (ModelKind::TwoUnicycle, "spacing") => {
                    make_distance_task(self.spacing_l.unwrap_or(0.0), gains)
                        .map_err(|e| HarnessError::validation("spacing_l", e.to_string()))?
                }
                (_, other) => return Err(HarnessError::validation("tasks", format!("unknown task `{other}`"))),
            };
            tasks.push(spec);
            controllers.push(match mode {
                Mode::PdOnly => ControllerKind::Pd,
                Mode::Hybrid => entry.controller,
            });
        }
        if mode == Mode::Hybrid && !controllers.contains(&ControllerKind::PathIntegral) {
            return Err(HarnessError::validation(
                "tasks",
                "hybrid mode needs one task with controller path_integral",
            ));
        }
        Hierarchy::new(tasks, controllers).map_err(|e| HarnessError::validation("tasks", e.to_string()))
    }

    /// Sampler parameters; rollouts use the episode step and end time.
    pub fn pi_params(&self) -> HResult<PathIntegralParams> {
        PathIntegralParams::new(self.pi.s_hat, self.pi.alpha, self.pi.samples, self.dt, self.t_final)
            .and_then(|p| p.with_horizon_cap(self.pi.horizon_cap))
            .map_err(|e| HarnessError::validation("pi", e.to_string()))
    }

    pub fn pi_cost(&self) -> GoalDistanceCost {
        GoalDistanceCost {
            weight: self.pi.running_weight,
            goal: self.goal_point(),
            agents: self.agents(),
        }
    }

    /// Distance that counts as reaching the goal in batch statistics.
    pub fn success_tolerance(&self) -> f64 {
        match self.model {
            ModelKind::SingleUnicycle => 0.3,
            ModelKind::TwoUnicycle => 0.4,
        }
    }

    /// Same scenario at desk scale: `M = 500`, `Δt = 0.05`, rollouts capped
    /// at `horizon_cap` seconds when given.
    pub fn desk_preset(&self, horizon_cap: Option<f64>) -> Self {
        let mut s = self.clone();
        s.pi.samples = 500;
        s.dt = 0.05;
        s.pi.horizon_cap = horizon_cap;
        for key in ["pi.M", "dt", "pi.horizon_cap"] {
            s.provenance.insert(key.into(), Provenance::Default);
        }
        s
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> HResult<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Scenario::from_json_str(&text, path)
}

fn resolve(raw: RawScenario) -> HResult<Scenario> {
    let model = raw.model;
    let two = model == ModelKind::TwoUnicycle;
    let tagged = &raw.provenance;
    for key in tagged.keys() {
        if !SCENARIO_KEYS.contains(&key.as_str()) {
            return Err(HarnessError::validation("provenance", format!("unknown key `{key}`")));
        }
    }
    let mut provenance = BTreeMap::new();
    let mut pick = |key: &str, given: bool| {
        let p = if given {
            tagged.get(key).copied().unwrap_or(Provenance::User)
        } else {
            Provenance::Default
        };
        provenance.insert(key.to_string(), p);
    };

    pick("model", true);
    pick("T", raw.t_final.is_some());
    pick("dt", raw.dt.is_some());
    pick("obstacle", raw.obstacle.is_some());
    pick("goal", raw.goal.is_some());
    if two {
        pick("spacing_l", raw.spacing_l.is_some());
    }
    pick("x0", raw.x0.is_some());
    pick("tasks", raw.tasks.is_some());
    let rp = raw.pi.unwrap_or_default();
    pick("pi.s_hat", rp.s_hat.is_some());
    pick("pi.alpha", rp.alpha.is_some());
    pick("pi.M", rp.samples.is_some());
    pick("pi.running_weight", rp.running_weight.is_some());
    pick("pi.horizon_cap", rp.horizon_cap.is_some());
    pick("seeds", raw.seeds.is_some());

    let default_x0 = if two {
        vec![-4.5, 0.0, 0.1, 0.0, -4.0, 0.0, 0.1, 0.0]
    } else {
        vec![-4.0, 0.0, 0.1, 0.0]
    };
    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| {
            if two { "two_agent" } else { "single_agent" }.to_string()
        }),
        model,
        t_final: raw.t_final.unwrap_or(10.0),
        dt: raw.dt.unwrap_or(if two { 0.1 } else { 0.01 }),
        obstacle: raw.obstacle.unwrap_or(ObstacleEntry {
            cx: 0.0,
            cy: 0.0,
            r: 0.5,
            threshold: 1.0,
        }),
        goal: raw.goal.unwrap_or(GoalEntry { x: 3.0, y: 0.0 }),
        spacing_l: if two { Some(raw.spacing_l.unwrap_or(0.5)) } else { raw.spacing_l },
        x0: raw.x0.unwrap_or(default_x0),
        tasks: raw.tasks.unwrap_or_else(|| default_tasks(model)),
        pi: PiSettings {
            s_hat: rp.s_hat.unwrap_or(0.1),
            alpha: rp.alpha.unwrap_or(10.0),
            samples: rp.samples.unwrap_or(10_000),
            running_weight: rp.running_weight.unwrap_or(if two { 0.21 } else { 0.07 }),
            horizon_cap: rp.horizon_cap.unwrap_or(None),
        },
        seeds: raw.seeds.unwrap_or(SeedSettings { base: 0, count: 100 }),
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> HResult<Scenario> {
        Scenario::from_json_str(text, Path::new("test.scenario"))
    }

    #[test]
    fn minimal_file_fills_defaults() {
        let s = parse(r#"{"model": "single_unicycle"}"#).unwrap();
        assert_eq!(s, Scenario::defaults(ModelKind::SingleUnicycle));
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.provenance["T"], Provenance::Default);
        assert_eq!(s.provenance["model"], Provenance::User);
    }

    #[test]
    fn provenance_tags_are_kept() {
        let s = parse(r#"{"model": "two_unicycle", "dt": 0.1, "provenance": {"dt": "paper"}}"#).unwrap();
        assert_eq!(s.provenance["dt"], Provenance::Paper);
        assert_eq!(s.provenance["spacing_l"], Provenance::Default);
        assert!(parse(r#"{"model": "two_unicycle", "provenance": {"bogus": "paper"}}"#).is_err());
    }

    #[test]
    fn parse_error_has_position() {
        match parse("{\n  \"model\": ,\n}") {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse(r#"{"model": "x"}"#), Err(HarnessError::Parse { .. })));
        assert!(matches!(
            parse(r#"{"model": "single_unicycle", "extra": 1}"#),
            Err(HarnessError::Parse { .. })
        ));
    }

    fn field_of(r: HResult<Scenario>) -> String {
        match r {
            Err(HarnessError::Validation { field, .. }) => field,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn two_path_integral_tasks_rejected() {
        let text = r#"{"model": "single_unicycle", "tasks": [
            {"name": "obstacle", "controller": "path_integral", "kp": 1, "kd": 1},
            {"name": "goal", "controller": "path_integral", "kp": 1, "kd": 1}]}"#;
        assert_eq!(field_of(parse(text)), "tasks");
    }

    #[test]
    fn invariants_name_the_field() {
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "dt": 0.03}"#)), "dt");
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "x0": [0, 0, 1]}"#)), "x0");
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "x0": [-4, 0, 0, 0]}"#)), "x0");
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "x0": [0.1, 0, 1, 0]}"#)), "x0");
        assert_eq!(
            field_of(parse(r#"{"model": "single_unicycle", "obstacle": {"cx": 0, "cy": 0, "r": 1, "threshold": 0.5}}"#)),
            "obstacle"
        );
        assert_eq!(field_of(parse(r#"{"model": "two_unicycle", "spacing_l": 0}"#)), "spacing_l");
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "pi": {"M": 0}}"#)), "pi.M");
        assert_eq!(field_of(parse(r#"{"model": "single_unicycle", "pi": {"horizon_cap": -1}}"#)), "pi.horizon_cap");
        assert_eq!(
            field_of(parse(r#"{"model": "single_unicycle", "tasks": [{"name": "spacing", "controller": "pd", "kp": 1, "kd": 1}]}"#)),
            "tasks"
        );
    }

    #[test]
    fn hybrid_needs_a_sampled_task() {
        let text = r#"{"model": "single_unicycle", "tasks": [
            {"name": "obstacle", "controller": "pd", "kp": 1, "kd": 1},
            {"name": "goal", "controller": "pd", "kp": 1, "kd": 1}]}"#;
        let s = parse(text).unwrap();
        assert!(s.hierarchy(Mode::PdOnly).is_ok());
        assert!(matches!(s.hierarchy(Mode::Hybrid), Err(HarnessError::Validation { .. })));
    }

    #[test]
    fn explicit_null_cap() {
        let s = parse(r#"{"model": "single_unicycle", "pi": {"horizon_cap": null}}"#).unwrap();
        assert_eq!(s.pi.horizon_cap, None);
        assert_eq!(s.provenance["pi.horizon_cap"], Provenance::User);
        let s = parse(r#"{"model": "single_unicycle", "pi": {"horizon_cap": 2.0}}"#).unwrap();
        assert_eq!(s.pi.horizon_cap, Some(2.0));
    }

    #[test]
    fn modes_parse() {
        assert_eq!("pd".parse::<Mode>().unwrap(), Mode::PdOnly);
        assert_eq!("hybrid".parse::<Mode>().unwrap(), Mode::Hybrid);
        assert!("x".parse::<Mode>().is_err());
    }
}
