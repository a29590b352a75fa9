//! Scenarios, episodes, batches and file output.

pub mod batch;
pub mod episode;
pub mod export;
pub mod scenario;

pub use batch::{run_batch, BatchResult, BatchStats};
pub use episode::{run_episode, sign_changes_tail, EpisodeSummary, StepRecord, TrajectoryLog};
pub use export::{export_log, export_stats, Format};
pub use scenario::{load_scenario, Mode, ModelKind, Provenance, Scenario, SCENARIO_KEYS};
